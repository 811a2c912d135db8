#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace kmap {

// Strictly ascending element ids for one term.
using PostingList = std::vector<std::uint64_t>;

inline bool is_strictly_ascending(const PostingList& list) {
  return std::adjacent_find(list.begin(), list.end(),
                            [](std::uint64_t a, std::uint64_t b) { return a >= b; }) == list.end();
}

// Linear merge of two sorted lists.
inline PostingList intersect(const PostingList& a, const PostingList& b) {
  PostingList out;
  out.reserve(std::min(a.size(), b.size()));
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      out.push_back(*ia);
      ++ia;
      ++ib;
    }
  }
  return out;
}

// Intersects all lists, smallest first, stopping early once empty.
inline PostingList intersect_all(std::vector<const PostingList*> lists) {
  if (lists.empty()) return {};
  std::sort(lists.begin(), lists.end(),
            [](const PostingList* a, const PostingList* b) { return a->size() < b->size(); });
  PostingList acc = *lists.front();
  for (std::size_t i = 1; i < lists.size() && !acc.empty(); ++i) acc = intersect(acc, *lists[i]);
  return acc;
}

}  // namespace kmap
