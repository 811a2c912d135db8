#include "kmap/tokenizer.hpp"

#include <algorithm>

namespace kmap {
namespace {

bool is_token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char fold(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

}  // namespace

Tokenizer::Tokenizer(std::set<std::string> stopwords) {
  for (const auto& word : stopwords) {
    std::string folded;
    for (unsigned char c : word) folded += fold(c);
    stopwords_.insert(std::move(folded));
  }
}

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (current.size() >= kMinTokenLength && !stopwords_.contains(current)) out.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      current += fold(c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<std::string> Tokenizer::terms(std::string_view text) const {
  auto tokens = tokenize(text);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

std::vector<std::string> Tokenizer::normalize_query(std::span<const std::string> raw) const {
  std::vector<std::string> all;
  for (const auto& term : raw) {
    auto tokens = tokenize(term);
    all.insert(all.end(), tokens.begin(), tokens.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

}  // namespace kmap
