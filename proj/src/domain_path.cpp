#include "kmap/domain_path.hpp"

#include <algorithm>
#include <cctype>

#include "kmap/error.hpp"

namespace kmap {

std::string fold_case(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string trim(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && is_space(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && is_space(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::string DomainPath::normalize_segment(std::string_view name) {
  std::string folded = fold_case(trim(name));
  if (folded.empty()) {
    fail(ErrorCode::InvalidPath, "domain name is empty");
  }
  if (folded.find('/') != std::string::npos) {
    fail(ErrorCode::InvalidPath, "domain name contains '/': " + folded);
  }
  return folded;
}

DomainPath::DomainPath(const std::vector<std::string>& segments) {
  segments_.reserve(segments.size());
  for (const auto& s : segments) segments_.push_back(normalize_segment(s));
}

DomainPath::DomainPath(std::initializer_list<std::string_view> segments) {
  segments_.reserve(segments.size());
  for (auto s : segments) segments_.push_back(normalize_segment(s));
}

DomainPath DomainPath::parse(std::string_view text) {
  DomainPath path;
  std::string_view rest = text;
  // Leading and trailing separators are tolerated.
  while (!rest.empty() && rest.front() == '/') rest.remove_prefix(1);
  while (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);
  if (trim(rest).empty()) return path;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = rest.find('/', pos);
    path.segments_.push_back(normalize_segment(rest.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return path;
}

DomainPath DomainPath::parent() const {
  DomainPath p = *this;
  if (!p.segments_.empty()) p.segments_.pop_back();
  return p;
}

DomainPath DomainPath::child(std::string_view name) const {
  DomainPath p = *this;
  p.segments_.push_back(normalize_segment(name));
  return p;
}

bool DomainPath::is_ancestor_of(const DomainPath& other) const {
  return segments_.size() < other.segments_.size() &&
         std::equal(segments_.begin(), segments_.end(), other.segments_.begin());
}

std::string DomainPath::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) out += '/';
    out += segments_[i];
  }
  return out;
}

}  // namespace kmap
