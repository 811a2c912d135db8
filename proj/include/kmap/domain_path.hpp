#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace kmap {

// ASCII case-fold plus surrounding-whitespace trim. Domain names and index
// terms both pass through this.
std::string fold_case(std::string_view text);
std::string trim(std::string_view text);

// A normalized path into the application-domain hierarchy. The empty path
// denotes the root of the catalog, which is not itself a domain.
class DomainPath {
 public:
  DomainPath() = default;
  explicit DomainPath(const std::vector<std::string>& segments);
  DomainPath(std::initializer_list<std::string_view> segments);

  // "meteorology/storm/tropical cyclone"; the empty string and "/" are root.
  static DomainPath parse(std::string_view text);
  static DomainPath root() { return {}; }

  // Normalizes a single domain name; throws InvalidPath when the result is
  // empty or contains the '/' separator.
  static std::string normalize_segment(std::string_view name);

  const std::vector<std::string>& segments() const noexcept { return segments_; }
  std::size_t depth() const noexcept { return segments_.size(); }
  bool is_root() const noexcept { return segments_.empty(); }
  const std::string& leaf() const { return segments_.back(); }

  DomainPath parent() const;
  DomainPath child(std::string_view name) const;
  bool is_ancestor_of(const DomainPath& other) const;

  std::string to_string() const;

  auto operator<=>(const DomainPath&) const = default;
  bool operator==(const DomainPath&) const = default;

 private:
  std::vector<std::string> segments_;
};

}  // namespace kmap
