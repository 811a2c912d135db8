#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace kmap {

// Observational counters for the cost model of catalog and site lookups.
// Nothing here ever feeds back into results.
struct CatalogMetrics {
  std::uint64_t top_level_domains = 0;  // N
  std::uint64_t max_subdomains = 0;     // n, largest child count of any node
  std::uint64_t knowledge_headers = 0;  // M
  std::uint64_t query_terms = 0;        // m, of the most recent query
  double comparisons_per_term = 0.0;    // CIT, of the most recent query
  std::uint64_t mapping_insert_cost = 0;  // CL, of the most recent attach

  std::uint64_t lookups = 0;
  std::uint64_t lookup_comparisons = 0;

  double mean_lookup_comparisons() const {
    return lookups == 0 ? 0.0 : static_cast<double>(lookup_comparisons) / static_cast<double>(lookups);
  }
};

namespace detail {

// Comparisons made by CountingLess on the current thread.
inline thread_local std::uint64_t comparison_count = 0;

struct CountingLess {
  using is_transparent = void;
  bool operator()(std::string_view a, std::string_view b) const {
    ++comparison_count;
    return a < b;
  }
};

// Measures the comparisons performed while the scope is alive.
class ComparisonScope {
 public:
  ComparisonScope() : start_(comparison_count) {}
  std::uint64_t count() const { return comparison_count - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace detail
}  // namespace kmap
