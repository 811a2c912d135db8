#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/domain_path.hpp"
#include "kmap/knowledge.hpp"
#include "kmap/metrics.hpp"

namespace kmap {

inline constexpr std::size_t kDefaultMaxDepth = 6;

struct DomainSummary {
  std::string name;                   // empty for the root
  std::vector<std::string> children;  // ordered by name
  std::size_t mapping_count = 0;
  std::uint64_t comparisons = 0;      // spent locating the node
};

// A node's children and mapping list, read under one lock.
struct DomainView {
  DomainPath path;
  std::vector<std::string> children;
  std::vector<KnowledgeMappingNode> mappings;
};

// One occurrence of a mapping in the hierarchy.
struct PlacedMapping {
  DomainPath path;
  KnowledgeMappingNode node;
};

// The knowledge map core: a hierarchy of application domains whose nodes
// carry knowledge-mapping lists.
//
// Readers take a shared lock and writers an exclusive one, so every mutation
// (including move_mapping and update_mappings, which touch several lists) is
// observed by readers as a single step. Children are held in an ordered map,
// giving O(log k) name comparisons per level.
class DomainCatalog {
 public:
  explicit DomainCatalog(std::size_t max_depth = kDefaultMaxDepth);
  DomainCatalog(const DomainCatalog&) = delete;
  DomainCatalog& operator=(const DomainCatalog&) = delete;
  ~DomainCatalog();

  std::size_t max_depth() const noexcept { return max_depth_; }

  // Hierarchy edits.
  DomainPath add_domain(const DomainPath& parent, std::string_view name);
  // Creates every missing node along `path`; returns the created paths,
  // shallowest first.
  std::vector<DomainPath> ensure_path(const DomainPath& path);
  // Removes a leaf with an empty mapping list; returns false (and changes
  // nothing) when the node is absent or not empty. Used to undo ensure_path.
  bool remove_empty_domain(const DomainPath& path);

  bool contains(const DomainPath& path) const;
  DomainSummary lookup_domain(const DomainPath& path) const;
  // The root yields the top-level domains and no mappings.
  DomainView view(const DomainPath& path) const;

  // Mapping-list edits.
  void attach_mapping(const DomainPath& path, KnowledgeMappingNode node);
  void detach_mapping(const DomainPath& path, const MappingKey& key);
  void move_mapping(const DomainPath& from, const DomainPath& to, const MappingKey& key);
  // Replaces properties/description/revision of every occurrence of `key` in
  // one step. Returns the number of occurrences changed.
  std::size_t update_mappings(const MappingKey& key, const KnowledgeProperties& properties,
                              const std::string& description, std::uint64_t revision);
  // Removes every occurrence of `key`, returning what was removed.
  std::vector<PlacedMapping> remove_mappings(const MappingKey& key);
  // Re-inserts previously removed occurrences (compensation).
  void restore_mappings(const std::vector<PlacedMapping>& placements);

  std::vector<KnowledgeMappingNode> list_mappings(const DomainPath& path) const;
  std::vector<KnowledgeMappingNode> intersect_mappings(std::span<const DomainPath> paths) const;
  std::vector<DomainPath> occurrences(const MappingKey& key) const;
  std::vector<PlacedMapping> all_mappings() const;

  CatalogMetrics metrics() const;

  // Snapshot persistence: {"max_depth":int,"roots":[DomainNode...]}.
  nlohmann::json to_json() const;
  static std::unique_ptr<DomainCatalog> from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& file) const;
  static std::unique_ptr<DomainCatalog> load(const std::filesystem::path& file);

 private:
  struct Node;

  Node* find_node(const DomainPath& path, std::uint64_t* comparisons = nullptr) const;
  Node& require_node(const DomainPath& path) const;
  Node& insert_child(Node& parent, const std::string& name);
  std::vector<std::string> child_names(const Node& node) const;
  void attach_locked(const DomainPath& path, Node& node, KnowledgeMappingNode mapping);
  void detach_locked(const DomainPath& path, Node& node, const MappingKey& key);

  std::size_t max_depth_;
  std::unique_ptr<Node> root_;
  // key -> paths holding it, so propagation does not scan the tree.
  std::map<MappingKey, std::set<DomainPath>> occurrences_;
  mutable std::shared_mutex mutex_;

  mutable std::atomic<std::uint64_t> lookups_{0};
  mutable std::atomic<std::uint64_t> lookup_comparisons_{0};
  std::atomic<std::uint64_t> last_insert_cost_{0};
};

}  // namespace kmap
