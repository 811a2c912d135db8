#include "kmap/domain_catalog.hpp"

#include <algorithm>
#include <functional>
#include <mutex>

#include "kmap/codec.hpp"
#include "kmap/error.hpp"
#include "kmap/fs_util.hpp"

namespace kmap {

using nlohmann::json;

struct DomainCatalog::Node {
  std::string name;
  std::map<std::string, std::unique_ptr<Node>, detail::CountingLess> children;
  std::vector<KnowledgeMappingNode> mappings;

  std::vector<KnowledgeMappingNode>::iterator find_mapping(const MappingKey& key,
                                                           std::uint64_t* scanned = nullptr) {
    std::uint64_t n = 0;
    auto it = std::find_if(mappings.begin(), mappings.end(), [&](const KnowledgeMappingNode& m) {
      ++n;
      return m.site_id == key.site_id && m.knowledge_id == key.knowledge_id;
    });
    if (scanned) *scanned = n;
    return it;
  }
};

DomainCatalog::DomainCatalog(std::size_t max_depth)
    : max_depth_(max_depth), root_(std::make_unique<Node>()) {
  if (max_depth_ == 0) fail(ErrorCode::InvalidPath, "max_depth must be >= 1");
}

DomainCatalog::~DomainCatalog() = default;

DomainCatalog::Node* DomainCatalog::find_node(const DomainPath& path,
                                              std::uint64_t* comparisons) const {
  detail::ComparisonScope scope;
  Node* node = root_.get();
  if (path.depth() > max_depth_) node = nullptr;
  for (std::size_t i = 0; node != nullptr && i < path.depth(); ++i) {
    auto it = node->children.find(path.segments()[i]);
    node = it == node->children.end() ? nullptr : it->second.get();
  }
  if (comparisons) *comparisons = scope.count();
  return node;
}

DomainCatalog::Node& DomainCatalog::require_node(const DomainPath& path) const {
  if (path.is_root()) fail(ErrorCode::InvalidPath, "the catalog root holds no mappings");
  Node* node = find_node(path);
  if (!node) fail(ErrorCode::DomainNotFound, "no domain '" + path.to_string() + "'");
  return *node;
}

DomainCatalog::Node& DomainCatalog::insert_child(Node& parent, const std::string& name) {
  auto child = std::make_unique<Node>();
  child->name = name;
  auto [it, inserted] = parent.children.emplace(name, std::move(child));
  return *it->second;
}

std::vector<std::string> DomainCatalog::child_names(const Node& node) const {
  std::vector<std::string> names;
  names.reserve(node.children.size());
  for (const auto& [name, child] : node.children) names.push_back(name);
  return names;
}

DomainPath DomainCatalog::add_domain(const DomainPath& parent, std::string_view name) {
  std::string normalized = DomainPath::normalize_segment(name);
  std::unique_lock lock(mutex_);
  Node* parent_node = find_node(parent);
  if (!parent_node) fail(ErrorCode::ParentNotFound, "no parent domain '" + parent.to_string() + "'");
  if (parent.depth() + 1 > max_depth_) {
    fail(ErrorCode::DepthExceeded, "depth " + std::to_string(parent.depth() + 1) + " exceeds max_depth " +
                                       std::to_string(max_depth_));
  }
  if (parent_node->children.contains(normalized)) {
    fail(ErrorCode::DuplicateSibling, "domain '" + parent.child(normalized).to_string() + "' exists");
  }
  insert_child(*parent_node, normalized);
  return parent.child(normalized);
}

std::vector<DomainPath> DomainCatalog::ensure_path(const DomainPath& path) {
  if (path.depth() > max_depth_) {
    fail(ErrorCode::DepthExceeded, "depth " + std::to_string(path.depth()) + " exceeds max_depth " +
                                       std::to_string(max_depth_));
  }
  std::unique_lock lock(mutex_);
  std::vector<DomainPath> created;
  Node* node = root_.get();
  DomainPath prefix;
  for (const auto& segment : path.segments()) {
    prefix = prefix.child(segment);
    auto it = node->children.find(segment);
    if (it == node->children.end()) {
      node = &insert_child(*node, segment);
      created.push_back(prefix);
    } else {
      node = it->second.get();
    }
  }
  return created;
}

bool DomainCatalog::remove_empty_domain(const DomainPath& path) {
  if (path.is_root()) return false;
  std::unique_lock lock(mutex_);
  Node* parent = find_node(path.parent());
  if (!parent) return false;
  auto it = parent->children.find(path.leaf());
  if (it == parent->children.end()) return false;
  if (!it->second->children.empty() || !it->second->mappings.empty()) return false;
  parent->children.erase(it);
  return true;
}

bool DomainCatalog::contains(const DomainPath& path) const {
  std::shared_lock lock(mutex_);
  return find_node(path) != nullptr;
}

DomainSummary DomainCatalog::lookup_domain(const DomainPath& path) const {
  std::shared_lock lock(mutex_);
  std::uint64_t comparisons = 0;
  const Node* node = find_node(path, &comparisons);
  lookups_.fetch_add(1, std::memory_order_relaxed);
  lookup_comparisons_.fetch_add(comparisons, std::memory_order_relaxed);
  if (!node) fail(ErrorCode::DomainNotFound, "no domain '" + path.to_string() + "'");
  return DomainSummary{node->name, child_names(*node), node->mappings.size(), comparisons};
}

DomainView DomainCatalog::view(const DomainPath& path) const {
  std::shared_lock lock(mutex_);
  std::uint64_t comparisons = 0;
  const Node* node = find_node(path, &comparisons);
  lookups_.fetch_add(1, std::memory_order_relaxed);
  lookup_comparisons_.fetch_add(comparisons, std::memory_order_relaxed);
  if (!node) fail(ErrorCode::DomainNotFound, "no domain '" + path.to_string() + "'");
  return DomainView{path, child_names(*node), node->mappings};
}

void DomainCatalog::attach_locked(const DomainPath& path, Node& node, KnowledgeMappingNode mapping) {
  const MappingKey key = mapping.key();
  std::uint64_t scanned = 0;
  if (node.find_mapping(key, &scanned) != node.mappings.end()) {
    fail(ErrorCode::DuplicateMapping, key.to_string() + " already mapped at '" + path.to_string() + "'");
  }
  node.mappings.push_back(std::move(mapping));
  occurrences_[key].insert(path);
  last_insert_cost_.store(scanned, std::memory_order_relaxed);
}

void DomainCatalog::detach_locked(const DomainPath& path, Node& node, const MappingKey& key) {
  auto it = node.find_mapping(key);
  if (it == node.mappings.end()) {
    fail(ErrorCode::MappingNotFound, key.to_string() + " not mapped at '" + path.to_string() + "'");
  }
  node.mappings.erase(it);
  auto occ = occurrences_.find(key);
  if (occ != occurrences_.end()) {
    occ->second.erase(path);
    if (occ->second.empty()) occurrences_.erase(occ);
  }
}

void DomainCatalog::attach_mapping(const DomainPath& path, KnowledgeMappingNode node) {
  node.properties.validate();
  std::unique_lock lock(mutex_);
  attach_locked(path, require_node(path), std::move(node));
}

void DomainCatalog::detach_mapping(const DomainPath& path, const MappingKey& key) {
  std::unique_lock lock(mutex_);
  detach_locked(path, require_node(path), key);
}

void DomainCatalog::move_mapping(const DomainPath& from, const DomainPath& to, const MappingKey& key) {
  std::unique_lock lock(mutex_);
  Node& source = require_node(from);
  Node& target = require_node(to);
  auto it = source.find_mapping(key);
  if (it == source.mappings.end()) {
    fail(ErrorCode::MappingNotFound, key.to_string() + " not mapped at '" + from.to_string() + "'");
  }
  if (target.find_mapping(key) != target.mappings.end()) {
    fail(ErrorCode::DuplicateMapping, key.to_string() + " already mapped at '" + to.to_string() + "'");
  }
  KnowledgeMappingNode moved = *it;
  detach_locked(from, source, key);
  attach_locked(to, target, std::move(moved));
}

std::size_t DomainCatalog::update_mappings(const MappingKey& key, const KnowledgeProperties& properties,
                                           const std::string& description, std::uint64_t revision) {
  properties.validate();
  std::unique_lock lock(mutex_);
  auto occ = occurrences_.find(key);
  if (occ == occurrences_.end()) return 0;
  std::size_t changed = 0;
  for (const auto& path : occ->second) {
    Node* node = find_node(path);
    if (!node) continue;
    auto it = node->find_mapping(key);
    if (it == node->mappings.end()) continue;
    if (it->properties == properties && it->description == description && it->revision == revision) continue;
    it->properties = properties;
    it->description = description;
    it->revision = revision;
    ++changed;
  }
  return changed;
}

std::vector<PlacedMapping> DomainCatalog::remove_mappings(const MappingKey& key) {
  std::unique_lock lock(mutex_);
  std::vector<PlacedMapping> removed;
  auto occ = occurrences_.find(key);
  if (occ == occurrences_.end()) return removed;
  const std::set<DomainPath> paths = occ->second;
  for (const auto& path : paths) {
    Node* node = find_node(path);
    if (!node) continue;
    auto it = node->find_mapping(key);
    if (it == node->mappings.end()) continue;
    removed.push_back({path, *it});
    detach_locked(path, *node, key);
  }
  return removed;
}

void DomainCatalog::restore_mappings(const std::vector<PlacedMapping>& placements) {
  std::unique_lock lock(mutex_);
  for (const auto& placed : placements) {
    Node* node = find_node(placed.path);
    if (!node || node->find_mapping(placed.node.key()) != node->mappings.end()) continue;
    attach_locked(placed.path, *node, placed.node);
  }
}

std::vector<KnowledgeMappingNode> DomainCatalog::list_mappings(const DomainPath& path) const {
  std::shared_lock lock(mutex_);
  return require_node(path).mappings;
}

std::vector<KnowledgeMappingNode> DomainCatalog::intersect_mappings(std::span<const DomainPath> paths) const {
  if (paths.empty()) fail(ErrorCode::EmptySelection, "no domains selected");
  std::shared_lock lock(mutex_);
  std::vector<const Node*> nodes;
  nodes.reserve(paths.size());
  for (const auto& path : paths) nodes.push_back(&require_node(path));

  std::vector<std::set<MappingKey>> others;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    std::set<MappingKey> keys;
    for (const auto& m : nodes[i]->mappings) keys.insert(m.key());
    others.push_back(std::move(keys));
  }

  std::vector<KnowledgeMappingNode> result;
  std::set<MappingKey> seen;
  for (const auto& m : nodes.front()->mappings) {
    const MappingKey key = m.key();
    if (!seen.insert(key).second) continue;
    bool everywhere = std::all_of(others.begin(), others.end(),
                                  [&](const std::set<MappingKey>& keys) { return keys.contains(key); });
    if (everywhere) result.push_back(m);
  }
  return result;
}

std::vector<DomainPath> DomainCatalog::occurrences(const MappingKey& key) const {
  std::shared_lock lock(mutex_);
  auto occ = occurrences_.find(key);
  if (occ == occurrences_.end()) return {};
  return {occ->second.begin(), occ->second.end()};
}

std::vector<PlacedMapping> DomainCatalog::all_mappings() const {
  std::shared_lock lock(mutex_);
  std::vector<PlacedMapping> out;
  std::function<void(const Node&, const DomainPath&)> walk = [&](const Node& node, const DomainPath& path) {
    for (const auto& m : node.mappings) out.push_back({path, m});
    for (const auto& [name, child] : node.children) walk(*child, path.child(name));
  };
  walk(*root_, DomainPath::root());
  return out;
}

CatalogMetrics DomainCatalog::metrics() const {
  std::shared_lock lock(mutex_);
  CatalogMetrics m;
  m.top_level_domains = root_->children.size();
  std::function<void(const Node&)> walk = [&](const Node& node) {
    for (const auto& [name, child] : node.children) {
      m.max_subdomains = std::max<std::uint64_t>(m.max_subdomains, child->children.size());
      walk(*child);
    }
  };
  walk(*root_);
  m.mapping_insert_cost = last_insert_cost_.load(std::memory_order_relaxed);
  m.lookups = lookups_.load(std::memory_order_relaxed);
  m.lookup_comparisons = lookup_comparisons_.load(std::memory_order_relaxed);
  return m;
}

json DomainCatalog::to_json() const {
  std::shared_lock lock(mutex_);
  std::function<json(const Node&)> encode = [&](const Node& node) {
    json children = json::array();
    for (const auto& [name, child] : node.children) children.push_back(encode(*child));
    return json{{"name", node.name}, {"children", std::move(children)}, {"mappings", node.mappings}};
  };
  json roots = json::array();
  for (const auto& [name, child] : root_->children) roots.push_back(encode(*child));
  return json{{"max_depth", max_depth_}, {"roots", std::move(roots)}};
}

std::unique_ptr<DomainCatalog> DomainCatalog::from_json(const json& doc) {
  auto catalog = std::make_unique<DomainCatalog>(doc.at("max_depth").get<std::size_t>());
  std::function<void(const json&, const DomainPath&)> decode = [&](const json& node, const DomainPath& parent) {
    DomainPath path = catalog->add_domain(parent, node.at("name").get<std::string>());
    for (const auto& m : node.at("mappings")) catalog->attach_mapping(path, m.get<KnowledgeMappingNode>());
    for (const auto& child : node.at("children")) decode(child, path);
  };
  for (const auto& root : doc.at("roots")) decode(root, DomainPath::root());
  return catalog;
}

void DomainCatalog::save(const std::filesystem::path& file) const {
  atomic_write_file(file, to_json().dump(2) + "\n");
}

std::unique_ptr<DomainCatalog> DomainCatalog::load(const std::filesystem::path& file) {
  json doc;
  try {
    doc = json::parse(read_file(file));
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, "corrupt catalog snapshot " + file.string() + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace kmap
