#include "kmap/local_store.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "kmap/codec.hpp"
#include "kmap/error.hpp"
#include "kmap/fs_util.hpp"

namespace kmap {

using nlohmann::json;
namespace fs = std::filesystem;

const KnowledgeElement* KnowledgeTable::find(std::uint64_t eid) const {
  auto it = std::lower_bound(elements.begin(), elements.end(), eid,
                             [](const KnowledgeElement& e, std::uint64_t id) { return e.eid < id; });
  return (it != elements.end() && it->eid == eid) ? &*it : nullptr;
}

IndexTable IndexTable::build(const KnowledgeTable& table, const Tokenizer& tokenizer) {
  IndexTable index;
  for (const auto& element : table.elements) {
    if (!element.content.is_rule()) continue;
    for (auto& term : tokenizer.terms(element.content.text)) {
      // Elements arrive in ascending eid order, so appending keeps each list sorted.
      index.postings_[std::move(term)].push_back(element.eid);
    }
  }
  return index;
}

const PostingList* IndexTable::find(std::string_view term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? nullptr : &it->second;
}

json IndexTable::to_json() const {
  json doc = json::object();
  for (const auto& [term, list] : postings_) doc[term] = list;
  return doc;
}

IndexTable IndexTable::from_json(const json& doc) {
  IndexTable index;
  for (const auto& [term, list] : doc.items()) {
    auto eids = list.get<PostingList>();
    if (!is_strictly_ascending(eids)) fail(ErrorCode::IoError, "posting list for '" + term + "' not ascending");
    index.postings_.emplace(term, std::move(eids));
  }
  return index;
}

void to_json(json& j, const KnowledgeHeader& h) {
  j = json{{"knowledge_id", h.knowledge_id}, {"properties", h.properties}, {"description", h.description},
           {"table_ref", h.table_ref},       {"index_ref", h.index_ref},   {"revision", h.revision}};
}

void from_json(const json& j, KnowledgeHeader& h) {
  h.knowledge_id = j.at("knowledge_id").get<std::string>();
  h.properties = j.at("properties").get<KnowledgeProperties>();
  h.description = j.value("description", std::string{});
  h.table_ref = j.value("table_ref", std::string{});
  h.index_ref = j.value("index_ref", std::string{});
  h.revision = j.value("revision", std::uint64_t{1});
}

void to_json(json& j, const HeaderSummary& h) {
  j = json{{"knowledge_id", h.knowledge_id},
           {"properties", h.properties},
           {"description", h.description},
           {"revision", h.revision}};
}

void from_json(const json& j, HeaderSummary& h) {
  h.knowledge_id = j.at("knowledge_id").get<std::string>();
  h.properties = j.at("properties").get<KnowledgeProperties>();
  h.description = j.value("description", std::string{});
  h.revision = j.value("revision", std::uint64_t{0});
}

void to_json(json& j, const KnowledgePayload& p) {
  j = json{{"knowledge_id", p.knowledge_id},
           {"elements", p.elements},
           {"properties", p.properties},
           {"description", p.description}};
}

void from_json(const json& j, KnowledgePayload& p) {
  p.knowledge_id = j.at("knowledge_id").get<std::string>();
  p.elements = j.value("elements", json::array()).get<std::vector<KnowledgeElement>>();
  p.properties = j.at("properties").get<KnowledgeProperties>();
  p.description = j.value("description", std::string{});
}

void to_json(json& j, const KnowledgeUpdate& u) {
  j = json::object();
  if (u.replace_elements) j["replace_elements"] = *u.replace_elements;
  if (!u.remove_eids.empty()) j["remove_eids"] = u.remove_eids;
  if (!u.add_elements.empty()) j["add_elements"] = u.add_elements;
  if (u.properties) j["properties"] = *u.properties;
  if (u.description) j["description"] = *u.description;
}

void from_json(const json& j, KnowledgeUpdate& u) {
  u = KnowledgeUpdate{};
  if (j.contains("replace_elements")) {
    u.replace_elements = j.at("replace_elements").get<std::vector<KnowledgeElement>>();
  }
  if (j.contains("remove_eids")) u.remove_eids = j.at("remove_eids").get<std::vector<std::uint64_t>>();
  if (j.contains("add_elements")) u.add_elements = j.at("add_elements").get<std::vector<KnowledgeElement>>();
  if (j.contains("properties")) u.properties = j.at("properties").get<KnowledgeProperties>();
  if (j.contains("description")) u.description = j.at("description").get<std::string>();
}

LocalStore::LocalStore(StoreOptions options) : options_(std::move(options)) {}

std::unique_ptr<LocalStore> LocalStore::open(const fs::path& data_dir, Tokenizer tokenizer) {
  auto store = std::make_unique<LocalStore>(StoreOptions{data_dir, std::move(tokenizer)});
  const fs::path headers_file = data_dir / "headers.json";
  if (!fs::exists(headers_file)) return store;

  json doc;
  try {
    doc = json::parse(read_file(headers_file));
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, "corrupt " + headers_file.string() + ": " + e.what());
  }
  for (const auto& h : doc.at("headers")) {
    auto header = h.get<KnowledgeHeader>();
    std::vector<KnowledgeElement> elements;
    std::istringstream lines(read_file(data_dir / header.table_ref));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      try {
        elements.push_back(parse_element_line(line));
      } catch (const Error& e) {
        fail(ErrorCode::IoError, header.table_ref + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    auto k = std::make_shared<Knowledge>();
    k->table = make_table(std::move(elements));
    const fs::path index_file = data_dir / header.index_ref;
    if (fs::exists(index_file)) {
      k->index = IndexTable::from_json(json::parse(read_file(index_file)));
    } else {
      k->index = IndexTable::build(k->table, store->options_.tokenizer);
    }
    k->header = std::move(header);
    store->knowledge_.emplace(k->header.knowledge_id, std::move(k));
  }
  return store;
}

KnowledgeTable LocalStore::make_table(std::vector<KnowledgeElement> elements) {
  for (const auto& e : elements) validate_element(e);
  std::sort(elements.begin(), elements.end(),
            [](const KnowledgeElement& a, const KnowledgeElement& b) { return a.eid < b.eid; });
  auto dup = std::adjacent_find(elements.begin(), elements.end(),
                                [](const KnowledgeElement& a, const KnowledgeElement& b) { return a.eid == b.eid; });
  if (dup != elements.end()) fail(ErrorCode::MalformedElement, "duplicate eid " + std::to_string(dup->eid));
  return KnowledgeTable{std::move(elements)};
}

std::shared_ptr<LocalStore::Knowledge> LocalStore::assemble(KnowledgeHeader header, KnowledgeTable table) const {
  auto k = std::make_shared<Knowledge>();
  k->index = IndexTable::build(table, options_.tokenizer);
  k->table = std::move(table);
  k->header = std::move(header);
  return k;
}

void LocalStore::set_refs(KnowledgeHeader& header) const {
  const std::string base = "knowledge/" + encode_path_component(header.knowledge_id) + "/r" +
                           std::to_string(header.revision) + "/";
  header.table_ref = base + "table.jsonl";
  header.index_ref = base + "index.json";
}

void LocalStore::persist_knowledge(const Knowledge& k) const {
  if (!options_.data_dir) return;
  std::string table;
  for (const auto& e : k.table.elements) table += json(e).dump() + "\n";
  atomic_write_file(*options_.data_dir / k.header.table_ref, table);
  atomic_write_file(*options_.data_dir / k.header.index_ref, k.index.to_json().dump() + "\n");
}

void LocalStore::persist_headers() const {
  if (!options_.data_dir) return;
  json headers = json::array();
  {
    std::shared_lock lock(map_mutex_);
    for (const auto& [id, k] : knowledge_) headers.push_back(k->header);
  }
  atomic_write_file(*options_.data_dir / "headers.json", json{{"headers", headers}}.dump(2) + "\n");
}

void LocalStore::remove_files(const KnowledgeHeader& header) const {
  if (!options_.data_dir) return;
  std::error_code ec;
  const fs::path table = *options_.data_dir / header.table_ref;
  fs::remove_all(table.parent_path(), ec);
  // Drop the per-knowledge directory once no revision is left in it.
  if (fs::is_empty(table.parent_path().parent_path(), ec)) fs::remove(table.parent_path().parent_path(), ec);
}

std::shared_ptr<const LocalStore::Knowledge> LocalStore::snapshot(const std::string& knowledge_id) const {
  std::shared_lock lock(map_mutex_);
  auto it = knowledge_.find(knowledge_id);
  return it == knowledge_.end() ? nullptr : it->second;
}

std::shared_ptr<const LocalStore::Knowledge> LocalStore::require(const std::string& knowledge_id) const {
  auto k = snapshot(knowledge_id);
  if (!k) fail(ErrorCode::KnowledgeNotFound, "no knowledge '" + knowledge_id + "' at this site");
  return k;
}

KnowledgeHeader LocalStore::ingest_knowledge(KnowledgePayload payload) {
  if (payload.knowledge_id.empty()) fail(ErrorCode::MalformedElement, "knowledge_id must be non-empty");
  payload.properties.validate();
  std::lock_guard writer(write_mutex_);
  if (snapshot(payload.knowledge_id)) {
    fail(ErrorCode::DuplicateKnowledgeId, "knowledge '" + payload.knowledge_id + "' already exists");
  }
  KnowledgeHeader header{payload.knowledge_id, std::move(payload.properties), std::move(payload.description),
                         {}, {}, 1};
  set_refs(header);
  auto k = assemble(std::move(header), make_table(std::move(payload.elements)));
  persist_knowledge(*k);
  {
    std::unique_lock lock(map_mutex_);
    knowledge_.emplace(k->header.knowledge_id, k);
  }
  persist_headers();
  return k->header;
}

IndexTable LocalStore::build_index(const std::string& knowledge_id) {
  std::lock_guard writer(write_mutex_);
  auto current = require(knowledge_id);
  auto rebuilt = std::make_shared<Knowledge>(*current);
  rebuilt->index = IndexTable::build(rebuilt->table, options_.tokenizer);
  if (rebuilt->index == current->index) return current->index;
  persist_knowledge(*rebuilt);
  {
    std::unique_lock lock(map_mutex_);
    knowledge_[knowledge_id] = rebuilt;
  }
  return rebuilt->index;
}

PostingList LocalStore::postings(const std::string& knowledge_id, std::string_view term) const {
  auto k = require(knowledge_id);
  auto tokens = options_.tokenizer.tokenize(term);
  if (tokens.size() != 1) return {};
  detail::ComparisonScope scope;
  const PostingList* list = k->index.find(tokens.front());
  last_query_terms_.store(1, std::memory_order_relaxed);
  last_comparisons_per_term_.store(static_cast<double>(scope.count()), std::memory_order_relaxed);
  return list ? *list : PostingList{};
}

std::vector<KnowledgeElement> LocalStore::query_elements(const std::string& knowledge_id,
                                                         std::span<const std::string> terms) const {
  auto k = require(knowledge_id);
  const auto tokens = options_.tokenizer.normalize_query(terms);
  if (tokens.empty()) return k->table.elements;

  std::vector<const PostingList*> lists;
  bool missing = false;
  detail::ComparisonScope scope;
  for (const auto& token : tokens) {
    const PostingList* list = k->index.find(token);
    if (!list) {
      missing = true;
      break;
    }
    lists.push_back(list);
  }
  last_query_terms_.store(tokens.size(), std::memory_order_relaxed);
  last_comparisons_per_term_.store(static_cast<double>(scope.count()) / static_cast<double>(tokens.size()),
                                   std::memory_order_relaxed);
  if (missing) return {};

  std::vector<KnowledgeElement> out;
  for (std::uint64_t eid : intersect_all(std::move(lists))) {
    if (const auto* e = k->table.find(eid)) out.push_back(*e);
  }
  return out;
}

KnowledgeElement LocalStore::get_element(const std::string& knowledge_id, std::uint64_t eid) const {
  auto k = require(knowledge_id);
  const auto* e = k->table.find(eid);
  if (!e) fail(ErrorCode::ElementNotFound, "no element " + std::to_string(eid) + " in '" + knowledge_id + "'");
  return *e;
}

std::vector<HeaderSummary> LocalStore::list_headers() const {
  std::shared_lock lock(map_mutex_);
  std::vector<HeaderSummary> out;
  out.reserve(knowledge_.size());
  for (const auto& [id, k] : knowledge_) {
    out.push_back({k->header.knowledge_id, k->header.properties, k->header.description, k->header.revision});
  }
  return out;
}

KnowledgeHeader LocalStore::header(const std::string& knowledge_id) const { return require(knowledge_id)->header; }

KnowledgeHeader LocalStore::update_knowledge(const std::string& knowledge_id, const KnowledgeUpdate& update) {
  if (update.properties) update.properties->validate();
  std::lock_guard writer(write_mutex_);
  auto current = require(knowledge_id);

  KnowledgeHeader header = current->header;
  header.revision += 1;
  if (update.properties) header.properties = *update.properties;
  if (update.description) header.description = *update.description;
  set_refs(header);

  std::shared_ptr<Knowledge> next;
  if (update.touches_elements()) {
    std::vector<KnowledgeElement> elements = update.replace_elements ? *update.replace_elements
                                                                     : current->table.elements;
    for (std::uint64_t eid : update.remove_eids) {
      auto it = std::find_if(elements.begin(), elements.end(),
                             [eid](const KnowledgeElement& e) { return e.eid == eid; });
      if (it == elements.end()) {
        fail(ErrorCode::ElementNotFound, "no element " + std::to_string(eid) + " in '" + knowledge_id + "'");
      }
      elements.erase(it);
    }
    elements.insert(elements.end(), update.add_elements.begin(), update.add_elements.end());
    next = assemble(std::move(header), make_table(std::move(elements)));
  } else {
    next = std::make_shared<Knowledge>(Knowledge{std::move(header), current->table, current->index});
  }

  persist_knowledge(*next);
  {
    std::unique_lock lock(map_mutex_);
    knowledge_[knowledge_id] = next;
  }
  persist_headers();
  remove_files(current->header);
  return next->header;
}

void LocalStore::remove_knowledge(const std::string& knowledge_id) {
  std::lock_guard writer(write_mutex_);
  auto current = require(knowledge_id);
  {
    std::unique_lock lock(map_mutex_);
    knowledge_.erase(knowledge_id);
  }
  persist_headers();
  remove_files(current->header);
}

CatalogMetrics LocalStore::metrics() const {
  CatalogMetrics m;
  {
    std::shared_lock lock(map_mutex_);
    m.knowledge_headers = knowledge_.size();
  }
  m.query_terms = last_query_terms_.load(std::memory_order_relaxed);
  m.comparisons_per_term = last_comparisons_per_term_.load(std::memory_order_relaxed);
  return m;
}

std::size_t LocalStore::state_hash() const {
  json doc = json::array();
  {
    std::shared_lock lock(map_mutex_);
    for (const auto& [id, k] : knowledge_) {
      doc.push_back(json{{"header", k->header}, {"table", k->table.elements}, {"index", k->index.to_json()}});
    }
  }
  return std::hash<std::string>{}(doc.dump());
}

}  // namespace kmap
