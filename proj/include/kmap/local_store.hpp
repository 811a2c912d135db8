#pragma once

#include <atomic>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/knowledge.hpp"
#include "kmap/metrics.hpp"
#include "kmap/posting_list.hpp"
#include "kmap/tokenizer.hpp"

namespace kmap {

// Elements of one knowledge, sorted by eid.
struct KnowledgeTable {
  std::vector<KnowledgeElement> elements;

  const KnowledgeElement* find(std::uint64_t eid) const;
  bool operator==(const KnowledgeTable&) const = default;
};

// Inverted file: term -> ascending eids of the elements whose content
// contains the term. Opaque references contribute no terms.
class IndexTable {
 public:
  using Map = std::map<std::string, PostingList, detail::CountingLess>;

  static IndexTable build(const KnowledgeTable& table, const Tokenizer& tokenizer);

  // nullptr when the term is not indexed.
  const PostingList* find(std::string_view term) const;
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }
  const Map& postings() const noexcept { return postings_; }

  nlohmann::json to_json() const;
  static IndexTable from_json(const nlohmann::json& doc);

  bool operator==(const IndexTable& other) const { return postings_ == other.postings_; }

 private:
  Map postings_;
};

struct KnowledgeHeader {
  std::string knowledge_id;
  KnowledgeProperties properties;
  std::string description;
  std::string table_ref;  // locator of the knowledge table
  std::string index_ref;  // locator of the index table
  std::uint64_t revision = 1;

  bool operator==(const KnowledgeHeader&) const = default;
};

void to_json(nlohmann::json& j, const KnowledgeHeader& h);
void from_json(const nlohmann::json& j, KnowledgeHeader& h);

struct HeaderSummary {
  std::string knowledge_id;
  KnowledgeProperties properties;
  std::string description;
  std::uint64_t revision = 0;

  bool operator==(const HeaderSummary&) const = default;
};

void to_json(nlohmann::json& j, const HeaderSummary& h);
void from_json(const nlohmann::json& j, HeaderSummary& h);

// A knowledge as handed to a site for ingestion.
struct KnowledgePayload {
  std::string knowledge_id;
  std::vector<KnowledgeElement> elements;
  KnowledgeProperties properties;
  std::string description;
};

void to_json(nlohmann::json& j, const KnowledgePayload& p);
void from_json(const nlohmann::json& j, KnowledgePayload& p);

// Edits applied by update_knowledge, in this order: replace, remove, add.
struct KnowledgeUpdate {
  std::optional<std::vector<KnowledgeElement>> replace_elements;
  std::vector<std::uint64_t> remove_eids;
  std::vector<KnowledgeElement> add_elements;
  std::optional<KnowledgeProperties> properties;
  std::optional<std::string> description;

  bool touches_elements() const {
    return replace_elements.has_value() || !remove_eids.empty() || !add_elements.empty();
  }
};

void to_json(nlohmann::json& j, const KnowledgeUpdate& u);
void from_json(const nlohmann::json& j, KnowledgeUpdate& u);

struct StoreOptions {
  std::optional<std::filesystem::path> data_dir;  // in-memory when unset
  Tokenizer tokenizer;
};

// The site-resident local knowledge map.
//
// Each knowledge is an immutable (header, table, index) triple swapped in as
// a unit, so a reader never sees a table newer than its index. Writers are
// serialized; readers only hold the map lock long enough to copy a pointer.
// With a data directory, every mutation is persisted before it returns:
//   <dir>/headers.json
//   <dir>/knowledge/<id>/r<revision>/table.jsonl
//   <dir>/knowledge/<id>/r<revision>/index.json
class LocalStore {
 public:
  struct Knowledge {
    KnowledgeHeader header;
    KnowledgeTable table;
    IndexTable index;
  };

  explicit LocalStore(StoreOptions options = {});

  // Loads a persisted store; a missing directory yields an empty store.
  static std::unique_ptr<LocalStore> open(const std::filesystem::path& data_dir, Tokenizer tokenizer = {});

  KnowledgeHeader ingest_knowledge(KnowledgePayload payload);
  IndexTable build_index(const std::string& knowledge_id);
  PostingList postings(const std::string& knowledge_id, std::string_view term) const;
  std::vector<KnowledgeElement> query_elements(const std::string& knowledge_id,
                                               std::span<const std::string> terms) const;
  std::vector<KnowledgeElement> query_elements(const std::string& knowledge_id,
                                               std::initializer_list<std::string> terms) const {
    return query_elements(knowledge_id, std::span<const std::string>(terms.begin(), terms.size()));
  }
  KnowledgeElement get_element(const std::string& knowledge_id, std::uint64_t eid) const;
  std::vector<HeaderSummary> list_headers() const;
  KnowledgeHeader header(const std::string& knowledge_id) const;
  KnowledgeHeader update_knowledge(const std::string& knowledge_id, const KnowledgeUpdate& update);
  void remove_knowledge(const std::string& knowledge_id);

  std::shared_ptr<const Knowledge> snapshot(const std::string& knowledge_id) const;
  const Tokenizer& tokenizer() const noexcept { return options_.tokenizer; }
  CatalogMetrics metrics() const;

  // Hash over every header, table and index; equal states hash equal.
  std::size_t state_hash() const;

 private:
  std::shared_ptr<const Knowledge> require(const std::string& knowledge_id) const;
  static KnowledgeTable make_table(std::vector<KnowledgeElement> elements);
  std::shared_ptr<Knowledge> assemble(KnowledgeHeader header, KnowledgeTable table) const;
  void set_refs(KnowledgeHeader& header) const;
  void persist_knowledge(const Knowledge& k) const;
  void persist_headers() const;
  void remove_files(const KnowledgeHeader& header) const;

  StoreOptions options_;
  std::map<std::string, std::shared_ptr<const Knowledge>> knowledge_;
  mutable std::shared_mutex map_mutex_;
  std::mutex write_mutex_;

  mutable std::atomic<std::uint64_t> last_query_terms_{0};
  mutable std::atomic<double> last_comparisons_per_term_{0.0};
};

}  // namespace kmap
