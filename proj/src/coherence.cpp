#include "kmap/coherence.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "kmap/codec.hpp"
#include "kmap/error.hpp"
#include "kmap/fs_util.hpp"

namespace kmap {

using nlohmann::json;

void to_json(json& j, const SiteRegistration& r) {
  j = json{{"site_id", r.site_id}, {"address", r.address}, {"registered_at", r.registered_at}};
}

void from_json(const json& j, SiteRegistration& r) {
  r.site_id = j.at("site_id").get<std::string>();
  r.address = j.at("address").get<std::string>();
  r.registered_at = j.value("registered_at", std::int64_t{0});
}

SiteRegistry::SiteRegistry(Connector& connector, Clock clock) : connector_(connector), clock_(std::move(clock)) {
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

SiteRegistration SiteRegistry::register_site(const std::string& site_id, const std::string& address) {
  if (site_id.empty()) fail(ErrorCode::MalformedRequest, "site_id must be non-empty");
  if (address.empty()) fail(ErrorCode::MalformedRequest, "address must be non-empty");
  std::lock_guard lock(mutex_);
  if (sites_.contains(site_id)) fail(ErrorCode::DuplicateSite, "site '" + site_id + "' already registered");
  SiteRegistration reg{site_id, address, clock_()};
  sites_.emplace(site_id, reg);
  return reg;
}

std::optional<SiteRegistration> SiteRegistry::find(const std::string& site_id) const {
  std::lock_guard lock(mutex_);
  auto it = sites_.find(site_id);
  if (it == sites_.end()) return std::nullopt;
  return it->second;
}

std::vector<SiteRegistration> SiteRegistry::list() const {
  std::lock_guard lock(mutex_);
  std::vector<SiteRegistration> out;
  for (const auto& [id, reg] : sites_) out.push_back(reg);
  return out;
}

std::shared_ptr<Channel> SiteRegistry::channel(const std::string& site_id) {
  std::lock_guard lock(mutex_);
  auto it = sites_.find(site_id);
  if (it == sites_.end()) fail(ErrorCode::SiteNotFound, "site '" + site_id + "' is not registered");
  auto& cached = channels_[site_id];
  if (!cached) cached = connector_.connect(it->second.address);
  return cached;
}

json SiteRegistry::to_json() const {
  std::lock_guard lock(mutex_);
  json sites = json::array();
  for (const auto& [id, reg] : sites_) sites.push_back(reg);
  return json{{"sites", std::move(sites)}};
}

void SiteRegistry::restore(const json& doc) {
  std::lock_guard lock(mutex_);
  sites_.clear();
  channels_.clear();
  for (const auto& s : doc.at("sites")) {
    auto reg = s.get<SiteRegistration>();
    sites_.emplace(reg.site_id, reg);
  }
}

json CoherenceReport::to_json() const {
  json dangling = json::array();
  for (const auto& d : dangling_mappings) {
    dangling.push_back(json{{"path", d.path}, {"site_id", d.key.site_id}, {"knowledge_id", d.key.knowledge_id}});
  }
  return json{{"dangling_mappings", std::move(dangling)},
              {"orphan_headers", orphan_headers},
              {"stale_mappings", stale_mappings},
              {"unreachable_sites", unreachable_sites},
              {"coherent", coherent()}};
}

CoherenceReport CoherenceReport::from_json(const json& doc) {
  CoherenceReport r;
  for (const auto& d : doc.at("dangling_mappings")) {
    r.dangling_mappings.push_back({d.at("path").get<DomainPath>(), d.get<MappingKey>()});
  }
  r.orphan_headers = doc.at("orphan_headers").get<std::vector<MappingKey>>();
  r.stale_mappings = doc.at("stale_mappings").get<std::vector<MappingKey>>();
  r.unreachable_sites = doc.value("unreachable_sites", std::vector<std::string>{});
  return r;
}

std::string_view to_string(AddStep step) noexcept {
  switch (step) {
    case AddStep::BeforeIngest:
      return "before-ingest";
    case AddStep::AfterIngest:
      return "after-ingest";
    case AddStep::AfterDomainCreate:
      return "after-domain-create";
    case AddStep::AfterAttach:
      return "after-attach";
  }
  return "before-ingest";
}

CoherenceManager::CoherenceManager(DomainCatalog& catalog, SiteRegistry& sites,
                                   std::optional<std::filesystem::path> journal_file)
    : catalog_(catalog), sites_(sites), journal_file_(std::move(journal_file)) {
  if (journal_file_ && std::filesystem::exists(*journal_file_)) {
    json doc = json::parse(read_file(*journal_file_));
    for (const auto& entry : doc.at("intents")) {
      Intent intent;
      intent.site_id = entry.at("site_id").get<std::string>();
      intent.knowledge_id = entry.at("knowledge_id").get<std::string>();
      intent.path = entry.at("path").get<DomainPath>();
      intent.ingest_issued = entry.at("ingest_issued").get<bool>();
      intent.attached = entry.at("attached").get<bool>();
      intent.created_domains = entry.at("created_domains").get<std::vector<DomainPath>>();
      journal_.emplace(MappingKey{intent.site_id, intent.knowledge_id}, std::move(intent));
    }
  }
}

std::mutex& CoherenceManager::key_lock(const MappingKey& key) {
  const std::size_t h = std::hash<std::string>{}(key.site_id) * 31 + std::hash<std::string>{}(key.knowledge_id);
  return key_locks_[h % key_locks_.size()];
}

void CoherenceManager::fault_point(AddStep step) const {
  if (fault_hook_) fault_hook_(step);
}

void CoherenceManager::persist_journal() const {
  if (!journal_file_) return;
  json intents = json::array();
  for (const auto& [key, intent] : journal_) {
    intents.push_back(json{{"site_id", intent.site_id},
                           {"knowledge_id", intent.knowledge_id},
                           {"path", intent.path},
                           {"ingest_issued", intent.ingest_issued},
                           {"attached", intent.attached},
                           {"created_domains", intent.created_domains}});
  }
  atomic_write_file(*journal_file_, json{{"intents", std::move(intents)}}.dump(2) + "\n");
}

void CoherenceManager::record(const Intent& intent) {
  std::lock_guard lock(journal_mutex_);
  journal_[MappingKey{intent.site_id, intent.knowledge_id}] = intent;
  persist_journal();
}

void CoherenceManager::forget(const MappingKey& key) {
  std::lock_guard lock(journal_mutex_);
  journal_.erase(key);
  persist_journal();
}

std::size_t CoherenceManager::pending_intents() const {
  std::lock_guard lock(journal_mutex_);
  return journal_.size();
}

SiteRegistration CoherenceManager::register_site(const std::string& site_id, const std::string& address) {
  return sites_.register_site(site_id, address);
}

void CoherenceManager::compensate(const Intent& intent) {
  const MappingKey key{intent.site_id, intent.knowledge_id};
  if (intent.attached) {
    try {
      catalog_.detach_mapping(intent.path, key);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MappingNotFound && e.code() != ErrorCode::DomainNotFound) throw;
    }
  }
  for (auto it = intent.created_domains.rbegin(); it != intent.created_domains.rend(); ++it) {
    catalog_.remove_empty_domain(*it);
  }
  if (intent.ingest_issued) {
    try {
      sites_.channel(intent.site_id)->request(MessageKind::RemoveKnowledge, json{{"knowledge_id", intent.knowledge_id}});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::KnowledgeNotFound) throw;
    }
  }
}

AddOutcome CoherenceManager::add_knowledge(const std::string& site_id, const KnowledgePayload& payload,
                                           const DomainPath& path, bool create_domain_if_missing) {
  const MappingKey key{site_id, payload.knowledge_id};
  std::lock_guard key_guard(key_lock(key));

  auto site = sites_.channel(site_id);
  if (payload.knowledge_id.empty()) fail(ErrorCode::MalformedElement, "knowledge_id must be non-empty");
  payload.properties.validate();
  if (path.is_root()) fail(ErrorCode::InvalidPath, "knowledge must be classified under a domain");
  if (path.depth() > catalog_.max_depth()) {
    fail(ErrorCode::DepthExceeded, "depth " + std::to_string(path.depth()) + " exceeds max_depth");
  }
  if (!create_domain_if_missing && !catalog_.contains(path)) {
    fail(ErrorCode::DomainNotFound, "no domain '" + path.to_string() + "'");
  }
  {
    std::lock_guard lock(journal_mutex_);
    if (journal_.contains(key)) {
      fail(ErrorCode::DuplicateKnowledgeId, "an unresolved add for " + key.to_string() + " is pending recovery");
    }
  }
  // Refuse before touching the site, so compensation can never delete a
  // knowledge this flow did not create.
  try {
    site->request(MessageKind::GetHeader, json{{"knowledge_id", payload.knowledge_id}});
    fail(ErrorCode::DuplicateKnowledgeId, "knowledge '" + payload.knowledge_id + "' already exists at " + site_id);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::KnowledgeNotFound) throw;
  }

  Intent intent{site_id, payload.knowledge_id, path, false, false, {}};
  record(intent);
  try {
    fault_point(AddStep::BeforeIngest);

    intent.ingest_issued = true;
    record(intent);
    json header;
    try {
      header = site->request(MessageKind::Ingest, json{{"knowledge", payload}});
    } catch (const Error& e) {
      // A rejected ingest left nothing behind at the site.
      if (e.code() != ErrorCode::SiteUnreachable && e.code() != ErrorCode::Internal) intent.ingest_issued = false;
      throw;
    }
    const auto revision = header.at("revision").get<std::uint64_t>();
    fault_point(AddStep::AfterIngest);

    if (create_domain_if_missing) {
      intent.created_domains = catalog_.ensure_path(path);
      record(intent);
    }
    fault_point(AddStep::AfterDomainCreate);

    catalog_.attach_mapping(path, KnowledgeMappingNode{site_id, payload.knowledge_id, payload.properties,
                                                       payload.description, revision});
    intent.attached = true;
    record(intent);
    fault_point(AddStep::AfterAttach);

    forget(key);
    return AddOutcome{path, revision, intent.created_domains};
  } catch (const SimulatedCrash&) {
    throw;
  } catch (...) {
    try {
      compensate(intent);
      forget(key);
    } catch (const std::exception&) {
      // Left pending for recover().
    }
    throw;
  }
}

PropagateOutcome CoherenceManager::propagate_update(const std::string& site_id, const std::string& knowledge_id) {
  const MappingKey key{site_id, knowledge_id};
  std::lock_guard key_guard(key_lock(key));
  auto site = sites_.channel(site_id);
  const auto header = site->request(MessageKind::GetHeader, json{{"knowledge_id", knowledge_id}});
  const auto revision = header.at("revision").get<std::uint64_t>();
  const auto updated = catalog_.update_mappings(key, header.at("properties").get<KnowledgeProperties>(),
                                                header.value("description", std::string{}), revision);
  return PropagateOutcome{updated, revision};
}

void CoherenceManager::reject_core_edit(const DomainPath& path, const std::string& site_id,
                                        const std::string& knowledge_id, const json& fields) const {
  throw Error(ErrorCode::EditProhibited,
              "mapping " + site_id + "/" + knowledge_id + " at '" + path.to_string() +
                  "' can only change through its site; the core may only restructure domains",
              json{{"fields", fields}});
}

void CoherenceManager::reclassify_knowledge(const std::string& site_id, const std::string& knowledge_id,
                                            const DomainPath& from, const DomainPath& to) {
  const MappingKey key{site_id, knowledge_id};
  std::lock_guard key_guard(key_lock(key));
  catalog_.move_mapping(from, to, key);
}

std::size_t CoherenceManager::remove_knowledge(const std::string& site_id, const std::string& knowledge_id) {
  const MappingKey key{site_id, knowledge_id};
  std::lock_guard key_guard(key_lock(key));
  auto removed = catalog_.remove_mappings(key);
  try {
    sites_.channel(site_id)->request(MessageKind::RemoveKnowledge, json{{"knowledge_id", knowledge_id}});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::KnowledgeNotFound || e.code() == ErrorCode::SiteNotFound) {
      if (removed.empty()) throw;
      return removed.size();
    }
    catalog_.restore_mappings(removed);
    throw;
  }
  return removed.size();
}

CoherenceReport CoherenceManager::verify_coherence() {
  CoherenceReport report;
  const auto placements = catalog_.all_mappings();

  std::map<std::string, std::map<std::string, HeaderSummary>> headers;
  for (const auto& reg : sites_.list()) {
    try {
      json reply = sites_.channel(reg.site_id)->request(MessageKind::ListHeaders);
      auto& by_id = headers[reg.site_id];
      for (auto& h : reply.at("headers").get<std::vector<HeaderSummary>>()) by_id.emplace(h.knowledge_id, h);
    } catch (const Error&) {
      report.unreachable_sites.push_back(reg.site_id);
    }
  }
  auto unreachable = [&](const std::string& site) {
    return std::find(report.unreachable_sites.begin(), report.unreachable_sites.end(), site) !=
           report.unreachable_sites.end();
  };

  std::set<MappingKey> mapped;
  std::set<MappingKey> stale;
  for (const auto& placed : placements) {
    const MappingKey key = placed.node.key();
    mapped.insert(key);
    if (unreachable(key.site_id)) continue;
    auto site = headers.find(key.site_id);
    const HeaderSummary* header = nullptr;
    if (site != headers.end()) {
      auto it = site->second.find(key.knowledge_id);
      if (it != site->second.end()) header = &it->second;
    }
    if (!header) {
      report.dangling_mappings.push_back({placed.path, key});
    } else if (header->properties != placed.node.properties || header->description != placed.node.description ||
               header->revision != placed.node.revision) {
      stale.insert(key);
    }
  }
  for (const auto& [site_id, by_id] : headers) {
    for (const auto& [kid, header] : by_id) {
      if (!mapped.contains(MappingKey{site_id, kid})) report.orphan_headers.push_back({site_id, kid});
    }
  }
  report.stale_mappings.assign(stale.begin(), stale.end());
  std::sort(report.dangling_mappings.begin(), report.dangling_mappings.end(),
            [](const DanglingMapping& a, const DanglingMapping& b) {
              return std::tie(a.key, a.path) < std::tie(b.key, b.path);
            });
  return report;
}

std::size_t CoherenceManager::recover() {
  std::vector<Intent> pending;
  {
    std::lock_guard lock(journal_mutex_);
    for (const auto& [key, intent] : journal_) pending.push_back(intent);
  }
  std::size_t resolved = 0;
  for (const auto& intent : pending) {
    const MappingKey key{intent.site_id, intent.knowledge_id};
    std::lock_guard key_guard(key_lock(key));
    try {
      compensate(intent);
      forget(key);
      ++resolved;
    } catch (const std::exception&) {
      // Site still unreachable; try again on the next recovery pass.
    }
  }
  return resolved;
}

}  // namespace kmap
