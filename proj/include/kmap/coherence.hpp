#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/domain_catalog.hpp"
#include "kmap/local_store.hpp"
#include "kmap/transport.hpp"

namespace kmap {

struct SiteRegistration {
  std::string site_id;
  std::string address;
  std::int64_t registered_at = 0;

  bool operator==(const SiteRegistration&) const = default;
};

void to_json(nlohmann::json& j, const SiteRegistration& r);
void from_json(const nlohmann::json& j, SiteRegistration& r);

// Sites known to the core and how to reach them.
class SiteRegistry {
 public:
  using Clock = std::function<std::int64_t()>;

  // The default clock is wall time in milliseconds since the epoch.
  explicit SiteRegistry(Connector& connector, Clock clock = {});

  SiteRegistration register_site(const std::string& site_id, const std::string& address);
  std::optional<SiteRegistration> find(const std::string& site_id) const;
  std::vector<SiteRegistration> list() const;
  // Throws SiteNotFound for unknown sites.
  std::shared_ptr<Channel> channel(const std::string& site_id);

  nlohmann::json to_json() const;
  void restore(const nlohmann::json& doc);

 private:
  Connector& connector_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, SiteRegistration> sites_;
  std::map<std::string, std::shared_ptr<Channel>> channels_;
};

struct DanglingMapping {
  DomainPath path;
  MappingKey key;
};

// Differences between the core's mapping lists and the site headers.
// Unreachable sites are listed separately and their keys are not judged.
struct CoherenceReport {
  std::vector<DanglingMapping> dangling_mappings;  // core mapping, no site header
  std::vector<MappingKey> orphan_headers;          // site header, no core mapping
  std::vector<MappingKey> stale_mappings;          // core copy differs from header
  std::vector<std::string> unreachable_sites;

  bool coherent() const {
    return dangling_mappings.empty() && orphan_headers.empty() && stale_mappings.empty();
  }
  nlohmann::json to_json() const;
  static CoherenceReport from_json(const nlohmann::json& doc);
};

// Step boundaries of the add-knowledge flow at which faults can be injected.
enum class AddStep { BeforeIngest, AfterIngest, AfterDomainCreate, AfterAttach };

inline constexpr std::array<AddStep, 4> kAddSteps{AddStep::BeforeIngest, AddStep::AfterIngest,
                                                  AddStep::AfterDomainCreate, AddStep::AfterAttach};

std::string_view to_string(AddStep step) noexcept;

// Thrown by a fault hook to model the core process dying mid-flow: no
// compensation runs and the intent stays in the journal until recover().
struct SimulatedCrash : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AddOutcome {
  DomainPath path;
  std::uint64_t revision = 0;
  std::vector<DomainPath> created_domains;
};

struct PropagateOutcome {
  std::size_t updated = 0;
  std::uint64_t revision = 0;
};

// Keeps local maps and the core coherent. Information about a knowledge only
// ever flows from the owning site to the core; the core may restructure
// domains and move mappings, never edit a mapping's content.
//
// add_knowledge is all-or-nothing: each in-flight add is recorded as an
// intent; a failure compensates (detach, drop created domains, delete at the
// site) and a crash leaves the intent for recover() to compensate.
class CoherenceManager {
 public:
  using FaultHook = std::function<void(AddStep)>;

  CoherenceManager(DomainCatalog& catalog, SiteRegistry& sites,
                   std::optional<std::filesystem::path> journal_file = std::nullopt);

  SiteRegistration register_site(const std::string& site_id, const std::string& address);
  AddOutcome add_knowledge(const std::string& site_id, const KnowledgePayload& payload, const DomainPath& path,
                           bool create_domain_if_missing);
  PropagateOutcome propagate_update(const std::string& site_id, const std::string& knowledge_id);
  [[noreturn]] void reject_core_edit(const DomainPath& path, const std::string& site_id,
                                     const std::string& knowledge_id, const nlohmann::json& fields) const;
  void reclassify_knowledge(const std::string& site_id, const std::string& knowledge_id, const DomainPath& from,
                            const DomainPath& to);
  // Removes the knowledge at its site and every core mapping of it. A site
  // that no longer knows the key (or is no longer registered) counts as done,
  // which is how operators clear dangling mappings.
  std::size_t remove_knowledge(const std::string& site_id, const std::string& knowledge_id);
  CoherenceReport verify_coherence();

  // Compensates every intent left behind by a crash. Returns how many were
  // resolved; intents whose site is unreachable stay pending.
  std::size_t recover();
  std::size_t pending_intents() const;

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

 private:
  struct Intent {
    std::string site_id;
    std::string knowledge_id;
    DomainPath path;
    bool ingest_issued = false;
    bool attached = false;
    std::vector<DomainPath> created_domains;
  };

  std::mutex& key_lock(const MappingKey& key);
  void fault_point(AddStep step) const;
  void record(const Intent& intent);
  void forget(const MappingKey& key);
  void persist_journal() const;
  // Undoes whatever part of the intent was applied; throws if the site could
  // not be reached.
  void compensate(const Intent& intent);

  DomainCatalog& catalog_;
  SiteRegistry& sites_;
  std::optional<std::filesystem::path> journal_file_;
  FaultHook fault_hook_;

  std::array<std::mutex, 64> key_locks_;
  mutable std::mutex journal_mutex_;
  std::map<MappingKey, Intent> journal_;
};

}  // namespace kmap
