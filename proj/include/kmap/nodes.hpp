#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "kmap/coherence.hpp"
#include "kmap/domain_catalog.hpp"
#include "kmap/local_store.hpp"
#include "kmap/retrieval.hpp"
#include "kmap/transport.hpp"

namespace kmap {

struct CoreConfig {
  std::size_t max_depth = kDefaultMaxDepth;
  // When set: catalog.json, sites.json and journal.json live here.
  std::optional<std::filesystem::path> data_dir;
  std::size_t page_size = kDefaultPageSize;
  // Registration timestamps from a counter instead of the wall clock, for
  // reproducible transcripts.
  bool logical_clock = false;
};

// The master-site node: catalog, site registry, coherence flows and
// retrieval fan-out behind the message protocol.
class CoreNode : public MessageHandler {
 public:
  CoreNode(CoreConfig config, Connector& connector);

  Response handle(const Message& message) override;

  DomainCatalog& catalog() { return *catalog_; }
  SiteRegistry& sites() { return *sites_; }
  CoherenceManager& coherence() { return *coherence_; }
  const Retriever& retriever() const { return *retriever_; }

  // Writes the catalog and registry snapshots (no-op without data_dir).
  void flush();

 private:
  nlohmann::json dispatch(const Message& message);

  CoreConfig config_;
  std::unique_ptr<DomainCatalog> catalog_;
  std::unique_ptr<SiteRegistry> sites_;
  std::unique_ptr<CoherenceManager> coherence_;
  std::unique_ptr<Retriever> retriever_;
  std::atomic<std::int64_t> logical_time_{0};
  std::mutex flush_mutex_;
};

struct SiteConfig {
  std::string site_id;
  std::optional<std::filesystem::path> data_dir;
  Tokenizer tokenizer;
};

// A local site: the local knowledge map behind the message protocol. When a
// core channel is attached, local updates are pushed to the core right away.
class SiteNode : public MessageHandler {
 public:
  explicit SiteNode(SiteConfig config, std::shared_ptr<Channel> core = nullptr);

  Response handle(const Message& message) override;

  const std::string& site_id() const noexcept { return config_.site_id; }
  LocalStore& store() { return *store_; }
  void set_core(std::shared_ptr<Channel> core);

 private:
  nlohmann::json dispatch(const Message& message);

  SiteConfig config_;
  std::unique_ptr<LocalStore> store_;
  std::mutex core_mutex_;
  std::shared_ptr<Channel> core_;
};

}  // namespace kmap
