#include "kmap/nodes.hpp"

#include <algorithm>

#include "kmap/codec.hpp"
#include "kmap/error.hpp"
#include "kmap/fs_util.hpp"

namespace kmap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

DomainPath path_field(const json& payload, const char* name) {
  auto it = payload.find(name);
  if (it == payload.end()) return DomainPath::root();
  return it->get<DomainPath>();
}

std::string string_field(const json& payload, const char* name) {
  auto it = payload.find(name);
  if (it == payload.end() || !it->is_string()) {
    fail(ErrorCode::MalformedRequest, std::string("payload field '") + name + "' must be a string");
  }
  return it->get<std::string>();
}

bool mutates_core(MessageKind kind) {
  switch (kind) {
    case MessageKind::RegisterSite:
    case MessageKind::AddKnowledge:
    case MessageKind::PropagateUpdate:
    case MessageKind::Reclassify:
    case MessageKind::AddDomain:
    case MessageKind::MoveMapping:
    case MessageKind::RemoveKnowledge:
      return true;
    default:
      return false;
  }
}

}  // namespace

CoreNode::CoreNode(CoreConfig config, Connector& connector) : config_(std::move(config)) {
  SiteRegistry::Clock clock;
  if (config_.logical_clock) clock = [this] { return ++logical_time_; };
  sites_ = std::make_unique<SiteRegistry>(connector, std::move(clock));

  std::optional<fs::path> journal;
  if (config_.data_dir) {
    fs::create_directories(*config_.data_dir);
    const fs::path catalog_file = *config_.data_dir / "catalog.json";
    const fs::path sites_file = *config_.data_dir / "sites.json";
    if (fs::exists(catalog_file)) catalog_ = DomainCatalog::load(catalog_file);
    if (fs::exists(sites_file)) sites_->restore(json::parse(read_file(sites_file)));
    journal = *config_.data_dir / "journal.json";
  }
  if (!catalog_) catalog_ = std::make_unique<DomainCatalog>(config_.max_depth);

  coherence_ = std::make_unique<CoherenceManager>(*catalog_, *sites_, journal);
  retriever_ = std::make_unique<Retriever>(
      *catalog_, [this](const std::string& site_id) { return sites_->channel(site_id); }, config_.page_size);
  if (coherence_->pending_intents() > 0 && coherence_->recover() > 0) flush();
}

void CoreNode::flush() {
  if (!config_.data_dir) return;
  std::lock_guard lock(flush_mutex_);
  catalog_->save(*config_.data_dir / "catalog.json");
  atomic_write_file(*config_.data_dir / "sites.json", sites_->to_json().dump(2) + "\n");
}

Response CoreNode::handle(const Message& message) {
  json payload = dispatch(message);
  if (mutates_core(message.kind)) flush();
  return Response::success(message.request_id, std::move(payload));
}

json CoreNode::dispatch(const Message& message) {
  const json& p = message.payload;
  switch (message.kind) {
    case MessageKind::Navigate:
      return retriever_->navigate(path_field(p, "path")).to_json();

    case MessageKind::PlanRetrieval: {
      const auto paths = p.value("paths", json::array()).get<std::vector<DomainPath>>();
      json candidates = json::array();
      for (const auto& m : retriever_->plan_retrieval(paths)) candidates.push_back(mapping_summary(m));
      return json{{"candidates", std::move(candidates)}};
    }

    case MessageKind::Retrieve:
      return retriever_->retrieve(p.get<RetrievalRequest>()).to_json();

    case MessageKind::RegisterSite:
      return coherence_->register_site(string_field(p, "site_id"), string_field(p, "address"));

    case MessageKind::AddKnowledge: {
      const std::string site_id = string_field(p, "site_id");
      const auto knowledge = p.at("knowledge").get<KnowledgePayload>();
      const auto outcome =
          coherence_->add_knowledge(site_id, knowledge, path_field(p, "path"), p.value("create_domain", false));
      return json{{"site_id", site_id},
                  {"knowledge_id", knowledge.knowledge_id},
                  {"path", outcome.path},
                  {"revision", outcome.revision},
                  {"created_domains", outcome.created_domains}};
    }

    case MessageKind::PropagateUpdate: {
      const auto outcome = coherence_->propagate_update(string_field(p, "site_id"), string_field(p, "knowledge_id"));
      return json{{"updated", outcome.updated}, {"revision", outcome.revision}};
    }

    case MessageKind::Reclassify:
      coherence_->reclassify_knowledge(string_field(p, "site_id"), string_field(p, "knowledge_id"),
                                       path_field(p, "from"), path_field(p, "to"));
      return json::object();

    case MessageKind::VerifyCoherence:
      return coherence_->verify_coherence().to_json();

    case MessageKind::AddDomain: {
      if (p.contains("path")) {
        const DomainPath path = path_field(p, "path");
        if (p.value("parents", false)) {
          return json{{"path", path}, {"created", catalog_->ensure_path(path)}};
        }
        if (path.is_root()) fail(ErrorCode::InvalidPath, "cannot add the root");
        return json{{"path", catalog_->add_domain(path.parent(), path.leaf())}};
      }
      return json{{"path", catalog_->add_domain(path_field(p, "parent"), string_field(p, "name"))}};
    }

    case MessageKind::MoveMapping:
      catalog_->move_mapping(path_field(p, "from"), path_field(p, "to"),
                             MappingKey{string_field(p, "site_id"), string_field(p, "knowledge_id")});
      return json::object();

    case MessageKind::EditMapping:
      coherence_->reject_core_edit(path_field(p, "path"), p.value("site_id", std::string{}),
                                   p.value("knowledge_id", std::string{}), p.value("fields", json::object()));

    case MessageKind::RemoveKnowledge: {
      const auto removed = coherence_->remove_knowledge(string_field(p, "site_id"), string_field(p, "knowledge_id"));
      return json{{"removed_mappings", removed}};
    }

    default:
      break;
  }
  fail(ErrorCode::UnsupportedMessage, std::string("core node does not serve ") + std::string(to_string(message.kind)));
}

SiteNode::SiteNode(SiteConfig config, std::shared_ptr<Channel> core)
    : config_(std::move(config)), core_(std::move(core)) {
  if (config_.data_dir) {
    store_ = LocalStore::open(*config_.data_dir, config_.tokenizer);
  } else {
    store_ = std::make_unique<LocalStore>(StoreOptions{std::nullopt, config_.tokenizer});
  }
}

void SiteNode::set_core(std::shared_ptr<Channel> core) {
  std::lock_guard lock(core_mutex_);
  core_ = std::move(core);
}

Response SiteNode::handle(const Message& message) {
  return Response::success(message.request_id, dispatch(message));
}

json SiteNode::dispatch(const Message& message) {
  const json& p = message.payload;
  switch (message.kind) {
    case MessageKind::ListHeaders:
      return json{{"site_id", config_.site_id}, {"headers", store_->list_headers()}};

    case MessageKind::GetHeader:
      return store_->header(string_field(p, "knowledge_id"));

    case MessageKind::Query: {
      const std::string kid = string_field(p, "knowledge_id");
      const auto terms = p.value("terms", std::vector<std::string>{});
      const auto offset = p.value("offset", std::size_t{0});
      const auto limit = std::max<std::size_t>(1, p.value("limit", kDefaultPageSize));
      const auto all = store_->query_elements(kid, terms);
      const auto begin = std::min(offset, all.size());
      const auto end = std::min(all.size(), begin + limit);
      return json{{"knowledge_id", kid},
                  {"offset", begin},
                  {"total", all.size()},
                  {"elements", std::vector<KnowledgeElement>(all.begin() + static_cast<std::ptrdiff_t>(begin),
                                                             all.begin() + static_cast<std::ptrdiff_t>(end))}};
    }

    case MessageKind::GetElement:
      return store_->get_element(string_field(p, "knowledge_id"), p.at("eid").get<std::uint64_t>());

    case MessageKind::Ingest:
      return store_->ingest_knowledge(p.at("knowledge").get<KnowledgePayload>());

    case MessageKind::UpdateKnowledge: {
      const std::string kid = string_field(p, "knowledge_id");
      const auto header = store_->update_knowledge(kid, p.get<KnowledgeUpdate>());
      json reply{{"header", header}, {"propagated", false}};
      std::shared_ptr<Channel> core;
      {
        std::lock_guard lock(core_mutex_);
        core = core_;
      }
      if (core) {
        try {
          core->request(MessageKind::PropagateUpdate, json{{"site_id", config_.site_id}, {"knowledge_id", kid}});
          reply["propagated"] = true;
        } catch (const Error& e) {
          reply["propagation_error"] = e.what();
        }
      }
      return reply;
    }

    case MessageKind::RemoveKnowledge:
      store_->remove_knowledge(string_field(p, "knowledge_id"));
      return json::object();

    default:
      break;
  }
  fail(ErrorCode::UnsupportedMessage, std::string("site node does not serve ") + std::string(to_string(message.kind)));
}

}  // namespace kmap
