#include "kmap/retrieval.hpp"

#include <algorithm>
#include <future>

#include "kmap/codec.hpp"
#include "kmap/error.hpp"

namespace kmap {

using nlohmann::json;

json NavigationResult::to_json() const {
  json mappings_json = json::array();
  for (const auto& m : mappings) mappings_json.push_back(mapping_summary(m));
  return json{{"path", path}, {"children", children}, {"mappings", std::move(mappings_json)}};
}

void to_json(json& j, const RetrievalRequest& r) {
  j = json{{"targets", r.targets}, {"keywords", r.keywords}};
}

void from_json(const json& j, RetrievalRequest& r) {
  r.targets = j.at("targets").get<std::vector<MappingKey>>();
  r.keywords = j.value("keywords", std::vector<std::string>{});
}

std::string_view to_string(GroupStatus status) noexcept {
  switch (status) {
    case GroupStatus::Ok:
      return "ok";
    case GroupStatus::SiteUnreachable:
      return "site-unreachable";
    case GroupStatus::KnowledgeMissing:
      return "knowledge-missing";
  }
  return "ok";
}

bool RetrievalResult::all_failed() const {
  return !groups.empty() &&
         std::none_of(groups.begin(), groups.end(), [](const RetrievalGroup& g) { return g.status == GroupStatus::Ok; });
}

bool RetrievalResult::any_failed() const {
  return std::any_of(groups.begin(), groups.end(), [](const RetrievalGroup& g) { return g.status != GroupStatus::Ok; });
}

json RetrievalResult::to_json() const {
  json out = json::array();
  for (const auto& g : groups) {
    json group{{"site_id", g.site_id},
               {"knowledge_id", g.knowledge_id},
               {"status", to_string(g.status)},
               {"elements", g.elements}};
    if (g.status != GroupStatus::Ok) group["message"] = g.message;
    out.push_back(std::move(group));
  }
  return json{{"groups", std::move(out)}};
}

RetrievalResult RetrievalResult::from_json(const json& doc) {
  RetrievalResult r;
  for (const auto& g : doc.at("groups")) {
    RetrievalGroup group;
    group.site_id = g.at("site_id").get<std::string>();
    group.knowledge_id = g.at("knowledge_id").get<std::string>();
    group.elements = g.at("elements").get<std::vector<KnowledgeElement>>();
    const std::string status = g.at("status").get<std::string>();
    group.status = status == "ok"                  ? GroupStatus::Ok
                   : status == "knowledge-missing" ? GroupStatus::KnowledgeMissing
                                                   : GroupStatus::SiteUnreachable;
    group.message = g.value("message", std::string{});
    r.groups.push_back(std::move(group));
  }
  return r;
}

Retriever::Retriever(const DomainCatalog& catalog, SiteResolver resolver, std::size_t page_size)
    : catalog_(catalog), resolver_(std::move(resolver)), page_size_(std::max<std::size_t>(1, page_size)) {}

NavigationResult Retriever::navigate(const DomainPath& path) const {
  DomainView view = catalog_.view(path);
  return NavigationResult{std::move(view.path), std::move(view.children), std::move(view.mappings)};
}

std::vector<KnowledgeMappingNode> Retriever::plan_retrieval(std::span<const DomainPath> paths) const {
  if (paths.empty()) fail(ErrorCode::EmptySelection, "no domains selected");
  if (paths.size() == 1) return catalog_.list_mappings(paths.front());
  return catalog_.intersect_mappings(paths);
}

RetrievalGroup Retriever::query_target(const MappingKey& target, const std::vector<std::string>& keywords) const {
  RetrievalGroup group{target.site_id, target.knowledge_id, {}, GroupStatus::Ok, {}};
  try {
    auto channel = resolver_(target.site_id);
    std::size_t offset = 0;
    while (true) {
      json page = channel->request(MessageKind::Query, json{{"knowledge_id", target.knowledge_id},
                                                            {"terms", keywords},
                                                            {"offset", offset},
                                                            {"limit", page_size_}});
      auto elements = page.at("elements").get<std::vector<KnowledgeElement>>();
      const std::size_t total = page.at("total").get<std::size_t>();
      offset += elements.size();
      std::move(elements.begin(), elements.end(), std::back_inserter(group.elements));
      if (offset >= total || elements.empty()) break;
    }
  } catch (const Error& e) {
    group.elements.clear();
    group.status = e.code() == ErrorCode::KnowledgeNotFound ? GroupStatus::KnowledgeMissing
                                                            : GroupStatus::SiteUnreachable;
    group.message = e.what();
  } catch (const std::exception& e) {
    group.elements.clear();
    group.status = GroupStatus::SiteUnreachable;
    group.message = e.what();
  }
  return group;
}

RetrievalResult Retriever::retrieve(const RetrievalRequest& request) const {
  if (request.targets.empty()) fail(ErrorCode::EmptySelection, "no retrieval targets");
  std::vector<std::future<RetrievalGroup>> pending;
  pending.reserve(request.targets.size());
  for (const auto& target : request.targets) {
    pending.push_back(std::async(std::launch::async, [this, &target, &request] {
      return query_target(target, request.keywords);
    }));
  }
  RetrievalResult result;
  for (auto& f : pending) result.groups.push_back(f.get());
  if (result.all_failed()) {
    throw Error(ErrorCode::AllTargetsFailed, "no retrieval target could be served", result.to_json());
  }
  return result;
}

}  // namespace kmap
