#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/domain_catalog.hpp"
#include "kmap/transport.hpp"

namespace kmap {

inline constexpr std::size_t kDefaultPageSize = 10000;

// What navigation shows: structure and metadata, never element contents.
struct NavigationResult {
  DomainPath path;
  std::vector<std::string> children;
  std::vector<KnowledgeMappingNode> mappings;

  nlohmann::json to_json() const;
};

struct RetrievalRequest {
  std::vector<MappingKey> targets;
  std::vector<std::string> keywords;
};

void to_json(nlohmann::json& j, const RetrievalRequest& r);
void from_json(const nlohmann::json& j, RetrievalRequest& r);

enum class GroupStatus { Ok, SiteUnreachable, KnowledgeMissing };

std::string_view to_string(GroupStatus status) noexcept;

struct RetrievalGroup {
  std::string site_id;
  std::string knowledge_id;
  std::vector<KnowledgeElement> elements;  // ascending eid
  GroupStatus status = GroupStatus::Ok;
  std::string message;  // set when status is not Ok
};

struct RetrievalResult {
  std::vector<RetrievalGroup> groups;  // one per requested target, in request order

  bool all_failed() const;
  bool any_failed() const;
  nlohmann::json to_json() const;
  static RetrievalResult from_json(const nlohmann::json& doc);
};

// Resolves a site id to a channel; throws SiteNotFound or SiteUnreachable.
using SiteResolver = std::function<std::shared_ptr<Channel>(const std::string& site_id)>;

// Navigator and retriever: stateless traversal of the catalog, candidate
// selection by intersecting mapping lists, and keyword retrieval fanned out to
// the owning sites. All operations are read-only.
class Retriever {
 public:
  Retriever(const DomainCatalog& catalog, SiteResolver resolver, std::size_t page_size = kDefaultPageSize);

  NavigationResult navigate(const DomainPath& path = DomainPath::root()) const;
  std::vector<KnowledgeMappingNode> plan_retrieval(std::span<const DomainPath> paths) const;

  // Per-target failures are reported in the group status. Throws
  // AllTargetsFailed (details = the full result) when no group is ok.
  RetrievalResult retrieve(const RetrievalRequest& request) const;

 private:
  RetrievalGroup query_target(const MappingKey& target, const std::vector<std::string>& keywords) const;

  const DomainCatalog& catalog_;
  SiteResolver resolver_;
  std::size_t page_size_;
};

}  // namespace kmap
