#include "kmap/codec.hpp"

#include "kmap/error.hpp"

namespace kmap {

using nlohmann::json;

namespace {

bool is_non_negative_integer(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

}  // namespace

void to_json(json& j, const KnowledgeProperties& p) {
  j = json{{"data_type", p.data_type},
           {"dimension", p.dimension},
           {"mining_task", p.mining_task.to_string()},
           {"data_size_bytes", p.data_size_bytes}};
  if (p.quality) j["quality"] = *p.quality;
}

void from_json(const json& j, KnowledgeProperties& p) {
  p.data_type = j.at("data_type").get<std::string>();
  const auto& dim = j.at("dimension");
  if (!is_non_negative_integer(dim)) fail(ErrorCode::InvalidProperties, "dimension must be a positive integer");
  p.dimension = dim.get<std::uint64_t>();
  p.mining_task = MiningTask::parse(j.at("mining_task").get<std::string>());
  const auto& size = j.at("data_size_bytes");
  if (!is_non_negative_integer(size)) {
    fail(ErrorCode::InvalidProperties, "data_size_bytes must be a non-negative integer");
  }
  p.data_size_bytes = size.get<std::uint64_t>();
  if (auto it = j.find("quality"); it != j.end() && !it->is_null()) {
    p.quality = it->get<double>();
  } else {
    p.quality.reset();
  }
}

void to_json(json& j, const KnowledgeMappingNode& m) {
  j = json{{"site_id", m.site_id},
           {"knowledge_id", m.knowledge_id},
           {"properties", m.properties},
           {"description", m.description},
           {"revision", m.revision}};
}

void from_json(const json& j, KnowledgeMappingNode& m) {
  m.site_id = j.at("site_id").get<std::string>();
  m.knowledge_id = j.at("knowledge_id").get<std::string>();
  m.properties = j.at("properties").get<KnowledgeProperties>();
  m.description = j.value("description", std::string{});
  m.revision = j.value("revision", std::uint64_t{0});
}

void to_json(json& j, const MappingKey& k) {
  j = json{{"site_id", k.site_id}, {"knowledge_id", k.knowledge_id}};
}

void from_json(const json& j, MappingKey& k) {
  k.site_id = j.at("site_id").get<std::string>();
  k.knowledge_id = j.at("knowledge_id").get<std::string>();
}

void to_json(json& j, const KnowledgeElement& e) {
  j = json{{"eid", e.eid}, {"attributes", e.attributes}};
  if (e.content.is_rule()) {
    j["content"] = e.content.text;
  } else {
    j["content"] = json{{"ref", e.content.text}};
  }
}

void from_json(const json& j, KnowledgeElement& e) {
  if (!j.is_object()) fail(ErrorCode::MalformedElement, "element must be a JSON object");
  auto eid = j.find("eid");
  if (eid == j.end() || !is_non_negative_integer(*eid)) {
    fail(ErrorCode::MalformedElement, "eid must be a positive integer");
  }
  e.eid = eid->get<std::uint64_t>();
  auto content = j.find("content");
  if (content == j.end()) fail(ErrorCode::MalformedElement, "element has no content");
  if (content->is_string()) {
    e.content = ElementContent::rule(content->get<std::string>());
  } else if (content->is_object() && content->contains("ref") && content->at("ref").is_string()) {
    e.content = ElementContent::opaque(content->at("ref").get<std::string>());
  } else {
    fail(ErrorCode::MalformedElement, "content must be a string or {\"ref\": string}");
  }
  e.attributes.clear();
  if (auto attrs = j.find("attributes"); attrs != j.end() && !attrs->is_null()) {
    if (!attrs->is_object()) fail(ErrorCode::MalformedElement, "attributes must be an object");
    for (const auto& [name, value] : attrs->items()) {
      if (!value.is_number()) fail(ErrorCode::MalformedElement, "attribute '" + name + "' is not a number");
      e.attributes[name] = value.get<double>();
    }
  }
  validate_element(e);
}

void to_json(json& j, const DomainPath& p) { j = p.segments(); }

void from_json(const json& j, DomainPath& p) {
  if (j.is_null()) {
    p = DomainPath::root();
  } else if (j.is_string()) {
    p = DomainPath::parse(j.get<std::string>());
  } else {
    p = DomainPath(j.get<std::vector<std::string>>());
  }
}

json mapping_summary(const KnowledgeMappingNode& m) {
  return json{{"site_id", m.site_id},
              {"knowledge_id", m.knowledge_id},
              {"properties", m.properties},
              {"description", m.description}};
}

KnowledgeElement parse_element_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedElement, std::string("invalid JSON: ") + e.what());
  }
  try {
    return j.get<KnowledgeElement>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedElement, e.what());
  }
}

}  // namespace kmap
