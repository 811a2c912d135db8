#pragma once

// JSON forms of the domain types. These are shared by the snapshot files, the
// site store files and the wire protocol.

#include <nlohmann/json.hpp>

#include "kmap/domain_path.hpp"
#include "kmap/knowledge.hpp"

namespace kmap {

void to_json(nlohmann::json& j, const KnowledgeProperties& p);
void from_json(const nlohmann::json& j, KnowledgeProperties& p);

void to_json(nlohmann::json& j, const KnowledgeMappingNode& m);
void from_json(const nlohmann::json& j, KnowledgeMappingNode& m);

void to_json(nlohmann::json& j, const MappingKey& k);
void from_json(const nlohmann::json& j, MappingKey& k);

// Rule text is a plain string; an opaque reference is {"ref": "..."}.
void to_json(nlohmann::json& j, const KnowledgeElement& e);
void from_json(const nlohmann::json& j, KnowledgeElement& e);

// Paths travel as arrays of segments; a "a/b/c" string is also accepted.
void to_json(nlohmann::json& j, const DomainPath& p);
void from_json(const nlohmann::json& j, DomainPath& p);

// Metadata-only view of a mapping: site_id, knowledge_id, properties,
// description. This is what navigation returns.
nlohmann::json mapping_summary(const KnowledgeMappingNode& m);

// Parses one JSON Lines element record; throws MalformedElement.
KnowledgeElement parse_element_line(std::string_view line);

}  // namespace kmap
