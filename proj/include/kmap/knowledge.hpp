#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kmap {

// Data-mining task that produced a knowledge. Tasks outside the three named
// kinds keep their original label.
class MiningTask {
 public:
  enum class Kind { AssociationRules, Classification, Clustering, Other };

  MiningTask() = default;
  static MiningTask association_rules() { return MiningTask(Kind::AssociationRules, {}); }
  static MiningTask classification() { return MiningTask(Kind::Classification, {}); }
  static MiningTask clustering() { return MiningTask(Kind::Clustering, {}); }
  static MiningTask other(std::string label) { return MiningTask(Kind::Other, std::move(label)); }

  // "association-rules", "classification", "clustering"; anything else is Other.
  static MiningTask parse(std::string_view text);

  Kind kind() const noexcept { return kind_; }
  std::string to_string() const;

  bool operator==(const MiningTask&) const = default;

 private:
  MiningTask(Kind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

  Kind kind_ = Kind::Other;
  std::string label_;
};

struct KnowledgeProperties {
  std::string data_type;
  std::uint64_t dimension = 1;
  MiningTask mining_task;
  std::uint64_t data_size_bytes = 0;
  std::optional<double> quality;  // informational only

  // Throws InvalidProperties.
  void validate() const;

  bool operator==(const KnowledgeProperties&) const = default;
};

// Identity of one knowledge across the whole system.
struct MappingKey {
  std::string site_id;
  std::string knowledge_id;

  auto operator<=>(const MappingKey&) const = default;
  bool operator==(const MappingKey&) const = default;
  std::string to_string() const { return site_id + "/" + knowledge_id; }
};

// Core-side record locating one knowledge. `revision` is the site header
// revision the record was copied from.
struct KnowledgeMappingNode {
  std::string site_id;
  std::string knowledge_id;
  KnowledgeProperties properties;
  std::string description;
  std::uint64_t revision = 0;

  MappingKey key() const { return {site_id, knowledge_id}; }
  bool operator==(const KnowledgeMappingNode&) const = default;
};

// Content of a knowledge element: production-rule text, or a reference to an
// external artifact that is never tokenized.
struct ElementContent {
  enum class Kind { Rule, OpaqueRef };

  Kind kind = Kind::Rule;
  std::string text;

  static ElementContent rule(std::string text) { return {Kind::Rule, std::move(text)}; }
  static ElementContent opaque(std::string ref) { return {Kind::OpaqueRef, std::move(ref)}; }
  bool is_rule() const noexcept { return kind == Kind::Rule; }

  bool operator==(const ElementContent&) const = default;
};

struct KnowledgeElement {
  std::uint64_t eid = 0;
  ElementContent content;
  std::map<std::string, double> attributes;

  bool operator==(const KnowledgeElement&) const = default;
};

// Throws MalformedElement when eid is zero or a support/confidence attribute
// falls outside [0,1].
void validate_element(const KnowledgeElement& element);

}  // namespace kmap
