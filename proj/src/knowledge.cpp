#include "kmap/knowledge.hpp"

#include <cmath>

#include "kmap/error.hpp"

namespace kmap {

MiningTask MiningTask::parse(std::string_view text) {
  if (text == "association-rules") return association_rules();
  if (text == "classification") return classification();
  if (text == "clustering") return clustering();
  return other(std::string(text));
}

std::string MiningTask::to_string() const {
  switch (kind_) {
    case Kind::AssociationRules:
      return "association-rules";
    case Kind::Classification:
      return "classification";
    case Kind::Clustering:
      return "clustering";
    case Kind::Other:
      break;
  }
  return label_;
}

void KnowledgeProperties::validate() const {
  if (dimension < 1) fail(ErrorCode::InvalidProperties, "dimension must be >= 1");
  if (quality && !(*quality >= 0.0 && *quality <= 1.0)) {
    fail(ErrorCode::InvalidProperties, "quality must lie in [0,1]");
  }
}

void validate_element(const KnowledgeElement& element) {
  if (element.eid == 0) fail(ErrorCode::MalformedElement, "eid must be >= 1");
  for (const auto& [name, value] : element.attributes) {
    if (!std::isfinite(value)) {
      fail(ErrorCode::MalformedElement,
           "attribute '" + name + "' of element " + std::to_string(element.eid) + " is not finite");
    }
    if ((name == "support" || name == "confidence") && (value < 0.0 || value > 1.0)) {
      fail(ErrorCode::MalformedElement, "attribute '" + name + "' of element " +
                                            std::to_string(element.eid) + " outside [0,1]");
    }
  }
}

}  // namespace kmap
