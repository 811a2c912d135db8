#include "kmap/error.hpp"

#include <array>
#include <utility>

namespace kmap {
namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 23> kCodeNames{{
    {ErrorCode::InvalidPath, "InvalidPath"},
    {ErrorCode::ParentNotFound, "ParentNotFound"},
    {ErrorCode::DuplicateSibling, "DuplicateSibling"},
    {ErrorCode::DepthExceeded, "DepthExceeded"},
    {ErrorCode::DomainNotFound, "DomainNotFound"},
    {ErrorCode::DuplicateMapping, "DuplicateMapping"},
    {ErrorCode::MappingNotFound, "MappingNotFound"},
    {ErrorCode::EmptySelection, "EmptySelection"},
    {ErrorCode::InvalidProperties, "InvalidProperties"},
    {ErrorCode::DuplicateKnowledgeId, "DuplicateKnowledgeId"},
    {ErrorCode::MalformedElement, "MalformedElement"},
    {ErrorCode::KnowledgeNotFound, "KnowledgeNotFound"},
    {ErrorCode::ElementNotFound, "ElementNotFound"},
    {ErrorCode::AllTargetsFailed, "AllTargetsFailed"},
    {ErrorCode::DuplicateSite, "DuplicateSite"},
    {ErrorCode::SiteNotFound, "SiteNotFound"},
    {ErrorCode::SiteUnreachable, "SiteUnreachable"},
    {ErrorCode::EditProhibited, "EditProhibited"},
    {ErrorCode::InjectedFault, "InjectedFault"},
    {ErrorCode::MalformedRequest, "MalformedRequest"},
    {ErrorCode::UnsupportedMessage, "UnsupportedMessage"},
    {ErrorCode::IoError, "IoError"},
    {ErrorCode::Internal, "Internal"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  for (const auto& [c, name] : kCodeNames) {
    if (c == code) return name;
  }
  return "Internal";
}

std::optional<ErrorCode> parse_error_code(std::string_view text) noexcept {
  for (const auto& [c, name] : kCodeNames) {
    if (name == text) return c;
  }
  return std::nullopt;
}

}  // namespace kmap
