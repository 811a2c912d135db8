#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace kmap {

// Machine-readable error codes. The string form of each code is part of the
// wire protocol and must stay stable.
enum class ErrorCode {
  InvalidPath,
  ParentNotFound,
  DuplicateSibling,
  DepthExceeded,
  DomainNotFound,
  DuplicateMapping,
  MappingNotFound,
  EmptySelection,
  InvalidProperties,
  DuplicateKnowledgeId,
  MalformedElement,
  KnowledgeNotFound,
  ElementNotFound,
  AllTargetsFailed,
  DuplicateSite,
  SiteNotFound,
  SiteUnreachable,
  EditProhibited,
  InjectedFault,
  MalformedRequest,
  UnsupportedMessage,
  IoError,
  Internal,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> parse_error_code(std::string_view text) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, nlohmann::json details = nullptr)
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace kmap
