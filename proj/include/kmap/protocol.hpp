#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "kmap/error.hpp"

namespace kmap {

inline constexpr int kProtocolVersion = 1;

enum class MessageKind {
  // Core node.
  Navigate,
  PlanRetrieval,
  Retrieve,
  AddKnowledge,
  PropagateUpdate,
  Reclassify,
  RegisterSite,
  VerifyCoherence,
  AddDomain,
  MoveMapping,
  EditMapping,
  // Both: at the core it removes a knowledge system-wide, at a site locally.
  RemoveKnowledge,
  // Site node.
  ListHeaders,
  Query,
  GetElement,
  GetHeader,
  Ingest,
  UpdateKnowledge,
};

std::string_view to_string(MessageKind kind) noexcept;
std::optional<MessageKind> parse_message_kind(std::string_view text) noexcept;

struct Message {
  int version = kProtocolVersion;
  std::string request_id;
  MessageKind kind = MessageKind::Navigate;
  nlohmann::json payload = nlohmann::json::object();
};

struct ErrorInfo {
  std::string code;
  std::string message;
  nlohmann::json details;
};

struct Response {
  int version = kProtocolVersion;
  std::string request_id;
  bool ok = true;
  nlohmann::json payload = nlohmann::json::object();
  std::optional<ErrorInfo> error;

  static Response success(std::string request_id, nlohmann::json payload);
  static Response failure(std::string request_id, const Error& error);
  static Response failure(std::string request_id, ErrorCode code, const std::string& message);

  // Rethrows an error response as kmap::Error; returns the payload otherwise.
  const nlohmann::json& value() const;
};

// One message per line: the encoded forms never contain a newline.
std::string encode(const Message& message);
std::string encode(const Response& response);

// Throws MalformedRequest for unparsable frames and UnsupportedMessage for an
// unknown kind or a version other than 1.
Message decode_message(std::string_view line);
Response decode_response(std::string_view line);

// Best-effort request id of a frame that failed to decode.
std::string salvage_request_id(std::string_view line);

}  // namespace kmap
