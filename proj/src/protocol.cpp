#include "kmap/protocol.hpp"

#include <array>
#include <utility>

namespace kmap {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<MessageKind, std::string_view>, 18> kKindNames{{
    {MessageKind::Navigate, "Navigate"},
    {MessageKind::PlanRetrieval, "PlanRetrieval"},
    {MessageKind::Retrieve, "Retrieve"},
    {MessageKind::AddKnowledge, "AddKnowledge"},
    {MessageKind::PropagateUpdate, "PropagateUpdate"},
    {MessageKind::Reclassify, "Reclassify"},
    {MessageKind::RegisterSite, "RegisterSite"},
    {MessageKind::VerifyCoherence, "VerifyCoherence"},
    {MessageKind::AddDomain, "AddDomain"},
    {MessageKind::MoveMapping, "MoveMapping"},
    {MessageKind::EditMapping, "EditMapping"},
    {MessageKind::RemoveKnowledge, "RemoveKnowledge"},
    {MessageKind::ListHeaders, "ListHeaders"},
    {MessageKind::Query, "Query"},
    {MessageKind::GetElement, "GetElement"},
    {MessageKind::GetHeader, "GetHeader"},
    {MessageKind::Ingest, "Ingest"},
    {MessageKind::UpdateKnowledge, "UpdateKnowledge"},
}};

json parse_frame(std::string_view line) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) fail(ErrorCode::MalformedRequest, "frame is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedRequest, std::string("invalid JSON frame: ") + e.what());
  }
}

}  // namespace

std::string_view to_string(MessageKind kind) noexcept {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "Navigate";
}

std::optional<MessageKind> parse_message_kind(std::string_view text) noexcept {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

Response Response::success(std::string request_id, json payload) {
  Response r;
  r.request_id = std::move(request_id);
  r.payload = std::move(payload);
  return r;
}

Response Response::failure(std::string request_id, const Error& error) {
  Response r;
  r.request_id = std::move(request_id);
  r.ok = false;
  r.payload = nullptr;
  r.error = ErrorInfo{std::string(to_string(error.code())), error.what(), error.details()};
  return r;
}

Response Response::failure(std::string request_id, ErrorCode code, const std::string& message) {
  return failure(std::move(request_id), Error(code, message));
}

const json& Response::value() const {
  if (!ok) {
    const ErrorInfo info = error.value_or(ErrorInfo{"Internal", "error response without error", nullptr});
    throw Error(parse_error_code(info.code).value_or(ErrorCode::Internal), info.message, info.details);
  }
  return payload;
}

std::string encode(const Message& message) {
  return json{{"version", message.version},
              {"request_id", message.request_id},
              {"kind", to_string(message.kind)},
              {"payload", message.payload}}
      .dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string encode(const Response& response) {
  json j{{"version", response.version},
         {"request_id", response.request_id},
         {"status", response.ok ? "ok" : "error"}};
  if (response.ok) {
    j["payload"] = response.payload;
  } else {
    const ErrorInfo& e = *response.error;
    j["error"] = json{{"code", e.code}, {"message", e.message}};
    if (!e.details.is_null()) j["error"]["details"] = e.details;
  }
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

Message decode_message(std::string_view line) {
  json j = parse_frame(line);
  Message m;
  try {
    m.request_id = j.at("request_id").get<std::string>();
    m.version = j.at("version").get<int>();
    const std::string kind = j.at("kind").get<std::string>();
    if (m.version != kProtocolVersion) {
      fail(ErrorCode::UnsupportedMessage, "unsupported protocol version " + std::to_string(m.version));
    }
    auto parsed = parse_message_kind(kind);
    if (!parsed) fail(ErrorCode::UnsupportedMessage, "unknown message kind '" + kind + "'");
    m.kind = *parsed;
    m.payload = j.value("payload", json::object());
    if (!m.payload.is_object()) fail(ErrorCode::MalformedRequest, "payload must be an object");
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedRequest, std::string("malformed message: ") + e.what());
  }
  return m;
}

Response decode_response(std::string_view line) {
  json j = parse_frame(line);
  Response r;
  try {
    r.version = j.at("version").get<int>();
    r.request_id = j.at("request_id").get<std::string>();
    r.ok = j.at("status").get<std::string>() == "ok";
    if (r.ok) {
      r.payload = j.value("payload", json::object());
    } else {
      r.payload = nullptr;
      const json& e = j.at("error");
      r.error = ErrorInfo{e.at("code").get<std::string>(), e.value("message", std::string{}),
                          e.value("details", json())};
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedRequest, std::string("malformed response: ") + e.what());
  }
  return r;
}

std::string salvage_request_id(std::string_view line) {
  try {
    json j = json::parse(line);
    if (j.is_object() && j.contains("request_id") && j["request_id"].is_string()) {
      return j["request_id"].get<std::string>();
    }
  } catch (const json::exception&) {
  }
  return {};
}

}  // namespace kmap
