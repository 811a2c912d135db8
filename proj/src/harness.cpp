#include "kmap/harness.hpp"

#include "kmap/error.hpp"

namespace kmap {

using nlohmann::json;

SimulationHarness::SimulationHarness(bool tcp, CoreConfig core_config)
    : tcp_(tcp), connector_(tcp ? nullptr : &loopback_) {
  core_config.logical_clock = true;
  core_ = std::make_unique<CoreNode>(std::move(core_config), connector_);
  addresses_["core"] = listen("core", *core_);
}

SimulationHarness::~SimulationHarness() {
  for (auto& [name, endpoint] : endpoints_) {
    if (endpoint.server) endpoint.server->stop();
  }
}

std::string SimulationHarness::listen(const std::string& name, MessageHandler& handler) {
  if (!tcp_) {
    loopback_.bind(name, handler);
    return std::string(LoopbackNetwork::kScheme) + name;
  }
  auto& endpoint = endpoints_[name];
  endpoint.server = std::make_unique<TcpServer>(handler);
  endpoint.port = endpoint.server->start("127.0.0.1", 0);
  return "127.0.0.1:" + std::to_string(endpoint.port);
}

SiteNode& SimulationHarness::site(const std::string& site_id) {
  auto it = sites_.find(site_id);
  if (it == sites_.end()) fail(ErrorCode::SiteNotFound, "no site '" + site_id + "' in harness");
  return *it->second;
}

std::vector<std::string> SimulationHarness::site_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, node] : sites_) ids.push_back(id);
  return ids;
}

SiteNode& SimulationHarness::add_site(const std::string& site_id, SiteConfig config) {
  if (site_id == "core" || sites_.count(site_id)) fail(ErrorCode::DuplicateSite, "site '" + site_id + "' exists");
  config.site_id = site_id;
  auto node = std::make_unique<SiteNode>(std::move(config));
  SiteNode& ref = *node;
  sites_[site_id] = std::move(node);
  addresses_[site_id] = listen(site_id, ref);
  ref.set_core(connector_.connect(addresses_.at("core")));
  core_->coherence().register_site(site_id, addresses_.at(site_id));
  return ref;
}

std::shared_ptr<Channel> SimulationHarness::core_channel() { return connector_.connect(addresses_.at("core")); }

std::shared_ptr<Channel> SimulationHarness::site_channel(const std::string& site_id) {
  site(site_id);
  return connector_.connect(addresses_.at(site_id));
}

void SimulationHarness::set_site_down(const std::string& site_id, bool down) {
  SiteNode& node = site(site_id);
  if (!tcp_) {
    loopback_.set_down(site_id, down);
    return;
  }
  auto& endpoint = endpoints_.at(site_id);
  if (down) {
    if (endpoint.server) endpoint.server->stop();
    endpoint.server.reset();
  } else if (!endpoint.server) {
    endpoint.server = std::make_unique<TcpServer>(node);
    endpoint.server->start("127.0.0.1", endpoint.port);
  }
}

std::string SimulationHarness::address_of(const std::string& actor) const {
  auto it = addresses_.find(actor);
  if (it == addresses_.end()) fail(ErrorCode::MalformedRequest, "unknown actor '" + actor + "'");
  return it->second;
}

namespace {

void substitute_addresses(json& value, const SimulationHarness& harness) {
  if (value.is_string()) {
    const auto& text = value.get_ref<const std::string&>();
    if (text.size() > 1 && text.front() == '@') value = harness.address_of(text.substr(1));
  } else if (value.is_structured()) {
    for (auto& item : value) substitute_addresses(item, harness);
  }
}

void mask_addresses(json& value, const std::map<std::string, std::string>& by_address) {
  if (value.is_string()) {
    auto it = by_address.find(value.get_ref<const std::string&>());
    if (it != by_address.end()) value = "@" + it->second;
  } else if (value.is_structured()) {
    for (auto& item : value) mask_addresses(item, by_address);
  }
}

json error_entry(const ErrorInfo& info) {
  json e{{"code", info.code}, {"message", info.message}};
  if (!info.details.is_null()) e["details"] = info.details;
  return e;
}

}  // namespace

std::vector<json> run_scenario(const json& script, bool tcp) {
  if (!script.is_object() || !script.contains("steps") || !script["steps"].is_array()) {
    fail(ErrorCode::MalformedRequest, "scenario must be an object with a 'steps' array");
  }
  SimulationHarness harness(tcp);
  for (const auto& id : script.value("sites", json::array())) {
    if (!id.is_string()) fail(ErrorCode::MalformedRequest, "site ids must be strings");
    harness.add_site(id.get<std::string>());
  }
  std::map<std::string, std::string> by_address;
  by_address[harness.address_of("core")] = "core";
  for (const auto& id : harness.site_ids()) by_address[harness.address_of(id)] = id;

  std::map<std::string, std::shared_ptr<Channel>> channels;
  std::vector<json> transcript;
  std::size_t n = 0;
  for (const auto& step : script["steps"]) {
    ++n;
    const std::string actor = step.value("actor", std::string{"core"});
    const std::string op = step.value("op", std::string{});
    if (actor != "core" && !harness.has_site(actor)) {
      fail(ErrorCode::MalformedRequest, "step " + std::to_string(n) + ": unknown actor '" + actor + "'");
    }

    json entry{{"step", n}, {"actor", actor}, {"op", op}};
    Response response;
    if (op == "SiteDown" || op == "SiteUp") {
      if (actor == "core") fail(ErrorCode::MalformedRequest, "step " + std::to_string(n) + ": core cannot go down");
      harness.set_site_down(actor, op == "SiteDown");
      response = Response::success("step-" + std::to_string(n), json::object());
    } else {
      const auto kind = parse_message_kind(op);
      if (!kind) fail(ErrorCode::MalformedRequest, "step " + std::to_string(n) + ": unknown op '" + op + "'");
      Message message;
      message.request_id = "step-" + std::to_string(n);
      message.kind = *kind;
      message.payload = step.value("args", json::object());
      substitute_addresses(message.payload, harness);
      auto& channel = channels[actor];
      if (!channel) channel = actor == "core" ? harness.core_channel() : harness.site_channel(actor);
      try {
        response = channel->call(message);
      } catch (const Error& e) {
        response = Response::failure(message.request_id, e);
      }
    }

    if (response.ok) {
      entry["status"] = "ok";
      entry["payload"] = response.payload;
      mask_addresses(entry["payload"], by_address);
    } else {
      entry["status"] = "error";
      entry["error"] = error_entry(*response.error);
      mask_addresses(entry["error"], by_address);
    }
    transcript.push_back(entry);

    std::string mismatch;
    if (step.contains("expect") && step["expect"] != entry["status"]) {
      mismatch = "expected " + step["expect"].dump() + ", got " + entry["status"].dump();
    } else if (step.contains("expect_code")) {
      const json got = response.ok ? json(nullptr) : json(response.error->code);
      if (got != step["expect_code"]) mismatch = "expected code " + step["expect_code"].dump() + ", got " + got.dump();
    }
    if (!mismatch.empty()) {
      throw ScenarioFailure("step " + std::to_string(n) + " (" + actor + " " + op + "): " + mismatch + "\n  " +
                                entry.dump(-1, ' ', false, json::error_handler_t::replace),
                            std::move(transcript));
    }
  }
  return transcript;
}

}  // namespace kmap
