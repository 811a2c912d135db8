#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/nodes.hpp"
#include "kmap/server.hpp"
#include "kmap/transport.hpp"

namespace kmap {

// One core and any number of sites wired together in-process. Loopback by
// default; with `tcp` every node listens on an ephemeral localhost port and
// all traffic crosses real sockets.
class SimulationHarness {
 public:
  explicit SimulationHarness(bool tcp = false, CoreConfig core_config = {});
  ~SimulationHarness();

  CoreNode& core() { return *core_; }
  SiteNode& site(const std::string& site_id);
  bool has_site(const std::string& site_id) const { return sites_.count(site_id) > 0; }
  std::vector<std::string> site_ids() const;

  // Creates a site, connects it to the core and registers it.
  SiteNode& add_site(const std::string& site_id, SiteConfig config = {});

  // A fresh client channel to the core or a site.
  std::shared_ptr<Channel> core_channel();
  std::shared_ptr<Channel> site_channel(const std::string& site_id);

  void set_site_down(const std::string& site_id, bool down);

  // "core" or a site id.
  std::string address_of(const std::string& actor) const;

 private:
  struct Endpoint {
    std::unique_ptr<TcpServer> server;
    std::uint16_t port = 0;
  };
  std::string listen(const std::string& name, MessageHandler& handler);

  bool tcp_;
  LoopbackNetwork loopback_;
  NetworkConnector connector_;
  std::unique_ptr<CoreNode> core_;
  std::map<std::string, std::unique_ptr<SiteNode>> sites_;
  std::map<std::string, std::string> addresses_;
  std::map<std::string, Endpoint> endpoints_;
};

struct ScenarioFailure : std::runtime_error {
  ScenarioFailure(const std::string& what, std::vector<nlohmann::json> transcript)
      : std::runtime_error(what), transcript(std::move(transcript)) {}
  std::vector<nlohmann::json> transcript;
};

// Runs a scenario script:
//   {"sites": ["s1", ...],
//    "steps": [{"actor": "core"|site, "op": <kind>|"SiteDown"|"SiteUp",
//               "args": {...}, "expect": "ok"|"error", "expect_code": ...}]}
// Strings "@<actor>" in args are replaced by that actor's address. Returns one
// transcript entry per step; node addresses in payloads are written back as
// "@<actor>" so transcripts do not depend on the transport. Throws
// ScenarioFailure on the first unmet expectation and kmap::Error
// (MalformedRequest) for an invalid script.
std::vector<nlohmann::json> run_scenario(const nlohmann::json& script, bool tcp = false);

}  // namespace kmap
