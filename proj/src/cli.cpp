#include "kmap/cli.hpp"

#include <atomic>
#include <charconv>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>

#include "CLI11.hpp"
#include "kmap/codec.hpp"
#include "kmap/harness.hpp"
#include "kmap/local_store.hpp"
#include "kmap/navigator.hpp"
#include "kmap/nodes.hpp"
#include "kmap/server.hpp"

namespace kmap::cli {

using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string dump(const json& value) { return value.dump(-1, ' ', false, json::error_handler_t::replace); }

std::uint64_t parse_size(const std::string& text) {
  std::uint64_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr == text.data()) fail(ErrorCode::InvalidProperties, "bad size '" + text + "'");
  std::string suffix(ptr, end);
  if (suffix.size() > 1 && suffix.back() == 'B') suffix.pop_back();
  if (suffix.size() > 1 && suffix.back() == 'i') suffix.pop_back();
  int shift = 0;
  if (suffix.empty() || suffix == "B") {
    shift = 0;
  } else if (suffix == "K") {
    shift = 10;
  } else if (suffix == "M") {
    shift = 20;
  } else if (suffix == "G") {
    shift = 30;
  } else if (suffix == "T") {
    shift = 40;
  } else {
    fail(ErrorCode::InvalidProperties, "bad size suffix in '" + text + "'");
  }
  if (shift > 0 && value > (std::numeric_limits<std::uint64_t>::max() >> shift)) {
    fail(ErrorCode::InvalidProperties, "size '" + text + "' overflows");
  }
  return value << shift;
}

KnowledgeProperties parse_props(const std::vector<std::string>& pairs) {
  KnowledgeProperties props;
  for (const auto& pair : pairs) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidProperties, "expected key=value, got '" + pair + "'");
    const std::string key = pair.substr(0, eq);
    const std::string value = pair.substr(eq + 1);
    if (key == "data_type" || key == "type") {
      props.data_type = value;
    } else if (key == "dimension") {
      props.dimension = static_cast<std::uint32_t>(parse_size(value));
    } else if (key == "mining_task" || key == "task") {
      props.mining_task = MiningTask::parse(value);
    } else if (key == "data_size" || key == "data_size_bytes" || key == "size") {
      props.data_size_bytes = parse_size(value);
    } else if (key == "quality") {
      char* end = nullptr;
      const double q = std::strtod(value.c_str(), &end);
      if (end == value.c_str() || *end != '\0') fail(ErrorCode::InvalidProperties, "bad quality '" + value + "'");
      props.quality = q;
    } else {
      fail(ErrorCode::InvalidProperties, "unknown property '" + key + "'");
    }
  }
  props.validate();
  return props;
}

std::vector<KnowledgeElement> read_elements(const std::string& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::IoError, "cannot read " + file);
  std::vector<KnowledgeElement> elements;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      elements.push_back(parse_element_line(line));
    } catch (const Error& e) {
      throw Error(e.code(), file + ":" + std::to_string(number) + ": " + e.what(), json{{"line", number}});
    }
  }
  return elements;
}

class Context {
 public:
  Context(std::ostream& out, std::ostream& err, Connector* connector, std::chrono::milliseconds timeout)
      : out(out), err(err), external_(connector) {
    if (!external_) owned_ = std::make_unique<NetworkConnector>(nullptr, timeout);
  }

  Connector& connector() { return external_ ? *external_ : *owned_; }

  std::shared_ptr<Channel> core(const std::string& address) {
    if (address.empty()) throw UsageError("no core address: pass --core or set KMAP_CORE_ADDR");
    return connector().connect(address);
  }

  std::ostream& out;
  std::ostream& err;

 private:
  Connector* external_;
  std::unique_ptr<Connector> owned_;
};

std::string core_address(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("KMAP_CORE_ADDR");
  return env ? env : "";
}

int retrieval_exit_code(const json& result) {
  bool unreachable = false;
  bool missing = false;
  for (const auto& g : result.at("groups")) {
    const auto status = g.at("status").get<std::string>();
    unreachable = unreachable || status == "site-unreachable";
    missing = missing || status == "knowledge-missing";
  }
  if (unreachable) return kConnectivity;
  if (missing) return kCoherenceViolation;
  return kOk;
}

void print_report(std::ostream& out, const json& report) {
  if (report.at("coherent").get<bool>() && report.at("unreachable_sites").empty()) {
    out << "coherent\n";
    return;
  }
  for (const auto& d : report.at("dangling_mappings")) {
    const auto path = d.at("path").get<DomainPath>();
    out << "dangling\t" << d.at("site_id").get<std::string>() << "/" << d.at("knowledge_id").get<std::string>()
        << "\t" << path.to_string() << "\n";
  }
  for (const auto& k : report.at("orphan_headers")) {
    out << "orphan\t" << k.at("site_id").get<std::string>() << "/" << k.at("knowledge_id").get<std::string>() << "\n";
  }
  for (const auto& k : report.at("stale_mappings")) {
    out << "stale\t" << k.at("site_id").get<std::string>() << "/" << k.at("knowledge_id").get<std::string>() << "\n";
  }
  for (const auto& s : report.at("unreachable_sites")) out << "unreachable\t" << s.get<std::string>() << "\n";
}

struct ServeOptions {
  std::string role;
  std::string listen = ":7001";
  std::string http;
  std::string site_id;
  std::string core;
  std::string data;
  std::string advertise;
  std::size_t max_depth = kDefaultMaxDepth;
};

void wait_for_stop() {
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

int serve(const ServeOptions& o, Context& ctx) {
  g_stop = false;
  auto prev_term = std::signal(SIGTERM, on_signal);
  auto prev_int = std::signal(SIGINT, on_signal);
  struct Restore {
    decltype(prev_term) term, intr;
    ~Restore() {
      std::signal(SIGTERM, term);
      std::signal(SIGINT, intr);
    }
  } restore{prev_term, prev_int};

  const HostPort bind = parse_host_port(o.listen, "0.0.0.0");
  if (o.role == "core") {
    CoreConfig config;
    config.max_depth = o.max_depth;
    if (!o.data.empty()) config.data_dir = o.data;
    CoreNode node(std::move(config), ctx.connector());
    TcpServer server(node);
    const auto port = server.start(bind.host, bind.port);
    ctx.out << "core listening on " << bind.host << ":" << port << std::endl;
    std::unique_ptr<HttpGateway> gateway;
    if (!o.http.empty()) {
      const HostPort http = parse_host_port(o.http, "0.0.0.0");
      gateway = std::make_unique<HttpGateway>(node);
      const auto http_port = gateway->start(http.host, http.port);
      ctx.out << "gateway listening on " << http.host << ":" << http_port << std::endl;
    }
    wait_for_stop();
    if (gateway) gateway->stop();
    server.stop();
    node.flush();
    ctx.out << "core stopped" << std::endl;
    return kOk;
  }

  SiteConfig config;
  config.site_id = o.site_id;
  if (!o.data.empty()) config.data_dir = o.data;
  SiteNode node(std::move(config));
  TcpServer server(node);
  const auto port = server.start(bind.host, bind.port);
  std::string advertise = o.advertise;
  if (advertise.empty()) {
    const bool wildcard = bind.host.empty() || bind.host == "0.0.0.0" || bind.host == "::";
    advertise = (wildcard ? std::string("127.0.0.1") : bind.host) + ":" + std::to_string(port);
  }
  auto core = ctx.core(o.core);
  node.set_core(core);
  json registration;
  for (int attempt = 0;; ++attempt) {
    try {
      registration = core->request(MessageKind::RegisterSite, json{{"site_id", o.site_id}, {"address", advertise}});
      break;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DuplicateSite) {
        ctx.err << "note: site '" << o.site_id << "' was already registered; keeping the existing address\n";
        break;
      }
      if (e.code() != ErrorCode::SiteUnreachable || attempt >= 50 || g_stop) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }
  ctx.out << "site " << o.site_id << " listening on " << bind.host << ":" << port << " (advertised " << advertise
          << ")" << std::endl;
  wait_for_stop();
  server.stop();
  ctx.out << "site stopped" << std::endl;
  return kOk;
}

}  // namespace

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SiteUnreachable:
    case ErrorCode::AllTargetsFailed:
      return kConnectivity;
    default:
      return kInputError;
  }
}

void request_stop() noexcept { g_stop = true; }

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err,
        Connector* connector) {
  CLI::App app{"kmap: distributed knowledge map"};
  app.name("kmap");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  long timeout_ms = kDefaultTimeout.count();
  app.add_option("--timeout-ms", timeout_ms, "request timeout")->check(CLI::PositiveNumber);

  std::string core_flag;
  auto add_core = [&core_flag](CLI::App* sub) {
    sub->add_option("--core", core_flag, "core address host:port (default $KMAP_CORE_ADDR)");
  };

  // serve
  ServeOptions serve_opts;
  auto* serve_cmd = app.add_subcommand("serve", "run a core or site node");
  serve_cmd->add_option("--role", serve_opts.role, "core or site")->required()->check(CLI::IsMember({"core", "site"}));
  serve_cmd->add_option("--listen", serve_opts.listen, "listen address [host]:port");
  serve_cmd->add_option("--http", serve_opts.http, "HTTP gateway address (core role)");
  serve_cmd->add_option("--site-id", serve_opts.site_id, "site identifier (site role)");
  serve_cmd->add_option("--data", serve_opts.data, "data directory");
  serve_cmd->add_option("--advertise", serve_opts.advertise, "address the core uses to reach this site");
  serve_cmd->add_option("--max-depth", serve_opts.max_depth, "domain tree depth bound (core role)");
  add_core(serve_cmd);

  // ingest
  std::string ingest_site, ingest_kid, ingest_file, ingest_domain, ingest_desc;
  std::vector<std::string> ingest_props;
  bool ingest_create = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "add a knowledge to a site and map it into a domain");
  ingest_cmd->add_option("--site", ingest_site, "owning site id")->required();
  ingest_cmd->add_option("--kid", ingest_kid, "knowledge id")->required();
  ingest_cmd->add_option("--file", ingest_file, "elements, one JSON object per line")->required();
  ingest_cmd->add_option("--domain", ingest_domain, "domain path a/b/c")->required();
  ingest_cmd->add_option("--props", ingest_props, "properties key=value")->expected(0, -1);
  ingest_cmd->add_option("--desc", ingest_desc, "description");
  ingest_cmd->add_flag("--create-domain", ingest_create, "create missing domains");
  add_core(ingest_cmd);

  // nav
  std::vector<std::string> nav_commands;
  auto* nav_cmd = app.add_subcommand("nav", "interactive navigator (reads commands from stdin)");
  nav_cmd->add_option("-c,--command", nav_commands, "run these commands instead of reading stdin");
  add_core(nav_cmd);

  // search
  std::vector<std::string> search_domains, search_keywords;
  auto* search_cmd = app.add_subcommand("search", "intersect domains and retrieve by keywords");
  search_cmd->add_option("--domains", search_domains, "domain paths, comma separated")->required()->delimiter(',');
  search_cmd->add_option("--keywords", search_keywords, "keywords, comma separated")->delimiter(',');
  add_core(search_cmd);

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "check coherence between sites and the core");
  add_core(verify_cmd);

  // domain add
  std::string domain_path;
  bool domain_parents = false;
  auto* domain_cmd = app.add_subcommand("domain", "domain tree maintenance");
  domain_cmd->require_subcommand(1);
  auto* domain_add_cmd = domain_cmd->add_subcommand("add", "add a domain");
  domain_add_cmd->add_option("path", domain_path, "domain path a/b/c")->required();
  domain_add_cmd->add_flag("-p,--parents", domain_parents, "create missing ancestors");
  add_core(domain_add_cmd);

  // scenario
  std::string scenario_script;
  bool scenario_tcp = false;
  auto* scenario_cmd = app.add_subcommand("scenario", "run a scenario script against an in-process system");
  scenario_cmd->add_option("--script", scenario_script, "scenario JSON file")->required()->check(CLI::ExistingFile);
  scenario_cmd->add_flag("--tcp", scenario_tcp, "use real sockets");

  // call
  std::string call_kind, call_payload = "{}", call_to;
  auto* call_cmd = app.add_subcommand("call", "send one raw protocol message and print the response");
  call_cmd->add_option("kind", call_kind, "message kind")->required();
  call_cmd->add_option("payload", call_payload, "payload JSON");
  call_cmd->add_option("--to", call_to, "node address (default: the core)");
  add_core(call_cmd);

  bool json_output = false;
  for (auto* sub : {ingest_cmd, nav_cmd, search_cmd, verify_cmd, domain_add_cmd, scenario_cmd}) {
    sub->add_flag("--json", json_output, "machine-readable output");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "kmap: " << e.what() << "\n";
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << "run 'kmap " << sub->get_name() << " --help' for usage\n";
    }
    return kUsage;
  }

  Context ctx(out, err, connector, std::chrono::milliseconds(timeout_ms));
  const std::string core = core_address(core_flag);

  try {
    if (serve_cmd->parsed()) {
      if (serve_opts.role == "site") {
        serve_opts.core = core;
        if (serve_opts.core.empty()) throw UsageError("site role requires --core (or KMAP_CORE_ADDR)");
        if (serve_opts.site_id.empty()) throw UsageError("site role requires --site-id");
      }
      return serve(serve_opts, ctx);
    }

    if (ingest_cmd->parsed()) {
      KnowledgePayload knowledge;
      knowledge.knowledge_id = ingest_kid;
      knowledge.properties = parse_props(ingest_props);
      knowledge.description = ingest_desc;
      knowledge.elements = read_elements(ingest_file);
      const json reply = ctx.core(core)->request(
          MessageKind::AddKnowledge, json{{"site_id", ingest_site},
                                          {"knowledge", knowledge},
                                          {"path", DomainPath::parse(ingest_domain)},
                                          {"create_domain", ingest_create}});
      if (json_output) {
        out << dump(reply) << "\n";
      } else {
        out << "added " << ingest_site << "/" << ingest_kid << " ("
            << knowledge.elements.size() << " elements) at " << reply.at("path").get<DomainPath>().to_string()
            << "\n";
      }
      return kOk;
    }

    if (nav_cmd->parsed()) {
      auto channel = ctx.core(core);
      NavigatorSession session(*channel, out);
      if (!nav_commands.empty()) {
        for (const auto& c : nav_commands) {
          if (!session.execute(c)) break;
        }
      } else {
        session.run(in, &in == &std::cin);
      }
      return kOk;
    }

    if (search_cmd->parsed()) {
      std::vector<DomainPath> paths;
      for (const auto& d : search_domains) paths.push_back(DomainPath::parse(d));
      auto channel = ctx.core(core);
      const json plan = channel->request(MessageKind::PlanRetrieval, json{{"paths", paths}});
      if (json_output) out << dump(plan) << "\n";
      if (plan.at("candidates").empty()) {
        if (!json_output) out << "(no candidates)\n";
        return kOk;
      }
      json targets = json::array();
      for (const auto& c : plan.at("candidates")) {
        targets.push_back(json{{"site_id", c.at("site_id")}, {"knowledge_id", c.at("knowledge_id")}});
      }
      json result;
      try {
        result = channel->request(MessageKind::Retrieve, json{{"targets", targets}, {"keywords", search_keywords}});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AllTargetsFailed || !e.details().contains("groups")) throw;
        result = e.details();
      }
      if (json_output) {
        out << dump(result) << "\n";
      } else {
        print_retrieval(out, result);
      }
      return retrieval_exit_code(result);
    }

    if (verify_cmd->parsed()) {
      const json report = ctx.core(core)->request(MessageKind::VerifyCoherence);
      if (json_output) {
        out << dump(report) << "\n";
      } else {
        print_report(out, report);
      }
      if (!report.at("coherent").get<bool>()) return kCoherenceViolation;
      if (!report.at("unreachable_sites").empty()) return kConnectivity;
      return kOk;
    }

    if (domain_add_cmd->parsed()) {
      const json reply = ctx.core(core)->request(
          MessageKind::AddDomain, json{{"path", DomainPath::parse(domain_path)}, {"parents", domain_parents}});
      if (json_output) {
        out << dump(reply) << "\n";
      } else {
        out << "added " << reply.at("path").get<DomainPath>().to_string() << "\n";
      }
      return kOk;
    }

    if (scenario_cmd->parsed()) {
      std::ifstream file(scenario_script);
      json script;
      try {
        script = json::parse(file);
      } catch (const json::exception& e) {
        fail(ErrorCode::MalformedRequest, scenario_script + ": " + e.what());
      }
      std::vector<json> transcript;
      int code = kOk;
      try {
        transcript = run_scenario(script, scenario_tcp);
      } catch (const ScenarioFailure& f) {
        transcript = f.transcript;
        err << "scenario failed at " << f.what() << "\n";
        code = kInputError;
      }
      for (const auto& entry : transcript) {
        if (json_output) {
          out << dump(entry) << "\n";
        } else {
          out << entry.at("step") << "\t" << entry.at("actor").get<std::string>() << "\t"
              << entry.at("op").get<std::string>() << "\t" << entry.at("status").get<std::string>() << "\n";
        }
      }
      return code;
    }

    if (call_cmd->parsed()) {
      const auto kind = parse_message_kind(call_kind);
      if (!kind) throw UsageError("unknown message kind '" + call_kind + "'");
      Message message;
      message.request_id = "cli-1";
      message.kind = *kind;
      try {
        message.payload = json::parse(call_payload);
      } catch (const json::exception& e) {
        fail(ErrorCode::MalformedRequest, std::string("payload: ") + e.what());
      }
      auto channel = call_to.empty() ? ctx.core(core) : ctx.connector().connect(call_to);
      const Response response = channel->call(message);
      out << encode(response) << "\n";
      if (response.ok) return kOk;
      const auto code = parse_error_code(response.error->code);
      return code ? exit_code_for(*code) : kInputError;
    }
  } catch (const UsageError& e) {
    err << "kmap: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "kmap: " << to_string(e.code()) << ": " << e.what() << "\n";
    if (e.code() == ErrorCode::AllTargetsFailed && e.details().contains("groups")) print_retrieval(err, e.details());
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "kmap: bad response: " << e.what() << "\n";
    return kInputError;
  }
  return kUsage;
}

}  // namespace kmap::cli
