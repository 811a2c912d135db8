#include "kmap/navigator.hpp"

#include <algorithm>
#include <iostream>

#include "kmap/codec.hpp"
#include "kmap/error.hpp"

namespace kmap {

using nlohmann::json;

std::vector<std::string> split_command_line(std::string_view line) {
  std::vector<std::string> words;
  std::string word;
  bool in_word = false;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\\' && i + 1 < line.size()) {
      word += line[++i];
      in_word = true;
    } else if (c == '"') {
      quoted = !quoted;
      in_word = true;
    } else if (!quoted && (c == ' ' || c == '\t' || c == '\r' || c == '\n')) {
      if (in_word) words.push_back(std::move(word));
      word.clear();
      in_word = false;
    } else {
      word += c;
      in_word = true;
    }
  }
  if (quoted) fail(ErrorCode::InvalidPath, "unterminated quote");
  if (in_word) words.push_back(std::move(word));
  return words;
}

namespace {

std::string dump(const json& value) { return value.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string path_text(const json& path) {
  const auto p = path.get<DomainPath>();
  return p.is_root() ? "/" : p.to_string();
}

std::string content_text(const json& content) {
  if (content.is_string()) return content.get<std::string>();
  return dump(content);
}

}  // namespace

void print_mappings(std::ostream& out, const json& mappings) {
  if (mappings.empty()) {
    out << "(no knowledge)\n";
    return;
  }
  for (const auto& m : mappings) {
    const auto& props = m.at("properties");
    out << m.at("site_id").get<std::string>() << "/" << m.at("knowledge_id").get<std::string>() << "\n"
        << "  data type:   " << props.at("data_type").get<std::string>() << "\n"
        << "  dimension:   " << props.at("dimension") << "\n"
        << "  mining task: " << props.at("mining_task").get<std::string>() << "\n"
        << "  data size:   " << props.at("data_size_bytes") << " bytes\n";
    if (props.contains("quality")) out << "  quality:     " << props.at("quality") << "\n";
    out << "  description: " << m.value("description", std::string{}) << "\n";
  }
}

void print_navigation(std::ostream& out, const json& navigation) {
  out << path_text(navigation.at("path")) << "\n";
  for (const auto& child : navigation.at("children")) out << "  " << child.get<std::string>() << "/\n";
  const auto count = navigation.at("mappings").size();
  if (count > 0) out << "  (" << count << " knowledge mapping" << (count == 1 ? "" : "s") << ")\n";
}

void print_retrieval(std::ostream& out, const json& result) {
  const auto& groups = result.at("groups");
  bool any = false;
  for (const auto& g : groups) {
    const std::string site = g.at("site_id").get<std::string>();
    const std::string kid = g.at("knowledge_id").get<std::string>();
    const std::string status = g.at("status").get<std::string>();
    if (status != "ok") {
      out << site << "\t" << kid << "\t" << status << "\t" << g.value("message", std::string{}) << "\n";
      continue;
    }
    for (const auto& e : g.at("elements")) {
      out << site << "\t" << kid << "\t" << e.at("eid") << "\t" << content_text(e.at("content")) << "\t"
          << dump(e.value("attributes", json::object())) << "\n";
      any = true;
    }
  }
  if (!any) out << "(no results)\n";
}

NavigatorSession::NavigatorSession(Channel& core, std::ostream& out) : core_(core), out_(out) {}

void NavigatorSession::cd(const std::string& target) {
  DomainPath next = current_;
  if (target == "/") {
    next = DomainPath::root();
  } else {
    std::string_view rest = target;
    if (!rest.empty() && rest.front() == '/') {
      next = DomainPath::root();
      rest.remove_prefix(1);
    }
    while (!rest.empty()) {
      const auto slash = rest.find('/');
      const std::string segment(rest.substr(0, slash));
      rest = slash == std::string_view::npos ? std::string_view{} : rest.substr(slash + 1);
      if (segment == "..") {
        if (!next.is_root()) next = next.parent();
      } else if (!segment.empty() && segment != ".") {
        next = next.child(segment);
      }
    }
  }
  core_.request(MessageKind::Navigate, json{{"path", next}});
  current_ = next;
}

void NavigatorSession::search(const std::vector<std::string>& terms) {
  std::vector<MappingKey> targets;
  if (!marked_.empty()) {
    const json plan = core_.request(MessageKind::PlanRetrieval, json{{"paths", marked_}});
    for (const auto& c : plan.at("candidates")) targets.push_back(c.get<MappingKey>());
  }
  for (const auto& key : picked_) {
    if (std::find(targets.begin(), targets.end(), key) == targets.end()) targets.push_back(key);
  }
  if (targets.empty()) {
    out_ << "error: selection is empty (use mark or pick)\n";
    return;
  }
  json result;
  try {
    result = core_.request(MessageKind::Retrieve, json{{"targets", targets}, {"keywords", terms}});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AllTargetsFailed || !e.details().contains("groups")) throw;
    result = e.details();
  }
  print_retrieval(out_, result);
}

bool NavigatorSession::execute(std::string_view line) {
  try {
    const auto words = split_command_line(line);
    if (words.empty()) return true;
    const std::string& cmd = words[0];
    const std::vector<std::string> args(words.begin() + 1, words.end());

    if (cmd == "quit" || cmd == "exit") return false;
    if (cmd == "ls") {
      DomainPath path = current_;
      for (const auto& a : args) path = path.child(a);
      print_navigation(out_, core_.request(MessageKind::Navigate, json{{"path", path}}));
    } else if (cmd == "cd") {
      if (args.size() != 1) {
        out_ << "usage: cd <name|path|..|/>\n";
      } else {
        cd(args[0]);
      }
    } else if (cmd == "up") {
      if (!current_.is_root()) current_ = current_.parent();
    } else if (cmd == "pwd") {
      out_ << (current_.is_root() ? "/" : current_.to_string()) << "\n";
    } else if (cmd == "info") {
      print_mappings(out_, core_.request(MessageKind::Navigate, json{{"path", current_}}).at("mappings"));
    } else if (cmd == "mark") {
      if (current_.is_root()) {
        out_ << "error: cannot select the root\n";
      } else if (std::find(marked_.begin(), marked_.end(), current_) == marked_.end()) {
        marked_.push_back(current_);
      }
    } else if (cmd == "pick") {
      if (args.size() != 1 || args[0].find('/') == std::string::npos) {
        out_ << "usage: pick <site>/<kid>\n";
      } else {
        const auto slash = args[0].find('/');
        MappingKey key{args[0].substr(0, slash), args[0].substr(slash + 1)};
        if (std::find(picked_.begin(), picked_.end(), key) == picked_.end()) picked_.push_back(std::move(key));
      }
    } else if (cmd == "sel") {
      if (marked_.empty() && picked_.empty()) out_ << "(empty selection)\n";
      for (const auto& p : marked_) out_ << "domain " << p.to_string() << "\n";
      for (const auto& k : picked_) out_ << "knowledge " << k.site_id << "/" << k.knowledge_id << "\n";
    } else if (cmd == "clear") {
      marked_.clear();
      picked_.clear();
    } else if (cmd == "search") {
      search(args);
    } else if (cmd == "help") {
      out_ << "commands: ls cd up pwd info mark pick sel clear search quit\n";
    } else {
      out_ << "error: unknown command '" << cmd << "'\n";
    }
  } catch (const Error& e) {
    out_ << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    out_ << "error: bad response: " << e.what() << "\n";
  }
  return true;
}

void NavigatorSession::run(std::istream& in, bool prompt) {
  std::string line;
  while (true) {
    if (prompt) out_ << "kmap:" << (current_.is_root() ? "/" : current_.to_string()) << "> " << std::flush;
    if (!std::getline(in, line)) break;
    if (!execute(line)) break;
  }
}

}  // namespace kmap
