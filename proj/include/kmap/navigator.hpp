#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/domain_path.hpp"
#include "kmap/knowledge.hpp"
#include "kmap/transport.hpp"

namespace kmap {

// Splits a command line on blanks; double quotes group words and a backslash
// escapes the next character. Throws InvalidPath on an unterminated quote.
std::vector<std::string> split_command_line(std::string_view line);

// Human renderings of core responses, shared by the REPL and one-shot commands.
void print_navigation(std::ostream& out, const nlohmann::json& navigation);
void print_mappings(std::ostream& out, const nlohmann::json& mappings);
void print_retrieval(std::ostream& out, const nlohmann::json& result);

// Interactive navigation over a core channel. Holds the current path and the
// selection client-side; every listing comes from a core response.
//
//   ls                 children of the current domain
//   cd <name|path|..|/>
//   up
//   info               mapping summaries at the current domain
//   mark               add the current domain to the domain selection
//   pick <site>/<kid>  add one knowledge to the selection
//   sel                show the selection
//   clear              empty the selection
//   search <terms...>  retrieve over the selection
//   quit
class NavigatorSession {
 public:
  NavigatorSession(Channel& core, std::ostream& out);

  // Returns false after quit.
  bool execute(std::string_view line);
  void run(std::istream& in, bool prompt = true);

  const DomainPath& current() const noexcept { return current_; }

 private:
  void cd(const std::string& target);
  void search(const std::vector<std::string>& terms);

  Channel& core_;
  std::ostream& out_;
  DomainPath current_;
  std::vector<DomainPath> marked_;
  std::vector<MappingKey> picked_;
};

}  // namespace kmap
