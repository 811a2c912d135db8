#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kmap/codec.hpp"
#include "kmap/domain_catalog.hpp"
#include "kmap/local_store.hpp"

namespace kmap::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(KMAP_FIXTURE_DIR) / name;
}

inline std::vector<KnowledgeElement> load_elements(const std::string& name) {
  std::ifstream in(fixture(name));
  std::vector<KnowledgeElement> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line).get<KnowledgeElement>());
  }
  return out;
}

inline KnowledgeProperties isabel_properties() {
  KnowledgeProperties p;
  p.data_type = "numeric-interval";
  p.dimension = 12;
  p.mining_task = MiningTask::association_rules();
  p.data_size_bytes = 60ull << 30;
  return p;
}

inline KnowledgeMappingNode isabel_node() {
  KnowledgeMappingNode n;
  n.site_id = "prgcluster.ucd.ie";
  n.knowledge_id = "16";
  n.properties = isabel_properties();
  n.description = "knowledge mined from Hurricane Isabel data";
  return n;
}

inline KnowledgePayload isabel_payload() {
  return KnowledgePayload{"16", load_elements("isabel_rules.jsonl"), isabel_properties(),
                          "knowledge mined from Hurricane Isabel data"};
}

inline const DomainPath& tropical_cyclone() {
  static const DomainPath p{"meteorology", "storm", "tropical cyclone"};
  return p;
}

// meteorology/{weather forecasting, storm, climate},
// storm/{thunder storm, tropical cyclone, tornado}.
inline void build_meteorology(DomainCatalog& catalog) {
  const DomainPath met = catalog.add_domain(DomainPath::root(), "meteorology");
  catalog.add_domain(met, "weather forecasting");
  const DomainPath storm = catalog.add_domain(met, "storm");
  catalog.add_domain(met, "climate");
  catalog.add_domain(storm, "thunder storm");
  catalog.add_domain(storm, "tropical cyclone");
  catalog.add_domain(storm, "tornado");
}

// Reference tokenizer written independently of kmap::Tokenizer: blank out
// every separator byte, then split on whitespace.
inline std::set<std::string> oracle_tokens(const std::string& text) {
  std::string spaced = text;
  for (char& c : spaced) {
    const auto u = static_cast<unsigned char>(c);
    const bool keep = (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
    c = keep ? static_cast<char>(u >= 'A' && u <= 'Z' ? u + 32 : u) : ' ';
  }
  std::istringstream in(spaced);
  std::set<std::string> out;
  std::string word;
  while (in >> word) {
    if (word.size() >= 2) out.insert(word);
  }
  return out;
}

// Full-scan filter: every element whose token set holds every query token.
inline std::vector<std::uint64_t> oracle_query(const std::vector<KnowledgeElement>& elements,
                                               const std::vector<std::string>& terms) {
  std::set<std::string> wanted;
  for (const auto& t : terms) {
    for (const auto& tok : oracle_tokens(t)) wanted.insert(tok);
  }
  std::vector<std::uint64_t> out;
  for (const auto& e : elements) {
    const std::set<std::string> have = e.content.is_rule() ? oracle_tokens(e.content.text) : std::set<std::string>{};
    if (std::includes(have.begin(), have.end(), wanted.begin(), wanted.end())) out.push_back(e.eid);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::uint64_t> eids(const std::vector<KnowledgeElement>& elements) {
  std::vector<std::uint64_t> out;
  for (const auto& e : elements) out.push_back(e.eid);
  return out;
}

inline std::vector<std::string> random_vocabulary(std::mt19937_64& rng, std::size_t size) {
  std::uniform_int_distribution<int> len(2, 8);
  std::uniform_int_distribution<int> letter(0, 25);
  std::set<std::string> words;
  while (words.size() < size) {
    std::string w;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) w += static_cast<char>('a' + letter(rng));
    words.insert(w);
  }
  return {words.begin(), words.end()};
}

// Rule texts drawn from `vocab`, with random case, punctuation and a few
// opaque references mixed in. Eids are distinct but not contiguous.
inline std::vector<KnowledgeElement> random_corpus(std::mt19937_64& rng, const std::vector<std::string>& vocab,
                                                   std::size_t size) {
  static const char* separators[] = {" ", ", ", " => ", " AND ", "-", " (", ") ", "; ", " = ", "\t"};
  std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
  std::uniform_int_distribution<int> words_per(1, 10);
  std::uniform_int_distribution<int> sep(0, 9);
  std::uniform_int_distribution<int> percent(0, 99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<KnowledgeElement> out;
  std::uint64_t eid = 0;
  for (std::size_t i = 0; i < size; ++i) {
    eid += 1 + static_cast<std::uint64_t>(percent(rng) % 5);
    KnowledgeElement e;
    e.eid = eid;
    if (percent(rng) < 3) {
      e.content = ElementContent::opaque("file:///artifacts/" + vocab[word(rng)] + ".png");
    } else {
      std::string text = "IF ";
      const int n = words_per(rng);
      for (int k = 0; k < n; ++k) {
        std::string w = vocab[word(rng)];
        if (percent(rng) < 20) std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::toupper(c); });
        text += w;
        text += separators[sep(rng)];
        if (percent(rng) < 10) text += "x ";  // single letters are dropped
      }
      e.content = ElementContent::rule(text);
    }
    e.attributes["support"] = unit(rng);
    e.attributes["confidence"] = unit(rng);
    out.push_back(std::move(e));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace kmap::test
