#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include "kmap/codec.hpp"
#include "kmap/domain_catalog.hpp"
#include "kmap/error.hpp"
#include "support.hpp"

using namespace kmap;
using kmap::test::build_meteorology;
using kmap::test::isabel_node;
using kmap::test::tropical_cyclone;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected kmap::Error";
  return ErrorCode::Internal;
}

KnowledgeMappingNode node(const std::string& site, const std::string& kid) {
  KnowledgeMappingNode n;
  n.site_id = site;
  n.knowledge_id = kid;
  n.properties.data_type = "categorical";
  n.description = site + "/" + kid;
  return n;
}

using Triple = std::tuple<DomainPath, std::string, std::string>;

std::set<Triple> triples_of(const DomainCatalog& catalog) {
  std::set<Triple> out;
  for (const auto& pm : catalog.all_mappings()) out.emplace(pm.path, pm.node.site_id, pm.node.knowledge_id);
  return out;
}

}  // namespace

TEST(DomainPath, SegmentsAreTrimmedAndCaseFolded) {
  const auto p = DomainPath::parse(" Meteorology / STORM/Tropical Cyclone ");
  EXPECT_EQ(p, tropical_cyclone());
  EXPECT_EQ(p.to_string(), "meteorology/storm/tropical cyclone");
  EXPECT_EQ(p.parent(), (DomainPath{"meteorology", "storm"}));
  EXPECT_TRUE(DomainPath({"meteorology"}).is_ancestor_of(p));
  EXPECT_EQ(code_of([] { DomainPath::parse("a//b"); }), ErrorCode::InvalidPath);
  EXPECT_EQ(code_of([] { DomainPath::normalize_segment("   "); }), ErrorCode::InvalidPath);
}

TEST(Catalog, AddDomainBuildsTree) {
  DomainCatalog c;
  EXPECT_EQ(c.add_domain(DomainPath::root(), "meteorology"), DomainPath{"meteorology"});
  c.add_domain({"meteorology"}, "storm");
  EXPECT_EQ(c.add_domain({"meteorology", "storm"}, "tropical cyclone"), tropical_cyclone());
  EXPECT_EQ(code_of([&] { c.add_domain({"meteorology"}, "storm"); }), ErrorCode::DuplicateSibling);
  EXPECT_EQ(code_of([&] { c.add_domain({"meteorology"}, "  Storm "); }), ErrorCode::DuplicateSibling);
  EXPECT_EQ(code_of([&] { c.add_domain({"nowhere"}, "x"); }), ErrorCode::ParentNotFound);
  EXPECT_EQ(code_of([&] { c.add_domain({"meteorology"}, ""); }), ErrorCode::InvalidPath);
}

TEST(Catalog, DepthBoundIsEnforced) {
  DomainCatalog c(3);
  DomainPath p;
  for (int i = 0; i < 3; ++i) p = c.add_domain(p, "d" + std::to_string(i));
  EXPECT_EQ(p.depth(), 3u);
  EXPECT_EQ(code_of([&] { c.add_domain(p, "too deep"); }), ErrorCode::DepthExceeded);
  EXPECT_EQ(code_of([&] { c.ensure_path(p.child("x")); }), ErrorCode::DepthExceeded);
  EXPECT_FALSE(c.contains(p.child("x")));
}

TEST(Catalog, LookupDomain) {
  DomainCatalog c;
  build_meteorology(c);
  const auto s = c.lookup_domain({"meteorology", "storm"});
  EXPECT_EQ(s.name, "storm");
  EXPECT_EQ(std::set<std::string>(s.children.begin(), s.children.end()),
            (std::set<std::string>{"thunder storm", "tropical cyclone", "tornado"}));
  EXPECT_EQ(s.mapping_count, 0u);
  EXPECT_GT(s.comparisons, 0u);
  EXPECT_EQ(code_of([&] { c.lookup_domain({"nonexistent"}); }), ErrorCode::DomainNotFound);
}

TEST(Catalog, LookupAfterRandomInsertsReplaysLog) {
  std::mt19937_64 rng(7);
  DomainCatalog c;
  std::vector<DomainPath> log;
  std::vector<DomainPath> parents{DomainPath::root()};
  std::uniform_int_distribution<int> letter(0, 7);
  while (log.size() < 1000) {
    const DomainPath parent = parents[std::uniform_int_distribution<std::size_t>(0, parents.size() - 1)(rng)];
    std::string name;
    for (int i = 0; i < 3; ++i) name += static_cast<char>('a' + letter(rng));
    try {
      const DomainPath p = c.add_domain(parent, name);
      log.push_back(p);
      if (p.depth() < kDefaultMaxDepth) parents.push_back(p);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::DuplicateSibling);
    }
  }
  for (const auto& p : log) {
    const auto s = c.lookup_domain(p);
    EXPECT_EQ(s.name, p.leaf());
  }
}

TEST(Catalog, AttachIsabelNode) {
  DomainCatalog c;
  build_meteorology(c);
  c.attach_mapping(tropical_cyclone(), isabel_node());
  const auto list = c.list_mappings(tropical_cyclone());
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].site_id, "prgcluster.ucd.ie");
  EXPECT_EQ(list[0].knowledge_id, "16");
  EXPECT_EQ(list[0].properties.data_size_bytes, 64424509440ull);
  EXPECT_EQ(code_of([&] { c.attach_mapping(tropical_cyclone(), isabel_node()); }), ErrorCode::DuplicateMapping);
  c.attach_mapping({"meteorology", "storm"}, isabel_node());
  EXPECT_EQ(c.occurrences(isabel_node().key()).size(), 2u);
  EXPECT_EQ(code_of([&] { c.attach_mapping({"nowhere"}, node("s", "1")); }), ErrorCode::DomainNotFound);
}

TEST(Catalog, AttachValidatesProperties) {
  DomainCatalog c;
  build_meteorology(c);
  auto bad = node("s", "1");
  bad.properties.dimension = 0;
  EXPECT_EQ(code_of([&] { c.attach_mapping({"meteorology"}, bad); }), ErrorCode::InvalidProperties);
  bad = node("s", "1");
  bad.properties.quality = 1.5;
  EXPECT_EQ(code_of([&] { c.attach_mapping({"meteorology"}, bad); }), ErrorCode::InvalidProperties);
}

TEST(Catalog, DetachLeavesOtherOccurrences) {
  DomainCatalog c;
  build_meteorology(c);
  const DomainPath a = tropical_cyclone();
  const DomainPath b{"meteorology", "climate"};
  c.attach_mapping(a, node("X", "7"));
  c.attach_mapping(b, node("X", "7"));
  c.detach_mapping(a, {"X", "7"});
  EXPECT_TRUE(c.list_mappings(a).empty());
  ASSERT_EQ(c.list_mappings(b).size(), 1u);
  EXPECT_EQ(code_of([&] { c.detach_mapping(a, {"X", "unknown"}); }), ErrorCode::MappingNotFound);
  EXPECT_EQ(code_of([&] { c.detach_mapping({"nowhere"}, {"X", "7"}); }), ErrorCode::DomainNotFound);
}

TEST(Catalog, ListMappingsKeepsInsertionOrder) {
  DomainCatalog c;
  build_meteorology(c);
  EXPECT_TRUE(c.list_mappings({"meteorology", "climate"}).empty());
  std::vector<std::string> kids{"9", "3", "z", "a", "5"};
  for (const auto& k : kids) c.attach_mapping({"meteorology", "climate"}, node("s", k));
  const auto list = c.list_mappings({"meteorology", "climate"});
  ASSERT_EQ(list.size(), kids.size());
  for (std::size_t i = 0; i < kids.size(); ++i) EXPECT_EQ(list[i].knowledge_id, kids[i]);
  EXPECT_EQ(code_of([&] { c.list_mappings({"nowhere"}); }), ErrorCode::DomainNotFound);
}

TEST(Catalog, IntersectExamples) {
  DomainCatalog c;
  build_meteorology(c);
  const DomainPath p{"meteorology", "climate"};
  const DomainPath q = tropical_cyclone();
  const DomainPath r{"meteorology", "storm", "tornado"};
  c.attach_mapping(p, node("X", "1"));
  c.attach_mapping(p, node("X", "7"));
  c.attach_mapping(q, node("X", "7"));
  c.attach_mapping(q, node("Y", "2"));
  c.attach_mapping(r, node("Z", "9"));

  const std::vector<DomainPath> single{p};
  EXPECT_EQ(c.intersect_mappings(single), c.list_mappings(p));
  const std::vector<DomainPath> two{p, q};
  const auto both = c.intersect_mappings(two);
  ASSERT_EQ(both.size(), 1u);
  EXPECT_EQ(both[0].key(), (MappingKey{"X", "7"}));
  const std::vector<DomainPath> disjoint{p, r};
  EXPECT_TRUE(c.intersect_mappings(disjoint).empty());
  const std::vector<DomainPath> repeated{p, p};
  EXPECT_EQ(c.intersect_mappings(repeated).size(), 2u);
  EXPECT_EQ(code_of([&] { c.intersect_mappings(std::vector<DomainPath>{}); }), ErrorCode::EmptySelection);
  EXPECT_EQ(code_of([&] { c.intersect_mappings(std::vector<DomainPath>{p, {"nowhere"}}); }),
            ErrorCode::DomainNotFound);
}

TEST(Catalog, IntersectCarriesFirstPathCopy) {
  DomainCatalog c;
  build_meteorology(c);
  auto first = node("X", "7");
  first.description = "first";
  auto second = node("X", "7");
  second.description = "second";
  c.attach_mapping({"meteorology", "climate"}, first);
  c.attach_mapping({"meteorology", "storm"}, second);
  const auto got = c.intersect_mappings(std::vector<DomainPath>{{"meteorology", "climate"}, {"meteorology", "storm"}});
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].description, "first");
}

// Random catalogs, every subset of up to 4 paths, against set intersection.
TEST(CatalogProperty, IntersectionMatchesSetOracle) {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 20; ++round) {
    DomainCatalog c;
    std::vector<DomainPath> paths;
    for (int i = 0; i < 6; ++i) paths.push_back(c.add_domain(DomainPath::root(), "d" + std::to_string(i)));
    for (int i = 0; i < 4; ++i) paths.push_back(c.add_domain(paths[i % 3], "sub" + std::to_string(i)));
    std::map<DomainPath, std::vector<MappingKey>> model;
    std::uniform_int_distribution<int> key(0, 14);
    for (const auto& p : paths) {
      for (int k = 0; k < 8; ++k) {
        MappingKey mk{"s" + std::to_string(key(rng) % 3), std::to_string(key(rng))};
        if (std::find(model[p].begin(), model[p].end(), mk) != model[p].end()) continue;
        c.attach_mapping(p, node(mk.site_id, mk.knowledge_id));
        model[p].push_back(mk);
      }
    }
    const std::size_t n = paths.size();
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
      if (__builtin_popcountll(mask) > 4) continue;
      std::vector<DomainPath> chosen;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1u << i)) chosen.push_back(paths[i]);
      }
      std::shuffle(chosen.begin(), chosen.end(), rng);
      std::vector<MappingKey> expected;
      for (const auto& k : model[chosen[0]]) {
        bool everywhere = std::all_of(chosen.begin(), chosen.end(), [&](const DomainPath& p) {
          return std::find(model[p].begin(), model[p].end(), k) != model[p].end();
        });
        if (everywhere) expected.push_back(k);
      }
      std::vector<MappingKey> got;
      for (const auto& m : c.intersect_mappings(chosen)) got.push_back(m.key());
      ASSERT_EQ(got, expected);
    }
  }
}

TEST(Catalog, MoveMapping) {
  DomainCatalog c;
  build_meteorology(c);
  const DomainPath from = tropical_cyclone();
  const DomainPath to{"meteorology", "climate"};
  c.attach_mapping(from, node("X", "7"));
  c.move_mapping(from, to, {"X", "7"});
  EXPECT_TRUE(c.list_mappings(from).empty());
  ASSERT_EQ(c.list_mappings(to).size(), 1u);

  c.attach_mapping(from, node("X", "7"));
  EXPECT_EQ(code_of([&] { c.move_mapping(from, to, {"X", "7"}); }), ErrorCode::DuplicateMapping);
  EXPECT_EQ(c.list_mappings(from).size(), 1u);
  EXPECT_EQ(code_of([&] { c.move_mapping(from, {"nowhere"}, {"X", "7"}); }), ErrorCode::DomainNotFound);
  EXPECT_EQ(code_of([&] { c.move_mapping(from, to, {"X", "none"}); }), ErrorCode::MappingNotFound);
}

TEST(CatalogConcurrency, MoveIsNeverObservedAtNeither) {
  DomainCatalog c;
  build_meteorology(c);
  const DomainPath a = tropical_cyclone();
  const DomainPath b{"meteorology", "climate"};
  const MappingKey key{"X", "7"};
  c.attach_mapping(a, node("X", "7"));
  std::atomic<bool> done{false};
  std::atomic<int> violations{0};
  std::atomic<long> reads{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 4; ++t) {
    readers.emplace_back([&] {
      while (!done) {
        const auto occ = c.occurrences(key);
        const auto all = c.all_mappings();
        if (occ.size() != 1 || all.size() != 1) ++violations;
        ++reads;
        // Leave gaps; the reader-preferring shared lock would otherwise starve the writer.
        std::this_thread::sleep_for(std::chrono::microseconds(20));
      }
    });
  }
  for (int i = 0; i < 2000 || reads < 1000; ++i) {
    if (i % 2 == 0) {
      c.move_mapping(a, b, key);
    } else {
      c.move_mapping(b, a, key);
    }
  }
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(violations, 0);
  EXPECT_GT(reads, 0);
}

// Random attach/detach/move sequences against a flat set of triples: lists at
// unrelated paths never change and keys stay unique per list.
TEST(CatalogProperty, FrameAgainstTripleOracle) {
  std::mt19937_64 rng(3);
  DomainCatalog c;
  std::vector<DomainPath> paths;
  for (int i = 0; i < 4; ++i) {
    const auto top = c.add_domain(DomainPath::root(), "t" + std::to_string(i));
    paths.push_back(top);
    for (int j = 0; j < 3; ++j) paths.push_back(c.add_domain(top, "c" + std::to_string(j)));
  }
  std::set<Triple> model;
  std::uniform_int_distribution<std::size_t> pick_path(0, paths.size() - 1);
  std::uniform_int_distribution<int> pick_key(0, 9);
  std::uniform_int_distribution<int> pick_op(0, 2);
  for (int step = 0; step < 3000; ++step) {
    const DomainPath p = paths[pick_path(rng)];
    const DomainPath q = paths[pick_path(rng)];
    const std::string site = "s" + std::to_string(pick_key(rng) % 2);
    const std::string kid = std::to_string(pick_key(rng));
    const Triple tp{p, site, kid};
    const Triple tq{q, site, kid};
    switch (pick_op(rng)) {
      case 0:
        if (model.count(tp)) {
          EXPECT_EQ(code_of([&] { c.attach_mapping(p, node(site, kid)); }), ErrorCode::DuplicateMapping);
        } else {
          c.attach_mapping(p, node(site, kid));
          model.insert(tp);
        }
        break;
      case 1:
        if (!model.count(tp)) {
          EXPECT_EQ(code_of([&] { c.detach_mapping(p, {site, kid}); }), ErrorCode::MappingNotFound);
        } else {
          c.detach_mapping(p, {site, kid});
          model.erase(tp);
        }
        break;
      default:
        if (!model.count(tp)) {
          EXPECT_EQ(code_of([&] { c.move_mapping(p, q, {site, kid}); }), ErrorCode::MappingNotFound);
        } else if (model.count(tq)) {
          EXPECT_EQ(code_of([&] { c.move_mapping(p, q, {site, kid}); }), ErrorCode::DuplicateMapping);
        } else {
          c.move_mapping(p, q, {site, kid});
          model.erase(tp);
          model.insert(tq);
        }
        break;
    }
    if (step % 100 == 0) ASSERT_EQ(triples_of(c), model) << "step " << step;
  }
  ASSERT_EQ(triples_of(c), model);
  for (const auto& p : paths) {
    std::set<MappingKey> seen;
    for (const auto& m : c.list_mappings(p)) EXPECT_TRUE(seen.insert(m.key()).second);
  }
}

TEST(Catalog, UpdateMappingsChangesEveryOccurrence) {
  DomainCatalog c;
  build_meteorology(c);
  c.attach_mapping(tropical_cyclone(), isabel_node());
  c.attach_mapping({"meteorology", "climate"}, isabel_node());
  auto props = isabel_node().properties;
  props.quality = 0.5;
  EXPECT_EQ(c.update_mappings(isabel_node().key(), props, "revised", 2), 2u);
  for (const auto& pm : c.all_mappings()) {
    EXPECT_EQ(pm.node.description, "revised");
    EXPECT_EQ(pm.node.revision, 2u);
    EXPECT_EQ(pm.node.properties.quality, 0.5);
  }
  EXPECT_EQ(c.update_mappings({"nobody", "0"}, props, "x", 1), 0u);
}

TEST(Catalog, RemoveAndRestoreMappings) {
  DomainCatalog c;
  build_meteorology(c);
  c.attach_mapping(tropical_cyclone(), isabel_node());
  c.attach_mapping({"meteorology"}, isabel_node());
  const auto before = triples_of(c);
  const auto removed = c.remove_mappings(isabel_node().key());
  EXPECT_EQ(removed.size(), 2u);
  EXPECT_TRUE(c.all_mappings().empty());
  c.restore_mappings(removed);
  EXPECT_EQ(triples_of(c), before);
}

TEST(Catalog, RemoveEmptyDomainOnlyRemovesEmptyLeaves) {
  DomainCatalog c;
  build_meteorology(c);
  EXPECT_FALSE(c.remove_empty_domain({"meteorology", "storm"}));
  c.attach_mapping({"meteorology", "climate"}, node("s", "1"));
  EXPECT_FALSE(c.remove_empty_domain({"meteorology", "climate"}));
  EXPECT_TRUE(c.remove_empty_domain({"meteorology", "weather forecasting"}));
  EXPECT_FALSE(c.contains({"meteorology", "weather forecasting"}));
  EXPECT_FALSE(c.remove_empty_domain({"nowhere"}));
}

TEST(Catalog, SnapshotRoundTrip) {
  DomainCatalog c;
  build_meteorology(c);
  c.attach_mapping(tropical_cyclone(), isabel_node());
  c.attach_mapping({"meteorology", "climate"}, node("s", "2"));
  const auto doc = c.to_json();
  EXPECT_EQ(doc.at("max_depth"), 6);
  ASSERT_EQ(doc.at("roots").size(), 1u);
  const auto& met = doc.at("roots")[0];
  EXPECT_EQ(met.at("name"), "meteorology");
  EXPECT_TRUE(met.contains("children"));
  EXPECT_TRUE(met.contains("mappings"));

  const auto dir = std::filesystem::temp_directory_path() / ("kmap-catalog-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  c.save(dir / "catalog.json");
  const auto loaded = DomainCatalog::load(dir / "catalog.json");
  EXPECT_EQ(loaded->to_json(), doc);
  EXPECT_EQ(triples_of(*loaded), triples_of(c));
  EXPECT_EQ(loaded->list_mappings(tropical_cyclone())[0], isabel_node());
  std::filesystem::remove_all(dir);
}

TEST(Catalog, LoadRejectsBrokenSnapshot) {
  auto doc = nlohmann::json::parse(R"({"max_depth":6,"roots":[{"name":"a","children":[],"mappings":[]},
                                       {"name":"A","children":[],"mappings":[]}]})");
  EXPECT_THROW(DomainCatalog::from_json(doc), Error);
}

TEST(CatalogMetrics, LookupComparisonsAreLogarithmic) {
  // Comparisons per lookup stay within c * (log2 N + depth * log2 fan-out).
  for (int bits : {6, 10, 14}) {
    DomainCatalog c;
    const std::size_t n = std::size_t{1} << bits;
    std::vector<DomainPath> leaves;
    for (std::size_t i = 0; i < n; ++i) {
      const auto top = c.add_domain(DomainPath::root(), "domain" + std::to_string(i));
      if (i % 64 == 0) {
        for (int j = 0; j < 16; ++j) leaves.push_back(c.add_domain(top, "sub" + std::to_string(j)));
      }
    }
    const auto base = c.metrics();
    for (const auto& p : leaves) c.lookup_domain(p);
    const auto m = c.metrics();
    EXPECT_EQ(m.top_level_domains, n);
    EXPECT_EQ(m.max_subdomains, 16u);
    const double mean = static_cast<double>(m.lookup_comparisons - base.lookup_comparisons) /
                        static_cast<double>(m.lookups - base.lookups);
    const double bound = 3.0 * (std::log2(static_cast<double>(n)) + 2 * std::log2(16.0));
    EXPECT_LE(mean, bound) << "N=2^" << bits;
  }
}

TEST(CatalogMetrics, InsertCostIsRecorded) {
  DomainCatalog c;
  build_meteorology(c);
  for (int i = 0; i < 5; ++i) c.attach_mapping({"meteorology"}, node("s", std::to_string(i)));
  EXPECT_GE(c.metrics().mapping_insert_cost, 4u);
}
