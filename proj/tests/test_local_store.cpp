#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "kmap/error.hpp"
#include "kmap/local_store.hpp"
#include "kmap/posting_list.hpp"
#include "kmap/tokenizer.hpp"
#include "support.hpp"

using namespace kmap;
using kmap::test::eids;
using kmap::test::isabel_payload;
using kmap::test::oracle_query;
using kmap::test::oracle_tokens;

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

KnowledgeElement rule(std::uint64_t eid, std::string text) {
  return KnowledgeElement{eid, ElementContent::rule(std::move(text)), {}};
}

KnowledgePayload payload(std::string kid, std::vector<KnowledgeElement> elements) {
  KnowledgePayload p;
  p.knowledge_id = std::move(kid);
  p.elements = std::move(elements);
  p.properties.data_type = "categorical";
  p.description = "test";
  return p;
}

// eid in postings(t) <=> t in tokens(element eid), over the whole vocabulary.
void expect_biconditional(const LocalStore& store, const std::string& kid) {
  const auto k = store.snapshot(kid);
  std::map<std::string, std::vector<std::uint64_t>> expected;
  for (const auto& e : k->table.elements) {
    if (!e.content.is_rule()) continue;
    for (const auto& t : oracle_tokens(e.content.text)) expected[t].push_back(e.eid);
  }
  ASSERT_EQ(k->index.vocabulary_size(), expected.size());
  for (const auto& [term, list] : k->index.postings()) {
    ASSERT_TRUE(is_strictly_ascending(list));
    ASSERT_EQ(list, expected[term]) << term;
  }
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kmap-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Tokenizer, SplitsAndFolds) {
  Tokenizer t;
  EXPECT_EQ(t.tokenize("IF Pressure<990hPa AND cloud-top = CB THEN rain x"),
            (std::vector<std::string>{"if", "pressure", "990hpa", "and", "cloud", "top", "cb", "then", "rain"}));
  EXPECT_EQ(t.terms("b a b"), (std::vector<std::string>{}));
  EXPECT_EQ(t.terms("bb aa bb"), (std::vector<std::string>{"aa", "bb"}));
}

TEST(Tokenizer, KeepsNonAsciiBytes) {
  Tokenizer t;
  EXPECT_EQ(t.tokenize("température élevée"), (std::vector<std::string>{"température", "élevée"}));
}

TEST(Tokenizer, Stopwords) {
  Tokenizer t({"if", "then", "and"});
  EXPECT_EQ(t.terms("IF cloud AND rain THEN flood"), (std::vector<std::string>{"cloud", "flood", "rain"}));
  const std::vector<std::string> q{"THEN", "Cloud"};
  EXPECT_EQ(t.normalize_query(q), (std::vector<std::string>{"cloud"}));
}

TEST(TokenizerProperty, AgreesWithOracleOnRandomText) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(1, 255);
  std::uniform_int_distribution<int> len(0, 80);
  Tokenizer t;
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) s += static_cast<char>(byte(rng));
    const auto got = t.terms(s);
    const auto want = oracle_tokens(s);
    ASSERT_EQ(std::set<std::string>(got.begin(), got.end()), want);
  }
}

TEST(PostingList, Intersection) {
  const PostingList cloud{25, 171, 360};
  const PostingList pressure{20, 171};
  EXPECT_EQ(intersect(cloud, pressure), (PostingList{171}));
  EXPECT_EQ(intersect_all({&cloud, &pressure}), (PostingList{171}));
  EXPECT_EQ(intersect_all({}), PostingList{});
  EXPECT_TRUE(is_strictly_ascending(cloud));
  EXPECT_FALSE(is_strictly_ascending(PostingList{3, 3}));
}

TEST(PostingListProperty, MatchesSetIntersection) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> value(1, 60);
  std::uniform_int_distribution<int> count(0, 40);
  for (int i = 0; i < 500; ++i) {
    std::vector<PostingList> lists(1 + i % 4);
    for (auto& l : lists) {
      std::set<std::uint64_t> s;
      for (int k = count(rng); k > 0; --k) s.insert(value(rng));
      l.assign(s.begin(), s.end());
    }
    std::set<std::uint64_t> expected(lists[0].begin(), lists[0].end());
    for (const auto& l : lists) {
      std::set<std::uint64_t> next;
      for (auto v : l) {
        if (expected.count(v)) next.insert(v);
      }
      expected = next;
    }
    std::vector<const PostingList*> ptrs;
    for (const auto& l : lists) ptrs.push_back(&l);
    EXPECT_EQ(intersect_all(ptrs), PostingList(expected.begin(), expected.end()));
  }
}

TEST(LocalStore, IsabelPostingsAndQuery) {
  LocalStore store;
  store.ingest_knowledge(isabel_payload());
  EXPECT_EQ(store.postings("16", "cloud"), (PostingList{25, 171, 360}));
  EXPECT_EQ(store.postings("16", "pressure"), (PostingList{20, 171}));
  EXPECT_EQ(store.postings("16", "Cloud"), (PostingList{25, 171, 360}));
  EXPECT_TRUE(store.postings("16", "zzz-unknown").empty());
  const auto hits = store.query_elements("16", {"pressure", "cloud"});
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].eid, 171u);
  EXPECT_EQ(store.query_elements("16", {}).size(), 5u);
  const auto e = store.get_element("16", 171);
  EXPECT_NE(e.content.text.find("cloud"), std::string::npos);
  EXPECT_NE(e.content.text.find("pressure"), std::string::npos);
  EXPECT_EQ(code_of([&] { store.postings("nope", "cloud"); }), ErrorCode::KnowledgeNotFound);
  EXPECT_EQ(code_of([&] { store.get_element("16", 999); }), ErrorCode::ElementNotFound);
}

TEST(LocalStore, IngestBookkeeping) {
  LocalStore store;
  EXPECT_TRUE(store.list_headers().empty());
  const auto h = store.ingest_knowledge(payload("k", {rule(3, "cc dd"), rule(1, "aa bb"), rule(2, "bb cc")}));
  EXPECT_EQ(h.knowledge_id, "k");
  EXPECT_EQ(h.revision, 1u);
  const auto k = store.snapshot("k");
  EXPECT_EQ(eids(k->table.elements), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(k->index.vocabulary_size(), 4u);
  expect_biconditional(store, "k");
  EXPECT_EQ(code_of([&] { store.ingest_knowledge(payload("k", {rule(1, "x")})); }), ErrorCode::DuplicateKnowledgeId);
  EXPECT_EQ(code_of([&] { store.ingest_knowledge(payload("d", {rule(1, "x"), rule(1, "y")})); }),
            ErrorCode::MalformedElement);
  EXPECT_EQ(code_of([&] { store.ingest_knowledge(payload("z", {rule(0, "x")})); }), ErrorCode::MalformedElement);
  auto bad = rule(4, "x");
  bad.attributes["confidence"] = 1.2;
  EXPECT_EQ(code_of([&] { store.ingest_knowledge(payload("c", {bad})); }), ErrorCode::MalformedElement);
  EXPECT_EQ(store.list_headers().size(), 1u);
}

TEST(LocalStore, HeaderSummariesRoundTrip) {
  LocalStore store;
  auto a = payload("b-knowledge", {rule(1, "aa")});
  a.properties.mining_task = MiningTask::other("sequence-mining");
  a.properties.quality = 0.25;
  a.description = "second, by id";
  auto b = payload("a-knowledge", {rule(1, "bb")});
  store.ingest_knowledge(a);
  store.ingest_knowledge(b);
  const auto headers = store.list_headers();
  ASSERT_EQ(headers.size(), 2u);
  EXPECT_EQ(headers[0].knowledge_id, "a-knowledge");
  EXPECT_EQ(headers[1].properties, a.properties);
  EXPECT_EQ(headers[1].description, a.description);
  EXPECT_EQ(nlohmann::json(headers[1].properties), nlohmann::json(a.properties));
}

TEST(LocalStore, OpaqueContentIsNotIndexed) {
  LocalStore store;
  KnowledgeElement pic{2, ElementContent::opaque("file:///cloud/pressure.png"), {}};
  store.ingest_knowledge(payload("k", {rule(1, "cloud pressure"), pic}));
  EXPECT_EQ(store.postings("k", "cloud"), (PostingList{1}));
  EXPECT_EQ(store.query_elements("k", {}).size(), 2u);
  EXPECT_EQ(store.get_element("k", 2).content, pic.content);
}

TEST(LocalStore, QueryTermsAreNormalized) {
  LocalStore store;
  store.ingest_knowledge(isabel_payload());
  EXPECT_EQ(eids(store.query_elements("16", {"PRESSURE", " Cloud "})), (std::vector<std::uint64_t>{171}));
  // A term made only of separators or single letters adds no constraint.
  EXPECT_EQ(eids(store.query_elements("16", {"cloud", "-", "x"})), (std::vector<std::uint64_t>{25, 171, 360}));
  EXPECT_TRUE(store.query_elements("16", {"cloud", "absent"}).empty());
}

TEST(LocalStore, BuildIndexIsIdempotent) {
  LocalStore store;
  store.ingest_knowledge(isabel_payload());
  const auto before = store.snapshot("16")->index;
  EXPECT_EQ(store.build_index("16"), before);
  EXPECT_EQ(store.build_index("16"), before);
  EXPECT_EQ(code_of([&] { store.build_index("none"); }), ErrorCode::KnowledgeNotFound);
}

TEST(LocalStore, UpdateKnowledge) {
  LocalStore store;
  store.ingest_knowledge(isabel_payload());
  const auto index_before = store.snapshot("16")->index;

  KnowledgeUpdate desc;
  desc.description = "revised";
  const auto h2 = store.update_knowledge("16", desc);
  EXPECT_EQ(h2.revision, 2u);
  EXPECT_EQ(h2.description, "revised");
  EXPECT_EQ(store.snapshot("16")->index, index_before);

  KnowledgeUpdate add;
  add.add_elements.push_back(rule(400, "cloud streets => mild wind"));
  store.update_knowledge("16", add);
  EXPECT_EQ(store.postings("16", "cloud"), (PostingList{25, 171, 360, 400}));
  expect_biconditional(store, "16");

  KnowledgeUpdate remove;
  remove.remove_eids.push_back(171);
  const auto h4 = store.update_knowledge("16", remove);
  EXPECT_EQ(h4.revision, 4u);
  for (const auto& [term, list] : store.snapshot("16")->index.postings()) {
    EXPECT_EQ(std::count(list.begin(), list.end(), 171u), 0) << term;
  }
  expect_biconditional(store, "16");

  KnowledgeUpdate missing;
  missing.remove_eids.push_back(171);
  EXPECT_EQ(code_of([&] { store.update_knowledge("16", missing); }), ErrorCode::ElementNotFound);
  KnowledgeUpdate dup;
  dup.add_elements.push_back(rule(20, "again"));
  EXPECT_EQ(code_of([&] { store.update_knowledge("16", dup); }), ErrorCode::MalformedElement);
  EXPECT_EQ(store.header("16").revision, 4u);
  EXPECT_EQ(code_of([&] { store.update_knowledge("none", desc); }), ErrorCode::KnowledgeNotFound);
}

TEST(LocalStore, RemoveKnowledge) {
  LocalStore store;
  store.ingest_knowledge(isabel_payload());
  store.ingest_knowledge(payload("other", {rule(1, "aa")}));
  store.remove_knowledge("16");
  EXPECT_EQ(code_of([&] { store.get_element("16", 171); }), ErrorCode::KnowledgeNotFound);
  ASSERT_EQ(store.list_headers().size(), 1u);
  const auto hash = store.state_hash();
  EXPECT_EQ(code_of([&] { store.remove_knowledge("16"); }), ErrorCode::KnowledgeNotFound);
  EXPECT_EQ(store.state_hash(), hash);
}

TEST(LocalStore, CitIsRecorded) {
  LocalStore store;
  store.ingest_knowledge(isabel_payload());
  store.query_elements("16", {"pressure", "cloud"});
  const auto m = store.metrics();
  EXPECT_EQ(m.knowledge_headers, 1u);
  EXPECT_EQ(m.query_terms, 2u);
  EXPECT_GT(m.comparisons_per_term, 0.0);
}

TEST(LocalStoreProperty, CitGrowsLogarithmically) {
  std::mt19937_64 rng(21);
  for (std::size_t vocab_size : {64u, 1024u, 16384u}) {
    const auto vocab = kmap::test::random_vocabulary(rng, vocab_size);
    std::vector<KnowledgeElement> elements;
    for (std::size_t i = 0; i < vocab.size(); ++i) elements.push_back(rule(i + 1, vocab[i]));
    LocalStore store;
    store.ingest_knowledge(payload("k", elements));
    double total = 0;
    for (int q = 0; q < 200; ++q) {
      store.query_elements("k", {vocab[rng() % vocab.size()]});
      total += store.metrics().comparisons_per_term;
    }
    const double mean = total / 200;
    EXPECT_LE(mean, 3.0 * std::log2(static_cast<double>(vocab_size)) + 2) << vocab_size;
  }
}

// Random corpora against the full-scan oracle, including narrowing under AND.
TEST(LocalStoreProperty, QueryMatchesFullScan) {
  std::mt19937_64 rng(13);
  for (int round = 0; round < 25; ++round) {
    const auto vocab = kmap::test::random_vocabulary(rng, 10 + rng() % 150);
    const auto corpus = kmap::test::random_corpus(rng, vocab, 1 + rng() % 300);
    LocalStore store;
    store.ingest_knowledge(payload("k", corpus));
    expect_biconditional(store, "k");
    for (int q = 0; q < 20; ++q) {
      std::vector<std::string> terms;
      for (std::size_t t = rng() % 6; t > 0; --t) terms.push_back(vocab[rng() % vocab.size()]);
      const auto got = eids(store.query_elements("k", terms));
      ASSERT_EQ(got, oracle_query(corpus, terms));
      if (!terms.empty()) {
        std::vector<std::string> fewer(terms.begin(), terms.end() - 1);
        const auto wider = eids(store.query_elements("k", fewer));
        ASSERT_TRUE(std::includes(wider.begin(), wider.end(), got.begin(), got.end()));
      }
    }
  }
}

TEST(LocalStoreProperty, IndexInvariantAfterRandomUpdates) {
  std::mt19937_64 rng(17);
  const auto vocab = kmap::test::random_vocabulary(rng, 40);
  LocalStore store;
  store.ingest_knowledge(payload("k", kmap::test::random_corpus(rng, vocab, 100)));
  std::uint64_t next = 10000;
  for (int step = 0; step < 60; ++step) {
    KnowledgeUpdate u;
    const auto current = store.snapshot("k")->table.elements;
    if (step % 7 == 0) {
      u.replace_elements = kmap::test::random_corpus(rng, vocab, 30);
    } else if (step % 3 == 0 && !current.empty()) {
      u.remove_eids.push_back(current[rng() % current.size()].eid);
    }
    if (step % 2 == 0) u.add_elements.push_back(rule(++next, vocab[rng() % vocab.size()] + " " + vocab[rng() % vocab.size()]));
    if (!u.touches_elements()) u.description = "step " + std::to_string(step);
    store.update_knowledge("k", u);
    expect_biconditional(store, "k");
  }
}

TEST(LocalStoreConcurrency, ReadersSeeConsistentTableAndIndex) {
  LocalStore store;
  store.ingest_knowledge(payload("k", {rule(1, "alpha beta")}));
  std::atomic<bool> done{false};
  std::atomic<int> violations{0};
  std::thread reader([&] {
    while (!done) {
      const auto k = store.snapshot("k");
      const auto rebuilt = IndexTable::build(k->table, store.tokenizer());
      if (!(rebuilt == k->index)) ++violations;
      const auto hits = store.query_elements("k", {"alpha"});
      for (const auto& e : hits) {
        if (e.content.text.find("alpha") == std::string::npos) ++violations;
      }
    }
  });
  for (int i = 0; i < 300; ++i) {
    KnowledgeUpdate u;
    u.replace_elements = std::vector<KnowledgeElement>{rule(1, i % 2 ? "alpha beta" : "gamma delta"),
                                                       rule(2, "alpha " + std::to_string(i))};
    store.update_knowledge("k", u);
  }
  done = true;
  reader.join();
  EXPECT_EQ(violations, 0);
}

TEST(LocalStorePersistence, ReopenRestoresEverything) {
  const auto dir = temp_dir("store");
  std::vector<HeaderSummary> headers;
  std::size_t hash = 0;
  {
    auto store = LocalStore::open(dir);
    store->ingest_knowledge(isabel_payload());
    store->ingest_knowledge(payload("second", {rule(1, "aa bb"), rule(2, "bb cc")}));
    KnowledgeUpdate u;
    u.description = "updated";
    u.add_elements.push_back(rule(3, "cc dd"));
    store->update_knowledge("second", u);
    headers = store->list_headers();
    hash = store->state_hash();
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "headers.json"));
  auto reopened = LocalStore::open(dir);
  EXPECT_EQ(reopened->list_headers(), headers);
  EXPECT_EQ(reopened->state_hash(), hash);
  EXPECT_EQ(eids(reopened->query_elements("16", {"pressure", "cloud"})), (std::vector<std::uint64_t>{171}));
  expect_biconditional(*reopened, "second");
  std::filesystem::remove_all(dir);
}

TEST(LocalStorePersistence, MissingIndexIsRebuilt) {
  const auto dir = temp_dir("store-rebuild");
  std::string index_ref;
  {
    auto store = LocalStore::open(dir);
    index_ref = store->ingest_knowledge(isabel_payload()).index_ref;
  }
  std::size_t removed = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.path().filename() == "index.json") {
      std::filesystem::remove(entry.path());
      ++removed;
      break;
    }
  }
  ASSERT_EQ(removed, 1u);
  auto reopened = LocalStore::open(dir);
  EXPECT_EQ(reopened->postings("16", "cloud"), (PostingList{25, 171, 360}));
  std::filesystem::remove_all(dir);
}

TEST(LocalStorePersistence, RemovedKnowledgeStaysRemoved) {
  const auto dir = temp_dir("store-remove");
  {
    auto store = LocalStore::open(dir);
    store->ingest_knowledge(isabel_payload());
    store->remove_knowledge("16");
  }
  auto reopened = LocalStore::open(dir);
  EXPECT_TRUE(reopened->list_headers().empty());
  EXPECT_FALSE(std::filesystem::exists(dir / "knowledge" / "16"));
  std::filesystem::remove_all(dir);
}
