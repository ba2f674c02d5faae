#include <algorithm>
#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "oracles.hpp"
#include "support.hpp"
#include "symx/embedding.hpp"
#include "symx/error.hpp"
#include "symx/random.hpp"

namespace symx {
namespace {

using nlohmann::json;
using test::make_inventory;

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

TEST(Cosine, SpecCases) {
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({-1, 0})), 0.0);
}

TEST(Cosine, RejectsBadVectors) {
  EXPECT_THROW(vec({0, 0}), ValidationError);
  EXPECT_THROW(vec({1}), ValidationError);
  EXPECT_THROW(vec({1, std::numeric_limits<double>::quiet_NaN()}), ValidationError);
  EXPECT_THROW(vec({1, std::numeric_limits<double>::infinity()}), ValidationError);
  EXPECT_THROW((void)cosine_similarity(vec({1, 0}), vec({1, 0, 0})), ValidationError);
}

TEST(Cosine, Properties) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 2 + rng.below(40);
    std::vector<double> a(d), b(d);
    for (std::size_t i = 0; i < d; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    const auto u = vec(a);
    const auto v = vec(b);
    const double s = cosine_similarity(u, v);
    EXPECT_EQ(s, cosine_similarity(v, u));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_NEAR(cosine_similarity(u, u), 1.0, 1e-9);
    const double alpha = 0.01 + 100.0 * rng.uniform01();
    std::vector<double> scaled(a);
    for (auto& x : scaled) x *= alpha;
    EXPECT_NEAR(cosine_similarity(vec(scaled), v), s, 1e-9);
    EXPECT_NEAR(s, oracle::dot_cosine(a, b), 1e-12);
  }
}

json embedding_doc(const std::vector<std::pair<std::string, std::vector<double>>>& vectors, int dim) {
  json doc = {{"backend_tag", "unit-test"}, {"dimension", dim}, {"vectors", json::object()}};
  for (const auto& [id, v] : vectors) doc["vectors"][id] = v;
  return doc;
}

TEST(LoadEmbeddings, ValidSet) {
  const Inventory inv = make_inventory("A", 3);
  const auto set = parse_embeddings(
      embedding_doc({{"q1", {1, 0, 0, 0}}, {"q2", {0, 1, 0, 0}}, {"q3", {0, 0, 1, 1}}}, 4), inv);
  EXPECT_EQ(set.size(), 3u);
  EXPECT_EQ(set.dimension(), 4u);
  EXPECT_EQ(set.backend_tag(), "unit-test");
  EXPECT_EQ(set.item_ids(), inv.item_ids());
  const EmbeddingSet reparsed = parse_embeddings(serialize_embeddings(set), inv);
  const auto back = reparsed.at("q3").values();
  const auto orig = set.at("q3").values();
  EXPECT_TRUE(std::equal(back.begin(), back.end(), orig.begin(), orig.end()));
}

TEST(LoadEmbeddings, MissingItemNamed) {
  const Inventory inv = make_inventory("A", 3);
  try {
    (void)parse_embeddings(embedding_doc({{"q1", {1, 0}}, {"q3", {0, 1}}}, 2), inv);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("q2"), std::string::npos);
  }
}

TEST(LoadEmbeddings, NonFiniteAndDimension) {
  const Inventory inv = make_inventory("A", 2);
  json doc = embedding_doc({{"q1", {1, 0}}, {"q2", {0, 1}}}, 2);
  doc["vectors"]["q2"][1] = nullptr;  // how a NaN reaches JSON
  EXPECT_THROW((void)parse_embeddings(doc, inv), ValidationError);
  EXPECT_THROW((void)parse_embeddings(embedding_doc({{"q1", {1, 0}}, {"q2", {0, 1, 2}}}, 2), inv), ValidationError);
}

TEST(LoadEmbeddings, UnequalDimensionsWithoutHeader) {
  const Inventory inv = make_inventory("A", 2);
  json doc = embedding_doc({{"q1", {1, 0}}, {"q2", {0, 1, 2}}}, 2);
  doc.erase("dimension");
  EXPECT_THROW((void)parse_embeddings(doc, inv), ValidationError);
}

EmbeddingSet make_set(const Inventory& inv, const std::vector<std::vector<double>>& vectors, std::string tag = "t") {
  std::map<std::string, EmbeddingVector> m;
  for (std::size_t i = 0; i < vectors.size(); ++i) m.emplace(inv.items()[i].item_id, vec(vectors[i]));
  return EmbeddingSet(inv, std::move(m), std::move(tag));
}

TEST(SimilarityMatrix, SelfDiagonalIsOne) {
  const Inventory a = make_inventory("A", 3);
  const auto set = make_set(a, {{1, 0, 0}, {0, 1, 0}, {0.6, 0.8, 0}});
  const auto m = similarity_matrix(set, set);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m(i, i), 1.0, 1e-12);
}

TEST(SimilarityMatrix, OrthogonalCrossPairs) {
  const Inventory a = make_inventory("A", 2);
  const Inventory b = make_inventory("B", 2, "b");
  const auto m = similarity_matrix(make_set(a, {{1, 0}, {0, 1}}), make_set(b, {{2, 0}, {0, 3}}));
  EXPECT_DOUBLE_EQ(m(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(m(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
}

TEST(SimilarityMatrix, EntrywiseOracleAndThreads) {
  const Inventory a = make_inventory("A", 3);
  const Inventory b = make_inventory("B", 2, "b");
  const std::vector<std::vector<double>> va{{1, 2, 3}, {-1, 0.5, 2}, {0.3, -0.2, 0.1}};
  const std::vector<std::vector<double>> vb{{0.5, 0.5, -1}, {3, 1, 0}};
  const auto ea = make_set(a, va, "x");
  const auto eb = make_set(b, vb, "y");
  const auto m = similarity_matrix(ea, eb);
  const auto m4 = similarity_matrix(ea, eb, 4);
  ASSERT_EQ(m.rows(), 3u);
  ASSERT_EQ(m.cols(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(m(i, j), oracle::dot_cosine(va[i], vb[j]), 1e-12);
      EXPECT_EQ(m(i, j), m4(i, j));
    }
  }
  EXPECT_EQ(m.backend_tag(), "x|y");
}

TEST(SimilarityMatrix, RejectsOutOfRangeValues) {
  EXPECT_THROW(SimilarityMatrix("A", "B", {"a"}, {"b"}, {1.5}), ValidationError);
  EXPECT_THROW(SimilarityMatrix("A", "B", {"a"}, {"b", "c"}, {0.5}), ValidationError);
}

TEST(ClosestPairs, DuplicatedTextFirst) {
  // Column maxima: b1 <- a2 (0.995), b2 <- a1 (0.4).
  const SimilarityMatrix m("A", "B", {"a1", "a2"}, {"b1", "b2"}, {0.3, 0.4, 0.995, 0.1});
  const auto pairs = closest_pairs(m);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].item, "b1");
  EXPECT_EQ(pairs[0].best_item, "a2");
  EXPECT_GE(pairs[0].similarity, 0.99);
  EXPECT_EQ(pairs[1].best_item, "a1");
}

TEST(ClosestPairs, AllZeroKeepsOrder) {
  const SimilarityMatrix m("A", "B", {"a1", "a2"}, {"b1", "b2", "b3"}, std::vector<double>(6, 0.0));
  const auto pairs = closest_pairs(m);
  ASSERT_EQ(pairs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(pairs[i].item, "b" + std::to_string(i + 1));
    EXPECT_EQ(pairs[i].best_item, "a1");
    EXPECT_EQ(pairs[i].similarity, 0.0);
  }
}

TEST(ClosestPairs, ReverseDirectionTakesRowMaxima) {
  const SimilarityMatrix m("A", "B", {"a1", "a2"}, {"b1", "b2"}, {0.3, 0.4, 0.995, 0.1});
  const auto pairs = closest_pairs(m, Direction::kTargetToSource);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].item, "a2");
  EXPECT_EQ(pairs[0].best_item, "b1");
  EXPECT_EQ(pairs[1].item, "a1");
  EXPECT_EQ(pairs[1].best_item, "b2");
}

TEST(PairReport, SortedRowsAndTags) {
  const SimilarityMatrix m1("A", "B", {"a1", "a2"}, {"b1", "b2"}, {0.2, 0.9, 0.5, 0.1});
  const SimilarityMatrix m2("A", "C", {"a1", "a2"}, {"c1"}, {0.3, 0.7});
  const SimilarityMatrix one[] = {m1};
  const auto rows = pair_report(one);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(rows[i - 1].similarity, rows[i].similarity);
  EXPECT_EQ(rows[0].source_item, "a1");
  EXPECT_EQ(rows[0].target_item, "b2");

  const SimilarityMatrix both[] = {m1, m2};
  const auto tagged = pair_report(both);
  ASSERT_EQ(tagged.size(), 6u);
  std::multiset<std::tuple<std::string, std::string, std::string, double>> got, want;
  for (const auto& r : tagged) got.emplace(r.pair_tag, r.source_item, r.target_item, r.similarity);
  for (const auto* m : {&m1, &m2}) {
    for (std::size_t i = 0; i < m->rows(); ++i) {
      for (std::size_t j = 0; j < m->cols(); ++j) {
        want.emplace(m->source_inventory_id() + "->" + m->target_inventory_id(), m->source_items()[i],
                     m->target_items()[j], (*m)(i, j));
      }
    }
  }
  EXPECT_EQ(got, want);
  EXPECT_EQ(tagged[0].pair_tag, "A->B");
  EXPECT_EQ(tagged[4].pair_tag, "A->C");

  std::ostringstream csv;
  write_pair_report(csv, tagged);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "pair_tag,source_item,target_item,similarity");
  EXPECT_NE(csv.str().find("A->B,a1,b2,0.9000\n"), std::string::npos);
}

/// Local stand-in for the embedding service. Each text gets a vector whose
/// dimension depends on the request number, so drift can be provoked.
class MockEmbedService {
 public:
  MockEmbedService() {
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      const int call = ++calls_;
      const json body = json::parse(req.body);
      json vectors = json::array();
      std::size_t n = body["texts"].size();
      if (drop_last_ && n > 0) --n;
      const std::size_t dim = call > 1 && drift_ ? 512 : 384;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(dim, 0.0);
        const auto& text = body["texts"][i].get_ref<const std::string&>();
        v[std::hash<std::string>{}(text) % dim] = 1.0;
        v[(i + 1) % dim] += 0.5;
        vectors.push_back(v);
      }
      res.set_content(json{{"model", "mock-minilm"}, {"vectors", vectors}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEmbedService() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int calls() const { return calls_; }
  bool drop_last_ = false;
  bool drift_ = false;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
};

TEST(FetchEmbeddings, EighteenTextsOneRoundTrip) {
  MockEmbedService service;
  const Inventory inv = make_inventory("BSI", 18);
  const auto set = fetch_embeddings(service.url(), inv);
  EXPECT_EQ(set.size(), 18u);
  EXPECT_EQ(set.dimension(), 384u);
  EXPECT_EQ(set.backend_tag(), "mock-minilm");
  EXPECT_EQ(service.calls(), 1);
}

TEST(FetchEmbeddings, PartialResponse) {
  MockEmbedService service;
  service.drop_last_ = true;
  try {
    (void)fetch_embeddings(service.url(), make_inventory("BSI", 18));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("partial"), std::string::npos);
  }
}

TEST(FetchEmbeddings, DimensionDriftAcrossBatches) {
  MockEmbedService service;
  service.drift_ = true;
  EmbeddingServiceOptions options;
  options.batch_size = 10;
  EXPECT_THROW((void)fetch_embeddings(service.url(), make_inventory("BSI", 18), options), TransportError);
  EXPECT_EQ(service.calls(), 2);
}

TEST(FetchEmbeddings, ConcurrentCallsAgree) {
  MockEmbedService service;
  const Inventory inv = make_inventory("BSI", 18);
  std::vector<std::vector<double>> first(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] { const EmbeddingSet fetched = fetch_embeddings(service.url(), inv);
      const auto v = fetched.at("q5").values();
      first[t].assign(v.begin(), v.end());
    });
  }
  for (auto& t : threads) t.join();
  for (int t = 1; t < 4; ++t) EXPECT_EQ(first[t], first[0]);
}

TEST(FetchEmbeddings, TransportFailures) {
  EXPECT_THROW((void)fetch_embeddings("http://127.0.0.1:1", make_inventory("A", 2)), TransportError);
  EXPECT_THROW((void)fetch_embeddings("ftp://example", make_inventory("A", 2)), TransportError);
  EXPECT_THROW((void)fetch_embeddings("not a url", make_inventory("A", 2)), TransportError);
}

}  // namespace
}  // namespace symx
