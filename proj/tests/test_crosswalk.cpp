#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "symx/crosswalk.hpp"
#include "symx/error.hpp"
#include "symx/random.hpp"

namespace symx {
namespace {

using nlohmann::json;
using test::add_rows;
using test::make_inventory;

SimilarityMatrix matrix(const Inventory& a, const Inventory& b, std::vector<double> values) {
  return SimilarityMatrix(a.id(), b.id(), a.item_ids(), b.item_ids(), std::move(values), "test");
}

Thresholds cuts(double c1, double c2, double c3, double c4) { return Thresholds({c1, c2, c3, c4}); }

TEST(LinkMap, ArgmaxPerColumn) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 2, "b");
  // Column b1 = (0.2, 0.9, 0.4); column b2 = (0.5, 0.5, 0.1).
  const auto map = build_link_map(matrix(a, b, {0.2, 0.5, 0.9, 0.5, 0.4, 0.1}));
  EXPECT_EQ(map.links.at("b1"), (Link{"a2", 0.9}));
  EXPECT_EQ(map.links.at("b2"), (Link{"a1", 0.5}));
  EXPECT_EQ(map.tie_policy, kTiePolicyLowestIndex);
  EXPECT_EQ(map.source_inventory_id, "A");
  EXPECT_EQ(map.target_inventory_id, "B");
}

TEST(LinkMap, DuplicatedTextLinksToDuplicate) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 2, "b");
  const auto map = build_link_map(matrix(a, b, {0.1, 0.3, 0.2, 0.995, 0.6, 0.2}));
  EXPECT_EQ(map.links.at("b2").source_item, "a2");
  EXPECT_GE(map.links.at("b2").similarity, 0.99);
}

TEST(LinkMap, ArgmaxInvariantUnderMonotoneTransform) {
  Rng rng(5);
  const auto a = make_inventory("A", 7, "a");
  const auto b = make_inventory("B", 5, "b");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(35);
    for (auto& x : v) x = std::round(rng.uniform01() * 10) / 10;  // coarse values force ties
    std::vector<double> f(v);
    for (auto& x : f) x = std::pow(x, 3.0) * 0.5 + 0.1 * x;
    const auto m1 = build_link_map(matrix(a, b, v));
    const auto m2 = build_link_map(matrix(a, b, f));
    for (const auto& [item, link] : m1.links) EXPECT_EQ(link.source_item, m2.links.at(item).source_item);
  }
}

Cohort single_item_cohort(const Inventory& inv, const std::vector<int>& first_item_scores) {
  Cohort c;
  std::vector<std::vector<int>> rows;
  for (int s : first_item_scores) rows.push_back(std::vector<int>(inv.size(), s));
  add_rows(c, inv, rows);
  return c;
}

TEST(Calibrate, CountingOracle) {
  const auto inv = make_inventory("A", 2);
  const auto c = calibrate(single_item_cohort(inv, {0, 0, 1, 2, 3}), inv);
  const auto& t = c.at("q1").thresholds.cuts();
  EXPECT_DOUBLE_EQ(t[0], 0.4);
  EXPECT_DOUBLE_EQ(t[1], 0.6);
  EXPECT_DOUBLE_EQ(t[2], 0.8);
  EXPECT_DOUBLE_EQ(t[3], 1.0);
  EXPECT_EQ(c.at("q1").sample_size, 5u);
}

TEST(Calibrate, DegenerateAndUniform) {
  const auto inv = make_inventory("A", 2);
  EXPECT_EQ(calibrate(single_item_cohort(inv, {0, 0, 0}), inv).at("q2").thresholds, cuts(1, 1, 1, 1));
  const auto& u = calibrate(single_item_cohort(inv, {0, 1, 2, 3, 4}), inv).at("q1").thresholds.cuts();
  EXPECT_DOUBLE_EQ(u[0], 0.2);
  EXPECT_DOUBLE_EQ(u[1], 0.4);
  EXPECT_DOUBLE_EQ(u[2], 0.6);
  EXPECT_DOUBLE_EQ(u[3], 0.8);
}

TEST(Calibrate, EmptyCohortFails) {
  const auto inv = make_inventory("A", 2);
  EXPECT_THROW((void)calibrate(Cohort{}, inv), NumericError);
}

TEST(Calibrate, AddOneSmoothing) {
  const auto inv = make_inventory("A", 2);
  const auto& t = calibrate(single_item_cohort(inv, {0, 0, 0, 0, 0}), inv, {true}).at("q1").thresholds.cuts();
  EXPECT_DOUBLE_EQ(t[0], 6.0 / 10.0);
  EXPECT_DOUBLE_EQ(t[3], 9.0 / 10.0);
}

TEST(Calibrate, MonotoneAndMatchesCounts) {
  Rng rng(3);
  const auto inv = make_inventory("A", 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<int>> rows(1 + rng.below(60), std::vector<int>(4));
    for (auto& r : rows) {
      for (auto& s : r) s = static_cast<int>(rng.below(5));
    }
    Cohort c;
    add_rows(c, inv, rows);
    const auto cal = calibrate(c, inv);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto& t = cal.at(inv.items()[j].item_id).thresholds.cuts();
      double prev = 0.0;
      for (int k = 1; k <= 4; ++k) {
        std::size_t count = 0;
        for (const auto& r : rows) count += r[j] <= k - 1;
        EXPECT_DOUBLE_EQ(t[k - 1], static_cast<double>(count) / rows.size());
        EXPECT_GE(t[k - 1], prev);
        prev = t[k - 1];
      }
      std::size_t fours = 0;
      for (const auto& r : rows) fours += r[j] == 4;
      EXPECT_NEAR(t[3], 1.0 - static_cast<double>(fours) / rows.size(), 1e-15);
    }
  }
}

TEST(Thresholds, Validation) {
  EXPECT_THROW(cuts(0.5, 0.4, 0.6, 0.7), ValidationError);
  EXPECT_THROW(cuts(-0.1, 0.4, 0.6, 0.7), ValidationError);
  EXPECT_THROW(cuts(0.1, 0.4, 0.6, 1.2), ValidationError);
  const auto t = cuts(0.2, 0.4, 0.6, 0.8);
  EXPECT_EQ(t.lower(0), 0.0);
  EXPECT_EQ(t.upper(4), 1.0);
  EXPECT_EQ(t.locate(0.4), 2);
  EXPECT_EQ(t.locate(1.0), 4);
  EXPECT_EQ(t.locate(0.0), 0);
}

TEST(ConvertScore, IdentityThresholds) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::array<double, 4> c{};
    for (auto& x : c) x = std::round(rng.uniform01() * 20) / 20;
    std::sort(c.begin(), c.end());
    const Thresholds t(c);
    for (int s = 0; s <= 4; ++s) EXPECT_EQ(convert_score_deterministic(s, t, t), s);
  }
}

TEST(ConvertScore, OverlapExample) {
  const auto src = cuts(0.5, 0.75, 0.9, 0.95);
  const auto dst = cuts(0.6, 0.8, 0.9, 0.95);
  const auto dist = conversion_distribution(1, src, dst);
  EXPECT_NEAR(dist[0], 0.4, 1e-12);
  EXPECT_NEAR(dist[1], 0.6, 1e-12);
  EXPECT_EQ(dist[2] + dist[3] + dist[4], 0.0);
  EXPECT_EQ(convert_score_deterministic(1, src, dst), 1);
}

TEST(ConvertScore, ZeroWidthPointLocation) {
  const auto src = cuts(0.3, 0.7, 0.7, 0.9);
  const auto dst = cuts(0.6, 0.8, 0.9, 0.95);
  EXPECT_EQ(convert_score_deterministic(2, src, dst), 1);
  const auto dist = conversion_distribution(2, src, dst);
  EXPECT_EQ(dist[1], 1.0);
}

TEST(ConvertScore, PointAtOneMapsToFour) {
  const auto src = cuts(0.2, 0.4, 0.6, 1.0);
  EXPECT_EQ(convert_score_deterministic(4, src, cuts(0.1, 0.2, 0.3, 0.5)), 4);
  // Target also never observes a 4: the point still goes to 4.
  EXPECT_EQ(convert_score_deterministic(4, src, cuts(0.1, 0.2, 0.3, 1.0)), 4);
}

TEST(ConvertScore, StraddlingBinHasTwoOutcomes) {
  // A source score 2 whose bin straddles the target c3 edge maps to 2 or 3.
  const auto src = cuts(0.2, 0.4, 0.7, 0.9);
  const auto dst = cuts(0.1, 0.3, 0.6, 0.9);
  const auto dist = conversion_distribution(2, src, dst);
  EXPECT_NEAR(dist[2], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(dist[3], 1.0 / 3.0, 1e-12);
  Rng rng(9);
  std::set<int> seen;
  for (int i = 0; i < 200; ++i) seen.insert(convert_score_stochastic(2, src, dst, rng));
  EXPECT_EQ(seen, (std::set<int>{2, 3}));
}

TEST(ConvertScore, TiesGoToLowerScore) {
  // Bin [0.2,0.6) overlaps target bins 0 and 1 by 0.2 each.
  EXPECT_EQ(convert_score_deterministic(1, cuts(0.2, 0.6, 0.8, 0.9), cuts(0.4, 0.8, 0.9, 0.95)), 0);
}

TEST(ConvertScore, DistributionValidity) {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    std::array<double, 4> a{}, b{};
    for (auto& x : a) x = rng.uniform01();
    for (auto& x : b) x = rng.uniform01();
    if (trial % 3 == 0) a[2] = a[1];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const Thresholds src(a), dst(b);
    for (int s = 0; s <= 4; ++s) {
      const auto dist = conversion_distribution(s, src, dst);
      EXPECT_NEAR(std::accumulate(dist.begin(), dist.end(), 0.0), 1.0, 1e-9);
      for (int t = 0; t <= 4; ++t) {
        EXPECT_GE(dist[t], 0.0);
        if (dist[t] > 0 && src.width(s) > 0) {
          const double ov = std::min(src.upper(s), dst.upper(t)) - std::max(src.lower(s), dst.lower(t));
          EXPECT_GT(ov, 0.0);
        }
      }
    }
  }
}

TEST(ConvertScore, GridOracleSample) {
  Rng rng(23);
  for (int trial = 0; trial < 5000; ++trial) {
    oracle::GridCuts gs{}, gd{};
    for (auto& x : gs.c) x = static_cast<int>(rng.below(21));
    for (auto& x : gd.c) x = static_cast<int>(rng.below(21));
    std::sort(gs.c.begin(), gs.c.end());
    std::sort(gd.c.begin(), gd.c.end());
    const Thresholds src({gs.c[0] * 0.05, gs.c[1] * 0.05, gs.c[2] * 0.05, gs.c[3] * 0.05});
    const Thresholds dst({gd.c[0] * 0.05, gd.c[1] * 0.05, gd.c[2] * 0.05, gd.c[3] * 0.05});
    for (int s = 0; s <= 4; ++s) ASSERT_EQ(convert_score_deterministic(s, src, dst), oracle::convert(s, gs, gd, 20));
  }
}

TEST(ConvertScore, RejectsBadScore) {
  const auto t = cuts(0.2, 0.4, 0.6, 0.8);
  EXPECT_THROW((void)convert_score_deterministic(5, t, t), ValidationError);
  EXPECT_THROW((void)conversion_distribution(-1, t, t), ValidationError);
}

LinkMap links_with(const Inventory& a, const Inventory& b, const std::vector<std::pair<std::string, double>>& l) {
  LinkMap map{a.id(), b.id(), {}};
  for (std::size_t i = 0; i < l.size(); ++i) map.links[b.items()[i].item_id] = {l[i].first, l[i].second};
  return map;
}

TEST(Fallbacks, NothingWeak) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 3, "b");
  Cohort c;
  add_rows(c, b, {{0, 1, 2}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {4, 4, 4}});
  EXPECT_TRUE(fit_fallbacks(c, b, links_with(a, b, {{"a1", 0.9}, {"a2", 0.7}, {"a3", 0.61}}), 0.6).empty());
}

TEST(Fallbacks, ExactCollinearity) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 3, "b");
  Cohort c;
  // b3 == b1 exactly; b2 varies independently.
  add_rows(c, b, {{0, 3, 0}, {1, 0, 1}, {2, 4, 2}, {3, 1, 3}, {4, 2, 4}, {2, 2, 2}, {1, 4, 1}});
  const auto fb = fit_fallbacks(c, b, links_with(a, b, {{"a1", 0.9}, {"a2", 0.8}, {"a3", 0.3}}), 0.6);
  ASSERT_EQ(fb.size(), 1u);
  const auto& m = fb.at("b3");
  EXPECT_EQ(m.regressors, (std::vector<std::string>{"b1", "b2"}));
  EXPECT_NEAR(m.coefficients[0], 1.0, 1e-9);
  EXPECT_NEAR(m.coefficients[1], 0.0, 1e-9);
  EXPECT_NEAR(m.intercept, 0.0, 1e-9);
  EXPECT_FALSE(m.intercept_only);
  EXPECT_EQ(m.training_size, 7u);
}

TEST(Fallbacks, ConstantTargetIsInterceptOnly) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 3, "b");
  Cohort c;
  add_rows(c, b, {{0, 3, 2}, {1, 0, 2}, {2, 4, 2}, {3, 1, 2}, {4, 2, 2}});
  const auto fb = fit_fallbacks(c, b, links_with(a, b, {{"a1", 0.9}, {"a2", 0.8}, {"a3", 0.3}}), 0.6);
  const auto& m = fb.at("b3");
  EXPECT_NEAR(m.intercept, 2.0, 1e-9);
  for (double coef : m.coefficients) EXPECT_NEAR(coef, 0.0, 1e-9);
}

TEST(Fallbacks, SingularDesignFallsBackToMean) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 3, "b");
  Cohort c;
  // b1 and b2 are identical, so the design is rank deficient.
  add_rows(c, b, {{0, 0, 1}, {1, 1, 1}, {2, 2, 4}, {3, 3, 3}, {4, 4, 1}});
  const auto& m = fit_fallbacks(c, b, links_with(a, b, {{"a1", 0.9}, {"a2", 0.8}, {"a3", 0.3}}), 0.6).at("b3");
  EXPECT_TRUE(m.intercept_only);
  EXPECT_NEAR(m.intercept, 2.0, 1e-12);
}

TEST(Fallbacks, FewStrongUsesAllOtherItems) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 3, "b");
  Cohort c;
  add_rows(c, b, {{0, 3, 0}, {1, 0, 1}, {2, 4, 2}, {3, 1, 3}, {4, 2, 4}});
  const auto fb = fit_fallbacks(c, b, links_with(a, b, {{"a1", 0.9}, {"a2", 0.2}, {"a3", 0.3}}), 0.6);
  EXPECT_EQ(fb.at("b2").regressors, (std::vector<std::string>{"b1", "b3"}));
  EXPECT_EQ(fb.at("b3").regressors, (std::vector<std::string>{"b1", "b2"}));
}

TEST(Fallbacks, TooFewRecords) {
  const auto a = make_inventory("A", 3, "a");
  const auto b = make_inventory("B", 3, "b");
  Cohort c;
  add_rows(c, b, {{0, 3, 0}, {1, 0, 1}, {2, 4, 2}, {3, 1, 3}});
  EXPECT_THROW((void)fit_fallbacks(c, b, links_with(a, b, {{"a1", 0.9}, {"a2", 0.8}, {"a3", 0.3}}), 0.6),
               NumericError);
}

/// Two-item source, three-item target; b3 is weak and equals b1 in training.
struct SmallModel {
  Inventory a = make_inventory("A", 2, "a");
  Inventory b = make_inventory("B", 3, "b");
  Cohort cohort;
  CrosswalkModel model;

  SmallModel() {
    add_rows(cohort, a, {{0, 1}, {1, 1}, {2, 3}, {3, 0}, {4, 2}, {1, 4}, {0, 0}, {2, 2}});
    add_rows(cohort, b, {{0, 2, 0}, {1, 0, 1}, {1, 3, 1}, {3, 1, 3}, {4, 4, 4}, {2, 2, 2}, {0, 1, 0}, {2, 3, 2}});
    const auto m = matrix(a, b, {0.9, 0.2, 0.35, 0.1, 0.8, 0.3});
    model = build_model({a, b, m, cohort, cohort, 0.6, {}});
  }
};

TEST(ConvertParticipant, MatchesPerItemOracle) {
  SmallModel f;
  ASSERT_TRUE(f.model.is_linked("b1"));
  ASSERT_TRUE(f.model.is_linked("b2"));
  ASSERT_FALSE(f.model.is_linked("b3"));
  for (int s1 = 0; s1 <= 4; ++s1) {
    for (int s2 = 0; s2 <= 4; ++s2) {
      const ResponseMap r{{"a1", s1}, {"a2", s2}};
      const auto out = convert_participant(f.model, r, ConversionMode::kDeterministic);
      const auto& sc = f.model.source_calibration;
      const auto& tc = f.model.target_calibration;
      const int b1 = convert_score_deterministic(s1, sc.at("a1").thresholds, tc.at("b1").thresholds);
      const int b2 = convert_score_deterministic(s2, sc.at("a2").thresholds, tc.at("b2").thresholds);
      EXPECT_EQ(out.estimates.at("b1"), b1);
      EXPECT_EQ(out.estimates.at("b2"), b2);
      // Coefficient-1 fallback on b1: the weak estimate repeats it.
      EXPECT_EQ(out.estimates.at("b3"), b1);
      EXPECT_EQ(out.method.at("b3"), "fallback");
      EXPECT_EQ(out.method.at("b1"), "linked");
    }
  }
}

TEST(ConvertParticipant, IncompleteResponsesNamed) {
  SmallModel f;
  try {
    (void)convert_participant(f.model, {{"a1", 2}}, ConversionMode::kDeterministic);
    FAIL();
  } catch (const ResponseError& e) {
    EXPECT_EQ(e.items(), (std::vector<std::string>{"a2"}));
  }
  try {
    (void)convert_participant(f.model, {{"a1", 2}, {"a2", 9}, {"zz", 1}}, ConversionMode::kDeterministic);
    FAIL();
  } catch (const ResponseError& e) {
    EXPECT_EQ(e.items(), (std::vector<std::string>{"a2", "zz"}));
  }
  EXPECT_THROW((void)convert_participant(f.model, {{"a1", 2}, {"a2", 1}}, ConversionMode::kStochastic),
               ValidationError);
}

TEST(ConvertParticipant, StochasticIsSeedDeterministic) {
  SmallModel f;
  const ResponseMap r{{"a1", 2}, {"a2", 1}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = convert_participant_seeded(f.model, r, ConversionMode::kStochastic, seed);
    const auto y = convert_participant_seeded(f.model, r, ConversionMode::kStochastic, seed);
    EXPECT_EQ(x.estimates, y.estimates);
  }
}

TEST(ConvertParticipant, StochasticDrawOrderIsSortedItems) {
  SmallModel f;
  const ResponseMap r{{"a1", 2}, {"a2", 1}};
  Rng rng(77);
  const auto got = convert_participant(f.model, r, ConversionMode::kStochastic, &rng);
  Rng replay(77);
  const auto& sc = f.model.source_calibration;
  const auto& tc = f.model.target_calibration;
  const int b1 = convert_score_stochastic(2, sc.at("a1").thresholds, tc.at("b1").thresholds, replay);
  const int b2 = convert_score_stochastic(1, sc.at("a2").thresholds, tc.at("b2").thresholds, replay);
  EXPECT_EQ(got.estimates.at("b1"), b1);
  EXPECT_EQ(got.estimates.at("b2"), b2);
}

TEST(ConvertParticipant, IdentityModel) {
  const auto a = make_inventory("A", 4, "a");
  Cohort c;
  add_rows(c, a, {{0, 1, 2, 3}, {4, 4, 0, 1}, {2, 2, 2, 2}, {3, 0, 1, 4}, {1, 3, 3, 0}});
  const auto m = matrix(a, a, {1, 0.1, 0.2, 0.3, 0.1, 1, 0.2, 0.1, 0.2, 0.2, 1, 0.1, 0.3, 0.1, 0.1, 1});
  const auto model = build_model({a, a, m, c, c, 0.6, {}});
  EXPECT_TRUE(model.fallbacks.empty());
  for (int v = 0; v < 625; ++v) {
    const ResponseMap r{{"a1", v % 5}, {"a2", v / 5 % 5}, {"a3", v / 25 % 5}, {"a4", v / 125 % 5}};
    EXPECT_EQ(convert_participant(model, r, ConversionMode::kDeterministic).estimates.at("a3"), r.at("a3"));
    const auto out = convert_participant(model, r, ConversionMode::kDeterministic).estimates;
    for (const auto& [item, s] : r) EXPECT_EQ(out.at(item), s);
  }
}

TEST(ModelArtifact, RoundTrip) {
  SmallModel f;
  const json doc = save_model(f.model);
  EXPECT_EQ(load_model(doc), f.model);
  EXPECT_EQ(dump_model(load_model(json::parse(dump_model(f.model)))), dump_model(f.model));
  EXPECT_EQ(doc["version"], "1.0");
  EXPECT_EQ(doc["backend_tag"], "test");
  EXPECT_TRUE(doc["calibrations"].contains("A"));
  EXPECT_TRUE(doc["calibrations"]["A"]["a1"].contains("thresholds"));
  EXPECT_TRUE(doc["fallbacks"].contains("b3"));
}

TEST(ModelArtifact, MissingTauIsSchemaError) {
  SmallModel f;
  json doc = save_model(f.model);
  doc.erase("tau");
  EXPECT_THROW((void)load_model(doc), ParseError);
}

TEST(ModelArtifact, NewerMajorVersionRejected) {
  SmallModel f;
  json doc = save_model(f.model);
  doc["version"] = "2.0";
  EXPECT_THROW((void)load_model(doc), VersionError);
  doc["version"] = "1.7";
  EXPECT_NO_THROW((void)load_model(doc));
  doc["version"] = "x";
  EXPECT_THROW((void)load_model(doc), ParseError);
}

TEST(ModelArtifact, InvariantsCheckedOnLoad) {
  SmallModel f;
  json doc = save_model(f.model);
  doc["fallbacks"].erase("b3");
  EXPECT_THROW((void)load_model(doc), ValidationError);
  doc = save_model(f.model);
  doc["tau"] = 1.5;
  EXPECT_THROW((void)load_model(doc), ValidationError);
}

TEST(ModelArtifact, TwelveSignificantDigits) {
  SmallModel f;
  const std::string text = dump_model(f.model);
  const json doc = json::parse(text);
  for (const auto& [item, fb] : doc["fallbacks"].items()) {
    for (const auto& coef : fb["coefficients"]) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.12g", coef.get<double>());
      EXPECT_EQ(std::stod(buf), coef.get<double>());
    }
  }
}

TEST(Mode, Parse) {
  EXPECT_EQ(parse_mode("det"), ConversionMode::kDeterministic);
  EXPECT_EQ(parse_mode("deterministic"), ConversionMode::kDeterministic);
  EXPECT_EQ(parse_mode("stoch"), ConversionMode::kStochastic);
  EXPECT_EQ(parse_mode("stochastic"), ConversionMode::kStochastic);
  EXPECT_THROW((void)parse_mode("random"), ValidationError);
}

}  // namespace
}  // namespace symx
