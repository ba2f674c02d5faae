#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/crosswalk.hpp"
#include "symx/inventory.hpp"
#include "symx/linear_model.hpp"

namespace symx {

inline constexpr double kRandomGuessEma = 100.0 / kLevels;
inline constexpr double kAgeCutoff = 65.0;

/// Participant-level train/test partition.
struct SplitPlan {
  std::uint64_t seed = 0;
  double ratio = 0.5;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Sorts the ids, shuffles them with the seeded generator and takes
/// floor(n * ratio) for training; the remainder is the test set.
SplitPlan split(std::span<const std::string> participant_ids, double ratio, std::uint64_t seed);
SplitPlan split(const Cohort& cohort, double ratio, std::uint64_t seed);

/// Records whose id is in `ids`, in cohort order.
Cohort subset(const Cohort& cohort, std::span<const std::string> ids);

/// Records holding a complete administration of every listed inventory.
std::vector<std::string> complete_participants(const Cohort& cohort,
                                               std::span<const Inventory* const> inventories);

struct ScorePair {
  int predicted = 0;
  int actual = 0;
};

/// Percentage of exact matches.
double ema(std::span<const ScorePair> cells);
double mae(std::span<const ScorePair> cells);
/// Percentage agreement after binarising both sides as score > t, t in 0..3.
double binary_accuracy(std::span<const ScorePair> cells, int t);

struct PredictionCell {
  std::string participant_id;
  std::string item_id;
  int predicted = 0;
  int actual = 0;
};

struct PredictionSet {
  std::string source_inventory_id;
  std::string target_inventory_id;
  std::string model_tag;
  std::vector<PredictionCell> cells;

  std::vector<ScorePair> pairs() const;
};

struct MetricRow {
  std::string key;  // item id or participant id
  double ema = 0.0;
  double mae = 0.0;
  std::array<double, 4> binary{};
  std::size_t n = 0;
};

struct MetricReport {
  std::string model_tag;
  std::string source_inventory_id;
  std::string target_inventory_id;
  std::size_t n = 0;
  double ema = 0.0;
  double mae = 0.0;
  std::array<double, 4> binary{};
  double random_guess_ema = kRandomGuessEma;
  std::vector<MetricRow> per_item;         // first-seen item order
  std::vector<MetricRow> per_participant;  // first-seen participant order
};

MetricReport score_predictions(const PredictionSet& predictions);
nlohmann::json to_json(const MetricReport& report);
/// Rows `item_id,ema,mae,acc_t0,acc_t1,acc_t2,acc_t3,n`.
void write_item_metrics_csv(std::ostream& out, const MetricReport& report);
/// Same columns keyed by participant_id.
void write_participant_metrics_csv(std::ostream& out, const MetricReport& report);
/// Rows `participant_id,target_inventory_id,item_id,predicted_score`.
void write_predictions_csv(std::ostream& out, const PredictionSet& predictions);

struct CrosswalkEvaluationInputs {
  const CrosswalkModel& model;
  const Cohort& cohort;
  std::span<const std::string> test_ids;
  // Everyone whose scores informed calibration, linking or fallback fits.
  std::span<const std::string> training_ids;
  ConversionMode mode = ConversionMode::kDeterministic;
  std::uint64_t seed = 0;
};

struct Evaluation {
  PredictionSet predictions;
  MetricReport report;
};

/// Converts each test participant's source responses and compares against
/// their own target responses. Test participants are visited in ascending
/// id order and share one generator in stochastic mode. Throws
/// ValidationError on any train/test overlap or missing dual administration.
Evaluation evaluate_crosswalk(const CrosswalkEvaluationInputs& inputs);

/// Throws ValidationError naming the first participant present in both.
void require_disjoint(std::span<const std::string> train, std::span<const std::string> test);

struct CurvePoint {
  std::size_t regressors = 0;
  double mean_ema = 0.0;
  double sd_ema = 0.0;
  std::size_t fits = 0;
};

struct WithinCurve {
  std::string inventory_id;
  std::vector<CurvePoint> points;  // k = 1 .. |items| - 1
  double all_items_ema = 0.0;      // every other item as regressor
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

inline constexpr std::size_t kMinWithinTraining = 20;

/// Within-inventory prediction accuracy as a function of how many other
/// items are available as regressors.
WithinCurve within_inventory_curve(const Cohort& cohort, const Inventory& inventory, std::uint64_t seed,
                                   std::size_t repetitions, double ratio = 0.5);

/// Within-inventory upper bound on a fixed split: each item predicted by
/// OLS on all other items of the same inventory.
double within_inventory_bound(const Cohort& train, const Cohort& test, const Inventory& inventory);

/// Per target item OLS on every source item, fitted on dual-administered
/// training records.
class OlsBaseline {
 public:
  static OlsBaseline fit(const Cohort& train, const Inventory& source, const Inventory& target);

  std::map<std::string, int> predict(const ResponseMap& source_responses) const;
  std::size_t intercept_only_count() const;
  std::size_t training_size() const { return training_size_; }
  const std::string& source_inventory_id() const { return source_id_; }
  const std::string& target_inventory_id() const { return target_id_; }
  const std::map<std::string, LinearFit>& fits() const { return fits_; }

 private:
  std::string source_id_;
  std::string target_id_;
  std::vector<std::string> source_items_;
  std::map<std::string, LinearFit> fits_;
  std::size_t training_size_ = 0;
};

Evaluation evaluate_baseline(const OlsBaseline& baseline, const Cohort& cohort,
                             std::span<const std::string> test_ids,
                             std::span<const std::string> training_ids);

/// Scores a third-party prediction file with header
/// `participant_id,target_inventory_id,item_id,predicted_score` against the
/// actual cohort. Every row must match an observed cell and each listed
/// participant must be covered completely.
Evaluation score_external(std::istream& predictions, const Cohort& actual, std::string model_tag = "external");

enum class StratumKind { kSex, kAge };

struct StratumComparison {
  StratumKind kind = StratumKind::kSex;
  std::array<std::string, 2> labels;
  std::array<std::size_t, 2> sizes{};
  std::array<double, 2> mean_ema{};
  double cohens_d = 0.0;
  double welch_t = 0.0;
  double welch_df = 0.0;
  double p_value = 1.0;
  std::size_t skipped = 0;  // participants missing the stratum field
};

/// Compares per-participant EMA between female and male (in that order)
/// or between age < 65 and age >= 65.
StratumComparison stratified_compare(const PredictionSet& predictions, const Cohort& demographics,
                                     StratumKind kind);
nlohmann::json to_json(const StratumComparison& comparison);

}  // namespace symx
