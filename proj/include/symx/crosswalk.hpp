#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/embedding.hpp"
#include "symx/error.hpp"
#include "symx/inventory.hpp"
#include "symx/random.hpp"

namespace symx {

inline constexpr double kDefaultTau = 0.6;
inline constexpr std::string_view kArtifactVersion = "1.0";
inline constexpr std::string_view kTiePolicyLowestIndex = "lowest-source-index";

struct Link {
  std::string source_item;
  double similarity = 0.0;

  friend bool operator==(const Link&, const Link&) = default;
};

/// Nearest-neighbour assignment: each target item points at its most
/// similar source item.
struct LinkMap {
  std::string source_inventory_id;
  std::string target_inventory_id;
  std::map<std::string, Link> links;  // keyed by target item id
  std::string tie_policy{kTiePolicyLowestIndex};

  friend bool operator==(const LinkMap&, const LinkMap&) = default;
};

/// For every target item b, link to argmax_a S[a][b]; ties go to the lowest
/// source index.
LinkMap build_link_map(const SimilarityMatrix& m);

/// Four cumulative proportions (c1..c4). Bin k of the unit interval is
/// [c_k, c_{k+1}) with c0 = 0 and c5 = 1.
class Thresholds {
 public:
  Thresholds() = default;
  /// Throws ValidationError unless 0 <= c1 <= c2 <= c3 <= c4 <= 1.
  explicit Thresholds(std::array<double, 4> cuts);

  const std::array<double, 4>& cuts() const { return cuts_; }
  /// Lower edge of bin `score` (c_score), with c0 = 0.
  double lower(int score) const;
  /// Upper edge of bin `score` (c_{score+1}), with c5 = 1.
  double upper(int score) const;
  double width(int score) const { return upper(score) - lower(score); }
  /// Bin whose right-open interval contains p; p >= 1 maps to score 4.
  int locate(double p) const;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;

 private:
  std::array<double, 4> cuts_{1.0, 1.0, 1.0, 1.0};
};

struct ItemCalibration {
  Thresholds thresholds;
  std::size_t sample_size = 0;

  friend bool operator==(const ItemCalibration&, const ItemCalibration&) = default;
};

struct Calibration {
  std::string inventory_id;
  std::map<std::string, ItemCalibration> items;

  const ItemCalibration& at(std::string_view item_id) const;
  friend bool operator==(const Calibration&, const Calibration&) = default;
};

struct CalibrationOptions {
  // Add one pseudo-count per level before forming proportions.
  bool add_one_smoothing = false;
};

/// Empirical c_k = #(score <= k-1) / n over records holding `inventory`.
/// Throws NumericError when no record holds a complete administration.
Calibration calibrate(const Cohort& cohort, const Inventory& inventory,
                      const CalibrationOptions& options = {});

enum class ConversionMode { kDeterministic, kStochastic };

std::string_view to_string(ConversionMode mode);
/// Accepts det/deterministic and stoch/stochastic.
ConversionMode parse_mode(std::string_view text);

/// Probability of each target score given a source score.
using OutcomeDistribution = std::array<double, kLevels>;

/// Overlap of the source bin with each target bin, normalised to sum to 1.
/// A zero-width source bin collapses to the point c_s and puts all mass on
/// the target bin containing it.
OutcomeDistribution conversion_distribution(int source_score, const Thresholds& source,
                                            const Thresholds& target);

/// Maximal-overlap candidate; equal overlaps resolve to the lower score.
int convert_score_deterministic(int source_score, const Thresholds& source, const Thresholds& target);

/// One draw from conversion_distribution using a single uniform variate.
int convert_score_stochastic(int source_score, const Thresholds& source, const Thresholds& target,
                             Rng& rng);

/// Within-inventory estimator for a target item with no close analogue.
struct FallbackModel {
  std::string target_item;
  std::vector<std::string> regressors;
  std::vector<double> coefficients;
  double intercept = 0.0;
  // Training means of the regressors; a regressor that has no estimate yet
  // at conversion time (another weak item) enters at its mean.
  std::vector<double> regressor_means;
  std::size_t training_size = 0;
  bool intercept_only = false;

  friend bool operator==(const FallbackModel&, const FallbackModel&) = default;
};

inline constexpr std::size_t kMinFallbackTrainingRecords = 5;

/// OLS fits for every target item whose link similarity is below tau.
/// Regressors are the strongly linked target items, or every other target
/// item when fewer than two strong items exist.
std::map<std::string, FallbackModel> fit_fallbacks(const Cohort& train_target,
                                                   const Inventory& target, const LinkMap& links,
                                                   double tau);

struct CrosswalkModel {
  std::string version{kArtifactVersion};
  std::string backend_tag;
  double tau = kDefaultTau;
  LinkMap link_map;
  Calibration source_calibration;
  Calibration target_calibration;
  std::map<std::string, FallbackModel> fallbacks;

  const std::string& source_inventory_id() const { return link_map.source_inventory_id; }
  const std::string& target_inventory_id() const { return link_map.target_inventory_id; }
  bool is_linked(std::string_view target_item) const;
  /// Source items a participant must supply: every calibrated source item.
  std::vector<std::string> source_items() const;
  std::vector<std::string> target_items() const;

  /// Throws ValidationError if the invariants (every target item linked or
  /// covered by a fallback, calibrations cover linked items) do not hold.
  void validate() const;

  friend bool operator==(const CrosswalkModel&, const CrosswalkModel&) = default;
};

struct BuildInputs {
  const Inventory& source;
  const Inventory& target;
  const SimilarityMatrix& similarity;
  const Cohort& source_calibration_cohort;
  const Cohort& target_training_cohort;
  double tau = kDefaultTau;
  CalibrationOptions calibration{};
};

/// Link map, both calibrations and fallbacks in one step.
CrosswalkModel build_model(const BuildInputs& inputs);

/// Source responses that are missing, unknown or out of range.
class ResponseError : public ValidationError {
 public:
  ResponseError(const std::string& message, std::vector<std::string> items)
      : ValidationError(message), items_(std::move(items)) {}
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
};

struct ConversionResult {
  std::map<std::string, int> estimates;
  // Per target item: "linked" or "fallback".
  std::map<std::string, std::string> method;
};

/// Converts a complete set of source responses. Stochastic mode draws once
/// per linked target item, in ascending item_id order; fallback items are
/// then estimated from the converted linked scores, also in item_id order.
ConversionResult convert_participant(const CrosswalkModel& model, const ResponseMap& source_responses,
                                     ConversionMode mode, Rng* rng = nullptr);

/// Deterministic mode needs no generator; stochastic uses the given seed.
ConversionResult convert_participant_seeded(const CrosswalkModel& model,
                                            const ResponseMap& source_responses, ConversionMode mode,
                                            std::uint64_t seed);

nlohmann::json save_model(const CrosswalkModel& model);
CrosswalkModel load_model(const nlohmann::json& artifact);
std::string dump_model(const CrosswalkModel& model);
CrosswalkModel load_model_file(const std::filesystem::path& path);

nlohmann::json serialize_calibration(const Calibration& calibration);

}  // namespace symx
