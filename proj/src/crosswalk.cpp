#include "symx/crosswalk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "symx/io.hpp"
#include "symx/linear_model.hpp"

namespace symx {

using nlohmann::json;

namespace {

// Overlaps closer than this are treated as equal for tie-breaking; bin
// edges are differences of proportions and carry rounding noise.
constexpr double kOverlapTolerance = 1e-12;

void check_score(int score) {
  if (!is_valid_score(score)) throw ValidationError("score " + std::to_string(score) + " outside 0..4");
}

}  // namespace

LinkMap build_link_map(const SimilarityMatrix& m) {
  LinkMap map;
  map.source_inventory_id = m.source_inventory_id();
  map.target_inventory_id = m.target_inventory_id();
  if (m.rows() == 0) throw ValidationError("similarity matrix has no source items");
  for (std::size_t b = 0; b < m.cols(); ++b) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < m.rows(); ++a) {
      if (m(a, b) > m(best, b)) best = a;
    }
    map.links.emplace(m.target_items()[b], Link{m.source_items()[best], m(best, b)});
  }
  return map;
}

Thresholds::Thresholds(std::array<double, 4> cuts) : cuts_(cuts) {
  double previous = 0.0;
  for (double c : cuts_) {
    if (!(c >= previous && c <= 1.0)) {
      throw ValidationError("thresholds must satisfy 0 <= c1 <= c2 <= c3 <= c4 <= 1");
    }
    previous = c;
  }
}

double Thresholds::lower(int score) const {
  check_score(score);
  return score == 0 ? 0.0 : cuts_[static_cast<std::size_t>(score - 1)];
}

double Thresholds::upper(int score) const {
  check_score(score);
  return score == kMaxScore ? 1.0 : cuts_[static_cast<std::size_t>(score)];
}

int Thresholds::locate(double p) const {
  if (p >= 1.0) return kMaxScore;
  for (int t = kMinScore; t <= kMaxScore; ++t) {
    if (lower(t) <= p && p < upper(t)) return t;
  }
  return kMaxScore;
}

const ItemCalibration& Calibration::at(std::string_view item_id) const {
  auto it = items.find(std::string(item_id));
  if (it == items.end()) {
    throw ValidationError("calibration for " + inventory_id + " lacks item " + std::string(item_id));
  }
  return it->second;
}

Calibration calibrate(const Cohort& cohort, const Inventory& inventory, const CalibrationOptions& options) {
  Calibration out;
  out.inventory_id = inventory.id();
  for (const auto& item : inventory.items()) {
    std::array<std::size_t, kLevels> counts{};
    std::size_t n = 0;
    for (const auto& record : cohort.records) {
      const ResponseMap* responses = record.responses(inventory.id());
      if (!responses) continue;
      auto it = responses->find(item.item_id);
      if (it == responses->end()) continue;
      check_score(it->second);
      ++counts[static_cast<std::size_t>(it->second)];
      ++n;
    }
    if (n == 0) {
      throw NumericError("cannot calibrate " + inventory.id() + ": no responses for item " + item.item_id);
    }
    const double pseudo = options.add_one_smoothing ? 1.0 : 0.0;
    const double total = static_cast<double>(n) + pseudo * kLevels;
    std::array<double, 4> cuts{};
    std::size_t cumulative = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      cumulative += counts[k];
      cuts[k] = (static_cast<double>(cumulative) + pseudo * static_cast<double>(k + 1)) / total;
    }
    out.items.emplace(item.item_id, ItemCalibration{Thresholds(cuts), n});
  }
  return out;
}

std::string_view to_string(ConversionMode mode) {
  return mode == ConversionMode::kDeterministic ? "deterministic" : "stochastic";
}

ConversionMode parse_mode(std::string_view text) {
  if (text == "det" || text == "deterministic") return ConversionMode::kDeterministic;
  if (text == "stoch" || text == "stochastic") return ConversionMode::kStochastic;
  throw ValidationError("mode must be det or stoch, got '" + std::string(text) + "'");
}

namespace {

// Target bin for a zero-width source bin at point p. A target bin that is
// degenerate at the same point and carries the same score keeps the score,
// so identical calibrations always convert to the identity.
int locate_point(int source_score, const Thresholds& source, const Thresholds& target) {
  const double p = source.lower(source_score);
  if (target.lower(source_score) == p && target.upper(source_score) == p) return source_score;
  return target.locate(p);
}

std::array<double, kLevels> overlaps(int s, const Thresholds& source, const Thresholds& target) {
  std::array<double, kLevels> out{};
  const double lo = source.lower(s);
  const double hi = source.upper(s);
  for (int t = kMinScore; t <= kMaxScore; ++t) {
    const double ov = std::min(hi, target.upper(t)) - std::max(lo, target.lower(t));
    out[static_cast<std::size_t>(t)] = ov > 0.0 ? ov : 0.0;
  }
  return out;
}

}  // namespace

OutcomeDistribution conversion_distribution(int source_score, const Thresholds& source,
                                            const Thresholds& target) {
  check_score(source_score);
  OutcomeDistribution dist{};
  if (source.width(source_score) <= 0.0) {
    dist[static_cast<std::size_t>(locate_point(source_score, source, target))] = 1.0;
    return dist;
  }
  const auto ov = overlaps(source_score, source, target);
  const double total = std::accumulate(ov.begin(), ov.end(), 0.0);
  if (!(total > 0.0)) {
    dist[static_cast<std::size_t>(locate_point(source_score, source, target))] = 1.0;
    return dist;
  }
  for (std::size_t t = 0; t < ov.size(); ++t) dist[t] = ov[t] / total;
  return dist;
}

int convert_score_deterministic(int source_score, const Thresholds& source, const Thresholds& target) {
  check_score(source_score);
  if (source.width(source_score) <= 0.0) return locate_point(source_score, source, target);
  const auto ov = overlaps(source_score, source, target);
  int best = kMinScore;
  for (int t = kMinScore + 1; t <= kMaxScore; ++t) {
    if (ov[static_cast<std::size_t>(t)] > ov[static_cast<std::size_t>(best)] + kOverlapTolerance) best = t;
  }
  return best;
}

int convert_score_stochastic(int source_score, const Thresholds& source, const Thresholds& target,
                             Rng& rng) {
  const double u = rng.uniform01();
  const auto dist = conversion_distribution(source_score, source, target);
  double cumulative = 0.0;
  int last_supported = kMinScore;
  for (int t = kMinScore; t <= kMaxScore; ++t) {
    const double p = dist[static_cast<std::size_t>(t)];
    if (p <= 0.0) continue;
    cumulative += p;
    last_supported = t;
    if (u < cumulative) return t;
  }
  return last_supported;
}

std::map<std::string, FallbackModel> fit_fallbacks(const Cohort& train_target, const Inventory& target,
                                                   const LinkMap& links, double tau) {
  std::vector<std::string> strong;
  std::vector<std::string> weak;
  for (const auto& item : target.items()) {
    auto it = links.links.find(item.item_id);
    if (it == links.links.end()) {
      throw ValidationError("link map has no entry for target item " + item.item_id);
    }
    (it->second.similarity >= tau ? strong : weak).push_back(item.item_id);
  }
  std::map<std::string, FallbackModel> out;
  if (weak.empty()) return out;

  std::vector<const ResponseMap*> rows;
  for (const auto& record : train_target.records) {
    const ResponseMap* responses = record.responses(target.id());
    if (responses && responses->size() == target.size()) rows.push_back(responses);
  }
  if (rows.size() < kMinFallbackTrainingRecords) {
    throw NumericError("fallback fitting needs at least " + std::to_string(kMinFallbackTrainingRecords) +
                       " complete " + target.id() + " records, got " + std::to_string(rows.size()));
  }

  for (const auto& item : weak) {
    FallbackModel model;
    model.target_item = item;
    if (strong.size() >= 2) {
      model.regressors = strong;
    } else {
      for (const auto& other : target.items()) {
        if (other.item_id != item) model.regressors.push_back(other.item_id);
      }
    }
    const std::size_t p = model.regressors.size();
    std::vector<double> design;
    std::vector<double> response;
    design.reserve(rows.size() * p);
    response.reserve(rows.size());
    model.regressor_means.assign(p, 0.0);
    for (const ResponseMap* r : rows) {
      for (std::size_t j = 0; j < p; ++j) {
        const double v = r->at(model.regressors[j]);
        design.push_back(v);
        model.regressor_means[j] += v;
      }
      response.push_back(r->at(item));
    }
    for (double& m : model.regressor_means) m /= static_cast<double>(rows.size());
    const LinearFit fit = fit_ols(design, rows.size(), p, response);
    model.coefficients = fit.coefficients;
    model.intercept = fit.intercept;
    model.intercept_only = fit.intercept_only;
    model.training_size = rows.size();
    out.emplace(item, std::move(model));
  }
  return out;
}

bool CrosswalkModel::is_linked(std::string_view target_item) const {
  auto it = link_map.links.find(std::string(target_item));
  return it != link_map.links.end() && it->second.similarity >= tau;
}

std::vector<std::string> CrosswalkModel::source_items() const {
  std::vector<std::string> ids;
  for (const auto& [id, calibration] : source_calibration.items) ids.push_back(id);
  return ids;
}

std::vector<std::string> CrosswalkModel::target_items() const {
  std::vector<std::string> ids;
  for (const auto& [id, link] : link_map.links) ids.push_back(id);
  return ids;
}

void CrosswalkModel::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must lie in [0,1]");
  if (source_calibration.inventory_id != source_inventory_id() ||
      target_calibration.inventory_id != target_inventory_id()) {
    throw ValidationError("calibration inventories do not match the link map");
  }
  if (link_map.links.empty()) throw ValidationError("model has an empty link map");
  for (const auto& [target_item, link] : link_map.links) {
    if (!(link.similarity >= 0.0 && link.similarity <= 1.0)) {
      throw ValidationError("link similarity for " + target_item + " outside [0,1]");
    }
    if (!source_calibration.items.contains(link.source_item)) {
      throw ValidationError("source calibration lacks linked item " + link.source_item);
    }
    if (link.similarity >= tau) {
      if (!target_calibration.items.contains(target_item)) {
        throw ValidationError("target calibration lacks linked item " + target_item);
      }
    } else if (!fallbacks.contains(target_item)) {
      throw ValidationError("weakly linked item " + target_item + " has no fallback model");
    }
  }
  for (const auto& [item, fallback] : fallbacks) {
    if (!link_map.links.contains(item)) throw ValidationError("fallback for unknown target item " + item);
    if (fallback.regressors.empty()) throw ValidationError("fallback for " + item + " has no regressors");
    if (fallback.coefficients.size() != fallback.regressors.size() ||
        fallback.regressor_means.size() != fallback.regressors.size()) {
      throw ValidationError("fallback for " + item + " has mismatched coefficient count");
    }
    for (const auto& r : fallback.regressors) {
      if (!link_map.links.contains(r)) throw ValidationError("fallback regressor " + r + " is not a target item");
    }
    const bool finite = std::isfinite(fallback.intercept) &&
                        std::all_of(fallback.coefficients.begin(), fallback.coefficients.end(),
                                    [](double v) { return std::isfinite(v); });
    if (!finite) throw ValidationError("fallback for " + item + " has non-finite coefficients");
  }
}

namespace {

void canonicalize(CrosswalkModel& model) {
  model.tau = round_sig12(model.tau);
  for (auto& [_, link] : model.link_map.links) link.similarity = round_sig12(link.similarity);
  for (Calibration* c : {&model.source_calibration, &model.target_calibration}) {
    for (auto& [_, item] : c->items) {
      auto cuts = item.thresholds.cuts();
      for (double& v : cuts) v = round_sig12(v);
      item.thresholds = Thresholds(cuts);
    }
  }
  for (auto& [_, f] : model.fallbacks) {
    f.intercept = round_sig12(f.intercept);
    for (double& v : f.coefficients) v = round_sig12(v);
    for (double& v : f.regressor_means) v = round_sig12(v);
  }
}

}  // namespace

CrosswalkModel build_model(const BuildInputs& in) {
  if (in.similarity.source_inventory_id() != in.source.id() ||
      in.similarity.target_inventory_id() != in.target.id()) {
    throw ValidationError("similarity matrix does not match the inventories");
  }
  CrosswalkModel model;
  model.backend_tag = in.similarity.backend_tag();
  model.tau = in.tau;
  model.link_map = build_link_map(in.similarity);
  model.source_calibration = calibrate(in.source_calibration_cohort, in.source, in.calibration);
  // One inventory has one calibration; a self-crosswalk shares it.
  model.target_calibration = in.source.id() == in.target.id()
                                 ? model.source_calibration
                                 : calibrate(in.target_training_cohort, in.target, in.calibration);
  model.fallbacks = fit_fallbacks(in.target_training_cohort, in.target, model.link_map, in.tau);
  // Values are held at artifact precision so that load(save(m)) == m.
  canonicalize(model);
  model.validate();
  return model;
}

ConversionResult convert_participant(const CrosswalkModel& model, const ResponseMap& source_responses,
                                     ConversionMode mode, Rng* rng) {
  if (mode == ConversionMode::kStochastic && rng == nullptr) {
    throw ValidationError("stochastic conversion needs a seeded generator");
  }
  std::vector<std::string> offending;
  for (const auto& [item, _] : model.source_calibration.items) {
    auto it = source_responses.find(item);
    if (it == source_responses.end() || !is_valid_score(it->second)) offending.push_back(item);
  }
  for (const auto& [item, _] : source_responses) {
    if (!model.source_calibration.items.contains(item)) offending.push_back(item);
  }
  if (!offending.empty()) {
    std::string message = "source responses incomplete or out of range:";
    for (const auto& item : offending) message += " " + item;
    throw ResponseError(message, std::move(offending));
  }

  ConversionResult result;
  for (const auto& [target_item, link] : model.link_map.links) {
    if (link.similarity < model.tau) continue;
    const int s = source_responses.at(link.source_item);
    const Thresholds& src = model.source_calibration.at(link.source_item).thresholds;
    const Thresholds& dst = model.target_calibration.at(target_item).thresholds;
    result.estimates[target_item] = mode == ConversionMode::kDeterministic
                                        ? convert_score_deterministic(s, src, dst)
                                        : convert_score_stochastic(s, src, dst, *rng);
    result.method[target_item] = "linked";
  }
  for (const auto& [target_item, fallback] : model.fallbacks) {
    if (model.is_linked(target_item)) continue;
    std::vector<double> x(fallback.regressors.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      auto it = result.estimates.find(fallback.regressors[j]);
      x[j] = it != result.estimates.end() ? it->second : fallback.regressor_means[j];
    }
    LinearFit fit{fallback.coefficients, fallback.intercept, fallback.intercept_only};
    result.estimates[target_item] = round_to_score(predict(fit, x));
    result.method[target_item] = "fallback";
  }
  return result;
}

ConversionResult convert_participant_seeded(const CrosswalkModel& model, const ResponseMap& source_responses,
                                            ConversionMode mode, std::uint64_t seed) {
  Rng rng(seed);
  return convert_participant(model, source_responses, mode, &rng);
}

namespace {

json calibration_items(const Calibration& calibration) {
  json items = json::object();
  for (const auto& [id, item] : calibration.items) {
    json cuts = json::array();
    for (double c : item.thresholds.cuts()) cuts.push_back(round_sig12(c));
    items[id] = {{"thresholds", std::move(cuts)}, {"n", item.sample_size}};
  }
  return items;
}

const json& field(const json& doc, const char* key, const char* context) {
  auto it = doc.find(key);
  if (it == doc.end()) {
    throw ParseError(std::string("model artifact schema: ") + context + " missing '" + key + "'");
  }
  return *it;
}

double number_field(const json& doc, const char* key, const char* context) {
  const json& v = field(doc, key, context);
  if (!v.is_number()) throw ParseError(std::string("model artifact schema: '") + key + "' must be a number");
  return v.get<double>();
}

std::string string_field(const json& doc, const char* key, const char* context) {
  const json& v = field(doc, key, context);
  if (!v.is_string()) throw ParseError(std::string("model artifact schema: '") + key + "' must be a string");
  return v.get<std::string>();
}

Calibration parse_calibration(const std::string& inventory_id, const json& items) {
  if (!items.is_object()) throw ParseError("model artifact schema: calibration must be an object");
  Calibration c;
  c.inventory_id = inventory_id;
  for (const auto& [item_id, entry] : items.items()) {
    const json& cuts = field(entry, "thresholds", "calibration entry");
    if (!cuts.is_array() || cuts.size() != 4) {
      throw ParseError("model artifact schema: thresholds for " + item_id + " must have 4 values");
    }
    std::array<double, 4> values{};
    for (std::size_t k = 0; k < 4; ++k) {
      if (!cuts[k].is_number()) throw ParseError("model artifact schema: non-numeric threshold");
      values[k] = cuts[k].get<double>();
    }
    const json& n = field(entry, "n", "calibration entry");
    if (!n.is_number_unsigned()) throw ParseError("model artifact schema: 'n' must be a count");
    c.items.emplace(item_id, ItemCalibration{Thresholds(values), n.get<std::size_t>()});
  }
  return c;
}

std::vector<double> number_array(const json& v, const char* key) {
  if (!v.is_array()) throw ParseError(std::string("model artifact schema: '") + key + "' must be an array");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ParseError(std::string("model artifact schema: '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

void check_version(const std::string& version) {
  const auto major_of = [](const std::string& v) {
    char* end = nullptr;
    const long major = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || (*end != '.' && *end != '\0') || major < 0) {
      throw ParseError("model artifact schema: malformed version '" + v + "'");
    }
    return major;
  };
  const long ours = major_of(std::string(kArtifactVersion));
  const long theirs = major_of(version);
  if (theirs != ours) {
    throw VersionError("model artifact version " + version + " is incompatible with " +
                       std::string(kArtifactVersion));
  }
}

}  // namespace

json serialize_calibration(const Calibration& calibration) {
  return {{calibration.inventory_id, calibration_items(calibration)}};
}

json save_model(const CrosswalkModel& model) {
  model.validate();
  if (model.source_inventory_id() == model.target_inventory_id() &&
      model.source_calibration != model.target_calibration) {
    throw ValidationError("a self-crosswalk must use one calibration for both sides");
  }
  json links = json::object();
  for (const auto& [target, link] : model.link_map.links) {
    links[target] = {{"source_item", link.source_item}, {"similarity", round_sig12(link.similarity)}};
  }
  json calibrations = json::object();
  calibrations[model.source_calibration.inventory_id] = calibration_items(model.source_calibration);
  calibrations[model.target_calibration.inventory_id] = calibration_items(model.target_calibration);
  json fallbacks = json::object();
  for (const auto& [target, f] : model.fallbacks) {
    json coefficients = json::array();
    for (double v : f.coefficients) coefficients.push_back(round_sig12(v));
    json means = json::array();
    for (double v : f.regressor_means) means.push_back(round_sig12(v));
    fallbacks[target] = {{"regressors", f.regressors},
                         {"coefficients", std::move(coefficients)},
                         {"intercept", round_sig12(f.intercept)},
                         {"regressor_means", std::move(means)},
                         {"training_size", f.training_size},
                         {"intercept_only", f.intercept_only}};
  }
  return {{"version", model.version},
          {"backend_tag", model.backend_tag},
          {"tau", round_sig12(model.tau)},
          {"source_inventory_id", model.source_inventory_id()},
          {"target_inventory_id", model.target_inventory_id()},
          {"tie_policy", model.link_map.tie_policy},
          {"link_map", std::move(links)},
          {"calibrations", std::move(calibrations)},
          {"fallbacks", std::move(fallbacks)}};
}

CrosswalkModel load_model(const json& artifact) {
  if (!artifact.is_object()) throw ParseError("model artifact must be a JSON object");
  CrosswalkModel model;
  model.version = string_field(artifact, "version", "artifact");
  check_version(model.version);
  model.backend_tag = string_field(artifact, "backend_tag", "artifact");
  model.tau = number_field(artifact, "tau", "artifact");
  model.link_map.source_inventory_id = string_field(artifact, "source_inventory_id", "artifact");
  model.link_map.target_inventory_id = string_field(artifact, "target_inventory_id", "artifact");
  if (auto tie = artifact.find("tie_policy"); tie != artifact.end() && tie->is_string()) {
    model.link_map.tie_policy = tie->get<std::string>();
  }

  const json& links = field(artifact, "link_map", "artifact");
  if (!links.is_object()) throw ParseError("model artifact schema: 'link_map' must be an object");
  for (const auto& [target, entry] : links.items()) {
    model.link_map.links.emplace(target, Link{string_field(entry, "source_item", "link"),
                                              number_field(entry, "similarity", "link")});
  }

  const json& calibrations = field(artifact, "calibrations", "artifact");
  if (!calibrations.is_object()) throw ParseError("model artifact schema: 'calibrations' must be an object");
  const auto calibration_for = [&](const std::string& id) {
    auto it = calibrations.find(id);
    if (it == calibrations.end()) throw ParseError("model artifact schema: no calibration for " + id);
    return parse_calibration(id, *it);
  };
  model.source_calibration = calibration_for(model.source_inventory_id());
  model.target_calibration = calibration_for(model.target_inventory_id());

  const json& fallbacks = field(artifact, "fallbacks", "artifact");
  if (!fallbacks.is_object()) throw ParseError("model artifact schema: 'fallbacks' must be an object");
  for (const auto& [target, entry] : fallbacks.items()) {
    FallbackModel f;
    f.target_item = target;
    const json& regressors = field(entry, "regressors", "fallback");
    if (!regressors.is_array()) throw ParseError("model artifact schema: 'regressors' must be an array");
    for (const auto& r : regressors) {
      if (!r.is_string()) throw ParseError("model artifact schema: regressor ids must be strings");
      f.regressors.push_back(r.get<std::string>());
    }
    f.coefficients = number_array(field(entry, "coefficients", "fallback"), "coefficients");
    f.intercept = number_field(entry, "intercept", "fallback");
    if (auto means = entry.find("regressor_means"); means != entry.end()) {
      f.regressor_means = number_array(*means, "regressor_means");
    } else {
      f.regressor_means.assign(f.regressors.size(), 0.0);
    }
    if (auto n = entry.find("training_size"); n != entry.end() && n->is_number_unsigned()) {
      f.training_size = n->get<std::size_t>();
    }
    if (auto io = entry.find("intercept_only"); io != entry.end() && io->is_boolean()) {
      f.intercept_only = io->get<bool>();
    }
    model.fallbacks.emplace(target, std::move(f));
  }
  model.validate();
  return model;
}

std::string dump_model(const CrosswalkModel& model) { return save_model(model).dump(2) + "\n"; }

CrosswalkModel load_model_file(const std::filesystem::path& path) {
  const json doc = read_json(path);
  try {
    return load_model(doc);
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace symx
