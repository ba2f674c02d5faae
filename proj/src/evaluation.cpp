#include "symx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "symx/error.hpp"
#include "symx/io.hpp"
#include "symx/random.hpp"
#include "symx/stats.hpp"

namespace symx {

using nlohmann::json;

namespace {

void shuffle(std::vector<std::string>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

bool is_complete(const ResponseMap* responses, const Inventory& inventory) {
  if (!responses || responses->size() != inventory.size()) return false;
  return std::all_of(inventory.items().begin(), inventory.items().end(),
                     [&](const Item& item) { return responses->contains(item.item_id); });
}

std::unordered_map<std::string, const ParticipantRecord*> index_records(const Cohort& cohort) {
  std::unordered_map<std::string, const ParticipantRecord*> index;
  index.reserve(cohort.records.size());
  for (const auto& record : cohort.records) index.emplace(record.participant_id, &record);
  return index;
}

}  // namespace

SplitPlan split(std::span<const std::string> participant_ids, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0,1)");
  std::vector<std::string> ids(participant_ids.begin(), participant_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError("split: participant ids are not unique");
  }
  if (ids.size() < 2) throw ValidationError("split needs at least 2 participants");
  Rng rng(seed);
  shuffle(ids, rng);
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(ids.size()) * ratio));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  SplitPlan plan;
  plan.seed = seed;
  plan.ratio = ratio;
  plan.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

SplitPlan split(const Cohort& cohort, double ratio, std::uint64_t seed) {
  const auto ids = cohort.participant_ids();
  return split(ids, ratio, seed);
}

Cohort subset(const Cohort& cohort, std::span<const std::string> ids) {
  const std::unordered_set<std::string> wanted(ids.begin(), ids.end());
  Cohort out;
  out.provenance = cohort.provenance;
  for (const auto& record : cohort.records) {
    if (wanted.contains(record.participant_id)) out.records.push_back(record);
  }
  return out;
}

std::vector<std::string> complete_participants(const Cohort& cohort,
                                               std::span<const Inventory* const> inventories) {
  std::vector<std::string> ids;
  for (const auto& record : cohort.records) {
    const bool ok = std::all_of(inventories.begin(), inventories.end(), [&](const Inventory* inv) {
      return is_complete(record.responses(inv->id()), *inv);
    });
    if (ok) ids.push_back(record.participant_id);
  }
  return ids;
}

double ema(std::span<const ScorePair> cells) {
  if (cells.empty()) throw NumericError("EMA of an empty prediction set");
  const auto hits = std::count_if(cells.begin(), cells.end(),
                                  [](const ScorePair& c) { return c.predicted == c.actual; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(cells.size());
}

double mae(std::span<const ScorePair> cells) {
  if (cells.empty()) throw NumericError("MAE of an empty prediction set");
  double total = 0.0;
  for (const auto& c : cells) total += std::abs(c.predicted - c.actual);
  return total / static_cast<double>(cells.size());
}

double binary_accuracy(std::span<const ScorePair> cells, int t) {
  if (cells.empty()) throw NumericError("binary accuracy of an empty prediction set");
  if (t < 0 || t > 3) throw ValidationError("binary threshold must be 0..3");
  const auto agree = std::count_if(cells.begin(), cells.end(), [t](const ScorePair& c) {
    return (c.predicted > t) == (c.actual > t);
  });
  return 100.0 * static_cast<double>(agree) / static_cast<double>(cells.size());
}

std::vector<ScorePair> PredictionSet::pairs() const {
  std::vector<ScorePair> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back({c.predicted, c.actual});
  return out;
}

namespace {

MetricRow metric_row(std::string key, std::span<const ScorePair> cells) {
  MetricRow row;
  row.key = std::move(key);
  row.ema = ema(cells);
  row.mae = mae(cells);
  for (int t = 0; t < 4; ++t) row.binary[static_cast<std::size_t>(t)] = binary_accuracy(cells, t);
  row.n = cells.size();
  return row;
}

std::vector<MetricRow> grouped_rows(const PredictionSet& predictions, bool by_item) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<ScorePair>> groups;
  for (const auto& c : predictions.cells) {
    const std::string& key = by_item ? c.item_id : c.participant_id;
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back({c.predicted, c.actual});
  }
  std::vector<MetricRow> rows;
  rows.reserve(order.size());
  for (const auto& key : order) rows.push_back(metric_row(key, groups[key]));
  return rows;
}

json row_json(const MetricRow& row) {
  return {{"key", row.key},
          {"ema", row.ema},
          {"mae", row.mae},
          {"acc_t0", row.binary[0]},
          {"acc_t1", row.binary[1]},
          {"acc_t2", row.binary[2]},
          {"acc_t3", row.binary[3]},
          {"n", row.n}};
}

void write_rows(std::ostream& out, const char* key_column, const std::vector<MetricRow>& rows) {
  out << key_column << ",ema,mae,acc_t0,acc_t1,acc_t2,acc_t3,n\n";
  for (const auto& row : rows) {
    out << csv_escape(row.key) << ',' << format_fixed(row.ema, 4) << ',' << format_fixed(row.mae, 4);
    for (double b : row.binary) out << ',' << format_fixed(b, 4);
    out << ',' << row.n << '\n';
  }
}

}  // namespace

MetricReport score_predictions(const PredictionSet& predictions) {
  const auto cells = predictions.pairs();
  const MetricRow overall = metric_row("all", cells);
  MetricReport report;
  report.model_tag = predictions.model_tag;
  report.source_inventory_id = predictions.source_inventory_id;
  report.target_inventory_id = predictions.target_inventory_id;
  report.n = overall.n;
  report.ema = overall.ema;
  report.mae = overall.mae;
  report.binary = overall.binary;
  report.per_item = grouped_rows(predictions, true);
  report.per_participant = grouped_rows(predictions, false);
  return report;
}

json to_json(const MetricReport& report) {
  json items = json::array();
  for (const auto& row : report.per_item) items.push_back(row_json(row));
  json participants = json::array();
  for (const auto& row : report.per_participant) participants.push_back(row_json(row));
  return {{"model_tag", report.model_tag},
          {"source_inventory_id", report.source_inventory_id},
          {"target_inventory_id", report.target_inventory_id},
          {"n", report.n},
          {"ema", report.ema},
          {"mae", report.mae},
          {"acc_t0", report.binary[0]},
          {"acc_t1", report.binary[1]},
          {"acc_t2", report.binary[2]},
          {"acc_t3", report.binary[3]},
          {"random_guess_ema", report.random_guess_ema},
          {"per_item", std::move(items)},
          {"per_participant", std::move(participants)}};
}

void write_item_metrics_csv(std::ostream& out, const MetricReport& report) {
  write_rows(out, "item_id", report.per_item);
}

void write_participant_metrics_csv(std::ostream& out, const MetricReport& report) {
  write_rows(out, "participant_id", report.per_participant);
}

void write_predictions_csv(std::ostream& out, const PredictionSet& predictions) {
  out << "participant_id,target_inventory_id,item_id,predicted_score\n";
  for (const auto& c : predictions.cells) {
    out << csv_escape(c.participant_id) << ',' << csv_escape(predictions.target_inventory_id) << ','
        << csv_escape(c.item_id) << ',' << c.predicted << '\n';
  }
}

void require_disjoint(std::span<const std::string> train, std::span<const std::string> test) {
  const std::unordered_set<std::string> train_set(train.begin(), train.end());
  for (const auto& id : test) {
    if (train_set.contains(id)) {
      throw ValidationError("participant " + id + " appears in both training and test data");
    }
  }
}

namespace {

// Shared driver: for each test participant (ascending id) take the source
// responses, predict, and pair with the actual target responses.
template <typename Predict>
PredictionSet predict_test_set(const Cohort& cohort, std::span<const std::string> test_ids,
                               const std::string& source_id, const std::string& target_id,
                               const std::vector<std::string>& target_items, Predict&& predict) {
  const auto index = index_records(cohort);
  std::vector<std::string> ids(test_ids.begin(), test_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) throw ValidationError("evaluation needs at least one test participant");

  PredictionSet set;
  set.source_inventory_id = source_id;
  set.target_inventory_id = target_id;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("test participant " + id + " is not in the cohort");
    const ResponseMap* source = it->second->responses(source_id);
    const ResponseMap* target = it->second->responses(target_id);
    if (!source || !target) {
      throw ValidationError("test participant " + id + " lacks a dual administration of " + source_id +
                            " and " + target_id);
    }
    const std::map<std::string, int> estimates = predict(*source);
    for (const auto& item : target_items) {
      auto actual = target->find(item);
      if (actual == target->end()) {
        throw ValidationError("test participant " + id + " has no " + target_id + " response for " + item);
      }
      set.cells.push_back({id, item, estimates.at(item), actual->second});
    }
  }
  return set;
}

}  // namespace

Evaluation evaluate_crosswalk(const CrosswalkEvaluationInputs& in) {
  require_disjoint(in.training_ids, in.test_ids);
  Rng rng(in.seed);
  Evaluation out;
  out.predictions = predict_test_set(
      in.cohort, in.test_ids, in.model.source_inventory_id(), in.model.target_inventory_id(),
      in.model.target_items(), [&](const ResponseMap& source) {
        Rng* generator = in.mode == ConversionMode::kStochastic ? &rng : nullptr;
        return convert_participant(in.model, source, in.mode, generator).estimates;
      });
  out.predictions.model_tag = "crosswalk:" + in.model.backend_tag;
  out.report = score_predictions(out.predictions);
  return out;
}

namespace {

std::vector<const ResponseMap*> complete_rows(const Cohort& cohort, const Inventory& inventory) {
  std::vector<const ResponseMap*> rows;
  for (const auto& record : cohort.records) {
    const ResponseMap* r = record.responses(inventory.id());
    if (is_complete(r, inventory)) rows.push_back(r);
  }
  return rows;
}

LinearFit fit_item(const std::vector<const ResponseMap*>& rows, std::span<const std::string> regressors,
                   const std::string& target) {
  std::vector<double> design;
  std::vector<double> response;
  design.reserve(rows.size() * regressors.size());
  for (const ResponseMap* r : rows) {
    for (const auto& id : regressors) design.push_back(r->at(id));
    response.push_back(r->at(target));
  }
  return fit_ols(design, rows.size(), regressors.size(), response);
}

std::size_t count_hits(const LinearFit& fit, const std::vector<const ResponseMap*>& rows,
                       std::span<const std::string> regressors, const std::string& target) {
  std::size_t hits = 0;
  std::vector<double> x(regressors.size());
  for (const ResponseMap* r : rows) {
    for (std::size_t j = 0; j < regressors.size(); ++j) x[j] = r->at(regressors[j]);
    if (round_to_score(predict(fit, x)) == r->at(target)) ++hits;
  }
  return hits;
}

}  // namespace

double within_inventory_bound(const Cohort& train, const Cohort& test, const Inventory& inventory) {
  const auto train_rows = complete_rows(train, inventory);
  const auto test_rows = complete_rows(test, inventory);
  if (train_rows.empty() || test_rows.empty()) {
    throw NumericError("within-inventory bound needs complete training and test records");
  }
  std::size_t hits = 0;
  for (const auto& item : inventory.items()) {
    std::vector<std::string> others;
    for (const auto& other : inventory.items()) {
      if (other.item_id != item.item_id) others.push_back(other.item_id);
    }
    const LinearFit fit = fit_item(train_rows, others, item.item_id);
    hits += count_hits(fit, test_rows, others, item.item_id);
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(test_rows.size() * inventory.size());
}

WithinCurve within_inventory_curve(const Cohort& cohort, const Inventory& inventory, std::uint64_t seed,
                                   std::size_t repetitions, double ratio) {
  if (inventory.size() < 3) throw ValidationError("within-inventory curve needs at least 3 items");
  if (repetitions == 0) throw ValidationError("repetitions must be positive");
  const Inventory* inv[] = {&inventory};
  const auto eligible = complete_participants(cohort, inv);
  const SplitPlan plan = split(eligible, ratio, seed);
  if (plan.train.size() < kMinWithinTraining) {
    throw NumericError("within-inventory curve needs at least " + std::to_string(kMinWithinTraining) +
                       " training participants, got " + std::to_string(plan.train.size()));
  }
  const Cohort train = subset(cohort, plan.train);
  const Cohort test = subset(cohort, plan.test);
  const auto train_rows = complete_rows(train, inventory);
  const auto test_rows = complete_rows(test, inventory);

  WithinCurve curve;
  curve.inventory_id = inventory.id();
  curve.train_size = train_rows.size();
  curve.test_size = test_rows.size();

  // Regressor sampling uses its own stream so the split stays a function of
  // the seed alone.
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  const std::size_t m = inventory.size();
  for (std::size_t k = 1; k < m; ++k) {
    std::vector<double> emas;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      for (const auto& item : inventory.items()) {
        std::vector<std::string> pool;
        for (const auto& other : inventory.items()) {
          if (other.item_id != item.item_id) pool.push_back(other.item_id);
        }
        for (std::size_t i = 0; i < k; ++i) {
          const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
          std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        const LinearFit fit = fit_item(train_rows, pool, item.item_id);
        const auto hits = count_hits(fit, test_rows, pool, item.item_id);
        emas.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(test_rows.size()));
      }
    }
    curve.points.push_back({k, stats::mean(emas), std::sqrt(stats::variance(emas)), emas.size()});
  }
  curve.all_items_ema = within_inventory_bound(train, test, inventory);
  return curve;
}

OlsBaseline OlsBaseline::fit(const Cohort& train, const Inventory& source, const Inventory& target) {
  OlsBaseline baseline;
  baseline.source_id_ = source.id();
  baseline.target_id_ = target.id();
  baseline.source_items_ = source.item_ids();
  std::vector<std::pair<const ResponseMap*, const ResponseMap*>> rows;
  for (const auto& record : train.records) {
    const ResponseMap* s = record.responses(source.id());
    const ResponseMap* t = record.responses(target.id());
    if (is_complete(s, source) && is_complete(t, target)) rows.emplace_back(s, t);
  }
  if (rows.empty()) throw NumericError("OLS baseline needs dual-administered training records");
  baseline.training_size_ = rows.size();
  const std::size_t p = baseline.source_items_.size();
  for (const auto& item : target.items()) {
    std::vector<double> design;
    std::vector<double> response;
    design.reserve(rows.size() * p);
    for (const auto& [s, t] : rows) {
      for (const auto& id : baseline.source_items_) design.push_back(s->at(id));
      response.push_back(t->at(item.item_id));
    }
    baseline.fits_.emplace(item.item_id, fit_ols(design, rows.size(), p, response));
  }
  return baseline;
}

std::map<std::string, int> OlsBaseline::predict(const ResponseMap& source_responses) const {
  std::vector<double> x(source_items_.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    auto it = source_responses.find(source_items_[j]);
    if (it == source_responses.end()) {
      throw ResponseError("source responses lack item " + source_items_[j], {source_items_[j]});
    }
    x[j] = it->second;
  }
  std::map<std::string, int> out;
  for (const auto& [item, fit] : fits_) out[item] = round_to_score(symx::predict(fit, x));
  return out;
}

std::size_t OlsBaseline::intercept_only_count() const {
  return static_cast<std::size_t>(std::count_if(fits_.begin(), fits_.end(),
                                                [](const auto& kv) { return kv.second.intercept_only; }));
}

Evaluation evaluate_baseline(const OlsBaseline& baseline, const Cohort& cohort,
                             std::span<const std::string> test_ids, std::span<const std::string> training_ids) {
  require_disjoint(training_ids, test_ids);
  std::vector<std::string> target_items;
  for (const auto& [item, _] : baseline.fits()) target_items.push_back(item);
  Evaluation out;
  out.predictions = predict_test_set(cohort, test_ids, baseline.source_inventory_id(),
                                     baseline.target_inventory_id(), target_items,
                                     [&](const ResponseMap& source) { return baseline.predict(source); });
  out.predictions.model_tag = "ols";
  out.report = score_predictions(out.predictions);
  return out;
}

Evaluation score_external(std::istream& in, const Cohort& actual, std::string model_tag) {
  const auto index = index_records(actual);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("predictions file is empty");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (trim(line) != "participant_id,target_inventory_id,item_id,predicted_score") {
    throw ParseError("predictions file: unexpected header '" + line + "'");
  }

  PredictionSet set;
  set.model_tag = std::move(model_tag);
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::size_t> cells_per_participant;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = "predictions row " + std::to_string(line_no);
    if (fields.size() != 4) throw ParseError(where + ": expected 4 fields");
    const std::string pid = trim(fields[0]);
    const std::string inventory = trim(fields[1]);
    const std::string item = trim(fields[2]);
    const std::string value = trim(fields[3]);
    char* end = nullptr;
    const long predicted = std::strtol(value.c_str(), &end, 10);
    if (value.empty() || end != value.c_str() + value.size()) {
      throw ParseError(where + ": predicted_score '" + value + "' is not an integer");
    }
    if (!is_valid_score(static_cast<int>(predicted)) || predicted != static_cast<int>(predicted)) {
      throw ValidationError(where + ": predicted_score " + value + " outside 0..4");
    }
    if (set.target_inventory_id.empty()) {
      set.target_inventory_id = inventory;
    } else if (inventory != set.target_inventory_id) {
      throw ValidationError(where + ": mixes target inventories " + set.target_inventory_id + " and " + inventory);
    }
    auto rec = index.find(pid);
    if (rec == index.end()) throw ValidationError(where + ": unknown participant " + pid);
    const ResponseMap* responses = rec->second->responses(inventory);
    if (!responses) throw ValidationError(where + ": participant " + pid + " has no " + inventory + " scores");
    auto observed = responses->find(item);
    if (observed == responses->end()) {
      throw ValidationError(where + ": participant " + pid + " has no score for item " + item);
    }
    if (!seen.emplace(pid, item).second) throw ValidationError(where + ": duplicate cell " + pid + "/" + item);
    ++cells_per_participant[pid];
    set.cells.push_back({pid, item, static_cast<int>(predicted), observed->second});
  }
  if (set.cells.empty()) throw ValidationError("predictions file has no rows");
  for (const auto& [pid, count] : cells_per_participant) {
    const ResponseMap* responses = index.at(pid)->responses(set.target_inventory_id);
    if (count != responses->size()) {
      throw ValidationError("predictions cover " + std::to_string(count) + " of " +
                            std::to_string(responses->size()) + " items for participant " + pid);
    }
  }
  Evaluation out;
  out.report = score_predictions(set);
  out.predictions = std::move(set);
  return out;
}

StratumComparison stratified_compare(const PredictionSet& predictions, const Cohort& demographics,
                                     StratumKind kind) {
  const auto index = index_records(demographics);
  const MetricReport report = score_predictions(predictions);
  StratumComparison out;
  out.kind = kind;
  out.labels = kind == StratumKind::kSex ? std::array<std::string, 2>{"female", "male"}
                                         : std::array<std::string, 2>{"age<65", "age>=65"};
  std::array<std::vector<double>, 2> groups;
  for (const auto& row : report.per_participant) {
    auto it = index.find(row.key);
    if (it == index.end()) {
      ++out.skipped;
      continue;
    }
    const ParticipantRecord& r = *it->second;
    int group = -1;
    if (kind == StratumKind::kSex) {
      if (r.sex == Sex::kFemale) group = 0;
      if (r.sex == Sex::kMale) group = 1;
    } else if (r.age) {
      group = *r.age < kAgeCutoff ? 0 : 1;
    }
    if (group < 0) {
      ++out.skipped;
      continue;
    }
    groups[static_cast<std::size_t>(group)].push_back(row.ema);
  }
  for (std::size_t g = 0; g < 2; ++g) {
    if (groups[g].empty()) throw ValidationError("stratum " + out.labels[g] + " is empty");
    out.sizes[g] = groups[g].size();
    out.mean_ema[g] = stats::mean(groups[g]);
  }
  const auto welch = stats::welch_t_test(groups[0], groups[1]);
  out.cohens_d = stats::cohens_d(groups[0], groups[1]);
  out.welch_t = welch.t;
  out.welch_df = welch.df;
  out.p_value = welch.p_value;
  return out;
}

json to_json(const StratumComparison& c) {
  return {{"stratum", c.kind == StratumKind::kSex ? "sex" : "age"},
          {"groups", {{{"label", c.labels[0]}, {"n", c.sizes[0]}, {"mean_ema", c.mean_ema[0]}},
                      {{"label", c.labels[1]}, {"n", c.sizes[1]}, {"mean_ema", c.mean_ema[1]}}}},
          {"cohens_d", c.cohens_d},
          {"welch_t", c.welch_t},
          {"welch_df", c.welch_df},
          {"p_value", c.p_value},
          {"skipped", c.skipped}};
}

}  // namespace symx
