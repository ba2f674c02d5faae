#include "symx/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "symx/crosswalk.hpp"
#include "symx/embedding.hpp"
#include "symx/error.hpp"
#include "symx/evaluation.hpp"
#include "symx/inventory.hpp"
#include "symx/io.hpp"
#include "symx/service.hpp"

#ifndef SYMX_VERSION
#define SYMX_VERSION "0.0.0"
#endif

namespace symx::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::vector<std::string> inventories;
  std::string scores;
  std::vector<std::string> embeddings;
  std::string embed_service;
  std::size_t batch_size = 64;
  double tau = kDefaultTau;
  std::uint64_t seed = 0;
  std::string mode = "det";
  double ratio = 0.5;
  std::string out = "-";
  unsigned jobs = 1;
  bool quiet = false;

  // Subcommand specific.
  std::string model;
  std::vector<std::string> models;
  std::string bind = "127.0.0.1:8080";
  std::string pairs;
  std::string predictions;
  std::string item_metrics;
  std::string participant_metrics;
  std::string curve_csv;
  std::size_t repetitions = 20;
  bool smoothing = false;
  bool stratify = false;
};

class Logger {
 public:
  Logger(std::ostream& err, const bool& quiet) : err_(err), quiet_(quiet) {}
  void info(const std::string& message) const {
    if (!quiet_) err_ << "crosswalk: " << message << '\n';
  }
  void error(const std::string& message) const { err_ << "crosswalk: error: " << message << '\n'; }

 private:
  std::ostream& err_;
  const bool& quiet_;
};

void emit(std::ostream& out, const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    out << content;
    out.flush();
  } else {
    write_file_atomic(path, content);
  }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

std::vector<Inventory> load_inventories(const RunConfig& cfg) {
  std::vector<Inventory> out;
  for (const auto& path : cfg.inventories) out.push_back(load_inventory(path));
  return out;
}

/// Source and target of a directed operation; one inventory means A->A.
std::pair<Inventory, Inventory> direction(const RunConfig& cfg) {
  if (cfg.inventories.empty() || cfg.inventories.size() > 2) {
    throw ValidationError("expected --inventory <source> [<target>], got " +
                          std::to_string(cfg.inventories.size()) + " paths");
  }
  Inventory source = load_inventory(cfg.inventories.front());
  Inventory target = cfg.inventories.size() == 2 ? load_inventory(cfg.inventories.back()) : source;
  return {std::move(source), std::move(target)};
}

/// Rows of inventories that were not passed with --inventory are ignored.
Cohort load_cohort(const RunConfig& cfg, std::span<const Inventory> inventories) {
  if (cfg.scores.empty()) throw ValidationError("--scores is required");
  return deduplicate(load_scores(cfg.scores, inventories, {.skip_unknown_inventories = true}));
}

/// Vectors for the inventory from the configured backend. Several
/// --embeddings files are merged; later files never override earlier ones.
EmbeddingSet embed(const RunConfig& cfg, const Inventory& inventory) {
  if (!cfg.embed_service.empty()) {
    EmbeddingServiceOptions options;
    options.batch_size = cfg.batch_size;
    return fetch_embeddings(cfg.embed_service, inventory, options);
  }
  if (cfg.embeddings.empty()) throw ValidationError("one of --embeddings or --embed-service is required");
  json merged = {{"vectors", json::object()}};
  for (const auto& path : cfg.embeddings) {
    const json doc = read_json(path);
    if (!doc.is_object() || !doc.contains("vectors") || !doc["vectors"].is_object()) {
      throw ParseError(path + ": embedding document missing 'vectors' object");
    }
    if (!merged.contains("backend_tag") && doc.contains("backend_tag")) merged["backend_tag"] = doc["backend_tag"];
    for (const auto& [item, v] : doc["vectors"].items()) {
      if (!merged["vectors"].contains(item)) merged["vectors"][item] = v;
    }
  }
  return parse_embeddings(merged, inventory);
}

SimilarityMatrix similarity(const RunConfig& cfg, const Inventory& source, const Inventory& target) {
  const EmbeddingSet a = embed(cfg, source);
  if (&source == &target || source.id() == target.id()) return similarity_matrix(a, a, cfg.jobs);
  const EmbeddingSet b = embed(cfg, target);
  return similarity_matrix(a, b, cfg.jobs);
}

json link_map_json(const LinkMap& map, double tau) {
  json links = json::object();
  for (const auto& [item, link] : map.links) {
    links[item] = {{"source_item", link.source_item},
                   {"similarity", round_sig12(link.similarity)},
                   {"strong", link.similarity >= tau}};
  }
  return {{"source_inventory_id", map.source_inventory_id},
          {"target_inventory_id", map.target_inventory_id},
          {"tie_policy", map.tie_policy},
          {"tau", tau},
          {"links", std::move(links)}};
}

int cmd_validate(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const auto inventories = load_inventories(cfg);
  if (inventories.empty()) throw ValidationError("--inventory is required");
  json report = {{"inventories", json::array()}};
  for (const auto& inv : inventories) {
    json entry = {{"inventory_id", inv.id()}, {"items", inv.size()}};
    if (!cfg.embeddings.empty() || !cfg.embed_service.empty()) {
      const EmbeddingSet set = embed(cfg, inv);
      entry["embedding_dimension"] = set.dimension();
      entry["backend_tag"] = set.backend_tag();
    }
    report["inventories"].push_back(std::move(entry));
  }
  if (!cfg.scores.empty()) {
    const Cohort raw = load_scores(cfg.scores, inventories);
    const Cohort cohort = deduplicate(raw);
    std::size_t raw_admins = 0;
    std::size_t kept_admins = 0;
    for (const auto& r : raw.records) raw_admins += r.administrations.size();
    for (const auto& r : cohort.records) kept_admins += r.administrations.size();
    json completeness = json::object();
    for (const auto& inv : inventories) {
      const auto result = enforce_completeness(cohort, inv);
      completeness[inv.id()] = {{"complete", result.cohort.count_with(inv.id())},
                                {"incomplete", result.excluded},
                                {"absent", result.absent}};
    }
    report["scores"] = {{"participants", cohort.records.size()},
                        {"duplicate_administrations", raw_admins - kept_admins},
                        {"completeness", std::move(completeness)}};
  }
  log.info("inputs are valid");
  emit(out, cfg.out, dump(report));
  return 0;
}

int cmd_embed(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  if (cfg.embed_service.empty()) throw ValidationError("embed requires --embed-service");
  const auto inventories = load_inventories(cfg);
  if (inventories.empty()) throw ValidationError("--inventory is required");
  json doc = {{"vectors", json::object()}};
  for (const auto& inv : inventories) {
    const json part = serialize_embeddings(embed(cfg, inv));
    if (doc.contains("dimension") && doc["dimension"] != part["dimension"]) {
      throw TransportError("embedding dimension changed between inventories");
    }
    doc["backend_tag"] = part["backend_tag"];
    doc["dimension"] = part["dimension"];
    for (const auto& [item, v] : part["vectors"].items()) {
      if (doc["vectors"].contains(item)) throw ValidationError("item id " + item + " appears in two inventories");
      doc["vectors"][item] = v;
    }
    log.info("embedded " + std::to_string(inv.size()) + " items of " + inv.id());
  }
  emit(out, cfg.out, dump(doc));
  return 0;
}

int cmd_link(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const auto [source, target] = direction(cfg);
  const SimilarityMatrix m = similarity(cfg, source, target);
  const LinkMap map = build_link_map(m);
  json doc = link_map_json(map, cfg.tau);
  doc["backend_tag"] = m.backend_tag();
  json closest = json::array();
  for (const auto& p : closest_pairs(m)) {
    closest.push_back({{"target_item", p.item}, {"source_item", p.best_item}, {"similarity", round_sig12(p.similarity)}});
  }
  doc["closest_pairs"] = std::move(closest);
  if (!cfg.pairs.empty()) {
    std::ostringstream csv;
    const SimilarityMatrix matrices[] = {m};
    write_pair_report(csv, pair_report(matrices));
    emit(out, cfg.pairs, csv.str());
  }
  log.info("linked " + std::to_string(map.links.size()) + " target items");
  emit(out, cfg.out, dump(doc));
  return 0;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const auto inventories = load_inventories(cfg);
  if (inventories.empty()) throw ValidationError("--inventory is required");
  const Cohort cohort = load_cohort(cfg, inventories);
  json doc = json::object();
  for (const auto& inv : inventories) {
    const Calibration c = calibrate(cohort, inv, {cfg.smoothing});
    doc[inv.id()] = serialize_calibration(c);
    log.info("calibrated " + inv.id());
  }
  emit(out, cfg.out, dump(doc));
  return 0;
}

int cmd_build(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const auto [source, target] = direction(cfg);
  std::vector<Inventory> both{source};
  if (target.id() != source.id()) both.push_back(target);
  const Cohort cohort = load_cohort(cfg, both);
  const SimilarityMatrix m = similarity(cfg, source, target);
  const CrosswalkModel model = build_model({source, target, m, cohort, cohort, cfg.tau, {cfg.smoothing}});
  log.info("built " + source.id() + "->" + target.id() + " with " + std::to_string(model.fallbacks.size()) +
           " fallback items");
  emit(out, cfg.out, dump_model(model));
  return 0;
}

int cmd_convert(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  if (cfg.model.empty()) throw ValidationError("--model is required");
  const CrosswalkModel model = load_model_file(cfg.model);
  const auto inventories = load_inventories(cfg);
  const auto source = std::find_if(inventories.begin(), inventories.end(),
                                   [&](const Inventory& i) { return i.id() == model.source_inventory_id(); });
  if (source == inventories.end()) {
    throw ValidationError("--inventory must include the model source " + model.source_inventory_id());
  }
  const Cohort cohort = load_cohort(cfg, inventories);
  const ConversionMode mode = parse_mode(cfg.mode);

  auto ids = cohort.participant_ids();
  std::sort(ids.begin(), ids.end());
  Rng rng(cfg.seed);
  PredictionSet predictions;
  predictions.source_inventory_id = model.source_inventory_id();
  predictions.target_inventory_id = model.target_inventory_id();
  std::size_t converted = 0;
  for (const auto& id : ids) {
    const ResponseMap* responses = cohort.find(id)->responses(model.source_inventory_id());
    if (!responses) continue;
    ConversionResult result;
    try {
      result = convert_participant(model, *responses, mode, mode == ConversionMode::kStochastic ? &rng : nullptr);
    } catch (const ResponseError& e) {
      throw ValidationError("participant " + id + ": " + e.what());
    }
    for (const auto& [item, score] : result.estimates) predictions.cells.push_back({id, item, score, score});
    ++converted;
  }
  if (converted == 0) throw ValidationError("no participant holds " + model.source_inventory_id() + " responses");
  std::ostringstream csv;
  write_predictions_csv(csv, predictions);
  log.info("converted " + std::to_string(converted) + " participants");
  emit(out, cfg.out, csv.str());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const auto [source, target] = direction(cfg);
  std::vector<Inventory> both{source};
  if (target.id() != source.id()) both.push_back(target);
  const Cohort cohort = load_cohort(cfg, both);

  const Inventory* pair[] = {&source, &target};
  const auto dual = complete_participants(cohort, pair);
  const SplitPlan plan = split(dual, cfg.ratio, cfg.seed);
  const std::set<std::string> test_set(plan.test.begin(), plan.test.end());
  std::vector<std::string> training_ids;
  for (const auto& id : cohort.participant_ids()) {
    if (!test_set.contains(id)) training_ids.push_back(id);
  }
  const Cohort training = subset(cohort, training_ids);
  log.info("split " + std::to_string(dual.size()) + " dual participants: " + std::to_string(plan.test.size()) +
           " test, " + std::to_string(training_ids.size()) + " training");

  const SimilarityMatrix m = similarity(cfg, source, target);
  const CrosswalkModel model = build_model({source, target, m, training, training, cfg.tau, {cfg.smoothing}});
  const ConversionMode mode = parse_mode(cfg.mode);
  const Evaluation crosswalk = evaluate_crosswalk({model, cohort, plan.test, training_ids, mode, cfg.seed});

  const OlsBaseline baseline = OlsBaseline::fit(training, source, target);
  const Evaluation ols = evaluate_baseline(baseline, cohort, plan.test, training_ids);
  const Cohort test = subset(cohort, plan.test);
  const double bound = within_inventory_bound(training, test, target);

  json report = {{"split", {{"seed", cfg.seed}, {"ratio", cfg.ratio}, {"dual_participants", dual.size()},
                            {"test", plan.test.size()}, {"training", training_ids.size()}}},
                 {"tau", cfg.tau},
                 {"mode", to_string(mode)},
                 {"backend_tag", model.backend_tag},
                 {"crosswalk", to_json(crosswalk.report)},
                 {"ols_baseline", to_json(ols.report)},
                 {"ols_intercept_only_items", baseline.intercept_only_count()},
                 {"within_inventory_bound_ema", bound}};
  if (cfg.stratify) {
    report["stratified"] = {to_json(stratified_compare(crosswalk.predictions, cohort, StratumKind::kSex)),
                            to_json(stratified_compare(crosswalk.predictions, cohort, StratumKind::kAge))};
  }
  if (!cfg.predictions.empty()) {
    std::ostringstream csv;
    write_predictions_csv(csv, crosswalk.predictions);
    emit(out, cfg.predictions, csv.str());
  }
  if (!cfg.item_metrics.empty()) {
    std::ostringstream csv;
    write_item_metrics_csv(csv, crosswalk.report);
    emit(out, cfg.item_metrics, csv.str());
  }
  if (!cfg.participant_metrics.empty()) {
    std::ostringstream csv;
    write_participant_metrics_csv(csv, crosswalk.report);
    emit(out, cfg.participant_metrics, csv.str());
  }
  log.info("crosswalk EMA " + format_fixed(crosswalk.report.ema, 2) + "%, OLS EMA " + format_fixed(ols.report.ema, 2) +
           "%, within bound " + format_fixed(bound, 2) + "%");
  emit(out, cfg.out, dump(report));
  return 0;
}

int cmd_within(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const auto inventories = load_inventories(cfg);
  if (inventories.size() != 1) throw ValidationError("within takes exactly one --inventory");
  const Cohort cohort = load_cohort(cfg, inventories);
  const WithinCurve curve = within_inventory_curve(cohort, inventories.front(), cfg.seed, cfg.repetitions, cfg.ratio);
  json points = json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"regressors", p.regressors}, {"mean_ema", p.mean_ema}, {"sd_ema", p.sd_ema}, {"fits", p.fits}});
  }
  const json doc = {{"inventory_id", curve.inventory_id},
                    {"seed", cfg.seed},
                    {"repetitions", cfg.repetitions},
                    {"train_size", curve.train_size},
                    {"test_size", curve.test_size},
                    {"all_items_ema", curve.all_items_ema},
                    {"points", std::move(points)}};
  if (!cfg.curve_csv.empty()) {
    std::ostringstream csv;
    csv << "regressors,mean_ema,sd_ema,fits\n";
    for (const auto& p : curve.points) {
      csv << p.regressors << ',' << format_fixed(p.mean_ema, 4) << ',' << format_fixed(p.sd_ema, 4) << ',' << p.fits
          << '\n';
    }
    emit(out, cfg.curve_csv, csv.str());
  }
  log.info("all-items bound " + format_fixed(curve.all_items_ema, 2) + "%");
  emit(out, cfg.out, dump(doc));
  return 0;
}

int cmd_score_external(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  if (cfg.predictions.empty()) throw ValidationError("--predictions is required");
  const auto inventories = load_inventories(cfg);
  if (inventories.empty()) throw ValidationError("--inventory is required");
  const Cohort cohort = load_cohort(cfg, inventories);
  std::ifstream in(cfg.predictions, std::ios::binary);
  if (!in) throw Error("cannot open " + cfg.predictions);
  Evaluation eval;
  try {
    eval = score_external(in, cohort, fs::path(cfg.predictions).stem().string());
  } catch (const ParseError& e) {
    throw ParseError(cfg.predictions + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(cfg.predictions + ": " + e.what());
  }
  json report = to_json(eval.report);
  if (cfg.stratify) {
    report["stratified"] = {to_json(stratified_compare(eval.predictions, cohort, StratumKind::kSex)),
                            to_json(stratified_compare(eval.predictions, cohort, StratumKind::kAge))};
  }
  if (!cfg.item_metrics.empty()) {
    std::ostringstream csv;
    write_item_metrics_csv(csv, eval.report);
    emit(out, cfg.item_metrics, csv.str());
  }
  log.info("external EMA " + format_fixed(eval.report.ema, 2) + "%");
  emit(out, cfg.out, dump(report));
  return 0;
}

int cmd_serve(const RunConfig& cfg, std::ostream&, const Logger& log) {
  std::vector<fs::path> inventories(cfg.inventories.begin(), cfg.inventories.end());
  std::vector<fs::path> models(cfg.models.begin(), cfg.models.end());
  const ServiceState state = ServiceState::load(inventories, models);
  const auto [host, port] = parse_bind(cfg.bind);
  log.info("serving " + std::to_string(state.models().size()) + " models on " + host + ":" + std::to_string(port));
  serve(state, host, port);
  return 0;
}

CLI::Option* add_inventory(CLI::App* app, RunConfig& cfg, const std::string& help) {
  return app->add_option("--inventory", cfg.inventories, help)->check(CLI::ExistingFile)->expected(1, -1);
}

void add_scores(CLI::App* app, RunConfig& cfg) {
  app->add_option("--scores", cfg.scores, "Long-format score CSV")
      ->check(CLI::ExistingFile)
      ->envname("CROSSWALK_SCORES");
}

void add_backend(CLI::App* app, RunConfig& cfg) {
  auto* files = app->add_option("--embeddings", cfg.embeddings, "Embedding JSON file(s) keyed by item id")
                    ->check(CLI::ExistingFile)
                    ->expected(1, -1);
  auto* service = app->add_option("--embed-service", cfg.embed_service, "Embedding service base URL (http://...)")
                      ->envname("CROSSWALK_EMBED_SERVICE");
  files->excludes(service);
  app->add_option("--batch-size", cfg.batch_size, "Texts per embedding request")
      ->check(CLI::PositiveNumber)
      ->envname("CROSSWALK_BATCH_SIZE");
}

void add_tau(CLI::App* app, RunConfig& cfg) {
  app->add_option("--tau", cfg.tau, "Similarity threshold for a strong link")
      ->check(CLI::Range(0.0, 1.0))
      ->envname("CROSSWALK_TAU")
      ->capture_default_str();
  app->add_flag("--smoothing", cfg.smoothing, "Add-one smoothing of calibration proportions");
}

void add_seed(CLI::App* app, RunConfig& cfg) {
  app->add_option("--seed", cfg.seed, "Seed for every random choice")->envname("CROSSWALK_SEED")->capture_default_str();
}

void add_mode(CLI::App* app, RunConfig& cfg) {
  app->add_option("--mode", cfg.mode, "Conversion mode")
      ->check(CLI::IsMember({"det", "deterministic", "stoch", "stochastic"}))
      ->envname("CROSSWALK_MODE")
      ->capture_default_str();
}

void add_ratio(CLI::App* app, RunConfig& cfg) {
  app->add_option("--ratio", cfg.ratio, "Training share of the participant split")
      ->check(CLI::Validator(
          [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v) || !(v > 0.0 && v < 1.0)) return "ratio must lie in (0,1)";
            return {};
          },
          "(0,1)"))
      ->envname("CROSSWALK_RATIO")
      ->capture_default_str();
}

void add_out(CLI::App* app, RunConfig& cfg, const std::string& help) {
  app->add_option("--out", cfg.out, help + " ('-' for stdout)")->capture_default_str();
}

void add_jobs(CLI::App* app, RunConfig& cfg) {
  app->add_option("--jobs", cfg.jobs, "Worker thread cap")
      ->check(CLI::PositiveNumber)
      ->envname("CROSSWALK_JOBS")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  const Logger log(err, cfg.quiet);

  CLI::App app{"Symptom inventory crosswalk: link items by embedding similarity and convert scores", "crosswalk"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", json{{"name", "crosswalk"}, {"version", SYMX_VERSION}}.dump());
  app.add_flag("-q,--quiet", cfg.quiet, "Suppress progress messages on stderr")->envname("CROSSWALK_QUIET");

  using Handler = int (*)(const RunConfig&, std::ostream&, const Logger&);
  std::vector<std::pair<CLI::App*, Handler>> commands;

  auto* validate = app.add_subcommand("validate", "Check inventories, scores and embeddings; print a summary");
  add_inventory(validate, cfg, "Inventory JSON file(s)")->required();
  add_scores(validate, cfg);
  add_backend(validate, cfg);
  add_out(validate, cfg, "Summary JSON");
  commands.emplace_back(validate, cmd_validate);

  auto* embed_cmd = app.add_subcommand("embed", "Fetch item embeddings from a service into one JSON file");
  add_inventory(embed_cmd, cfg, "Inventory JSON file(s)")->required();
  embed_cmd->add_option("--embed-service", cfg.embed_service, "Embedding service base URL")
      ->envname("CROSSWALK_EMBED_SERVICE")
      ->required();
  embed_cmd->add_option("--batch-size", cfg.batch_size, "Texts per request")->check(CLI::PositiveNumber);
  add_out(embed_cmd, cfg, "Embedding JSON");
  commands.emplace_back(embed_cmd, cmd_embed);

  auto* link = app.add_subcommand("link", "Nearest-neighbour link map from source to target");
  add_inventory(link, cfg, "Source then target inventory JSON")->required()->expected(1, 2);
  add_backend(link, cfg);
  add_tau(link, cfg);
  add_jobs(link, cfg);
  link->add_option("--pairs", cfg.pairs, "Also write every pairwise similarity as CSV");
  add_out(link, cfg, "Link map JSON");
  commands.emplace_back(link, cmd_link);

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Per-item cumulative thresholds");
  add_inventory(calibrate_cmd, cfg, "Inventory JSON file(s)")->required();
  add_scores(calibrate_cmd, cfg);
  calibrate_cmd->get_option("--scores")->required();
  calibrate_cmd->add_flag("--smoothing", cfg.smoothing, "Add-one smoothing of proportions");
  add_out(calibrate_cmd, cfg, "Calibration JSON");
  commands.emplace_back(calibrate_cmd, cmd_calibrate);

  auto* build = app.add_subcommand("build", "Build a crosswalk model artifact");
  add_inventory(build, cfg, "Source then target inventory JSON")->required()->expected(1, 2);
  add_scores(build, cfg);
  build->get_option("--scores")->required();
  add_backend(build, cfg);
  add_tau(build, cfg);
  add_jobs(build, cfg);
  add_out(build, cfg, "Model artifact JSON");
  commands.emplace_back(build, cmd_build);

  auto* convert = app.add_subcommand("convert", "Convert participant scores with a model");
  convert->add_option("--model", cfg.model, "Model artifact JSON")->check(CLI::ExistingFile)->required();
  add_inventory(convert, cfg, "Inventory JSON file(s) including the model source")->required();
  add_scores(convert, cfg);
  convert->get_option("--scores")->required();
  add_mode(convert, cfg);
  add_seed(convert, cfg);
  add_out(convert, cfg, "Predictions CSV");
  commands.emplace_back(convert, cmd_convert);

  auto* evaluate = app.add_subcommand("evaluate", "Split a dual cohort, build on training and score the test set");
  add_inventory(evaluate, cfg, "Source then target inventory JSON")->required()->expected(1, 2);
  add_scores(evaluate, cfg);
  evaluate->get_option("--scores")->required();
  add_backend(evaluate, cfg);
  add_tau(evaluate, cfg);
  add_seed(evaluate, cfg);
  add_mode(evaluate, cfg);
  add_ratio(evaluate, cfg);
  add_jobs(evaluate, cfg);
  evaluate->add_option("--predictions", cfg.predictions, "Also write test-set predictions CSV");
  evaluate->add_option("--item-metrics", cfg.item_metrics, "Also write per-item metric CSV");
  evaluate->add_option("--participant-metrics", cfg.participant_metrics, "Also write per-participant metric CSV");
  evaluate->add_flag("--stratify", cfg.stratify, "Add sex and age stratified comparisons");
  add_out(evaluate, cfg, "MetricReport JSON");
  commands.emplace_back(evaluate, cmd_evaluate);

  auto* within = app.add_subcommand("within", "Within-inventory accuracy against number of regressors");
  add_inventory(within, cfg, "Inventory JSON")->required()->expected(1);
  add_scores(within, cfg);
  within->get_option("--scores")->required();
  add_seed(within, cfg);
  add_ratio(within, cfg);
  within->add_option("--repetitions", cfg.repetitions, "Random regressor draws per size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  within->add_option("--curve-csv", cfg.curve_csv, "Also write the curve as CSV");
  add_out(within, cfg, "Curve JSON");
  commands.emplace_back(within, cmd_within);

  auto* external = app.add_subcommand("score-external", "Score a third-party prediction CSV");
  external->add_option("--predictions", cfg.predictions, "participant_id,target_inventory_id,item_id,predicted_score")
      ->check(CLI::ExistingFile)
      ->required();
  add_inventory(external, cfg, "Inventory JSON file(s)")->required();
  add_scores(external, cfg);
  external->get_option("--scores")->required();
  external->add_option("--item-metrics", cfg.item_metrics, "Also write per-item metric CSV");
  external->add_flag("--stratify", cfg.stratify, "Add sex and age stratified comparisons");
  add_out(external, cfg, "MetricReport JSON");
  commands.emplace_back(external, cmd_score_external);

  auto* serve_cmd = app.add_subcommand("serve", "Serve loaded models over HTTP under /v1");
  add_inventory(serve_cmd, cfg, "Inventory JSON file(s) to advertise");
  serve_cmd->add_option("--models", cfg.models, "Model artifact file(s)")
      ->check(CLI::ExistingFile)
      ->expected(1, -1)
      ->envname("CROSSWALK_MODELS");
  serve_cmd->add_option("--bind", cfg.bind, "host:port")->envname("CROSSWALK_BIND")->capture_default_str();
  commands.emplace_back(serve_cmd, cmd_serve);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    for (const auto& [sub, handler] : commands) {
      if (sub->parsed()) return handler(cfg, out, log);
    }
  } catch (const std::exception& e) {
    log.error(e.what());
    return 1;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace symx::cli
