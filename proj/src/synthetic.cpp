#include "symx/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "symx/error.hpp"
#include "symx/random.hpp"

namespace symx {

namespace {

struct Concept {
  double loading;
  double offset;
  std::vector<double> direction;
};

const std::vector<std::string>& anchor_labels(bool source) {
  static const std::vector<std::string> a{"Not at all", "A little bit", "Moderately", "Quite a bit",
                                          "Extremely"};
  static const std::vector<std::string> b{"None", "Mild", "Moderate", "Severe", "Very severe"};
  return source ? a : b;
}

std::string two_digits(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

int discretize(double value, const std::array<double, 4>& cuts) {
  int score = 0;
  for (double c : cuts) score += value > c ? 1 : 0;
  return score;
}

std::vector<double> perturbed(const std::vector<double>& base, double sd, Rng& rng) {
  std::vector<double> out(base);
  for (double& v : out) v += sd * rng.normal();
  return out;
}

}  // namespace

SyntheticStudy generate_study(const SyntheticConfig& cfg) {
  if (cfg.items_per_inventory < 2 || cfg.shared_concepts > cfg.items_per_inventory) {
    throw ValidationError("synthetic study needs >= 2 items and shared_concepts <= items");
  }
  if (cfg.dimension < 2) throw ValidationError("synthetic embedding dimension must be >= 2");
  Rng rng(cfg.seed);
  const std::size_t unique = cfg.items_per_inventory - cfg.shared_concepts;
  const std::size_t concept_count = cfg.shared_concepts + 2 * unique;

  std::vector<Concept> concepts;
  for (std::size_t c = 0; c < concept_count; ++c) {
    Concept k;
    k.loading = 0.85 + 0.3 * rng.uniform01();
    k.offset = -0.25 + 0.5 * rng.uniform01();
    k.direction.resize(cfg.dimension);
    for (double& v : k.direction) v = rng.normal();
    concepts.push_back(std::move(k));
  }
  // Source uses concepts [0, items); target uses the shared block plus its own.
  std::vector<std::size_t> source_concepts, target_concepts;
  for (std::size_t i = 0; i < cfg.items_per_inventory; ++i) source_concepts.push_back(i);
  for (std::size_t i = 0; i < cfg.shared_concepts; ++i) target_concepts.push_back(i);
  for (std::size_t i = 0; i < unique; ++i) target_concepts.push_back(cfg.items_per_inventory + i);

  std::vector<Item> source_items, target_items;
  for (std::size_t i = 0; i < source_concepts.size(); ++i) {
    source_items.push_back({"a" + two_digits(i + 1),
                            "Synthetic symptom concept " + two_digits(source_concepts[i] + 1), std::nullopt});
  }
  for (std::size_t i = 0; i < target_concepts.size(); ++i) {
    target_items.push_back({"b" + two_digits(i + 1),
                            "Trouble with synthetic concept " + two_digits(target_concepts[i] + 1),
                            std::nullopt});
  }
  Inventory source("SYN-A", "Synthetic inventory A", "past 7 days", LikertScale(anchor_labels(true)),
                   std::move(source_items));
  Inventory target("SYN-B", "Synthetic inventory B", "past 2 weeks", LikertScale(anchor_labels(false)),
                   std::move(target_items));

  std::map<std::string, EmbeddingVector> source_vectors, target_vectors;
  for (std::size_t i = 0; i < source_concepts.size(); ++i) {
    source_vectors.emplace(source.items()[i].item_id,
                           EmbeddingVector(perturbed(concepts[source_concepts[i]].direction,
                                                     cfg.embedding_noise, rng)));
  }
  for (std::size_t i = 0; i < target_concepts.size(); ++i) {
    target_vectors.emplace(target.items()[i].item_id,
                           EmbeddingVector(perturbed(concepts[target_concepts[i]].direction,
                                                     cfg.embedding_noise, rng)));
  }

  Cohort cohort;
  cohort.provenance = "synthetic latent-trait seed=" + std::to_string(cfg.seed);
  for (std::size_t p = 0; p < cfg.participants; ++p) {
    ParticipantRecord record;
    record.participant_id = "P" + std::to_string(100000 + p);
    record.sex = rng.uniform01() < cfg.female_fraction ? Sex::kFemale : Sex::kMale;
    record.age = std::floor(18.0 + 62.0 * rng.uniform01());
    const double severity = rng.normal();
    const auto administer = [&](const Inventory& inv, const std::vector<std::size_t>& ids,
                                const std::array<double, 4>& cuts, std::size_t order) {
      Administration admin;
      admin.inventory_id = inv.id();
      admin.file_order = order;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const Concept& k = concepts[ids[i]];
        const double value = k.loading * severity + k.offset + cfg.noise_sd * rng.normal();
        admin.scores.emplace(inv.items()[i].item_id, discretize(value, cuts));
      }
      return admin;
    };
    record.administrations.push_back(administer(source, source_concepts, cfg.source_cuts, 2 * p));
    record.administrations.push_back(administer(target, target_concepts, cfg.target_cuts, 2 * p + 1));
    cohort.records.push_back(std::move(record));
  }

  EmbeddingSet source_embeddings(source, std::move(source_vectors), "synthetic-concepts");
  EmbeddingSet target_embeddings(target, std::move(target_vectors), "synthetic-concepts");
  return SyntheticStudy{std::move(source), std::move(target), std::move(cohort), std::move(source_embeddings),
                        std::move(target_embeddings)};
}

}  // namespace symx
