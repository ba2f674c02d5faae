#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "symx/embedding.hpp"
#include "symx/inventory.hpp"

namespace symx {

/// Latent-trait generator for dual-administration studies. Each participant
/// has one latent severity; an item response is the number of anchor cut
/// points below loading * severity + offset + noise. The two inventories
/// share `shared_concepts` item concepts and differ in anchor cut points.
struct SyntheticConfig {
  std::size_t participants = 2000;
  std::size_t items_per_inventory = 16;
  std::size_t shared_concepts = 12;
  std::size_t dimension = 32;
  double noise_sd = 0.45;
  double embedding_noise = 0.12;
  std::array<double, 4> source_cuts{-0.45, 0.30, 0.95, 1.60};
  std::array<double, 4> target_cuts{-0.85, -0.20, 0.45, 1.15};
  double female_fraction = 0.3;
  std::uint64_t seed = 20240611;
};

struct SyntheticStudy {
  Inventory source;
  Inventory target;
  Cohort cohort;  // every participant took both inventories
  EmbeddingSet source_embeddings;
  EmbeddingSet target_embeddings;
};

SyntheticStudy generate_study(const SyntheticConfig& config = {});

}  // namespace symx
