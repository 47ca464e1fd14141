#pragma once

// Seeded ground-truth fixtures: planted concept bases, divergence
// populations, near-duplicate distractors and level series.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finexl/concepts.hpp"
#include "finexl/divergence.hpp"
#include "finexl/evaluation.hpp"

namespace finexl {

/// Seeded Gaussian vectors orthonormalized by Gram-Schmidt (two passes).
std::vector<EmbeddingVector> orthonormal_basis(Eigen::Index dimension, std::size_t count,
                                               std::uint64_t seed);

struct SyntheticScenario {
  Eigen::Index dimension = 0;
  std::vector<EmbeddingVector> planted_basis;
  std::vector<double> planted_weights;
  std::vector<std::string> basis_labels;
  double noise_sigma = 0;
  std::size_t n_pairs = 0;
  std::uint64_t seed = 0;

  void validate() const;
  /// sum_i w_i * basis_i
  EmbeddingVector target() const;
};

/// Scenario over a fresh orthonormal basis; labels are "planted 1", "planted 2", ...
SyntheticScenario make_scenario(Eigen::Index dimension, std::vector<double> weights,
                                double noise_sigma, std::size_t n_pairs, std::uint64_t seed);

struct PlantedPopulation {
  std::vector<PairedGeneration> pairs;
  // Noiseless target.
  DivergenceVector target;
};

/// Pair i has personal - base = target + noise_i with noise_i ~ N(0, sigma^2 I).
/// Both embeddings are unit vectors (base = -d/2 + h u, personal = d/2 + h u,
/// u a unit vector orthogonal to d), so ingestion normalization leaves them
/// unchanged. Requires every ||d_i|| < 2.
PlantedPopulation plant_divergence(const SyntheticScenario& scenario);

/// Each distractor is a perturbed copy of a basis vector (cycled in order)
/// with |cos| to it drawn uniformly in [min_cos, 1) and a random sign.
std::vector<ConceptVector> make_distractors(std::span<const EmbeddingVector> basis,
                                            std::size_t count, double min_cos, std::uint64_t seed);

/// Planted concepts (frequency = 2 + distractor count) followed by distractors
/// (frequency 1), in candidate order.
std::vector<ConceptVector> planted_candidates(const SyntheticScenario& scenario,
                                              std::size_t n_distractors, double min_cos,
                                              std::uint64_t seed);

/// scores = slope * level + N(0, noise_sigma^2), levels 1..L in order.
LevelSeries synth_level_series(int levels, double slope, double noise_sigma, std::uint64_t seed);

}  // namespace finexl
