#include <cmath>

#include <gtest/gtest.h>

#include "finexl/backends/records.hpp"
#include "finexl/decomposition.hpp"
#include "finexl/random.hpp"
#include "finexl/synthbench.hpp"
#include "oracles.hpp"

using finexl::EmbeddingVector;

TEST(orthonormal_basis, small_pair_is_orthonormal) {
  const auto b = finexl::orthonormal_basis(4, 2, 7);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_LT(std::abs(finexl::cosine(b[0], b[1])), 1e-9);
  for (const auto& v : b) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
}

TEST(orthonormal_basis, full_basis_reconstructs_any_vector) {
  const auto b = finexl::orthonormal_basis(8, 8, 3);
  finexl::Rng rng(90);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = rng.gaussian_vector(8);
    EmbeddingVector back = EmbeddingVector::Zero(8);
    for (const auto& q : b) back += q.dot(x) * q;
    EXPECT_LT((back - x).norm(), 1e-10);
  }
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j) EXPECT_LT(std::abs(b[i].dot(b[j])), 1e-12);
}

TEST(orthonormal_basis, more_vectors_than_dimensions) {
  EXPECT_THROW(finexl::orthonormal_basis(3, 5, 1), finexl::ValidationError);
}

TEST(plant_divergence, noiseless_population_recovers_target) {
  const auto s = finexl::make_scenario(16, {0.6, 0.3, 0.1}, 0.0, 50, 11);
  const auto pop = finexl::plant_divergence(s);
  ASSERT_EQ(pop.pairs.size(), 50u);
  const auto est = finexl::estimate_divergence(pop.pairs, "synthetic");
  EXPECT_LT((est.vector - s.target()).cwiseAbs().maxCoeff(), 1e-12);
  for (const auto& p : pop.pairs) {
    EXPECT_NEAR(p.base_embedding.norm(), 1.0, 1e-12);
    EXPECT_NEAR(p.personal_embedding.norm(), 1.0, 1e-12);
  }
}

TEST(plant_divergence, noisy_weights_within_tolerance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = finexl::make_scenario(32, {0.5, 0.3, 0.2}, 0.05, 500, seed);
    const auto pop = finexl::plant_divergence(s);
    const auto est = finexl::estimate_divergence(pop.pairs, "synthetic");
    const auto fit = finexl::least_squares(s.planted_basis, est.vector);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(fit.weights(static_cast<Eigen::Index>(i)), s.planted_weights[i], 0.02) << "seed " << seed;
    }
  }
}

TEST(plant_divergence, zero_weights_give_zero_target) {
  const auto s = finexl::make_scenario(8, {0.0, 0.0}, 0.0, 10, 5);
  EXPECT_EQ(s.target(), EmbeddingVector::Zero(8));
  const auto pop = finexl::plant_divergence(s);
  EXPECT_LT(finexl::estimate_divergence(pop.pairs, "synthetic").vector.norm(), 1e-12);
}

TEST(plant_divergence, oversized_target_is_rejected) {
  const auto s = finexl::make_scenario(8, {2.5}, 0.0, 10, 5);
  EXPECT_THROW(finexl::plant_divergence(s), finexl::ValidationError);
}

TEST(plant_divergence, survives_ingestion_normalization) {
  const auto s = finexl::make_scenario(12, {0.4, 0.2}, 0.02, 40, 21);
  const auto pop = finexl::plant_divergence(s);
  std::vector<finexl::backends::EmbeddingRecord> records;
  for (const auto& p : pop.pairs) {
    records.push_back({p.prompt_id, finexl::backends::Role::base, std::nullopt, "synthetic", p.base_embedding});
    records.push_back({p.prompt_id, finexl::backends::Role::personal, std::nullopt, "synthetic", p.personal_embedding});
  }
  const auto normalized = finexl::pair_generations(records);
  const auto a = finexl::estimate_divergence(pop.pairs, "synthetic").vector;
  const auto b = finexl::estimate_divergence(normalized, "synthetic").vector;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(make_distractors, near_duplicates_fail_orthogonality) {
  const auto basis = finexl::orthonormal_basis(16, 3, 2);
  const auto distractors = finexl::make_distractors(basis, 30, 0.95, 4);
  ASSERT_EQ(distractors.size(), 30u);
  for (std::size_t i = 0; i < distractors.size(); ++i) {
    const auto& parent = basis[i % basis.size()];
    const double c = std::abs(finexl::cosine(distractors[i].vector, parent));
    EXPECT_GE(c, 0.95 - 1e-12);
    EXPECT_LT(c, 1.0);
    const std::vector<EmbeddingVector> retained{parent};
    EXPECT_GE(finexl::orthogonality_score(distractors[i].vector, retained), 0.3);
    EXPECT_EQ(distractors[i].term.frequency, 1);
  }
}

TEST(make_distractors, tight_bound_and_determinism) {
  const auto basis = finexl::orthonormal_basis(10, 2, 6);
  const auto a = finexl::make_distractors(basis, 12, 0.99, 13);
  const auto b = finexl::make_distractors(basis, 12, 0.99, 13);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(std::abs(finexl::cosine(a[i].vector, basis[i % 2])), 0.99 - 1e-12);
    EXPECT_EQ(a[i].vector, b[i].vector);
    EXPECT_EQ(a[i].term.label, b[i].term.label);
  }
  EXPECT_THROW(finexl::make_distractors(basis, 3, 1.0, 1), finexl::ValidationError);
}

TEST(level_series, noiseless_positive_slope_is_perfect) {
  EXPECT_EQ(finexl::rank_mae(finexl::synth_level_series(6, 0.5, 0.0, 1)), 0.0);
}

TEST(level_series, negative_slope_reverses) {
  EXPECT_NEAR(finexl::rank_mae(finexl::synth_level_series(3, -1.0, 0.0, 1)), 4.0 / 3.0, 1e-15);
}

TEST(level_series, pure_noise_matches_permutation_average) {
  for (int levels = 2; levels <= 5; ++levels) {
    double total = 0;
    const int trials = 4000;
    for (int s = 0; s < trials; ++s) {
      total += finexl::rank_mae(finexl::synth_level_series(levels, 0.0, 1.0, static_cast<std::uint64_t>(s)));
    }
    EXPECT_NEAR(total / trials, oracle::permutation_average_rank_mae(levels), 0.05) << levels;
  }
}

TEST(synthbench, same_seed_is_bit_identical) {
  const auto s1 = finexl::make_scenario(20, {0.3, 0.2, 0.1}, 0.05, 30, 99);
  const auto s2 = finexl::make_scenario(20, {0.3, 0.2, 0.1}, 0.05, 30, 99);
  const auto p1 = finexl::plant_divergence(s1);
  const auto p2 = finexl::plant_divergence(s2);
  for (std::size_t i = 0; i < p1.pairs.size(); ++i) {
    EXPECT_EQ(p1.pairs[i].base_embedding, p2.pairs[i].base_embedding);
    EXPECT_EQ(p1.pairs[i].personal_embedding, p2.pairs[i].personal_embedding);
  }
  const auto c1 = finexl::planted_candidates(s1, 10, 0.9, 5);
  const auto c2 = finexl::planted_candidates(s2, 10, 0.9, 5);
  for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_EQ(c1[i].vector, c2[i].vector);

  const auto other = finexl::plant_divergence(finexl::make_scenario(20, {0.3, 0.2, 0.1}, 0.05, 30, 100));
  EXPECT_NE(other.pairs[0].personal_embedding, p1.pairs[0].personal_embedding);
}

TEST(synthbench, noiseless_end_to_end_recovers_weights) {
  const auto s = finexl::make_scenario(24, {0.45, 0.25, 0.2, 0.1}, 0.0, 20, 17);
  const auto est = finexl::estimate_divergence(finexl::plant_divergence(s).pairs, "synthetic");
  const auto expl = finexl::run_finexl(est, finexl::planted_candidates(s, 15, 0.9, 18), {0.3, 0.05});
  ASSERT_EQ(expl.entries.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(expl.entries[i].weight, s.planted_weights[i], 1e-9);
}
