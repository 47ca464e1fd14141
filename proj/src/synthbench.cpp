#include "finexl/synthbench.hpp"

#include <cmath>

#include "finexl/random.hpp"

namespace finexl {

namespace {

// Removes the components of v along each (unit) vector in `against`, twice.
void orthogonalize(EmbeddingVector& v, std::span<const EmbeddingVector> against) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : against) v -= dot(v, q) * q;
  }
}

}  // namespace

std::vector<EmbeddingVector> orthonormal_basis(Eigen::Index dimension, std::size_t count,
                                               std::uint64_t seed) {
  if (dimension < 1) throw ValidationError("orthonormal_basis: dimension must be >= 1");
  if (count > static_cast<std::size_t>(dimension)) {
    throw ValidationError("orthonormal_basis: count " + std::to_string(count) +
                          " exceeds dimension " + std::to_string(dimension));
  }
  Rng rng(seed);
  std::vector<EmbeddingVector> basis;
  basis.reserve(count);
  while (basis.size() < count) {
    EmbeddingVector v = rng.gaussian_vector(dimension);
    orthogonalize(v, basis);
    const double n = norm(v);
    if (n < 1e-8) continue;  // numerically inside the current span; redraw
    basis.push_back(v / n);
  }
  return basis;
}

void SyntheticScenario::validate() const {
  if (dimension < 1) throw ValidationError("scenario: dimension must be >= 1");
  if (planted_basis.size() != planted_weights.size()) {
    throw ValidationError("scenario: weights length must equal basis length");
  }
  if (!basis_labels.empty() && basis_labels.size() != planted_basis.size()) {
    throw ValidationError("scenario: labels length must equal basis length");
  }
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("scenario: noise_sigma must be >= 0");
  }
  if (n_pairs < 1) throw ValidationError("scenario: n_pairs must be >= 1");
  for (std::size_t i = 0; i < planted_basis.size(); ++i) {
    require_same_dim(planted_basis[i].size(), dimension, "scenario");
    if (std::abs(norm(planted_basis[i]) - 1.0) > 1e-9) {
      throw ValidationError("scenario: basis vectors must be unit norm");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(cosine(planted_basis[i], planted_basis[j])) >= 1e-9) {
        throw ValidationError("scenario: basis is not orthogonal");
      }
    }
  }
  for (double w : planted_weights) {
    if (!std::isfinite(w)) throw ValidationError("scenario: non-finite weight");
  }
}

EmbeddingVector SyntheticScenario::target() const {
  EmbeddingVector t = EmbeddingVector::Zero(dimension);
  for (std::size_t i = 0; i < planted_basis.size(); ++i) t += planted_weights[i] * planted_basis[i];
  return t;
}

SyntheticScenario make_scenario(Eigen::Index dimension, std::vector<double> weights,
                                double noise_sigma, std::size_t n_pairs, std::uint64_t seed) {
  SyntheticScenario s;
  s.dimension = dimension;
  s.planted_basis = orthonormal_basis(dimension, weights.size(), seed);
  s.planted_weights = std::move(weights);
  for (std::size_t i = 0; i < s.planted_weights.size(); ++i) {
    s.basis_labels.push_back("planted " + std::to_string(i + 1));
  }
  s.noise_sigma = noise_sigma;
  s.n_pairs = n_pairs;
  s.seed = seed;
  return s;
}

PlantedPopulation plant_divergence(const SyntheticScenario& scenario) {
  scenario.validate();
  if (scenario.dimension < 2) throw ValidationError("plant_divergence: dimension must be >= 2");

  PlantedPopulation out;
  out.target = {scenario.target(), scenario.n_pairs, "synthetic"};
  // Distinct stream from the basis draw.
  Rng rng(scenario.seed ^ 0x9E3779B97F4A7C15ULL);
  out.pairs.reserve(scenario.n_pairs);
  for (std::size_t i = 0; i < scenario.n_pairs; ++i) {
    EmbeddingVector d = out.target.vector;
    if (scenario.noise_sigma > 0) d += rng.gaussian_vector(scenario.dimension, scenario.noise_sigma);
    const double dn = norm(d);
    if (!(dn < 2.0)) {
      throw ValidationError("plant_divergence: pair difference norm " + std::to_string(dn) +
                            " must be < 2 for unit-norm embeddings");
    }
    EmbeddingVector u;
    do {
      u = rng.gaussian_vector(scenario.dimension);
      if (dn > 0) {
        const EmbeddingVector dhat = d / dn;
        u -= dot(u, dhat) * dhat;
        u -= dot(u, dhat) * dhat;
      }
    } while (norm(u) < 1e-8);
    u /= norm(u);
    const double h = std::sqrt(1.0 - 0.25 * dn * dn);
    PairedGeneration p;
    p.prompt_id = "p" + std::to_string(i);
    p.base_embedding = -0.5 * d + h * u;
    p.personal_embedding = 0.5 * d + h * u;
    p.generation_seed = static_cast<std::int64_t>(i);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

std::vector<ConceptVector> make_distractors(std::span<const EmbeddingVector> basis,
                                            std::size_t count, double min_cos, std::uint64_t seed) {
  if (!(min_cos > 0 && min_cos < 1)) throw ValidationError("make_distractors: min_cos must be in (0, 1)");
  if (basis.empty() && count > 0) throw ValidationError("make_distractors: empty basis");
  Rng rng(seed);
  std::vector<ConceptVector> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const EmbeddingVector parent = normalized(basis[k % basis.size()]);
    EmbeddingVector r;
    do {
      r = rng.gaussian_vector(parent.size());
      r -= dot(r, parent) * parent;
      r -= dot(r, parent) * parent;
    } while (norm(r) < 1e-8);
    r /= norm(r);
    const double c = min_cos + (1.0 - min_cos) * rng.uniform();
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    ConceptVector cv;
    cv.term = {"distractor " + std::to_string(k + 1), 1};
    cv.vector = sign * (c * parent + s * r);
    cv.n_prompts = 0;
    out.push_back(std::move(cv));
  }
  return out;
}

std::vector<ConceptVector> planted_candidates(const SyntheticScenario& scenario,
                                              std::size_t n_distractors, double min_cos,
                                              std::uint64_t seed) {
  scenario.validate();
  std::vector<ConceptVector> out;
  const int planted_frequency = static_cast<int>(n_distractors) + 2;
  for (std::size_t i = 0; i < scenario.planted_basis.size(); ++i) {
    const auto label = scenario.basis_labels.empty() ? "planted " + std::to_string(i + 1)
                                                     : scenario.basis_labels[i];
    out.push_back({{label, planted_frequency}, scenario.planted_basis[i], 0});
  }
  if (n_distractors > 0) {
    auto d = make_distractors(scenario.planted_basis, n_distractors, min_cos, seed);
    out.insert(out.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
  }
  return out;
}

LevelSeries synth_level_series(int levels, double slope, double noise_sigma, std::uint64_t seed) {
  if (levels < 2) throw ValidationError("synth_level_series: need at least 2 levels");
  Rng rng(seed);
  LevelSeries s;
  for (int l = 1; l <= levels; ++l) {
    s.model_ids.push_back("level " + std::to_string(l));
    s.ground_truth_levels.push_back(l);
    s.scores.push_back(slope * l + (noise_sigma > 0 ? noise_sigma * rng.gaussian() : 0.0));
  }
  return s;
}

}  // namespace finexl
