#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "finexl/linalg.hpp"

namespace finexl {

/// Seeded generator with a fully specified output stream:
///   engine   std::mt19937_64 seeded with the 64-bit seed
///   uniform  (next() >> 11) * 2^-53, in [0, 1)
///   gaussian Box-Muller, cos branch only: sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
///   index    floor(uniform() * n)
/// std::normal_distribution is avoided since its algorithm is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double gaussian();
  std::size_t index(std::size_t n);
  EmbeddingVector gaussian_vector(Eigen::Index dim, double sigma = 1.0);

  /// k distinct indices from [0, n), drawn by partial Fisher-Yates.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace finexl
