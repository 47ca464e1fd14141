#pragma once

// Independent reference computations for tests. Plain std::vector loops, no
// Eigen and no library code, so they cannot share a bug with the
// implementation they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Vec& a, const Vec& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

/// Sums all firsts, then all seconds, then subtracts.
inline Vec two_pass_mean_difference(const std::vector<Vec>& firsts, const std::vector<Vec>& seconds) {
  const std::size_t dim = firsts.front().size();
  Vec sa(dim, 0.0), sb(dim, 0.0);
  for (const auto& v : firsts)
    for (std::size_t i = 0; i < dim; ++i) sa[i] += v[i];
  for (const auto& v : seconds)
    for (std::size_t i = 0; i < dim; ++i) sb[i] += v[i];
  Vec out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = (sa[i] - sb[i]) / static_cast<double>(firsts.size());
  return out;
}

/// Solves (B^T B) w = B^T y by Gaussian elimination with partial pivoting.
inline Vec normal_equations(const std::vector<Vec>& basis, const Vec& y) {
  const std::size_t k = basis.size();
  std::vector<Vec> a(k, Vec(k + 1, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) a[i][j] = dot(basis[i], basis[j]);
    a[i][k] = dot(basis[i], y);
  }
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    if (a[col][col] == 0) throw std::runtime_error("singular normal equations");
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= k; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Vec w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = a[i][k] / a[i][i];
  return w;
}

/// Expected rank-MAE of a uniformly random ordering of L distinct scores,
/// by enumerating all L! permutations.
inline double permutation_average_rank_mae(int levels) {
  std::vector<int> perm(static_cast<std::size_t>(levels));
  std::iota(perm.begin(), perm.end(), 1);
  double total = 0;
  long count = 0;
  do {
    double mae = 0;
    for (int i = 0; i < levels; ++i) mae += std::abs(perm[static_cast<std::size_t>(i)] - (i + 1));
    total += mae / levels;
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total / static_cast<double>(count);
}

/// Nearest grid cell by normalized Euclidean distance; exhaustive.
inline double nearest_coordinate_accuracy(const std::vector<Vec>& predicted,
                                          const std::vector<Vec>& truth,
                                          std::vector<Vec> grid) {
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::size_t arity = grid.front().size();
  auto minmax = [](const std::vector<Vec>& rows, std::size_t a) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rows) {
      lo = std::min(lo, r[a]);
      hi = std::max(hi, r[a]);
    }
    return std::pair{lo, hi};
  };
  std::size_t hits = 0;
  for (std::size_t m = 0; m < predicted.size(); ++m) {
    double best = std::numeric_limits<double>::infinity();
    const Vec* choice = nullptr;
    for (const auto& cell : grid) {
      double d = 0;
      for (std::size_t a = 0; a < arity; ++a) {
        const auto [plo, phi] = minmax(predicted, a);
        const auto [glo, ghi] = minmax(grid, a);
        if (!(phi > plo) || !(ghi > glo)) continue;
        const double x = (predicted[m][a] - plo) / (phi - plo) - (cell[a] - glo) / (ghi - glo);
        d += x * x;
      }
      if (d < best) {
        best = d;
        choice = &cell;
      }
    }
    if (*choice == truth[m]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace oracle
