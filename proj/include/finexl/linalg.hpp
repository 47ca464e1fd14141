#pragma once

// Dimension-checked vector kernels shared by every stage of the pipeline.
// All functions are pure and accept any Eigen dense expression; summation
// runs in input order so results are bit-reproducible.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "finexl/errors.hpp"

namespace finexl {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Embedding-space coordinates. Always 64-bit regardless of on-disk precision.
using EmbeddingVector = Vector<double>;

/// Condition-number estimate above which least_squares switches to ridge.
inline constexpr double kRidgeConditionLimit = 1e12;
inline constexpr double kRidgeLambda = 1e-8;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v(i))) return false;
  }
  return true;
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                            " vs " + std::to_string(b) + ")");
  }
}

/// Inner product accumulated left to right.
template <typename A, typename B>
typename A::Scalar dot(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_dim(a.size(), b.size(), "dot");
  typename A::Scalar acc{0};
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a(i) * b(i);
  return acc;
}

template <typename A>
typename A::Scalar norm(const Eigen::MatrixBase<A>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <typename A, typename B>
typename A::Scalar cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_dim(a.size(), b.size(), "cosine");
  const auto na = norm(a);
  const auto nb = norm(b);
  if (!(na > 0) || !(nb > 0)) throw ZeroNormError("cosine: zero-norm input");
  auto c = dot(a, b) / (na * nb);
  // Rounding can push |c| a hair past 1.
  if (c > 1) c = 1;
  if (c < -1) c = -1;
  return c;
}

/// Returns v / ||v||; throws ZeroNormError for a zero vector.
template <typename A>
Vector<typename A::Scalar> normalized(const Eigen::MatrixBase<A>& v) {
  const auto n = norm(v);
  if (!(n > 0)) throw ZeroNormError("normalized: zero-norm vector");
  return v / n;
}

/// (1/n) * sum_i (first_i - second_i), summed in input order.
template <typename Scalar>
Vector<Scalar> mean_difference(std::span<const std::pair<Vector<Scalar>, Vector<Scalar>>> pairs) {
  if (pairs.empty()) throw ValidationError("mean_difference: empty input");
  const auto dim = pairs.front().first.size();
  Vector<Scalar> acc = Vector<Scalar>::Zero(dim);
  for (const auto& [first, second] : pairs) {
    require_same_dim(first.size(), dim, "mean_difference");
    require_same_dim(second.size(), dim, "mean_difference");
    for (Eigen::Index i = 0; i < dim; ++i) acc(i) += first(i) - second(i);
  }
  return acc / static_cast<Scalar>(pairs.size());
}

template <typename Scalar>
Vector<Scalar> mean_difference(const std::vector<std::pair<Vector<Scalar>, Vector<Scalar>>>& pairs) {
  return mean_difference<Scalar>(std::span<const std::pair<Vector<Scalar>, Vector<Scalar>>>(pairs));
}

template <typename Scalar>
struct LeastSquaresFit {
  Vector<Scalar> weights;
  Scalar residual_norm{0};
  // residual_norm / ||target||; zero for a zero target.
  Scalar relative_residual{0};
  // True when the ridge fallback was used.
  bool regularized = false;
};

/// Minimizes ||target - basis * w|| over w, where the basis vectors are the
/// columns of `basis`. Rank-deficient or over-complete bases fall back to
/// ridge regression instead of failing.
template <typename B, typename T>
LeastSquaresFit<typename B::Scalar> least_squares(const Eigen::MatrixBase<B>& basis,
                                                  const Eigen::MatrixBase<T>& target) {
  using Scalar = typename B::Scalar;
  if (basis.cols() == 0) throw ValidationError("least_squares: empty basis");
  require_same_dim(basis.rows(), target.size(), "least_squares");

  const Matrix<Scalar> a = basis;
  const Vector<Scalar> y = target;

  bool ill_conditioned = a.cols() > a.rows();
  if (!ill_conditioned) {
    Eigen::JacobiSVD<Matrix<Scalar>> svd(a);
    const auto& s = svd.singularValues();
    const Scalar smax = s(0);
    const Scalar smin = s(s.size() - 1);
    ill_conditioned = !(smin > 0) || smax / smin > Scalar(kRidgeConditionLimit);
  }

  LeastSquaresFit<Scalar> fit;
  if (ill_conditioned) {
    Matrix<Scalar> gram = a.transpose() * a;
    gram.diagonal().array() += Scalar(kRidgeLambda);
    fit.weights = gram.ldlt().solve(a.transpose() * y);
    fit.regularized = true;
  } else {
    fit.weights = a.colPivHouseholderQr().solve(y);
  }

  Vector<Scalar> residual = y;
  for (Eigen::Index j = 0; j < a.cols(); ++j) residual -= fit.weights(j) * a.col(j);
  fit.residual_norm = norm(residual);
  const Scalar target_norm = norm(y);
  fit.relative_residual = target_norm > 0 ? fit.residual_norm / target_norm : Scalar(0);
  return fit;
}

/// Stacks equally sized vectors as the columns of a matrix.
template <typename Scalar>
Matrix<Scalar> stack_columns(std::span<const Vector<Scalar>> vectors) {
  if (vectors.empty()) return Matrix<Scalar>(0, 0);
  const auto dim = vectors.front().size();
  Matrix<Scalar> m(dim, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    require_same_dim(vectors[j].size(), dim, "stack_columns");
    m.col(static_cast<Eigen::Index>(j)) = vectors[j];
  }
  return m;
}

template <typename Scalar, typename T>
LeastSquaresFit<Scalar> least_squares(std::span<const Vector<Scalar>> basis,
                                      const Eigen::MatrixBase<T>& target) {
  if (basis.empty()) throw ValidationError("least_squares: empty basis");
  return least_squares(stack_columns(basis), target);
}

template <typename Scalar, typename T>
LeastSquaresFit<Scalar> least_squares(const std::vector<Vector<Scalar>>& basis,
                                      const Eigen::MatrixBase<T>& target) {
  return least_squares(std::span<const Vector<Scalar>>(basis), target);
}

}  // namespace finexl
