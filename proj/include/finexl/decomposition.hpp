#pragma once

// Greedy retention of mutually orthogonal concepts and decomposition of the
// divergence vector onto them.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "finexl/concepts.hpp"
#include "finexl/divergence.hpp"

namespace finexl {

enum class OrthogonalityMode {
  absolute,    // sum of |cos|; anti-correlated duplicates count as redundant
  signed_sum,  // sum of signed cos
};

std::string_view to_string(OrthogonalityMode mode);
OrthogonalityMode parse_orthogonality_mode(std::string_view name);

struct Thresholds {
  double e_ortho = 0.3;
  // Relative residual cap, as a fraction of ||v_div||.
  double e_decomp = 0.2;
  OrthogonalityMode mode = OrthogonalityMode::absolute;

  void validate() const;
};

inline constexpr double kDefaultDisplayCutoff = 0.05;

double orthogonality_score(const EmbeddingVector& candidate,
                           std::span<const EmbeddingVector> retained,
                           OrthogonalityMode mode = OrthogonalityMode::absolute);

double orthogonality_score(const ConceptVector& candidate, std::span<const ConceptVector> retained,
                           OrthogonalityMode mode = OrthogonalityMode::absolute);

struct ExplanationEntry {
  Concept term;
  double weight = 0;
};

struct Explanation {
  // Retention order.
  std::vector<ExplanationEntry> entries;
  double residual_norm = 0;
  double relative_residual = 1;
  bool converged = false;
  // Candidates examined before the loop stopped.
  std::size_t candidates_consumed = 0;
  // Positions of the retained concepts in the candidate list.
  std::vector<std::size_t> retained_indices;
};

/// Frequency descending, ties broken by label. Stable for equal keys.
void order_candidates(std::vector<ConceptVector>& candidates);

/// Walks the candidates in order; a candidate is retained when its
/// orthogonality score against the retained set is below e_ortho. After each
/// retention all weights are refit by least squares, and the walk stops once
/// the relative residual is below e_decomp.
Explanation run_finexl(const DivergenceVector& v_div, std::span<const ConceptVector> candidates,
                       const Thresholds& thresholds);

/// Entries to display: |weight| >= cutoff * max|weight|, by |weight| descending.
std::vector<ExplanationEntry> score_report(const Explanation& explanation,
                                           double display_cutoff_fraction = kDefaultDisplayCutoff);

/// Aligned text bars of the displayed entries plus residual diagnostics.
std::string render_report(const Explanation& explanation, double display_cutoff_fraction,
                          const Thresholds& thresholds);

}  // namespace finexl
