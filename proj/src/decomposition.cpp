#include "finexl/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace finexl {

std::string_view to_string(OrthogonalityMode mode) {
  return mode == OrthogonalityMode::absolute ? "absolute" : "signed";
}

OrthogonalityMode parse_orthogonality_mode(std::string_view name) {
  if (name == "absolute") return OrthogonalityMode::absolute;
  if (name == "signed") return OrthogonalityMode::signed_sum;
  throw ValidationError("unknown orthogonality mode '" + std::string(name) + "'");
}

void Thresholds::validate() const {
  if (!(e_ortho >= 0) || !std::isfinite(e_ortho)) throw ValidationError("e_ortho must be >= 0");
  if (!(e_decomp > 0 && e_decomp <= 1)) throw ValidationError("e_decomp must be in (0, 1]");
}

double orthogonality_score(const EmbeddingVector& candidate,
                           std::span<const EmbeddingVector> retained, OrthogonalityMode mode) {
  if (!(norm(candidate) > 0)) throw ZeroNormError("orthogonality_score: zero-norm candidate");
  double score = 0;
  for (const auto& r : retained) {
    const double c = cosine(candidate, r);
    score += mode == OrthogonalityMode::absolute ? std::abs(c) : c;
  }
  return score;
}

double orthogonality_score(const ConceptVector& candidate, std::span<const ConceptVector> retained,
                           OrthogonalityMode mode) {
  if (!(norm(candidate.vector) > 0)) {
    throw ZeroNormError("orthogonality_score: zero-norm concept '" + candidate.term.label + "'");
  }
  double score = 0;
  for (const auto& r : retained) {
    const double c = cosine(candidate.vector, r.vector);
    score += mode == OrthogonalityMode::absolute ? std::abs(c) : c;
  }
  return score;
}

void order_candidates(std::vector<ConceptVector>& candidates) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const ConceptVector& a, const ConceptVector& b) {
                     if (a.term.frequency != b.term.frequency) {
                       return a.term.frequency > b.term.frequency;
                     }
                     return a.term.label < b.term.label;
                   });
}

Explanation run_finexl(const DivergenceVector& v_div, std::span<const ConceptVector> candidates,
                       const Thresholds& thresholds) {
  thresholds.validate();
  if (candidates.empty()) throw ValidationError("run_finexl: no candidate concepts");
  const auto dim = v_div.vector.size();
  const double target_norm = norm(v_div.vector);
  if (!(target_norm > 0)) throw ZeroNormError("run_finexl: divergence vector is zero");
  for (const auto& c : candidates) {
    require_same_dim(c.vector.size(), dim, "run_finexl");
    if (!(norm(c.vector) > 0)) {
      throw ZeroNormError("run_finexl: zero-norm concept '" + c.term.label + "'");
    }
  }

  Explanation out;
  out.residual_norm = target_norm;
  out.relative_residual = 1.0;

  std::vector<ConceptVector> retained;
  Matrix<double> basis(dim, 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.candidates_consumed = i + 1;
    const auto& candidate = candidates[i];
    if (orthogonality_score(candidate, retained, thresholds.mode) >= thresholds.e_ortho) continue;

    retained.push_back(candidate);
    out.retained_indices.push_back(i);
    basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
    basis.col(basis.cols() - 1) = candidate.vector;

    const auto fit = least_squares(basis, v_div.vector);
    out.entries.clear();
    for (std::size_t j = 0; j < retained.size(); ++j) {
      out.entries.push_back({retained[j].term, fit.weights(static_cast<Eigen::Index>(j))});
    }
    out.residual_norm = fit.residual_norm;
    out.relative_residual = fit.relative_residual;
    if (fit.relative_residual < thresholds.e_decomp) {
      out.converged = true;
      break;
    }
  }
  return out;
}

std::vector<ExplanationEntry> score_report(const Explanation& explanation,
                                           double display_cutoff_fraction) {
  if (!(display_cutoff_fraction >= 0 && display_cutoff_fraction < 1)) {
    throw ValidationError("display cutoff must be in [0, 1)");
  }
  double max_abs = 0;
  for (const auto& e : explanation.entries) max_abs = std::max(max_abs, std::abs(e.weight));
  std::vector<ExplanationEntry> shown;
  for (const auto& e : explanation.entries) {
    if (std::abs(e.weight) >= display_cutoff_fraction * max_abs) shown.push_back(e);
  }
  std::stable_sort(shown.begin(), shown.end(), [](const auto& a, const auto& b) {
    return std::abs(a.weight) > std::abs(b.weight);
  });
  return shown;
}

std::string render_report(const Explanation& explanation, double display_cutoff_fraction,
                          const Thresholds& thresholds) {
  constexpr int kBarWidth = 40;
  const auto shown = score_report(explanation, display_cutoff_fraction);

  std::size_t label_width = 7;
  double max_abs = 0;
  for (const auto& e : shown) {
    label_width = std::max(label_width, e.term.label.size());
    max_abs = std::max(max_abs, std::abs(e.weight));
  }

  std::ostringstream os;
  char buf[64];
  os << "concept" << std::string(label_width - 7, ' ') << "  weight\n";
  for (const auto& e : shown) {
    const int len = max_abs > 0 ? static_cast<int>(std::lround(kBarWidth * std::abs(e.weight) / max_abs)) : 0;
    std::snprintf(buf, sizeof buf, "%+9.4f", e.weight);
    os << e.term.label << std::string(label_width - e.term.label.size(), ' ') << "  " << buf
       << "  " << std::string(static_cast<std::size_t>(len), e.weight < 0 ? '-' : '#') << '\n';
  }
  const auto omitted = explanation.entries.size() - shown.size();
  if (omitted > 0) os << "(" << omitted << " small scores omitted)\n";
  std::snprintf(buf, sizeof buf, "%.6f", explanation.relative_residual);
  os << "\nrelative residual: " << buf;
  std::snprintf(buf, sizeof buf, "%.6f", explanation.residual_norm);
  os << "  residual norm: " << buf << '\n';
  os << "retained " << explanation.entries.size() << " of " << explanation.candidates_consumed
     << " candidates examined; " << (explanation.converged ? "converged" : "not converged")
     << '\n';
  std::snprintf(buf, sizeof buf, "e_ortho=%g e_decomp=%g", thresholds.e_ortho, thresholds.e_decomp);
  os << buf << " (" << to_string(thresholds.mode) << ")\n";
  return os.str();
}

}  // namespace finexl
