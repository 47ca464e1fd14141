#include "finexl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace finexl {

void LevelSeries::validate() const {
  const auto n = ground_truth_levels.size();
  if (scores.size() != n || (!model_ids.empty() && model_ids.size() != n)) {
    throw ValidationError("level series: length mismatch");
  }
  if (n < 2) throw ValidationError("level series: need at least 2 levels");
  std::vector<int> sorted = ground_truth_levels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (sorted[i] != static_cast<int>(i + 1)) {
      throw ValidationError("level series: levels must cover 1..L exactly once");
    }
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("level series: non-finite score");
  }
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double rank_mae(const LevelSeries& series) {
  series.validate();
  const auto ranks = average_ranks(series.scores);
  double total = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    total += std::abs(ranks[i] - series.ground_truth_levels[i]);
  }
  return total / static_cast<double>(ranks.size());
}

void MixtureGrid::validate() const {
  const auto arity = aspect_names.size();
  if (arity == 0) throw ValidationError("mixture grid: no aspects");
  const auto n = true_coordinates.size();
  if (n < 2) throw ValidationError("mixture grid: need at least 2 models");
  if (predicted_scores.size() != n || (!model_ids.empty() && model_ids.size() != n)) {
    throw ValidationError("mixture grid: length mismatch");
  }
  auto check = [&](const Coordinate& c, const char* what) {
    if (c.size() != arity) throw ValidationError(std::string("mixture grid: ") + what + " arity mismatch");
    for (double x : c) {
      if (!std::isfinite(x)) throw ValidationError(std::string("mixture grid: non-finite ") + what);
    }
  };
  for (const auto& c : true_coordinates) check(c, "true coordinate");
  for (const auto& c : predicted_scores) check(c, "predicted score");
  for (const auto& c : grid) check(c, "grid coordinate");
  if (!grid.empty()) {
    const std::set<Coordinate> declared(grid.begin(), grid.end());
    for (const auto& c : true_coordinates) {
      if (!declared.count(c)) throw ValidationError("mixture grid: true coordinate not on grid");
    }
  }
}

std::vector<Coordinate> MixtureGrid::resolved_grid() const {
  const std::set<Coordinate> unique =
      grid.empty() ? std::set<Coordinate>(true_coordinates.begin(), true_coordinates.end())
                   : std::set<Coordinate>(grid.begin(), grid.end());
  return {unique.begin(), unique.end()};
}

MixtureResult mixture_accuracy(const MixtureGrid& input) {
  input.validate();
  const auto cells = input.resolved_grid();  // lexicographic order
  const auto arity = input.aspect_names.size();
  const auto n = input.true_coordinates.size();

  MixtureResult result;
  std::vector<Coordinate> pred(n, Coordinate(arity, 0.0));
  std::vector<Coordinate> norm_cells(cells.size(), Coordinate(arity, 0.0));
  std::vector<bool> informative(arity, true);
  for (std::size_t a = 0; a < arity; ++a) {
    double lo = input.predicted_scores[0][a];
    double hi = lo;
    for (const auto& p : input.predicted_scores) {
      lo = std::min(lo, p[a]);
      hi = std::max(hi, p[a]);
    }
    double glo = cells[0][a];
    double ghi = glo;
    for (const auto& c : cells) {
      glo = std::min(glo, c[a]);
      ghi = std::max(ghi, c[a]);
    }
    if (!(hi > lo) || !(ghi > glo)) {
      informative[a] = false;
      result.warnings.push_back("aspect '" + input.aspect_names[a] +
                                "' has degenerate normalization; treated as uninformative");
      continue;
    }
    for (std::size_t m = 0; m < n; ++m) pred[m][a] = (input.predicted_scores[m][a] - lo) / (hi - lo);
    for (std::size_t g = 0; g < cells.size(); ++g) norm_cells[g][a] = (cells[g][a] - glo) / (ghi - glo);
  }

  std::size_t correct = 0;
  for (std::size_t m = 0; m < n; ++m) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t g = 0; g < cells.size(); ++g) {
      double d = 0;
      for (std::size_t a = 0; a < arity; ++a) {
        if (!informative[a]) continue;
        const double diff = pred[m][a] - norm_cells[g][a];
        d += diff * diff;
      }
      // Strict improvement keeps the lexicographically first cell on ties.
      if (d < best_d) {
        best_d = d;
        best = g;
      }
    }
    result.assigned.push_back(best);
    if (cells[best] == input.true_coordinates[m]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

double mean_pairwise_abs_cosine(std::span<const EmbeddingVector> vectors) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      total += std::abs(cosine(vectors[i], vectors[j]));
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

EncoderDiagnostics encoder_diagnostics(std::span<const std::pair<Concept, Concept>> concept_pairs,
                                       std::span<const PromptSample> prompts, TextEncoder& encoder,
                                       const std::map<std::string, EmbeddingVector>* ideal_vectors,
                                       const CompositionTemplate& composition) {
  if (concept_pairs.empty()) throw ValidationError("encoder_diagnostics: no concept pairs");

  std::vector<Concept> concepts;
  std::set<std::string> seen;
  for (const auto& [a, b] : concept_pairs) {
    for (const auto* c : {&a, &b}) {
      if (seen.insert(c->label).second) concepts.push_back(*c);
    }
  }
  if (ideal_vectors) {
    for (const auto& c : concepts) {
      if (!ideal_vectors->count(c.label)) {
        throw ValidationError("encoder_diagnostics: no ideal vector for concept '" + c.label + "'");
      }
    }
  }

  std::map<std::string, EmbeddingVector> mapped;
  std::vector<EmbeddingVector> vectors;
  for (const auto& c : concepts) {
    auto cv = map_concept(c, prompts, encoder, composition);
    vectors.push_back(cv.vector);
    mapped.emplace(c.label, std::move(cv.vector));
  }

  EncoderDiagnostics out;
  double lin = 0;
  for (const auto& [a, b] : concept_pairs) {
    const auto ab = map_concept(compose_concepts(a, b), prompts, encoder, composition);
    lin += linearity_score(mapped.at(a.label), mapped.at(b.label), ab.vector);
  }
  out.linearity = lin / static_cast<double>(concept_pairs.size());
  out.orthogonality = mean_pairwise_abs_cosine(vectors);

  if (ideal_vectors) {
    double align = 0;
    for (const auto& c : concepts) align += cosine(mapped.at(c.label), ideal_vectors->at(c.label));
    out.alignment = align / static_cast<double>(concepts.size());
  }
  return out;
}

}  // namespace finexl
