#pragma once

// Scoring protocols for quantitative explanations: rank error over
// single-aspect level series, coordinate accuracy over multi-aspect mixture
// grids, and encoder diagnostics.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "finexl/concepts.hpp"

namespace finexl {

struct LevelSeries {
  std::vector<std::string> model_ids;
  std::vector<int> ground_truth_levels;  // a permutation of 1..L
  std::vector<double> scores;

  void validate() const;
};

/// 1-based ascending ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double rank_mae(const LevelSeries& series);

using Coordinate = std::vector<double>;

struct MixtureGrid {
  std::vector<std::string> aspect_names;
  std::vector<std::string> model_ids;
  std::vector<Coordinate> true_coordinates;
  std::vector<Coordinate> predicted_scores;
  // Admissible coordinates. Empty means the distinct true coordinates.
  std::vector<Coordinate> grid;

  void validate() const;
  std::vector<Coordinate> resolved_grid() const;
};

struct MixtureResult {
  double accuracy = 0;
  // Index into the resolved grid per model.
  std::vector<std::size_t> assigned;
  std::vector<std::string> warnings;
};

/// Min-max normalizes predictions (and the grid) per aspect, maps each model
/// to the nearest grid coordinate by Euclidean distance, ties toward the
/// lexicographically smallest coordinate. Aspects with constant predictions
/// are skipped with a warning.
MixtureResult mixture_accuracy(const MixtureGrid& grid);

struct EncoderDiagnostics {
  double linearity = 0;
  double orthogonality = 0;
  std::optional<double> alignment;
};

/// Mean |cos| over all unordered pairs; zero for fewer than two vectors.
double mean_pairwise_abs_cosine(std::span<const EmbeddingVector> vectors);

/// `ideal_vectors` null means alignment is not requested.
EncoderDiagnostics encoder_diagnostics(std::span<const std::pair<Concept, Concept>> concept_pairs,
                                       std::span<const PromptSample> prompts, TextEncoder& encoder,
                                       const std::map<std::string, EmbeddingVector>* ideal_vectors,
                                       const CompositionTemplate& composition = {});

}  // namespace finexl
