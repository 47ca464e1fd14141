#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finexl/backends/records.hpp"
#include "finexl/linalg.hpp"

namespace finexl {

struct PromptSample {
  std::string prompt_id;
  std::string text;
};

/// Unique ids, non-empty text.
void validate_prompts(std::span<const PromptSample> prompts);

/// One prompt's image embeddings under the base and personalized models.
struct PairedGeneration {
  std::string prompt_id;
  EmbeddingVector base_embedding;
  EmbeddingVector personal_embedding;
  // Provenance of the generation noise, when known. Not used for pairing.
  std::optional<std::int64_t> generation_seed;
};

struct DivergenceVector {
  EmbeddingVector vector;
  std::size_t n_samples = 0;
  std::string encoder_id;
};

/// Mean over pairs of (personal - base), summed in input order.
DivergenceVector estimate_divergence(std::span<const PairedGeneration> pairs,
                                     const std::string& encoder_id);

struct IngestOptions {
  // L2-normalize each image embedding before differencing.
  bool normalize = true;
};

/// Joins base/personal records of `encoder_id` by prompt_id, in order of the
/// first base record per prompt. An empty encoder_id selects the single
/// encoder present. Prompts missing either side are a validation error.
std::vector<PairedGeneration> pair_generations(std::span<const backends::EmbeddingRecord> records,
                                               std::string encoder_id = {},
                                               const IngestOptions& options = {});

/// Resolves the encoder id used by pair_generations for these records.
std::string resolve_encoder_id(std::span<const backends::EmbeddingRecord> records,
                               const std::string& requested);

struct SufficiencyPoint {
  std::size_t n = 0;
  double mean_cosine_distance = 0;
};

/// For each subset size n, averages over `trials` seeded draws (without
/// replacement) the distance 1 - cos(estimate(subset), estimate(all pairs)).
std::vector<SufficiencyPoint> sample_sufficiency(std::span<const PairedGeneration> pairs,
                                                 std::span<const std::size_t> subset_sizes,
                                                 std::size_t trials, std::uint64_t seed);

}  // namespace finexl
