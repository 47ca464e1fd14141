#pragma once

// JSON documents exchanged between pipeline stages.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "finexl/concepts.hpp"
#include "finexl/decomposition.hpp"
#include "finexl/divergence.hpp"
#include "finexl/evaluation.hpp"

namespace finexl::io {

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
/// Pretty-printed with sorted keys and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

nlohmann::json vector_to_json(const EmbeddingVector& v);
EmbeddingVector vector_from_json(const nlohmann::json& j, const std::string& what);

/// JSON-Lines of {"prompt_id", "text"}; validates ids and text.
std::vector<PromptSample> load_prompts(const std::filesystem::path& path);

nlohmann::json divergence_to_json(const DivergenceVector& v, bool normalized);
DivergenceVector divergence_from_json(const nlohmann::json& j);

nlohmann::json discovery_to_json(const DiscoveryReport& report, const PromptTemplate& prompt);
ConceptSet concept_set_from_json(const nlohmann::json& j);

nlohmann::json concept_vectors_to_json(std::span<const ConceptVector> vectors,
                                       const std::string& encoder_id,
                                       const CompositionTemplate& composition);
std::vector<ConceptVector> concept_vectors_from_json(const nlohmann::json& j);

nlohmann::json explanation_to_json(const Explanation& explanation, const Thresholds& thresholds,
                                   const std::string& encoder_id, std::size_t n_samples);

/// {"models": [{"id", "level", "scores": {aspect: value}}]}. `aspect` may be
/// empty when each model carries exactly one score.
LevelSeries level_series_from_json(const nlohmann::json& j, const std::string& aspect);

/// {"aspects"?, "grid"?, "models": [{"id", "coordinate", "scores"}]}.
MixtureGrid mixture_grid_from_json(const nlohmann::json& j);

}  // namespace finexl::io
