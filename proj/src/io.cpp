#include "finexl/io.hpp"

#include <fstream>
#include <sstream>

#include "finexl/errors.hpp"

namespace finexl::io {

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& what) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(what + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write error in " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

nlohmann::json vector_to_json(const EmbeddingVector& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

EmbeddingVector vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ValidationError(what + ": vector must be a non-empty array");
  EmbeddingVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + ": non-numeric vector entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  if (!all_finite(v)) throw ValidationError(what + ": non-finite vector entry");
  return v;
}

std::vector<PromptSample> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt file " + path.string());
  std::vector<PromptSample> prompts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + ": " + e.what());
    }
    prompts.push_back({field<std::string>(j, "prompt_id", where), field<std::string>(j, "text", where)});
  }
  validate_prompts(prompts);
  return prompts;
}

nlohmann::json divergence_to_json(const DivergenceVector& v, bool normalized) {
  return {{"encoder_id", v.encoder_id},
          {"n_samples", v.n_samples},
          {"normalized", normalized},
          {"norm", norm(v.vector)},
          {"vector", vector_to_json(v.vector)}};
}

DivergenceVector divergence_from_json(const nlohmann::json& j) {
  DivergenceVector v;
  v.encoder_id = field<std::string>(j, "encoder_id", "divergence");
  v.n_samples = field<std::size_t>(j, "n_samples", "divergence");
  v.vector = vector_from_json(j.value("vector", nlohmann::json()), "divergence");
  if (v.n_samples < 1) throw ValidationError("divergence: n_samples must be positive");
  return v;
}

nlohmann::json discovery_to_json(const DiscoveryReport& report, const PromptTemplate& prompt) {
  auto concepts = nlohmann::json::array();
  for (const auto& c : report.concepts.ordered()) {
    concepts.push_back({{"label", c.label}, {"frequency", c.frequency}});
  }
  return {{"concepts", concepts},
          {"rounds_attempted", report.rounds_attempted},
          {"rounds_succeeded", report.rounds_succeeded},
          {"template_version", prompt.version}};
}

ConceptSet concept_set_from_json(const nlohmann::json& j) {
  ConceptSet set;
  const auto& arr = j.contains("concepts") ? j.at("concepts") : j;
  if (!arr.is_array()) throw ValidationError("concept set: expected an array of concepts");
  for (const auto& c : arr) {
    const auto raw = c.is_string() ? c.get<std::string>() : field<std::string>(c, "label", "concept");
    auto label = normalize_concept(raw);
    if (!label) throw ValidationError("concept set: invalid label '" + raw + "'");
    if (set.frequency(*label)) throw ValidationError("concept set: duplicate label '" + *label + "'");
    set.add(*label, c.is_object() ? c.value("frequency", 1) : 1);
  }
  return set;
}

nlohmann::json concept_vectors_to_json(std::span<const ConceptVector> vectors,
                                       const std::string& encoder_id,
                                       const CompositionTemplate& composition) {
  auto arr = nlohmann::json::array();
  for (const auto& cv : vectors) {
    arr.push_back({{"label", cv.term.label},
                   {"frequency", cv.term.frequency},
                   {"n_prompts", cv.n_prompts},
                   {"vector", vector_to_json(cv.vector)}});
  }
  return {{"encoder_id", encoder_id}, {"composition_template", composition.text}, {"concepts", arr}};
}

std::vector<ConceptVector> concept_vectors_from_json(const nlohmann::json& j) {
  std::vector<ConceptVector> out;
  const auto& arr = j.contains("concepts") ? j.at("concepts") : j;
  if (!arr.is_array()) throw ValidationError("concept vectors: expected an array");
  for (const auto& c : arr) {
    ConceptVector cv;
    cv.term.label = field<std::string>(c, "label", "concept vector");
    cv.term.frequency = c.value("frequency", 1);
    cv.n_prompts = c.value("n_prompts", std::size_t{0});
    cv.vector = vector_from_json(c.value("vector", nlohmann::json()), "concept '" + cv.term.label + "'");
    out.push_back(std::move(cv));
  }
  return out;
}

nlohmann::json explanation_to_json(const Explanation& explanation, const Thresholds& thresholds,
                                   const std::string& encoder_id, std::size_t n_samples) {
  auto concepts = nlohmann::json::array();
  for (const auto& e : explanation.entries) {
    concepts.push_back(
        {{"label", e.term.label}, {"weight", e.weight}, {"frequency", e.term.frequency}});
  }
  return {{"concepts", concepts},
          {"residual_norm", explanation.residual_norm},
          {"relative_residual", explanation.relative_residual},
          {"converged", explanation.converged},
          {"candidates_consumed", explanation.candidates_consumed},
          {"thresholds",
           {{"e_ortho", thresholds.e_ortho},
            {"e_decomp", thresholds.e_decomp},
            {"orthogonality", std::string(to_string(thresholds.mode))}}},
          {"encoder_id", encoder_id},
          {"n_samples", n_samples}};
}

namespace {

const nlohmann::json& models_of(const nlohmann::json& j) {
  if (!j.contains("models") || !j.at("models").is_array()) {
    throw ValidationError("evaluation input: missing 'models' array");
  }
  return j.at("models");
}

double score_of(const nlohmann::json& m, const std::string& aspect, const std::string& id) {
  if (!m.contains("scores")) {
    if (m.contains("score") && m.at("score").is_number()) return m.at("score").get<double>();
    throw ValidationError("model '" + id + "': missing scores");
  }
  const auto& scores = m.at("scores");
  if (scores.is_number()) return scores.get<double>();
  if (aspect.empty()) {
    if (scores.size() != 1) {
      throw ValidationError("model '" + id + "': several scores; specify the aspect");
    }
    return scores.begin()->get<double>();
  }
  if (!scores.contains(aspect) || !scores.at(aspect).is_number()) {
    throw ValidationError("model '" + id + "': no score for aspect '" + aspect + "'");
  }
  return scores.at(aspect).get<double>();
}

}  // namespace

LevelSeries level_series_from_json(const nlohmann::json& j, const std::string& aspect) {
  LevelSeries s;
  for (const auto& m : models_of(j)) {
    const auto id = field<std::string>(m, "id", "model");
    s.model_ids.push_back(id);
    s.ground_truth_levels.push_back(field<int>(m, "level", "model '" + id + "'"));
    s.scores.push_back(score_of(m, aspect, id));
  }
  s.validate();
  return s;
}

MixtureGrid mixture_grid_from_json(const nlohmann::json& j) {
  MixtureGrid g;
  const auto& models = models_of(j);
  if (j.contains("aspects")) {
    g.aspect_names = field<std::vector<std::string>>(j, "aspects", "mixture input");
  } else if (!models.empty() && models.front().contains("scores") && models.front().at("scores").is_object()) {
    for (const auto& [k, _] : models.front().at("scores").items()) g.aspect_names.push_back(k);
  }
  if (j.contains("grid")) g.grid = field<std::vector<Coordinate>>(j, "grid", "mixture input");
  for (const auto& m : models) {
    const auto id = field<std::string>(m, "id", "model");
    g.model_ids.push_back(id);
    g.true_coordinates.push_back(field<Coordinate>(m, "coordinate", "model '" + id + "'"));
    Coordinate pred;
    for (const auto& a : g.aspect_names) pred.push_back(score_of(m, a, id));
    g.predicted_scores.push_back(std::move(pred));
  }
  g.validate();
  return g;
}

}  // namespace finexl::io
