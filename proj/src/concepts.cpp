#include "finexl/concepts.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace finexl {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

// Drops "-", "*", "•", "1.", "2)" style list markers.
std::string_view strip_list_marker(std::string_view item) {
  while (!item.empty() && is_space(item.front())) item.remove_prefix(1);
  if (item.starts_with("\xE2\x80\xA2")) {
    item.remove_prefix(3);
  } else if (!item.empty() && (item.front() == '-' || item.front() == '*')) {
    item.remove_prefix(1);
  } else {
    std::size_t digits = 0;
    while (digits < item.size() && std::isdigit(static_cast<unsigned char>(item[digits]))) ++digits;
    if (digits > 0 && digits < item.size() && (item[digits] == '.' || item[digits] == ')')) {
      item.remove_prefix(digits + 1);
    }
  }
  return item;
}

}  // namespace

std::optional<std::string> normalize_concept(std::string_view raw) {
  std::string collapsed;
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed += ' ';
    pending_space = false;
    collapsed += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }

  std::string_view s = collapsed;
  for (;;) {
    const auto before = s.size();
    while (!s.empty() && (is_punct(s.front()) || is_space(s.front()))) s.remove_prefix(1);
    while (!s.empty() && (is_punct(s.back()) || is_space(s.back()))) s.remove_suffix(1);
    if (s.size() == before) break;
  }
  if (s.empty()) return std::nullopt;

  const auto words = static_cast<std::size_t>(std::count(s.begin(), s.end(), ' ')) + 1;
  if (words > kMaxConceptWords) return std::nullopt;
  return std::string(s);
}

Concept compose_concepts(const Concept& a, const Concept& b) {
  if (a.label == b.label) throw ValidationError("compose_concepts: identical labels '" + a.label + "'");
  return {a.label + " and " + b.label, 1};
}

void ConceptSet::add(const std::string& label, int count) {
  if (label.empty()) throw ValidationError("ConceptSet: empty label");
  counts_[label] += count;
}

void ConceptSet::merge(const ConceptSet& other) {
  for (const auto& [label, count] : other.counts_) counts_[label] += count;
}

std::optional<int> ConceptSet::frequency(const std::string& label) const {
  auto it = counts_.find(label);
  if (it == counts_.end()) return std::nullopt;
  return it->second;
}

std::vector<Concept> ConceptSet::ordered() const {
  std::vector<Concept> out;
  out.reserve(counts_.size());
  for (const auto& [label, count] : counts_) out.push_back({label, count});
  std::stable_sort(out.begin(), out.end(),
                   [](const Concept& a, const Concept& b) { return a.frequency > b.frequency; });
  return out;
}

std::vector<std::string> parse_concept_list(std::string_view response) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= response.size(); ++i) {
    if (i < response.size() && response[i] != ',' && response[i] != ';' && response[i] != '\n') {
      continue;
    }
    auto item = strip_list_marker(response.substr(start, i - start));
    start = i + 1;
    if (auto label = normalize_concept(item); label && seen.insert(*label).second) {
      out.push_back(std::move(*label));
    }
  }
  return out;
}

void PromptTemplate::validate() const {
  if (text.find("{image_a}") == std::string::npos || text.find("{image_b}") == std::string::npos) {
    throw ValidationError("prompt template must contain {image_a} and {image_b}");
  }
}

PromptTemplate PromptTemplate::default_template() {
  return {
      "You are shown two images generated from the same text prompt.\n"
      "Image A comes from the original model: {image_a}\n"
      "Image B comes from a customized model: {image_b}\n"
      "Describe how image B differs from image A. Answer with a list of single-word adjectives "
      "or simple phrases, each describing one aspect of the difference (for example style, "
      "color, texture, composition or mood). Output only the list, on one line, separated by "
      "commas.",
      "v1"};
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open prompt template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  PromptTemplate t{ss.str(), path.filename().string()};
  t.validate();
  return t;
}

DiscoveryReport discover_concepts(std::span<const ImagePair> pair_refs, VisionLanguageModel& vlm,
                                  const PromptTemplate& prompt, int rounds, int max_in_flight) {
  if (rounds < 1) throw ValidationError("discover_concepts: rounds must be >= 1");
  if (pair_refs.empty()) throw ValidationError("discover_concepts: no image pairs");
  prompt.validate();

  const PromptTemplate reprompt{prompt.text + std::string(kReprompt), prompt.version + "+reprompt"};

  struct RoundResult {
    std::vector<std::string> labels;
    std::string error;
  };
  std::vector<RoundResult> results(static_cast<std::size_t>(rounds));

  auto run_round = [&](std::size_t r) {
    const auto& pair = pair_refs[r % pair_refs.size()];
    try {
      auto labels = parse_concept_list(vlm.describe(pair, prompt));
      if (labels.empty()) labels = parse_concept_list(vlm.describe(pair, reprompt));
      if (labels.empty()) {
        results[r].error = "unparseable response after reprompt";
      } else {
        results[r].labels = std::move(labels);
      }
    } catch (const std::exception& e) {
      results[r].error = e.what();
    }
  };

  const auto workers = static_cast<std::size_t>(std::clamp(max_in_flight, 1, rounds));
  if (workers == 1) {
    for (std::size_t r = 0; r < results.size(); ++r) run_round(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto r = next.fetch_add(1); r < results.size(); r = next.fetch_add(1)) run_round(r);
      });
    }
  }

  DiscoveryReport report;
  report.rounds_attempted = results.size();
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!results[r].error.empty()) {
      report.failures.push_back("round " + std::to_string(r) + ": " + results[r].error);
      continue;
    }
    ++report.rounds_succeeded;
    for (const auto& label : results[r].labels) report.concepts.add(label);
  }
  if (report.rounds_succeeded == 0) {
    std::string msg = "discover_concepts: no successful rounds";
    if (!report.failures.empty()) msg += " (" + report.failures.front() + ")";
    throw ValidationError(msg);
  }
  return report;
}

void CompositionTemplate::validate() const {
  if (text.find("{concept}") == std::string::npos || text.find("{prompt}") == std::string::npos) {
    throw ValidationError("composition template must contain {concept} and {prompt}");
  }
}

std::string CompositionTemplate::apply(std::string_view term, std::string_view prompt) const {
  // Substitute {prompt} last so prompt text containing "{concept}" is left alone.
  auto out = replace_all(text, "{concept}", term);
  return replace_all(out, "{prompt}", prompt);
}

ConceptVector map_concept(const Concept& term, std::span<const PromptSample> prompts,
                          TextEncoder& encoder, const CompositionTemplate& composition) {
  if (prompts.empty()) throw ValidationError("map_concept: no prompts");
  composition.validate();

  std::vector<std::string> texts;
  texts.reserve(2 * prompts.size());
  for (const auto& p : prompts) texts.push_back(p.text);
  for (const auto& p : prompts) texts.push_back(composition.apply(term.label, p.text));

  const auto embeddings = encoder.embed(texts);
  if (embeddings.size() != texts.size()) throw IoError("map_concept: encoder returned wrong count");

  const auto n = prompts.size();
  const auto dim = embeddings.front().size();
  EmbeddingVector acc = EmbeddingVector::Zero(dim);
  for (std::size_t i = 0; i < n; ++i) {
    require_same_dim(embeddings[i].size(), dim, "map_concept");
    require_same_dim(embeddings[n + i].size(), dim, "map_concept");
    acc += normalized(embeddings[n + i]) - normalized(embeddings[i]);
  }
  acc /= static_cast<double>(n);
  if (!(norm(acc) > 0)) {
    throw ZeroNormError("map_concept: concept '" + term.label + "' has no embedding effect");
  }
  return {term, std::move(acc), n};
}

double alignment_check(const ConceptVector& text_vector, const EmbeddingVector& ideal_image_vector) {
  return cosine(text_vector.vector, ideal_image_vector);
}

double linearity_score(const EmbeddingVector& f_a, const EmbeddingVector& f_b,
                       const EmbeddingVector& f_ab) {
  Matrix<double> basis(f_a.size(), 2);
  require_same_dim(f_b.size(), f_a.size(), "linearity_score");
  basis.col(0) = f_a;
  basis.col(1) = f_b;
  const auto fit = least_squares(basis, f_ab);
  const EmbeddingVector combined = fit.weights(0) * f_a + fit.weights(1) * f_b;
  if (!(norm(combined) > 0)) return 0.0;
  return cosine(f_ab, combined);
}

double linearity_check(const Concept& a, const Concept& b, std::span<const PromptSample> prompts,
                       TextEncoder& encoder, const CompositionTemplate& composition) {
  const auto ab = compose_concepts(a, b);
  const auto fa = map_concept(a, prompts, encoder, composition);
  const auto fb = map_concept(b, prompts, encoder, composition);
  const auto fab = map_concept(ab, prompts, encoder, composition);
  return linearity_score(fa.vector, fb.vector, fab.vector);
}

std::map<std::string, EmbeddingVector> ideal_concept_vectors(
    std::span<const backends::EmbeddingRecord> records, const std::string& encoder_id,
    bool normalize) {
  using backends::Role;
  auto prep = [&](const EmbeddingVector& v) -> EmbeddingVector {
    return normalize ? normalized(v) : v;
  };

  std::map<std::string, EmbeddingVector> plain;
  for (const auto& r : records) {
    if (r.role == Role::ideal && (encoder_id.empty() || r.encoder_id == encoder_id)) {
      plain.emplace(r.prompt_id, prep(r.vector));
    }
  }

  std::map<std::string, std::pair<EmbeddingVector, std::size_t>> sums;
  for (const auto& r : records) {
    if (r.role != Role::ideal_with_concept) continue;
    if (!encoder_id.empty() && r.encoder_id != encoder_id) continue;
    auto it = plain.find(r.prompt_id);
    if (it == plain.end()) {
      throw ValidationError("ideal_with_concept record for prompt '" + r.prompt_id +
                            "' has no matching ideal record");
    }
    const EmbeddingVector delta = prep(r.vector) - it->second;
    auto [slot, inserted] = sums.try_emplace(*r.concept_label, EmbeddingVector::Zero(delta.size()), 0);
    require_same_dim(slot->second.first.size(), delta.size(), "ideal_concept_vectors");
    slot->second.first += delta;
    ++slot->second.second;
  }

  std::map<std::string, EmbeddingVector> out;
  for (auto& [label, acc] : sums) out.emplace(label, acc.first / static_cast<double>(acc.second));
  return out;
}

RecordTextEncoder::RecordTextEncoder(std::span<const backends::EmbeddingRecord> records,
                                     std::span<const PromptSample> prompts,
                                     CompositionTemplate composition, std::string encoder_id)
    : encoder_id_(std::move(encoder_id)) {
  using backends::Role;
  std::map<std::string, std::string> prompt_text;
  for (const auto& p : prompts) prompt_text.emplace(p.prompt_id, p.text);

  for (const auto& r : records) {
    if (r.role != Role::text && r.role != Role::text_with_concept) continue;
    if (encoder_id_.empty()) encoder_id_ = r.encoder_id;
    if (r.encoder_id != encoder_id_) continue;
    auto it = prompt_text.find(r.prompt_id);
    if (it == prompt_text.end()) continue;
    auto key = r.role == Role::text ? it->second : composition.apply(*r.concept_label, it->second);
    by_text_.insert_or_assign(std::move(key), r.vector);
  }
  if (encoder_id_.empty()) throw ValidationError("RecordTextEncoder: no text records");
}

std::vector<EmbeddingVector> RecordTextEncoder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed: empty batch");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = by_text_.find(t);
    if (it == by_text_.end()) throw ValidationError("no text embedding record for \"" + t + "\"");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace finexl
