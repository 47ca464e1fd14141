#pragma once

// Concept discovery over a vision-language model, and the mapping of
// concepts to embedding-space directions through a text encoder.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finexl/divergence.hpp"
#include "finexl/linalg.hpp"

namespace finexl {

inline constexpr std::size_t kMaxConceptWords = 5;

struct Concept {
  std::string label;
  int frequency = 1;

  friend bool operator==(const Concept&, const Concept&) = default;
};

/// Lowercases, trims, collapses inner whitespace and strips surrounding
/// punctuation. Returns nullopt for an empty result or more than five words.
std::optional<std::string> normalize_concept(std::string_view raw);

/// "<a> and <b>". Throws ValidationError for identical labels.
Concept compose_concepts(const Concept& a, const Concept& b);

/// Concepts unique by label, with accumulated proposal counts.
class ConceptSet {
 public:
  void add(const std::string& label, int count = 1);
  void merge(const ConceptSet& other);

  std::size_t size() const { return counts_.size(); }
  bool empty() const { return counts_.empty(); }
  std::optional<int> frequency(const std::string& label) const;

  /// Frequency descending, ties broken by label.
  std::vector<Concept> ordered() const;

  friend bool operator==(const ConceptSet&, const ConceptSet&) = default;

 private:
  std::map<std::string, int> counts_;
};

/// Splits a comma, semicolon or line separated list, strips list bullets and
/// numbering, and keeps the items that normalize to a valid label.
std::vector<std::string> parse_concept_list(std::string_view response);

/// Base-model image first, personalized-model image second.
struct ImagePair {
  std::filesystem::path first;
  std::filesystem::path second;
};

/// VLM instruction text with {image_a} and {image_b} placeholders marking
/// where each image of the pair is attached.
struct PromptTemplate {
  std::string text;
  std::string version;

  void validate() const;
  static PromptTemplate default_template();
  static PromptTemplate load(const std::filesystem::path& path);
};

inline constexpr std::string_view kReprompt =
    "\nYour previous answer could not be parsed. Reply with only a comma-separated list of "
    "single-word adjectives or simple phrases.";

class VisionLanguageModel {
 public:
  virtual ~VisionLanguageModel() = default;
  /// Returns the assistant's raw text. Must be safe to call concurrently.
  virtual std::string describe(const ImagePair& pair, const PromptTemplate& prompt) = 0;
};

struct DiscoveryReport {
  ConceptSet concepts;
  std::size_t rounds_attempted = 0;
  std::size_t rounds_succeeded = 0;
  std::vector<std::string> failures;
};

inline constexpr int kDefaultDiscoveryRounds = 10;

/// Round r submits pair_refs[r % size]. Rounds run concurrently up to
/// `max_in_flight`; results are reduced in round order. A failed round is
/// logged in the report; zero successful rounds is a ValidationError.
DiscoveryReport discover_concepts(std::span<const ImagePair> pair_refs, VisionLanguageModel& vlm,
                                  const PromptTemplate& prompt, int rounds = kDefaultDiscoveryRounds,
                                  int max_in_flight = 1);

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string encoder_id() const = 0;
  /// One embedding per input, in input order.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// How a concept is attached to a prompt, with {concept} and {prompt}
/// placeholders.
struct CompositionTemplate {
  std::string text = "{concept} style: {prompt}";

  void validate() const;
  std::string apply(std::string_view term, std::string_view prompt) const;
};

struct ConceptVector {
  Concept term;
  EmbeddingVector vector;
  std::size_t n_prompts = 0;
};

/// Mean over prompts of Enc(augment(t, concept)) - Enc(t), with each text
/// embedding L2-normalized first.
ConceptVector map_concept(const Concept& term, std::span<const PromptSample> prompts,
                          TextEncoder& encoder, const CompositionTemplate& composition = {});

double alignment_check(const ConceptVector& text_vector, const EmbeddingVector& ideal_image_vector);

/// Cosine between f_ab and its least-squares projection onto span{f_a, f_b}.
/// Zero when the projection vanishes.
double linearity_score(const EmbeddingVector& f_a, const EmbeddingVector& f_b,
                       const EmbeddingVector& f_ab);

double linearity_check(const Concept& a, const Concept& b, std::span<const PromptSample> prompts,
                       TextEncoder& encoder, const CompositionTemplate& composition = {});

/// Ideal image-space concept vectors from records: per concept, the mean over
/// prompts of (ideal_with_concept - ideal), embeddings L2-normalized.
std::map<std::string, EmbeddingVector> ideal_concept_vectors(
    std::span<const backends::EmbeddingRecord> records, const std::string& encoder_id,
    bool normalize = true);

/// TextEncoder answering from text / text_with_concept records, so concept
/// mapping can run from precomputed files. Texts are looked up as the prompt
/// itself (role text) or the composed string (role text_with_concept).
class RecordTextEncoder : public TextEncoder {
 public:
  RecordTextEncoder(std::span<const backends::EmbeddingRecord> records,
                    std::span<const PromptSample> prompts, CompositionTemplate composition,
                    std::string encoder_id = {});

  std::string encoder_id() const override { return encoder_id_; }
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  std::string encoder_id_;
  std::map<std::string, EmbeddingVector> by_text_;
};

}  // namespace finexl
