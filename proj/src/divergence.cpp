#include "finexl/divergence.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "finexl/random.hpp"

namespace finexl {

void validate_prompts(std::span<const PromptSample> prompts) {
  std::set<std::string_view> seen;
  for (const auto& p : prompts) {
    if (p.prompt_id.empty()) throw ValidationError("prompt with empty prompt_id");
    if (p.text.empty()) throw ValidationError("prompt '" + p.prompt_id + "' has empty text");
    if (!seen.insert(p.prompt_id).second) {
      throw ValidationError("duplicate prompt_id '" + p.prompt_id + "'");
    }
  }
}

DivergenceVector estimate_divergence(std::span<const PairedGeneration> pairs,
                                     const std::string& encoder_id) {
  if (pairs.empty()) throw ValidationError("estimate_divergence: no pairs");
  const auto dim = pairs.front().base_embedding.size();
  if (dim == 0) throw ValidationError("estimate_divergence: empty embedding");
  EmbeddingVector acc = EmbeddingVector::Zero(dim);
  for (const auto& p : pairs) {
    require_same_dim(p.base_embedding.size(), dim, "estimate_divergence");
    require_same_dim(p.personal_embedding.size(), dim, "estimate_divergence");
    if (!all_finite(p.base_embedding) || !all_finite(p.personal_embedding)) {
      throw ValidationError("estimate_divergence: non-finite embedding for prompt '" + p.prompt_id +
                            "'");
    }
    for (Eigen::Index i = 0; i < dim; ++i) acc(i) += p.personal_embedding(i) - p.base_embedding(i);
  }
  return {acc / static_cast<double>(pairs.size()), pairs.size(), encoder_id};
}

std::string resolve_encoder_id(std::span<const backends::EmbeddingRecord> records,
                               const std::string& requested) {
  if (!requested.empty()) return requested;
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.role == backends::Role::base || r.role == backends::Role::personal) ids.insert(r.encoder_id);
  }
  if (ids.empty()) throw ValidationError("no base/personal records");
  if (ids.size() > 1) throw ValidationError("several encoders present; specify encoder_id");
  return *ids.begin();
}

std::vector<PairedGeneration> pair_generations(std::span<const backends::EmbeddingRecord> records,
                                               std::string encoder_id,
                                               const IngestOptions& options) {
  using backends::Role;
  encoder_id = resolve_encoder_id(records, encoder_id);

  std::vector<std::string> order;
  std::map<std::string, const EmbeddingVector*> base;
  std::map<std::string, const EmbeddingVector*> personal;
  for (const auto& r : records) {
    if (r.encoder_id != encoder_id) continue;
    if (r.role != Role::base && r.role != Role::personal) continue;
    auto& slot = r.role == Role::base ? base : personal;
    if (!slot.emplace(r.prompt_id, &r.vector).second) {
      throw ValidationError("duplicate " + std::string(backends::to_string(r.role)) +
                            " record for prompt '" + r.prompt_id + "'");
    }
    if (r.role == Role::base) order.push_back(r.prompt_id);
  }
  if (order.empty()) throw ValidationError("no base/personal pairs for encoder '" + encoder_id + "'");
  if (personal.size() != base.size()) {
    for (const auto& [id, _] : personal) {
      if (!base.count(id)) throw ValidationError("prompt '" + id + "' has no base record");
    }
  }

  auto ingest = [&](const EmbeddingVector& v) -> EmbeddingVector {
    return options.normalize ? normalized(v) : v;
  };

  std::vector<PairedGeneration> pairs;
  pairs.reserve(order.size());
  for (const auto& id : order) {
    auto it = personal.find(id);
    if (it == personal.end()) throw ValidationError("prompt '" + id + "' has no personal record");
    pairs.push_back({id, ingest(*base.at(id)), ingest(*it->second), std::nullopt});
  }
  return pairs;
}

std::vector<SufficiencyPoint> sample_sufficiency(std::span<const PairedGeneration> pairs,
                                                 std::span<const std::size_t> subset_sizes,
                                                 std::size_t trials, std::uint64_t seed) {
  if (pairs.empty()) throw ValidationError("sample_sufficiency: no pairs");
  if (trials < 1) throw ValidationError("sample_sufficiency: trials must be >= 1");
  for (auto n : subset_sizes) {
    if (n == 0 || n >= pairs.size()) {
      throw ValidationError("sample_sufficiency: subset size " + std::to_string(n) +
                            " must be in [1, " + std::to_string(pairs.size()) + ")");
    }
  }
  const auto reference = estimate_divergence(pairs, {}).vector;
  if (!(norm(reference) > 0)) throw ZeroNormError("sample_sufficiency: all-pairs divergence is zero");

  Rng rng(seed);
  std::vector<SufficiencyPoint> out;
  std::vector<PairedGeneration> subset;
  for (auto n : subset_sizes) {
    double total = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      auto idx = rng.sample_without_replacement(pairs.size(), n);
      std::sort(idx.begin(), idx.end());
      subset.clear();
      for (auto i : idx) subset.push_back(pairs[i]);
      const auto est = estimate_divergence(subset, {}).vector;
      const double distance = norm(est) > 0 ? 1.0 - cosine(est, reference) : 1.0;
      total += std::max(0.0, distance);
    }
    out.push_back({n, total / static_cast<double>(trials)});
  }
  return out;
}

}  // namespace finexl
