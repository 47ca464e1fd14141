#pragma once

// JSON-Lines embedding records: one object per line,
//   {"prompt_id": "...", "role": "base", "concept": "...", "encoder_id": "...",
//    "vector": [ ... ]}
// "concept" is present exactly for the *_with_concept roles. Vector values are
// written with 17 significant digits, which round-trips 64-bit floats.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finexl/linalg.hpp"

namespace finexl::backends {

enum class Role { base, personal, text, text_with_concept, ideal, ideal_with_concept };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view name);
bool role_requires_concept(Role role);

struct EmbeddingRecord {
  std::string prompt_id;
  Role role = Role::base;
  std::optional<std::string> concept_label;
  std::string encoder_id;
  EmbeddingVector vector;
};

/// Checks role/concept consistency, non-empty ids and finite values.
void validate_record(const EmbeddingRecord& record);

/// Parses one line; errors carry `line_no` in their message.
EmbeddingRecord parse_record(std::string_view line, std::size_t line_no);
std::string format_record(const EmbeddingRecord& record);

/// Formats a double with 17 significant digits.
std::string format_real(double value);
std::string format_vector(const EmbeddingVector& v);

/// Streams records one at a time, enforcing a uniform dimension per
/// encoder_id across the file. Blank lines are skipped.
void for_each_embedding(const std::filesystem::path& path,
                        const std::function<void(EmbeddingRecord&&)>& visit);

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records);

}  // namespace finexl::backends
