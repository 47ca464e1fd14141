#include "finexl/backends/records.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

namespace finexl::backends {

namespace {

constexpr std::array<std::string_view, 6> kRoleNames = {
    "base", "personal", "text", "text_with_concept", "ideal", "ideal_with_concept"};

std::string at_line(std::size_t line_no, const std::string& msg) {
  return "line " + std::to_string(line_no) + ": " + msg;
}

}  // namespace

std::string_view to_string(Role role) { return kRoleNames[static_cast<std::size_t>(role)]; }

std::optional<Role> parse_role(std::string_view name) {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
    if (kRoleNames[i] == name) return static_cast<Role>(i);
  }
  return std::nullopt;
}

bool role_requires_concept(Role role) {
  return role == Role::text_with_concept || role == Role::ideal_with_concept;
}

void validate_record(const EmbeddingRecord& record) {
  if (record.prompt_id.empty()) throw ValidationError("record: empty prompt_id");
  if (record.encoder_id.empty()) throw ValidationError("record: empty encoder_id");
  if (role_requires_concept(record.role)) {
    if (!record.concept_label || record.concept_label->empty()) {
      throw ValidationError("record: role " + std::string(to_string(record.role)) +
                            " requires a concept");
    }
  } else if (record.concept_label) {
    throw ValidationError("record: role " + std::string(to_string(record.role)) +
                          " must not carry a concept");
  }
  if (record.vector.size() == 0) throw ValidationError("record: empty vector");
  if (!all_finite(record.vector)) throw ValidationError("record: non-finite value in vector");
}

EmbeddingRecord parse_record(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(at_line(line_no, std::string("malformed JSON: ") + e.what()));
  }
  if (!j.is_object()) throw ValidationError(at_line(line_no, "record is not an object"));

  auto string_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw ValidationError(at_line(line_no, std::string("missing string field '") + key + "'"));
    }
    return it->get<std::string>();
  };

  EmbeddingRecord rec;
  rec.prompt_id = string_field("prompt_id");
  rec.encoder_id = string_field("encoder_id");
  const auto role_name = string_field("role");
  auto role = parse_role(role_name);
  if (!role) throw ValidationError(at_line(line_no, "unknown role '" + role_name + "'"));
  rec.role = *role;
  if (auto it = j.find("concept"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError(at_line(line_no, "concept must be a string"));
    rec.concept_label = it->get<std::string>();
  }

  auto vit = j.find("vector");
  if (vit == j.end() || !vit->is_array()) {
    throw ValidationError(at_line(line_no, "missing array field 'vector'"));
  }
  rec.vector.resize(static_cast<Eigen::Index>(vit->size()));
  for (std::size_t i = 0; i < vit->size(); ++i) {
    const auto& x = (*vit)[i];
    if (!x.is_number()) {
      throw ValidationError(at_line(line_no, "non-numeric vector entry " + std::to_string(i)));
    }
    rec.vector(static_cast<Eigen::Index>(i)) = x.get<double>();
  }
  try {
    validate_record(rec);
  } catch (const ValidationError& e) {
    throw ValidationError(at_line(line_no, e.what()));
  }
  return rec;
}

std::string format_real(double value) {
  std::array<char, 64> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.17g", value);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

std::string format_vector(const EmbeddingVector& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_real(v(i));
  }
  out += ']';
  return out;
}

std::string format_record(const EmbeddingRecord& record) {
  validate_record(record);
  std::string out = "{\"prompt_id\":";
  out += nlohmann::json(record.prompt_id).dump();
  out += ",\"role\":\"";
  out += to_string(record.role);
  out += '"';
  if (record.concept_label) {
    out += ",\"concept\":";
    out += nlohmann::json(*record.concept_label).dump();
  }
  out += ",\"encoder_id\":";
  out += nlohmann::json(record.encoder_id).dump();
  out += ",\"vector\":";
  out += format_vector(record.vector);
  out += '}';
  return out;
}

void for_each_embedding(const std::filesystem::path& path,
                        const std::function<void(EmbeddingRecord&&)>& visit) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::map<std::string, Eigen::Index> dims;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto rec = parse_record(line, line_no);
    auto [it, inserted] = dims.emplace(rec.encoder_id, rec.vector.size());
    if (!inserted && it->second != rec.vector.size()) {
      throw DimensionMismatch(at_line(line_no, "encoder '" + rec.encoder_id + "' has dimension " +
                                                   std::to_string(it->second) + " but record has " +
                                                   std::to_string(rec.vector.size())));
    }
    visit(std::move(rec));
  }
  if (in.bad()) throw IoError("read error in " + path.string());
}

std::vector<EmbeddingRecord> load_embeddings(const std::filesystem::path& path) {
  std::vector<EmbeddingRecord> out;
  for_each_embedding(path, [&](EmbeddingRecord&& r) { out.push_back(std::move(r)); });
  return out;
}

void save_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding file " + path.string());
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw IoError("write error in " + path.string());
}

}  // namespace finexl::backends
