#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "finexl/backends/records.hpp"
#include "finexl/cli.hpp"
#include "finexl/io.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testing_support::scratch_dir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = finexl::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

// Synthetic fixtures in `dir` from a config with the given synth section.
void synth(const fs::path& dir, const json& section, std::uint64_t seed = 5) {
  write_json(dir / "synth.json", {{"seed", seed}, {"synth", section}});
  const auto r = run({"synth", "--config", (dir / "synth.json").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
}

}  // namespace

TEST(cli, synth_is_deterministic) {
  const auto a = scratch_dir("cli_synth_a");
  const auto b = scratch_dir("cli_synth_b");
  const json section{{"dimension", 12}, {"weights", {0.5, 0.25}}, {"noise_sigma", 0.01}, {"n_pairs", 20}};
  synth(a, section);
  synth(b, section);
  for (const auto* f : {"embeddings.jsonl", "ground_truth.json", "concept_vectors.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto truth = finexl::io::read_json(a / "ground_truth.json");
  EXPECT_EQ(truth.at("planted_weights"), json({0.5, 0.25}));
  EXPECT_EQ(finexl::backends::load_embeddings(a / "embeddings.jsonl").size(), 40u);
}

TEST(cli, synth_rejects_more_concepts_than_dimensions) {
  const auto dir = scratch_dir("cli_synth_bad");
  write_json(dir / "c.json", {{"synth", {{"dimension", 3}, {"n_concepts", 5}}}});
  EXPECT_EQ(run({"synth", "--config", (dir / "c.json").string(), "--out", dir.string()}).code, 2);
}

TEST(cli, divergence_matches_planted_target) {
  const auto dir = scratch_dir("cli_divergence");
  synth(dir, {{"dimension", 16}, {"weights", {0.6, 0.3, 0.1}}, {"n_pairs", 30}});
  const auto r = run({"divergence", "--embeddings", (dir / "embeddings.jsonl").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto div = finexl::io::divergence_from_json(finexl::io::read_json(dir / "divergence.json"));
  const auto truth = finexl::io::vector_from_json(finexl::io::read_json(dir / "ground_truth.json").at("noiseless_target"), "noiseless_target");
  EXPECT_LT((div.vector - truth).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(div.n_samples, 30u);
  EXPECT_EQ(div.encoder_id, "synthetic");
}

TEST(cli, divergence_input_errors) {
  const auto dir = scratch_dir("cli_divergence_errors");
  std::ofstream(dir / "empty.jsonl").close();
  EXPECT_EQ(run({"divergence", "--embeddings", (dir / "empty.jsonl").string(), "--out", dir.string()}).code, 2);
  EXPECT_EQ(run({"divergence", "--embeddings", (dir / "missing.jsonl").string(), "--out", dir.string()}).code, 3);
  EXPECT_EQ(run({"divergence", "--out", dir.string()}).code, 2);
  std::ofstream(dir / "broken.json") << "{not json";
  EXPECT_EQ(run({"divergence", "--config", (dir / "broken.json").string(), "--out", dir.string()}).code, 2);
  EXPECT_EQ(run({"nonsense"}).code, 2);
}

TEST(cli, explain_recovers_planted_concepts) {
  const auto dir = scratch_dir("cli_explain");
  synth(dir, {{"dimension", 16}, {"weights", {0.6, 0.3, 0.1}}, {"n_pairs", 25}, {"n_distractors", 20}});
  const std::vector<std::string> args{"explain", "--embeddings", (dir / "embeddings.jsonl").string(),
                                      "--concept-vectors", (dir / "concept_vectors.json").string(),
                                      "--e-decomp", "0.05", "--out", dir.string()};
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto expl = finexl::io::read_json(dir / "explanation.json");
  EXPECT_TRUE(expl.at("converged").get<bool>());
  ASSERT_EQ(expl.at("concepts").size(), 3u);
  const std::vector<double> want{0.6, 0.3, 0.1};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(expl.at("concepts")[i].at("label"), "planted " + std::to_string(i + 1));
    EXPECT_NEAR(expl.at("concepts")[i].at("weight").get<double>(), want[i], 1e-9);
  }
  EXPECT_NE(r.out.find("planted 1"), std::string::npos);
  EXPECT_EQ(slurp(dir / "report.txt"), r.out);

  const auto first = slurp(dir / "explanation.json");
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(slurp(dir / "explanation.json"), first);
}

TEST(cli, loose_threshold_keeps_one_concept) {
  const auto dir = scratch_dir("cli_explain_loose");
  synth(dir, {{"dimension", 16}, {"weights", {0.6, 0.3, 0.1}}, {"n_pairs", 10}});
  const auto r = run({"explain", "--embeddings", (dir / "embeddings.jsonl").string(), "--concept-vectors",
                      (dir / "concept_vectors.json").string(), "--e-decomp", "0.99", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(finexl::io::read_json(dir / "explanation.json").at("concepts").size(), 1u);
}

TEST(cli, explain_without_candidates_fails_validation) {
  const auto dir = scratch_dir("cli_explain_none");
  synth(dir, {{"dimension", 8}, {"weights", {0.5}}, {"n_pairs", 10}});
  write_json(dir / "none.json", {{"encoder_id", "synthetic"}, {"concepts", json::array()}});
  EXPECT_EQ(run({"explain", "--embeddings", (dir / "embeddings.jsonl").string(), "--concept-vectors",
                 (dir / "none.json").string(), "--out", dir.string()})
                .code,
            2);
  EXPECT_EQ(run({"explain", "--embeddings", (dir / "embeddings.jsonl").string(), "--concept-vectors",
                 (dir / "concept_vectors.json").string(), "--e-ortho", "-1", "--out", dir.string()})
                .code,
            2);
}

TEST(cli, explain_from_config_file_with_relative_paths) {
  const auto dir = scratch_dir("cli_explain_config");
  synth(dir, {{"dimension", 16}, {"weights", {0.4, 0.2}}, {"n_pairs", 10}});
  write_json(dir / "run.json", {{"embeddings", "embeddings.jsonl"},
                                {"concept_vectors", "concept_vectors.json"},
                                {"thresholds", {{"e_ortho", 0.3}, {"e_decomp", 0.05}}}});
  const auto out = dir / "out";
  const auto r = run({"explain", "--config", (dir / "run.json").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto expl = finexl::io::read_json(out / "explanation.json");
  EXPECT_EQ(expl.at("concepts").size(), 2u);
  EXPECT_EQ(expl.at("thresholds").at("e_decomp"), 0.05);
  EXPECT_TRUE(fs::exists(out / "explain.log"));
}

TEST(cli, map_and_explain_through_text_records) {
  const auto dir = scratch_dir("cli_map");
  std::ofstream(dir / "prompts.jsonl") << R"({"prompt_id":"p1","text":"a cat"})" << "\n"
                                       << R"({"prompt_id":"p2","text":"a dog"})" << "\n";
  write_json(dir / "concepts.json", {{"concepts", {{{"label", "vivid"}, {"frequency", 2}},
                                                   {{"label", "muted"}, {"frequency", 1}}}}});
  using finexl::backends::Role;
  std::vector<finexl::backends::EmbeddingRecord> records;
  auto add = [&](std::string id, Role role, std::optional<std::string> c, finexl::EmbeddingVector v) {
    records.push_back({std::move(id), role, std::move(c), "txt", std::move(v)});
  };
  const finexl::EmbeddingVector e0 = finexl::EmbeddingVector::Unit(3, 0);
  add("p1", Role::text, std::nullopt, e0);
  add("p2", Role::text, std::nullopt, e0);
  add("p1", Role::text_with_concept, "vivid", finexl::EmbeddingVector::Unit(3, 1));
  add("p2", Role::text_with_concept, "vivid", finexl::EmbeddingVector::Unit(3, 1));
  add("p1", Role::text_with_concept, "muted", finexl::EmbeddingVector::Unit(3, 2));
  add("p2", Role::text_with_concept, "muted", finexl::EmbeddingVector::Unit(3, 2));
  finexl::backends::save_embeddings(dir / "text.jsonl", records);

  const auto r = run({"map-concepts", "--concepts", (dir / "concepts.json").string(), "--prompts",
                      (dir / "prompts.jsonl").string(), "--text-embeddings", (dir / "text.jsonl").string(),
                      "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto vectors = finexl::io::concept_vectors_from_json(finexl::io::read_json(dir / "concept_vectors.json"));
  ASSERT_EQ(vectors.size(), 2u);
  EXPECT_EQ(vectors[0].term.label, "vivid");
  EXPECT_EQ(vectors[0].vector, (finexl::EmbeddingVector(3) << -1, 1, 0).finished());
}

TEST(cli, eval_rank_and_mixture) {
  const auto dir = scratch_dir("cli_eval");
  write_json(dir / "levels.json", {{"models", {{{"id", "a"}, {"level", 1}, {"score", 0.1}},
                                               {{"id", "b"}, {"level", 2}, {"score", 0.2}},
                                               {{"id", "c"}, {"level", 3}, {"score", 0.3}}}}});
  auto r = run({"eval", "--input", (dir / "levels.json").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(finexl::io::read_json(dir / "eval.json").at("rank_mae"), 0.0);

  write_json(dir / "reversed.json", {{"models", {{{"id", "a"}, {"level", 1}, {"score", 0.3}},
                                                 {{"id", "b"}, {"level", 2}, {"score", 0.2}},
                                                 {{"id", "c"}, {"level", 3}, {"score", 0.1}}}}});
  r = run({"eval", "--input", (dir / "reversed.json").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(finexl::io::read_json(dir / "eval.json").at("rank_mae").get<double>(), 4.0 / 3.0, 1e-12);

  json models = json::array();
  for (int a = 0; a <= 2; ++a) {
    for (int b = 0; a + b <= 2; ++b) {
      models.push_back({{"id", "m" + std::to_string(a) + std::to_string(b)},
                        {"coordinate", {a, b}},
                        {"scores", {{"cartoon", 0.2 * a}, {"oil", 1.0 + 0.1 * b}}}});
    }
  }
  write_json(dir / "grid.json", {{"aspects", {"cartoon", "oil"}}, {"models", models}});
  r = run({"eval", "--mode", "mixture", "--input", (dir / "grid.json").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(finexl::io::read_json(dir / "eval.json").at("mixture_accuracy"), 1.0);

  EXPECT_EQ(run({"eval", "--mode", "bogus", "--input", (dir / "grid.json").string(), "--out", dir.string()}).code, 2);
}

TEST(cli, diag_samples_and_encoder) {
  const auto dir = scratch_dir("cli_diag");
  synth(dir, {{"dimension", 16}, {"weights", {0.3, 0.2}}, {"noise_sigma", 0.1}, {"n_pairs", 60}});
  auto r = run({"diag", "--kind", "samples", "--embeddings", (dir / "embeddings.jsonl").string(), "--out",
                dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto curve = finexl::io::read_json(dir / "diag.json").at("curve");
  ASSERT_EQ(curve.size(), 3u);  // 10, 25, 50
  EXPECT_GT(curve[0].at("mean_cosine_distance").get<double>(), curve[2].at("mean_cosine_distance").get<double>());

  // Encoder diagnostics from precomputed, exactly additive text records.
  std::ofstream(dir / "prompts.jsonl") << R"({"prompt_id":"p1","text":"a cat"})" << "\n";
  testing_support::AdditiveEncoder stub({"a cat"}, {"vivid", "muted"});
  const finexl::CompositionTemplate comp;
  std::vector<std::string> texts{"a cat", comp.apply("vivid", "a cat"), comp.apply("muted", "a cat"),
                                 comp.apply("vivid and muted", "a cat")};
  const auto vecs = stub.embed(texts);
  using finexl::backends::Role;
  std::vector<finexl::backends::EmbeddingRecord> records{
      {"p1", Role::text, std::nullopt, "stub", vecs[0]},
      {"p1", Role::text_with_concept, "vivid", "stub", vecs[1]},
      {"p1", Role::text_with_concept, "muted", "stub", vecs[2]},
      {"p1", Role::text_with_concept, "vivid and muted", "stub", vecs[3]},
  };
  finexl::backends::save_embeddings(dir / "text.jsonl", records);
  write_json(dir / "diag.json.in", {{"prompts", "prompts.jsonl"},
                                    {"text_embeddings", "text.jsonl"},
                                    {"diag", {{"kind", "encoder"}, {"concept_pairs", json::array({json::array({"vivid", "muted"})})}}}});
  r = run({"diag", "--config", (dir / "diag.json.in").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto d = finexl::io::read_json(dir / "diag.json");
  EXPECT_NEAR(d.at("linearity").get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(d.at("orthogonality").get<double>(), 0.0, 1e-12);
  EXPECT_TRUE(d.at("alignment").is_null());

  write_json(dir / "diag_align.json", {{"prompts", "prompts.jsonl"},
                                       {"text_embeddings", "text.jsonl"},
                                       {"diag", {{"kind", "encoder"}, {"alignment", true},
                                                 {"concept_pairs", json::array({json::array({"vivid", "muted"})})}}}});
  EXPECT_EQ(run({"diag", "--config", (dir / "diag_align.json").string(), "--out", dir.string()}).code, 2);
}

TEST(cli, discover_against_mock_vlm) {
  const auto dir = scratch_dir("cli_discover");
  std::ofstream(dir / "b.png") << "base";
  std::ofstream(dir / "p.png") << "personal";
  testing_support::MockServer server([](httplib::Server& s) {
    s.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"choices", {{{"message", {{"content", "Vivid, ornate"}}}}}}}.dump(), "application/json");
    });
    s.Post("/junk/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"choices", {{{"message", {{"content", "I cannot tell the two images apart at all"}}}}}}}.dump(),
                      "application/json");
    });
  });
  auto config = [&](const std::string& prefix) {
    return json{{"backend", {{"vlm_base_url", server.url() + prefix}, {"vlm_model_id", "m"}, {"backoff_initial_ms", 1},
                             {"backoff_max_ms", 2}}},
                {"discover", {{"image_pairs", json::array({json::array({"b.png", "p.png"})})}, {"rounds", 3}}}};
  };
  write_json(dir / "ok.json", config(""));
  auto r = run({"discover", "--config", (dir / "ok.json").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto set = finexl::io::concept_set_from_json(finexl::io::read_json(dir / "concepts.json"));
  EXPECT_EQ(set.frequency("vivid"), 3);
  EXPECT_EQ(set.frequency("ornate"), 3);

  write_json(dir / "junk.json", config("/junk"));
  EXPECT_EQ(run({"discover", "--config", (dir / "junk.json").string(), "--out", dir.string()}).code, 2);

  write_json(dir / "secret.json", {{"backend", {{"vlm_base_url", "http://x"}, {"api_key", "sk"}}},
                                   {"discover", {{"image_pairs", json::array({json::array({"b.png", "p.png"})})}}}});
  EXPECT_EQ(run({"discover", "--config", (dir / "secret.json").string(), "--out", dir.string()}).code, 2);
}

TEST(cli, help_exits_cleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("explain"), std::string::npos);
}
