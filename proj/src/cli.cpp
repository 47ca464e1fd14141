#include "finexl/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "finexl/backends/clients.hpp"
#include "finexl/backends/records.hpp"
#include "finexl/concepts.hpp"
#include "finexl/decomposition.hpp"
#include "finexl/divergence.hpp"
#include "finexl/evaluation.hpp"
#include "finexl/io.hpp"
#include "finexl/random.hpp"
#include "finexl/synthbench.hpp"

namespace finexl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flag values that override the config file. Unset flags leave it untouched.
struct Overrides {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> embeddings, prompts, concepts, concept_vectors, divergence,
      text_embeddings, encoder_id, backend, cache_dir, input, mode, kind, template_path,
      orthogonality, composition;
  std::optional<double> e_ortho, e_decomp, display_cutoff;
  std::optional<int> rounds;
  bool no_normalize = false;
};

class Context {
 public:
  Context(const Overrides& o, const std::string& command) : command_(command) {
    if (!o.config.empty()) {
      const fs::path path(o.config);
      cfg_ = io::read_json(path);
      if (!cfg_.is_object()) throw ValidationError("config must be a JSON object");
      base_dir_ = path.parent_path();
    } else {
      cfg_ = json::object();
    }
    apply(o);
    out_dir_ = o.out;
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir_.string());
    log_.open(out_dir_ / (command + ".log"), std::ios::app);
    log("start " + command);
  }

  const json& cfg() const { return cfg_; }
  const fs::path& out_dir() const { return out_dir_; }

  std::uint64_t seed() const { return cfg_.value("seed", std::uint64_t{0}); }

  bool has(const std::string& key) const { return cfg_.contains(key) && !cfg_.at(key).is_null(); }

  const json& section(const std::string& name) const {
    static const json empty = json::object();
    return cfg_.contains(name) ? cfg_.at(name) : empty;
  }

  fs::path path(const std::string& key) const {
    if (!has(key)) throw ValidationError("config: '" + key + "' is required for " + command_);
    return resolve(cfg_.at(key).get<std::string>());
  }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base_dir_.empty() ? path : base_dir_ / path;
  }

  // Timestamps live only in the log sidecar.
  void log(const std::string& message) {
    if (!log_) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    log_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << message << '\n';
  }

  Thresholds thresholds() const {
    Thresholds t;
    const auto& s = section("thresholds");
    t.e_ortho = s.value("e_ortho", t.e_ortho);
    t.e_decomp = s.value("e_decomp", t.e_decomp);
    if (s.contains("orthogonality")) {
      t.mode = parse_orthogonality_mode(s.at("orthogonality").get<std::string>());
    }
    t.validate();
    return t;
  }

  CompositionTemplate composition() const {
    CompositionTemplate c;
    if (has("composition_template")) c.text = cfg_.at("composition_template").get<std::string>();
    c.validate();
    return c;
  }

  bool normalize() const { return cfg_.value("normalize", true); }
  std::string encoder_id() const { return cfg_.value("encoder_id", std::string{}); }

  backends::BackendConfig backend() const {
    if (!has("backend")) throw ValidationError("config: 'backend' is required for " + command_);
    const auto& b = cfg_.at("backend");
    return b.is_string() ? backends::BackendConfig::load(resolve(b.get<std::string>()))
                         : backends::BackendConfig::from_json(b);
  }

 private:
  void apply(const Overrides& o) {
    auto set = [&](const char* key, const auto& value) {
      if (value) cfg_[key] = *value;
    };
    set("seed", o.seed);
    set("embeddings", o.embeddings);
    set("prompts", o.prompts);
    set("concepts", o.concepts);
    set("concept_vectors", o.concept_vectors);
    set("divergence", o.divergence);
    set("text_embeddings", o.text_embeddings);
    set("encoder_id", o.encoder_id);
    set("backend", o.backend);
    set("cache_dir", o.cache_dir);
    set("composition_template", o.composition);
    set("display_cutoff", o.display_cutoff);
    if (o.no_normalize) cfg_["normalize"] = false;
    if (o.e_ortho) cfg_["thresholds"]["e_ortho"] = *o.e_ortho;
    if (o.e_decomp) cfg_["thresholds"]["e_decomp"] = *o.e_decomp;
    if (o.orthogonality) cfg_["thresholds"]["orthogonality"] = *o.orthogonality;
    if (o.input) cfg_["eval"]["input"] = *o.input;
    if (o.mode) cfg_["eval"]["mode"] = *o.mode;
    if (o.kind) cfg_["diag"]["kind"] = *o.kind;
    if (o.template_path) cfg_["discover"]["template"] = *o.template_path;
    if (o.rounds) cfg_["discover"]["rounds"] = *o.rounds;
  }

  std::string command_;
  json cfg_;
  fs::path base_dir_;
  fs::path out_dir_;
  std::ofstream log_;
};

std::vector<backends::EmbeddingRecord> load_records(const Context& ctx, const std::string& key) {
  return backends::load_embeddings(ctx.path(key));
}

std::vector<PairedGeneration> load_pairs(const Context& ctx, std::string& encoder_id) {
  const auto records = load_records(ctx, "embeddings");
  if (records.empty()) throw ValidationError("embedding file has no records");
  encoder_id = resolve_encoder_id(records, ctx.encoder_id());
  return pair_generations(records, encoder_id, IngestOptions{ctx.normalize()});
}

DivergenceVector load_or_estimate_divergence(const Context& ctx) {
  if (ctx.has("divergence")) return io::divergence_from_json(io::read_json(ctx.path("divergence")));
  std::string encoder_id;
  const auto pairs = load_pairs(ctx, encoder_id);
  return estimate_divergence(pairs, encoder_id);
}

std::unique_ptr<TextEncoder> make_text_encoder(const Context& ctx,
                                               std::span<const PromptSample> prompts) {
  if (ctx.has("text_embeddings")) {
    const auto records = load_records(ctx, "text_embeddings");
    return std::make_unique<RecordTextEncoder>(records, prompts, ctx.composition(), ctx.encoder_id());
  }
  const auto backend = ctx.backend();
  const auto cache_root = ctx.has("cache_dir") ? ctx.path("cache_dir") : ctx.out_dir() / "cache";
  return std::make_unique<backends::HttpTextEncoder>(
      backend, std::make_shared<backends::EmbeddingCache>(cache_root));
}

std::vector<ConceptVector> map_concept_set(Context& ctx, const ConceptSet& set,
                                           std::span<const PromptSample> prompts,
                                           TextEncoder& encoder) {
  std::vector<ConceptVector> out;
  const auto composition = ctx.composition();
  for (const auto& c : set.ordered()) {
    try {
      out.push_back(map_concept(c, prompts, encoder, composition));
    } catch (const ZeroNormError& e) {
      ctx.log(std::string("skipping concept: ") + e.what());
    }
  }
  return out;
}

std::vector<ConceptVector> load_candidates(Context& ctx, std::string& encoder_id) {
  if (ctx.has("concept_vectors")) {
    const auto doc = io::read_json(ctx.path("concept_vectors"));
    if (doc.is_object() && doc.contains("encoder_id")) encoder_id = doc.at("encoder_id").get<std::string>();
    return io::concept_vectors_from_json(doc);
  }
  const auto set = io::concept_set_from_json(io::read_json(ctx.path("concepts")));
  const auto prompts = io::load_prompts(ctx.path("prompts"));
  auto encoder = make_text_encoder(ctx, prompts);
  encoder_id = encoder->encoder_id();
  return map_concept_set(ctx, set, prompts, *encoder);
}

int cmd_divergence(Context& ctx, std::ostream& out) {
  std::string encoder_id;
  const auto pairs = load_pairs(ctx, encoder_id);
  const auto div = estimate_divergence(pairs, encoder_id);
  io::write_json(ctx.out_dir() / "divergence.json", io::divergence_to_json(div, ctx.normalize()));
  ctx.log("estimated divergence from " + std::to_string(div.n_samples) + " pairs");
  out << "divergence: " << div.n_samples << " pairs, norm " << norm(div.vector) << '\n';
  return kExitOk;
}

std::vector<ImagePair> image_pairs(const Context& ctx, const json& section) {
  if (!section.contains("image_pairs")) throw ValidationError("discover: 'image_pairs' is required");
  std::vector<ImagePair> pairs;
  for (const auto& p : section.at("image_pairs")) {
    if (p.is_array() && p.size() == 2) {
      pairs.push_back({ctx.resolve(p[0].get<std::string>()), ctx.resolve(p[1].get<std::string>())});
    } else if (p.is_object()) {
      pairs.push_back({ctx.resolve(p.at("base").get<std::string>()),
                       ctx.resolve(p.at("personal").get<std::string>())});
    } else {
      throw ValidationError("discover: image pair must be [base, personal] or {base, personal}");
    }
  }
  for (const auto& p : pairs) {
    for (const auto* f : {&p.first, &p.second}) {
      if (!fs::exists(*f)) throw IoError("image not found: " + f->string());
    }
  }
  return pairs;
}

int cmd_discover(Context& ctx, std::ostream& out) {
  const auto& section = ctx.section("discover");
  const auto pairs = image_pairs(ctx, section);
  const auto prompt = section.contains("template")
                          ? PromptTemplate::load(ctx.resolve(section.at("template").get<std::string>()))
                          : PromptTemplate::default_template();
  const int rounds = section.value("rounds", kDefaultDiscoveryRounds);
  const auto backend = ctx.backend();
  backends::ChatCompletionVlm vlm(backend);
  const auto report = discover_concepts(pairs, vlm, prompt, rounds, backend.max_in_flight);
  for (const auto& f : report.failures) ctx.log(f);
  io::write_json(ctx.out_dir() / "concepts.json", io::discovery_to_json(report, prompt));
  out << "discovered " << report.concepts.size() << " concepts in " << report.rounds_succeeded
      << "/" << report.rounds_attempted << " rounds\n";
  return kExitOk;
}

int cmd_map_concepts(Context& ctx, std::ostream& out) {
  const auto set = io::concept_set_from_json(io::read_json(ctx.path("concepts")));
  const auto prompts = io::load_prompts(ctx.path("prompts"));
  if (prompts.empty()) throw ValidationError("prompt file is empty");
  auto encoder = make_text_encoder(ctx, prompts);
  const auto vectors = map_concept_set(ctx, set, prompts, *encoder);
  io::write_json(ctx.out_dir() / "concept_vectors.json",
                 io::concept_vectors_to_json(vectors, encoder->encoder_id(), ctx.composition()));
  out << "mapped " << vectors.size() << " of " << set.size() << " concepts\n";
  return kExitOk;
}

int cmd_explain(Context& ctx, std::ostream& out) {
  const auto thresholds = ctx.thresholds();
  const double cutoff = ctx.cfg().value("display_cutoff", kDefaultDisplayCutoff);
  const auto div = load_or_estimate_divergence(ctx);
  std::string candidate_encoder = div.encoder_id;
  auto candidates = load_candidates(ctx, candidate_encoder);
  if (candidates.empty()) throw ValidationError("explain: no candidate concepts");
  if (candidate_encoder != div.encoder_id) {
    ctx.log("warning: concept vectors from encoder '" + candidate_encoder +
            "' with divergence from '" + div.encoder_id + "'");
  }
  order_candidates(candidates);
  const auto explanation = run_finexl(div, candidates, thresholds);
  io::write_json(ctx.out_dir() / "explanation.json",
                 io::explanation_to_json(explanation, thresholds, div.encoder_id, div.n_samples));
  const auto report = render_report(explanation, cutoff, thresholds);
  io::write_text(ctx.out_dir() / "report.txt", report);
  ctx.log("explained with " + std::to_string(explanation.entries.size()) + " concepts");
  out << report;
  return kExitOk;
}

int cmd_eval(Context& ctx, std::ostream& out) {
  const auto& section = ctx.section("eval");
  if (!section.contains("input")) throw ValidationError("eval: 'input' is required");
  const auto doc = io::read_json(ctx.resolve(section.at("input").get<std::string>()));
  const auto mode = section.value("mode", std::string("rank"));
  json result;
  if (mode == "rank") {
    const auto series = io::level_series_from_json(doc, section.value("aspect", std::string{}));
    result = {{"mode", "rank"}, {"rank_mae", rank_mae(series)}, {"n_models", series.scores.size()}};
  } else if (mode == "mixture") {
    const auto grid = io::mixture_grid_from_json(doc);
    const auto r = mixture_accuracy(grid);
    const auto cells = grid.resolved_grid();
    json assigned = json::array();
    for (std::size_t m = 0; m < r.assigned.size(); ++m) {
      assigned.push_back({{"id", grid.model_ids[m]}, {"coordinate", cells[r.assigned[m]]}});
    }
    result = {{"mode", "mixture"},
              {"mixture_accuracy", r.accuracy},
              {"assigned", assigned},
              {"warnings", r.warnings}};
    for (const auto& w : r.warnings) ctx.log("warning: " + w);
  } else {
    throw ValidationError("eval: mode must be 'rank' or 'mixture'");
  }
  io::write_json(ctx.out_dir() / "eval.json", result);
  out << result.dump(2) << '\n';
  return kExitOk;
}

int cmd_diag(Context& ctx, std::ostream& out) {
  const auto& section = ctx.section("diag");
  const auto kind = section.value("kind", std::string("encoder"));
  json result;
  if (kind == "samples") {
    std::string encoder_id;
    const auto pairs = load_pairs(ctx, encoder_id);
    std::vector<std::size_t> sizes;
    if (section.contains("subset_sizes")) {
      sizes = section.at("subset_sizes").get<std::vector<std::size_t>>();
    } else {
      for (std::size_t n : {10, 25, 50, 100, 200, 500}) {
        if (n < pairs.size()) sizes.push_back(n);
      }
    }
    const auto trials = section.value("trials", std::size_t{20});
    const auto curve = sample_sufficiency(pairs, sizes, trials, ctx.seed());
    json points = json::array();
    for (const auto& p : curve) points.push_back({{"n", p.n}, {"mean_cosine_distance", p.mean_cosine_distance}});
    result = {{"kind", "samples"}, {"encoder_id", encoder_id}, {"n_pairs", pairs.size()},
              {"trials", trials}, {"curve", points}};
  } else if (kind == "encoder") {
    std::vector<std::pair<Concept, Concept>> concept_pairs;
    if (!section.contains("concept_pairs")) throw ValidationError("diag: 'concept_pairs' is required");
    for (const auto& p : section.at("concept_pairs")) {
      if (!p.is_array() || p.size() != 2) throw ValidationError("diag: concept pair must be [a, b]");
      auto a = normalize_concept(p[0].get<std::string>());
      auto b = normalize_concept(p[1].get<std::string>());
      if (!a || !b) throw ValidationError("diag: invalid concept label");
      concept_pairs.push_back({{*a, 1}, {*b, 1}});
    }
    const auto prompts = io::load_prompts(ctx.path("prompts"));
    auto encoder = make_text_encoder(ctx, prompts);
    std::optional<std::map<std::string, EmbeddingVector>> ideal;
    if (section.value("alignment", false)) {
      const auto key = section.contains("ideal_embeddings") ? section.at("ideal_embeddings").get<std::string>()
                                                            : ctx.cfg().value("embeddings", std::string{});
      if (key.empty()) throw ValidationError("diag: alignment requested without ideal embeddings");
      const auto records = backends::load_embeddings(ctx.resolve(key));
      ideal = ideal_concept_vectors(records, section.value("ideal_encoder_id", std::string{}), ctx.normalize());
    }
    const auto d = encoder_diagnostics(concept_pairs, prompts, *encoder, ideal ? &*ideal : nullptr,
                                       ctx.composition());
    result = {{"kind", "encoder"},
              {"encoder_id", encoder->encoder_id()},
              {"linearity", d.linearity},
              {"orthogonality", d.orthogonality},
              {"alignment", d.alignment ? json(*d.alignment) : json(nullptr)}};
  } else {
    throw ValidationError("diag: kind must be 'encoder' or 'samples'");
  }
  io::write_json(ctx.out_dir() / "diag.json", result);
  out << result.dump(2) << '\n';
  return kExitOk;
}

int cmd_synth(Context& ctx, std::ostream& out) {
  const auto& s = ctx.section("synth");
  const auto seed = ctx.seed();
  const auto dim = s.value("dimension", Eigen::Index{16});
  std::vector<double> weights;
  if (s.contains("weights")) {
    weights = s.at("weights").get<std::vector<double>>();
  } else {
    Rng rng(seed ^ 0x5DEECE66DULL);
    const auto k = s.value("n_concepts", std::size_t{3});
    for (std::size_t i = 0; i < k; ++i) weights.push_back(0.15 + 0.25 * rng.uniform());
  }
  const auto scenario = make_scenario(dim, weights, s.value("noise_sigma", 0.0),
                                      s.value("n_pairs", std::size_t{100}), seed);
  const auto population = plant_divergence(scenario);
  const auto candidates = planted_candidates(scenario, s.value("n_distractors", std::size_t{20}),
                                             s.value("distractor_min_cos", 0.95), seed + 1);

  const std::string encoder_id = s.value("encoder_id", std::string("synthetic"));
  std::vector<backends::EmbeddingRecord> records;
  for (const auto& p : population.pairs) {
    records.push_back({p.prompt_id, backends::Role::base, std::nullopt, encoder_id, p.base_embedding});
    records.push_back({p.prompt_id, backends::Role::personal, std::nullopt, encoder_id, p.personal_embedding});
  }
  backends::save_embeddings(ctx.out_dir() / "embeddings.jsonl", records);
  io::write_json(ctx.out_dir() / "ground_truth.json",
                 {{"planted_weights", scenario.planted_weights},
                  {"basis_labels", scenario.basis_labels},
                  {"noiseless_target", io::vector_to_json(population.target.vector)},
                  {"dimension", scenario.dimension},
                  {"noise_sigma", scenario.noise_sigma},
                  {"n_pairs", scenario.n_pairs},
                  {"seed", seed}});
  io::write_json(ctx.out_dir() / "concept_vectors.json",
                 io::concept_vectors_to_json(candidates, encoder_id, CompositionTemplate{}));
  out << "wrote " << records.size() << " records and " << candidates.size() << " candidates to "
      << ctx.out_dir().string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Explain how a personalized image generator diverges from its base model"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run config (JSON)");
    sub->add_option("--seed", o.seed, "Seed for all random draws");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--encoder-id", o.encoder_id, "Encoder to select from embedding files");
    sub->add_flag("--no-normalize", o.no_normalize, "Skip L2 normalization at ingestion");
  };

  using Handler = int (*)(Context&, std::ostream&);
  std::map<std::string, Handler> handlers = {
      {"divergence", cmd_divergence}, {"discover", cmd_discover}, {"map-concepts", cmd_map_concepts},
      {"explain", cmd_explain}, {"eval", cmd_eval}, {"diag", cmd_diag}, {"synth", cmd_synth}};

  auto* divergence = app.add_subcommand("divergence", "Estimate the divergence vector");
  common(divergence);
  divergence->add_option("--embeddings", o.embeddings, "Embedding records (JSON-Lines)");

  auto* discover = app.add_subcommand("discover", "Discover candidate concepts with a VLM");
  common(discover);
  discover->add_option("--backend", o.backend, "Backend config (JSON)");
  discover->add_option("--template", o.template_path, "VLM prompt template");
  discover->add_option("--rounds", o.rounds, "Number of VLM rounds");

  auto* map = app.add_subcommand("map-concepts", "Map concepts to embedding directions");
  common(map);
  map->add_option("--concepts", o.concepts, "Concept set (JSON)");
  map->add_option("--prompts", o.prompts, "Prompts (JSON-Lines)");
  map->add_option("--text-embeddings", o.text_embeddings, "Precomputed text embedding records");
  map->add_option("--backend", o.backend, "Backend config (JSON)");
  map->add_option("--cache-dir", o.cache_dir, "Embedding cache directory");
  map->add_option("--composition", o.composition, "Composition template");

  auto* explain = app.add_subcommand("explain", "Decompose the divergence into concepts");
  common(explain);
  explain->add_option("--embeddings", o.embeddings, "Embedding records (JSON-Lines)");
  explain->add_option("--divergence", o.divergence, "Precomputed divergence (JSON)");
  explain->add_option("--concept-vectors", o.concept_vectors, "Mapped concept vectors (JSON)");
  explain->add_option("--concepts", o.concepts, "Concept set (JSON)");
  explain->add_option("--prompts", o.prompts, "Prompts (JSON-Lines)");
  explain->add_option("--text-embeddings", o.text_embeddings, "Precomputed text embedding records");
  explain->add_option("--backend", o.backend, "Backend config (JSON)");
  explain->add_option("--cache-dir", o.cache_dir, "Embedding cache directory");
  explain->add_option("--e-ortho", o.e_ortho, "Orthogonality threshold");
  explain->add_option("--e-decomp", o.e_decomp, "Relative residual threshold");
  explain->add_option("--orthogonality", o.orthogonality, "absolute | signed");
  explain->add_option("--display-cutoff", o.display_cutoff, "Report cutoff fraction");

  auto* eval = app.add_subcommand("eval", "Score quantitative explanations");
  common(eval);
  eval->add_option("--input", o.input, "Series or grid (JSON)");
  eval->add_option("--mode", o.mode, "rank | mixture");

  auto* diag = app.add_subcommand("diag", "Encoder and sample-size diagnostics");
  common(diag);
  diag->add_option("--kind", o.kind, "encoder | samples");
  diag->add_option("--embeddings", o.embeddings, "Embedding records (JSON-Lines)");
  diag->add_option("--prompts", o.prompts, "Prompts (JSON-Lines)");
  diag->add_option("--text-embeddings", o.text_embeddings, "Precomputed text embedding records");
  diag->add_option("--backend", o.backend, "Backend config (JSON)");
  diag->add_option("--cache-dir", o.cache_dir, "Embedding cache directory");

  auto* synth = app.add_subcommand("synth", "Write synthetic ground-truth fixtures");
  common(synth);

  std::vector<std::string> argv_storage{"finexl"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  const auto* selected = app.get_subcommands().front();
  const auto name = selected->get_name();
  try {
    Context ctx(o, name);
    try {
      return handlers.at(name)(ctx, out);
    } catch (const std::exception& e) {
      ctx.log(std::string("error: ") + e.what());
      throw;
    }
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace finexl::cli
