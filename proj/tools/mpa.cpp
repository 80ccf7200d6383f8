// mpa: extract, evaluate and inspect episodic few-shot embedding banks.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mpa/bank.hpp"
#include "mpa/episodes.hpp"
#include "mpa/error.hpp"
#include "mpa/extract.hpp"
#include "mpa/hma.hpp"
#include "mpa/lmse.hpp"
#include "mpa/provider.hpp"
#include "mpa/report.hpp"
#include "mpa/synth.hpp"

namespace {

using namespace mpa;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::IoError, "write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct ProviderFlags {
  std::string url;
  std::uint32_t timeout_ms = 30000;
  std::uint32_t max_in_flight = 4;
  std::uint32_t retries = 3;
  std::uint32_t batch = 16;
  std::string variant_cache;

  void add(CLI::App& app) {
    app.add_option("--provider-url", url, "Embedding provider base URL (default: $MPA_PROVIDER_URL or http://127.0.0.1:8700)");
    app.add_option("--provider-timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
    app.add_option("--max-in-flight", max_in_flight, "Concurrent provider requests")->capture_default_str();
    app.add_option("--provider-retries", retries, "Retries for transport errors and 5xx")->capture_default_str();
    app.add_option("--provider-batch", batch, "Inputs per provider request")->capture_default_str();
    app.add_option("--variant-cache", variant_cache, "Description cache file (default: $MPA_VARIANT_CACHE)");
  }

  ProviderConfig config() const {
    auto c = ProviderConfig::from_env();
    if (!url.empty()) c.base_url = url;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    c.max_in_flight = max_in_flight;
    c.retry_count = retries;
    c.batch_items = batch;
    c.validate();
    return c;
  }

  std::unique_ptr<VariantCache> cache() const {
    std::string path = variant_cache;
    if (path.empty())
      if (const char* env = std::getenv("MPA_VARIANT_CACHE"); env != nullptr) path = env;
    return path.empty() ? std::make_unique<VariantCache>() : std::make_unique<VariantCache>(path);
  }
};

struct LmseFlags {
  std::uint32_t n_variants = 4;
  std::string llm_id = "provider-default";
  bool no_fallback = false;

  void add(CLI::App& app) {
    app.add_option("--n-variants", n_variants, "Paraphrased descriptions per class")->capture_default_str();
    app.add_option("--llm-id", llm_id, "Description generator identity (cache key)")->capture_default_str();
    app.add_flag("--no-fallback", no_fallback, "Fail instead of using the offline description template");
  }
  LmseConfig config() const { return {n_variants, llm_id, !no_fallback}; }
};

struct EpisodeFlags {
  std::vector<std::string> banks;
  EpisodeSpec spec;
  std::uint32_t episodes = 100;
  bool lmse = false, hma = false, auca = false;
  std::vector<double> alpha_range{0.2, 0.8};
  std::string lambda_mode = "as-written";
  bool no_lambda_clamp = false;
  std::optional<std::uint32_t> uncertain_samples;
  std::optional<double> forced_lambda;
  bool interpolate_raw_only = false;
  std::string uncertain_policy = "count-wrong";
  bool prototype_raw_only = false;
  bool l2_normalize = false;
  double l2 = 1.0;
  std::uint32_t max_iterations = 1000;
  double tolerance = 1e-6;
  std::string optimizer = "lbfgs";
  std::uint32_t workers = 1;
  bool offline = false;
  std::string out;
  bool no_timings = false;
  LmseFlags lmse_flags;
  ProviderFlags provider;

  void add(CLI::App& app, bool multi_bank, bool components) {
    auto* b = app.add_option("--bank", banks, "Bank file")->required();
    if (!multi_bank) b->expected(1);
    app.add_option("--n-way", spec.n_way, "Classes per episode")->capture_default_str();
    app.add_option("--k-shot", spec.k_shot, "Support items per class")->capture_default_str();
    app.add_option("--queries", spec.q_queries, "Query items per class")->capture_default_str();
    app.add_option("--seed", spec.seed, "Episode seed")->capture_default_str();
    if (components) {
      app.add_option("--episodes", episodes, "Number of episodes")->capture_default_str();
      app.add_flag("--lmse", lmse, "Add semantic support rows");
      app.add_flag("--hma", hma, "Add augmented view rows");
      app.add_flag("--auca", auca, "Add the uncertain class");
    } else {
      app.add_flag("--lmse", lmse, "Use semantic rows in the prototypes");
      app.add_flag("--hma", hma, "Use view rows in the prototypes");
    }
    app.add_option("--alpha-range", alpha_range, "Interpolation weight range")
        ->expected(2)->delimiter(',')->capture_default_str();
    app.add_option("--lambda-mode", lambda_mode, "as-written | pair-mean")
        ->check(CLI::IsMember({"as-written", "pair-mean"}))->capture_default_str();
    app.add_flag("--no-lambda-clamp", no_lambda_clamp, "Do not clamp lambda to [0, 1]");
    app.add_option("--uncertain-samples", uncertain_samples, "Uncertain rows per episode (default: mean rows per class)");
    app.add_option("--forced-lambda", forced_lambda, "Override lambda")->check(CLI::Range(0.0, 1.0));
    app.add_flag("--interpolate-raw-only", interpolate_raw_only, "Interpolate raw support features only");
    app.add_option("--uncertain-policy", uncertain_policy, "count-wrong | fallback-second-best")
        ->check(CLI::IsMember({"count-wrong", "fallback-second-best"}))->capture_default_str();
    app.add_flag("--prototype-raw-only", prototype_raw_only, "Prototypes from raw support features only");
    app.add_flag("--l2-normalize", l2_normalize, "L2-normalise every row");
    app.add_option("--l2", l2, "L2 penalty on classifier weights")->capture_default_str();
    app.add_option("--max-iterations", max_iterations, "Optimizer iteration cap")->capture_default_str();
    app.add_option("--tolerance", tolerance, "Gradient infinity-norm tolerance")->capture_default_str();
    app.add_option("--optimizer", optimizer, "lbfgs | gd")->check(CLI::IsMember({"lbfgs", "gd"}))->capture_default_str();
    app.add_option("--workers", workers, "Episode worker threads")->capture_default_str();
    app.add_flag("--offline", offline, "Live semantic rows from the offline template and a hashing text encoder");
    app.add_option("--out", out, "Write the structured report here");
    app.add_flag("--no-timings", no_timings, "Omit timing and memory fields from the report");
    lmse_flags.add(app);
    provider.add(app);
  }

  PipelineConfig config() const {
    PipelineConfig c;
    c.flags = {lmse, hma, auca};
    c.auca.alpha_low = alpha_range[0];
    c.auca.alpha_high = alpha_range[1];
    c.auca.lambda_mode = lambda_mode == "pair-mean" ? LambdaMode::PairMean : LambdaMode::AsWritten;
    c.auca.lambda_clamp = !no_lambda_clamp;
    c.auca.sample_count = uncertain_samples;
    c.auca.forced_lambda = forced_lambda;
    c.auca.interpolate_raw_only = interpolate_raw_only;
    c.auca.validate();
    c.train.l2_strength = l2;
    c.train.max_iterations = max_iterations;
    c.train.gradient_tolerance = tolerance;
    c.train.optimizer = optimizer == "gd" ? Optimizer::GradientDescentLineSearch : Optimizer::QuasiNewton;
    c.train.validate();
    c.lmse = lmse_flags.config();
    c.uncertain_policy =
        uncertain_policy == "fallback-second-best" ? UncertainPolicy::FallbackSecondBest : UncertainPolicy::CountWrong;
    c.prototype_raw_only = prototype_raw_only;
    c.l2_normalize = l2_normalize;
    c.workers = workers;
    return c;
  }
};

/// Owns whatever the semantic resolver points at.
struct SemanticContext {
  std::unique_ptr<ProviderClient> client;
  std::unique_ptr<ToyTextEncoder> toy;
  std::unique_ptr<VariantCache> cache;
  std::unique_ptr<SemanticResolver> resolver;

  SemanticContext(const EpisodeFlags& f, const EmbeddingBank& bank) {
    cache = f.provider.cache();
    if (f.offline) {
      toy = std::make_unique<ToyTextEncoder>(bank.dim());
      resolver = std::make_unique<SemanticResolver>(nullptr, toy.get(), cache.get());
    } else {
      client = std::make_unique<ProviderClient>(f.provider.config());
      resolver = std::make_unique<SemanticResolver>(client.get(), client.get(), cache.get());
    }
  }
};

void emit(const std::string& out, const std::string& json, const std::string& table) {
  std::fputs(table.c_str(), stdout);
  if (!out.empty()) write_text(out, json);
}

int run_eval(const EpisodeFlags& f, bool efficiency, const std::string& dump_model) {
  const auto config = f.config();
  const auto bank = EmbeddingBank::load(f.banks.at(0));
  SemanticContext ctx(f, bank);
  if (efficiency) {
    auto rows = efficiency_run(bank, f.spec, config, f.episodes, *ctx.resolver);
    emit(f.out, to_json(std::span<const EfficiencyRow>(rows)), render_table(std::span<const EfficiencyRow>(rows)));
    return 0;
  }
  LogisticModel model;
  auto report = run_evaluation(bank, f.spec, config, f.episodes, *ctx.resolver, dump_model.empty() ? nullptr : &model);
  emit(f.out, to_json(report, !f.no_timings), render_table(report));
  if (!dump_model.empty()) write_text(dump_model, model.to_json());
  return 0;
}

int run_ablate(const EpisodeFlags& f) {
  const auto config = f.config();
  const auto bank = EmbeddingBank::load(f.banks.at(0));
  SemanticContext ctx(f, bank);
  auto rows = ablation_run(bank, f.spec, config, f.episodes, *ctx.resolver);
  emit(f.out, to_json(std::span<const AblationRow>(rows), !f.no_timings), render_table(std::span<const AblationRow>(rows)));
  return 0;
}

int run_lambda_stats(const EpisodeFlags& f, std::uint32_t trials) {
  const auto config = f.config();
  auto json = nlohmann::ordered_json::array();
  fmt::print("{:<40}  {:>10}  {:>10}\n", "bank", "mean", "variance");
  for (std::size_t i = 0; i < f.banks.size(); ++i) {
    const auto bank = EmbeddingBank::load(f.banks[i]);
    SemanticContext ctx(f, bank);
    auto stats = lambda_statistics(bank, f.spec, config, trials, *ctx.resolver);
    fmt::print("{:<40}  {:>10.6f}  {:>10.6f}\n", f.banks[i], stats.mean, stats.variance);
    json.push_back({{"bank", f.banks[i]},
                    {"statistics", nlohmann::ordered_json::parse(to_json(stats, f.spec, config.auca))}});
  }
  if (!f.out.empty()) write_text(f.out, json.dump(2) + "\n");
  return 0;
}

struct ExtractFlags {
  std::string images, out, manifest, dataset_name = "extracted";
  bool toy_encoder = false, hma = false, lmse = false, no_reflection = false;
  std::vector<std::uint32_t> crop_sizes{120, 170, 200};
  std::vector<double> rotations{45, 90, 180, 270, 315};
  std::vector<double> jitter{0.5, 0.5, 0.5, 0.2};
  std::uint32_t jitter_samples = 1;
  std::uint32_t toy_dim = static_cast<std::uint32_t>(kToyFeatureDim);
  std::uint64_t seed = 0;
  LmseFlags lmse_flags;
  ProviderFlags provider;
};

int run_extract(const ExtractFlags& f) {
  ExtractOptions opt;
  opt.image_dir = f.images;
  if (!f.manifest.empty()) opt.manifest = Manifest::from_json(read_text(f.manifest));
  opt.dataset_name = f.dataset_name;
  opt.hma = f.hma;
  opt.plan.crop_sizes = f.crop_sizes;
  opt.plan.rotation_degrees = f.rotations;
  opt.plan.jitter = {f.jitter[0], f.jitter[1], f.jitter[2], f.jitter[3]};
  opt.plan.jitter.validate();
  opt.plan.jitter_samples = f.jitter_samples;
  opt.plan.include_reflection = !f.no_reflection;
  opt.lmse = f.lmse;
  opt.lmse_config = f.lmse_flags.config();
  opt.seed = f.seed;

  auto cache = f.provider.cache();
  std::unique_ptr<ProviderClient> client;
  std::unique_ptr<ToyImageEncoder> toy_image;
  std::unique_ptr<ToyTextEncoder> toy_text;
  const ImageEncoder* images = nullptr;
  const TextEncoder* texts = nullptr;
  const VariantSource* variants = nullptr;
  if (f.toy_encoder) {
    toy_image = std::make_unique<ToyImageEncoder>(f.toy_dim);
    toy_text = std::make_unique<ToyTextEncoder>(f.toy_dim);
    images = toy_image.get();
    texts = toy_text.get();
  } else {
    client = std::make_unique<ProviderClient>(f.provider.config());
    client->health();
    images = client.get();
    texts = client.get();
    variants = client.get();
  }
  auto result = extract_bank(opt, *images, texts, variants, cache.get());
  for (const auto& w : result.warnings) fmt::print(stderr, "warning: {}\n", w);
  write_bank(result.records, result.manifest, f.out);
  fmt::print("wrote {} records ({} images, {} skipped) to {}\n", result.records.size(), result.images_ok,
             result.warnings.size(), f.out);
  return 0;
}

int run_inspect(const std::string& path, std::size_t show) {
  const auto file = read_bank(path);
  const auto header = read_bank_header(path);
  std::map<Modality, std::size_t> by_modality;
  std::map<std::uint32_t, std::size_t> by_class;
  for (const auto& r : file.records) {
    ++by_modality[r.modality];
    ++by_class[r.class_id];
  }
  fmt::print("version {}  dim {}  dtype {}  records {}\n", header.version, header.dim, header.dtype,
             header.record_count);
  for (const auto& [m, n] : by_modality) fmt::print("  {:<16} {}\n", to_string(m), n);
  for (const auto& [c, n] : by_class) {
    auto it = file.manifest.class_names.find(c);
    fmt::print("  class {:>4} {:<24} {}\n", c, it == file.manifest.class_names.end() ? "?" : it->second, n);
  }
  for (std::size_t i = 0; i < std::min(show, file.records.size()); ++i) {
    const auto& r = file.records[i];
    fmt::print("  [{}] class {} item {} view {} {} v[0]={:.6g}\n", i, r.class_id, r.item_id, r.view_id,
               to_string(r.modality), r.vector[0]);
  }
  fmt::print("manifest:\n{}\n", file.manifest.to_json());
  return 0;
}

struct SynthFlags {
  std::string regime = "separated";
  std::string out;
  std::uint32_t n_classes = 5, dim = 64, items = 40, views = 0, semantic = 0;
  std::uint64_t seed = 0;
};

int run_synth(const SynthFlags& f) {
  if (f.regime == "noisy-images") {
    NoisyImageConfig c;
    c.n_classes = f.n_classes;
    c.items_per_class = f.items;
    c.seed = f.seed;
    const auto bank = synthesize_noisy_image_bank(c);
    write_bank(bank.records(), bank.manifest(), f.out);
    fmt::print("wrote {} records to {}\n", bank.records().size(), f.out);
    return 0;
  }
  RegimeBankConfig c;
  c.regime = regime_from_string(f.regime);
  c.n_classes = f.n_classes;
  c.dim = f.dim;
  c.items_per_class = f.items;
  c.views_per_item = f.views;
  c.semantic_per_class = f.semantic;
  c.seed = f.seed;
  const auto bank = synthesize_regime_bank(c);
  write_bank(bank.records(), bank.manifest(), f.out);
  fmt::print("wrote {} records to {}\n", bank.records().size(), f.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episodic few-shot classification over embedding banks"};
  app.require_subcommand(1, 1);

  ExtractFlags ex;
  auto* extract = app.add_subcommand("extract", "Embed a <class>/<item>.png tree into a bank");
  extract->add_option("--images", ex.images, "Image root directory")->required();
  extract->add_option("--out", ex.out, "Bank file to write")->required();
  extract->add_option("--manifest", ex.manifest, "Manifest assigning class ids and names");
  extract->add_option("--dataset-name", ex.dataset_name, "Recorded in the manifest")->capture_default_str();
  extract->add_flag("--toy-encoder", ex.toy_encoder, "Offline 8x8 colour-grid image encoder and hashing text encoder");
  extract->add_option("--toy-dim", ex.toy_dim, "Toy encoder dimension (>= 192)")->capture_default_str();
  extract->add_flag("--hma", ex.hma, "Also embed augmented views");
  extract->add_flag("--lmse", ex.lmse, "Also embed class descriptions");
  extract->add_option("--crop-sizes", ex.crop_sizes, "Centre crop sizes")->delimiter(',')->capture_default_str();
  extract->add_option("--rotations", ex.rotations, "Rotation angles (degrees)")->delimiter(',')->capture_default_str();
  extract->add_option("--jitter", ex.jitter, "Brightness,contrast,saturation,hue")
      ->expected(4)->delimiter(',')->capture_default_str();
  extract->add_option("--jitter-samples", ex.jitter_samples, "Colour-jitter views per image")->capture_default_str();
  extract->add_flag("--no-reflection", ex.no_reflection, "Skip the horizontal flip view");
  extract->add_option("--seed", ex.seed, "Jitter seed")->capture_default_str();
  ex.lmse_flags.add(*extract);
  ex.provider.add(*extract);

  EpisodeFlags ev;
  bool efficiency = false;
  std::string dump_model;
  auto* eval = app.add_subcommand("eval", "Evaluate sampled episodes");
  ev.add(*eval, false, true);
  eval->add_flag("--efficiency", efficiency, "Per-stage cost table for (-,-), (L,-), (-,H)");
  eval->add_option("--dump-model", dump_model, "Write the first episode's classifier as JSON");

  EpisodeFlags ab;
  auto* ablate = app.add_subcommand("ablate", "Evaluate the five component combinations on shared episodes");
  ab.add(*ablate, false, true);

  EpisodeFlags ls;
  std::uint32_t trials = 1000;
  auto* lambda = app.add_subcommand("lambda-stats", "Mean and variance of lambda over sampled episodes");
  ls.add(*lambda, true, false);
  lambda->add_option("--lambda-trials", trials, "Episodes per bank")->capture_default_str();

  std::string inspect_bank;
  std::size_t show = 0;
  auto* inspect = app.add_subcommand("inspect", "Print a bank header, record counts and manifest");
  inspect->add_option("--bank", inspect_bank, "Bank file")->required();
  inspect->add_option("--records", show, "Also print the first N records")->capture_default_str();

  SynthFlags sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic bank");
  synth->add_option("--regime", sy.regime, "separated | clustered | noisy-images")
      ->check(CLI::IsMember({"separated", "clustered", "noisy-images"}))->capture_default_str();
  synth->add_option("--out", sy.out, "Bank file to write")->required();
  synth->add_option("--n-classes", sy.n_classes, "Classes")->capture_default_str();
  synth->add_option("--dim", sy.dim, "Embedding dimension (Gaussian regimes)")->capture_default_str();
  synth->add_option("--items-per-class", sy.items, "Raw items per class")->capture_default_str();
  synth->add_option("--views-per-item", sy.views, "View records per item (Gaussian regimes)")->capture_default_str();
  synth->add_option("--semantic-per-class", sy.semantic, "Semantic records per class (Gaussian regimes)")
      ->capture_default_str();
  synth->add_option("--seed", sy.seed, "Generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fmt::print(stderr, "error: Usage: {}\n", e.what());
    return 2;
  }

  try {
    if (*extract) return run_extract(ex);
    if (*eval) return run_eval(ev, efficiency, dump_model);
    if (*ablate) return run_ablate(ab);
    if (*lambda) return run_lambda_stats(ls, trials);
    if (*inspect) return run_inspect(inspect_bank, show);
    if (*synth) return run_synth(sy);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}: {}\n", error_name(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: IoError: {}\n", e.what());
    return 3;
  }
  return 2;
}
