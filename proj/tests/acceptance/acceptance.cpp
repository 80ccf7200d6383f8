// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mpa/auca.hpp"
#include "mpa/bank.hpp"
#include "mpa/classifier.hpp"
#include "mpa/episodes.hpp"
#include "mpa/error.hpp"
#include "mpa/hma.hpp"
#include "mpa/report.hpp"
#include "mpa/rng.hpp"
#include "mpa/synth.hpp"
#include "newton_oracle.hpp"

using namespace mpa;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

// --- tolerances -------------------------------------------------------------
constexpr double kFormulaTol = 1e-12;
constexpr std::size_t kMixtureSamples = 10000;
constexpr std::size_t kGaussianDraws = 100000;
constexpr std::size_t kGaussianDim = 768;
constexpr double kGaussianTol = 0.02;
constexpr std::uint32_t kLambdaTrials = 1000;
constexpr double kLambdaVarianceMax = 0.01;
constexpr double kGradientRelTol = 1e-5;
constexpr double kOracleLossTol = 1e-4;
constexpr std::uint32_t kAblationEpisodes = 100;

Outcome auca_formula() {
  Outcome o;
  const std::vector<double> pairs{0.2, 0.5, 0.8};
  const auto n = normalize_pair_similarities(pairs);
  const std::vector<double> want{0.0, 0.5, 1.0};
  for (std::size_t i = 0; i < 3; ++i)
    o.require(std::abs(n.values[i] - want[i]) <= kFormulaTol, fmt::format("normalised[{}] = {}", i, n.values[i]));
  AucaConfig as_written, pair_mean;
  pair_mean.lambda_mode = LambdaMode::PairMean;
  const double lw = compute_lambda(n, as_written), lp = compute_lambda(n, pair_mean);
  o.require(std::abs(lw - 0.0) <= kFormulaTol, fmt::format("as-written lambda {}", lw));
  o.require(std::abs(lp - 0.5) <= kFormulaTol, fmt::format("pair-mean lambda {}", lp));
  if (o.pass) o.detail = fmt::format("normalised {{0, 0.5, 1}}, lambda {} / {}", lw, lp);
  return o;
}

Outcome mixture_law() {
  Outcome o;
  std::vector<ClassFeatures> support{{0, {EmbeddingVector({1.0, 0.0, 0.0})}}, {1, {EmbeddingVector({0.0, 1.0, 0.0})}},
                                     {2, {EmbeddingVector({0.0, 0.0, 1.0})}}};
  std::vector<Prototype> protos;
  for (const auto& c : support) protos.push_back({c.class_id, c.features[0]});
  for (double lambda : {0.0, 0.3, 1.0}) {
    AucaConfig cfg;
    cfg.forced_lambda = lambda;
    cfg.sample_count = kMixtureSamples;
    RngStream rng(2024);
    const auto batch = generate_uncertain(support, protos, cfg, rng);
    const double frac = static_cast<double>(batch.interpolated_count()) / kMixtureSamples;
    const double tol = lambda == 0.3 ? 3.0 * std::sqrt(0.21 / kMixtureSamples) : 0.0;
    o.require(std::abs(frac - lambda) <= tol, fmt::format("lambda {} gave fraction {}", lambda, frac));
    o.detail += fmt::format("{}{}->{:.4f}", o.detail.empty() ? "" : ", ", lambda, frac);
  }
  return o;
}

Outcome gaussian_sampler() {
  Outcome o;
  std::vector<double> sum(kGaussianDim, 0.0), sq(kGaussianDim, 0.0);
  RngStream rng(77);
  for (std::size_t i = 0; i < kGaussianDraws; ++i) {
    const auto v = sample_gaussian(kGaussianDim, rng);
    for (std::size_t d = 0; d < kGaussianDim; ++d) {
      sum[d] += v[d];
      sq[d] += v[d] * v[d];
    }
  }
  double worst_mean = 0, worst_var = 0, grand = 0, grand_sq = 0;
  const double n = kGaussianDraws;
  for (std::size_t d = 0; d < kGaussianDim; ++d) {
    const double m = sum[d] / n;
    const double var = (sq[d] - n * m * m) / (n - 1);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
    grand += sum[d];
    grand_sq += sq[d];
  }
  const double total = n * kGaussianDim;
  const double gm = grand / total, gv = grand_sq / total - gm * gm;
  o.require(std::abs(gm) < kGaussianTol && std::abs(gv - 1.0) < kGaussianTol,
            fmt::format("pooled mean {} variance {}", gm, gv));
  o.require(worst_mean < kGaussianTol, fmt::format("coordinate mean off by {}", worst_mean));
  o.require(worst_var < kGaussianTol, fmt::format("coordinate variance off by {}", worst_var));
  if (o.pass)
    o.detail = fmt::format("pooled mean {:.2e} var {:.5f}; worst coordinate |mean| {:.4f} |var-1| {:.4f}", gm, gv,
                           worst_mean, worst_var);
  return o;
}

Outcome lambda_regime() {
  Outcome o;
  PipelineConfig cfg;
  cfg.auca.lambda_mode = LambdaMode::PairMean;
  double means[2], vars[2];
  for (int r = 0; r < 2; ++r) {
    RegimeBankConfig bc;  // 5 classes, dim 64
    bc.regime = r == 0 ? Regime::Separated : Regime::Clustered;
    const auto bank = synthesize_regime_bank(bc);
    const auto s = lambda_statistics(bank, EpisodeSpec{}, cfg, kLambdaTrials, SemanticResolver{});
    means[r] = s.mean;
    vars[r] = s.variance;
    o.require(s.variance < kLambdaVarianceMax, fmt::format("{} variance {}", to_string(bc.regime), s.variance));
  }
  o.require(means[0] > means[1], fmt::format("separated mean {} <= clustered mean {}", means[0], means[1]));
  if (o.pass)
    o.detail = fmt::format("separated {:.4f} (var {:.5f}) > clustered {:.4f} (var {:.5f})", means[0], vars[0],
                           means[1], vars[1]);
  return o;
}

std::vector<LabeledRow> gaussian_rows(std::uint32_t n, std::uint32_t dim, std::uint32_t classes, RngStream& rng) {
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dim));
  for (auto& c : centres)
    for (auto& x : c) x = rng.normal();
  std::vector<LabeledRow> rows;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> v(centres[i % classes]);
    for (auto& x : v) x += rng.normal();
    rows.push_back({EmbeddingVector(std::move(v)), i % classes});
  }
  return rows;
}

Outcome classifier() {
  Outcome o;
  RngStream rng(31);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto classes = static_cast<std::uint32_t>(2 + rng.below(4));
    const auto dim = static_cast<std::uint32_t>(1 + rng.below(8));
    const Dataset data(gaussian_rows(static_cast<std::uint32_t>(classes + rng.below(16)), dim, classes, rng));
    auto m = LogisticModel::zeros(classes, dim);
    for (auto& w : m.weights) w = 0.5 * rng.normal();
    for (auto& b : m.biases) b = 0.5 * rng.normal();
    const double l2 = rng.uniform(0.0, 2.0);
    const auto lg = loss_and_gradient(m, data, l2);
    auto probe = [&](double& p, double analytic) {
      const double saved = p, h = 1e-5;
      p = saved + h;
      const double up = loss_and_gradient(m, data, l2).loss;
      p = saved - h;
      const double down = loss_and_gradient(m, data, l2).loss;
      p = saved;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - analytic) / std::max(1.0, std::abs(analytic)));
    };
    for (std::size_t i = 0; i < m.weights.size(); ++i) probe(m.weights[i], lg.gradient.weights[i]);
    for (std::size_t i = 0; i < m.biases.size(); ++i) probe(m.biases[i], lg.gradient.biases[i]);
  }
  o.require(worst <= kGradientRelTol, fmt::format("gradient rel. error {}", worst));

  const std::uint32_t classes = 5, dim = 16, n = 80;
  const auto rows = gaussian_rows(n, dim, classes, rng);
  Eigen::MatrixXd x(n, dim);
  std::vector<int> y(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t d = 0; d < dim; ++d) x(i, d) = rows[i].vector[d];
    y[i] = static_cast<int>(rows[i].label);
  }
  TrainConfig tc;
  const auto fit = train(Dataset(rows), tc);
  const auto oracle = mpa::test::NewtonOracle(x, y, classes, tc.l2_strength).solve();
  const double gap = std::abs(fit.final_loss - oracle.loss);
  o.require(gap <= kOracleLossTol, fmt::format("loss gap to oracle {}", gap));

  std::vector<LabeledRow> sep;
  for (int i = 0; i < 6; ++i) {
    sep.push_back({EmbeddingVector({10.0 + 0.1 * rng.normal(), 0.1 * rng.normal()}), 0});
    sep.push_back({EmbeddingVector({-10.0 + 0.1 * rng.normal(), 0.1 * rng.normal()}), 1});
  }
  const auto sfit = train(Dataset(sep), TrainConfig{});
  const auto score = score_queries(sfit.model, sep, UncertainPolicy::CountWrong, std::nullopt);
  o.require(score.accuracy == 1.0, fmt::format("separable training accuracy {}", score.accuracy));
  if (o.pass)
    o.detail = fmt::format("worst gradient rel. error {:.2e}; oracle loss gap {:.2e}; separable accuracy 1.0", worst, gap);
  return o;
}

Raster random_raster(RngStream& rng, std::uint32_t w, std::uint32_t h) {
  Raster img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Outcome transforms() {
  Outcome o;
  RngStream rng(5);
  int failures = 0;
  for (int t = 0; t < 20; ++t) {
    const auto img = random_raster(rng, static_cast<std::uint32_t>(1 + rng.below(40)),
                                   static_cast<std::uint32_t>(1 + rng.below(40)));
    Raster r = img;
    for (int i = 0; i < 4; ++i) r = rotate(r, 90.0);
    if (r != img) ++failures;
    if (horizontal_flip(horizontal_flip(img)) != img) ++failures;
  }
  o.require(failures == 0, fmt::format("{} rotation/flip identity failures", failures));

  int crop_failures = 0;
  for (int t = 0; t < 50; ++t) {
    const auto w = static_cast<std::uint32_t>(1 + rng.below(60));
    const auto h = static_cast<std::uint32_t>(1 + rng.below(60));
    const auto s = static_cast<std::uint32_t>(1 + rng.below(std::min(w, h)));
    const auto img = random_raster(rng, w, h);
    const auto c = center_crop(img, s);
    const std::uint32_t ox = (w - s) / 2, oy = (h - s) / 2;
    bool ok = c.width == s && c.height == s;
    for (std::uint32_t y = 0; ok && y < s; ++y)
      for (std::uint32_t x = 0; ok && x < s; ++x)
        for (std::uint32_t ch = 0; ch < 3; ++ch) ok = ok && c.at(x, y, ch) == img.at(x + ox, y + oy, ch);
    if (!ok) ++crop_failures;
  }
  o.require(crop_failures == 0, fmt::format("{} crop offset failures", crop_failures));

  const ViewPlan plan;
  RngStream vr(9);
  const auto views = generate_views(random_raster(rng, 224, 224), plan, vr);
  o.require(views.size() == 10, fmt::format("default plan produced {} views", views.size()));
  if (o.pass) o.detail = "rot90^4 and flip^2 identities on 20 rasters, 50 crop offsets, 10 default views";
  return o;
}

Outcome ablation() {
  Outcome o;
  const auto bank = synthesize_noisy_image_bank(NoisyImageConfig{});
  const EpisodeSpec spec{5, 1, 15, 3};
  const auto rows = ablation_run(bank, spec, PipelineConfig{}, kAblationEpisodes, SemanticResolver{});
  const std::vector<PipelineFlags> want{{false, false, false},
                                        {true, false, false},
                                        {false, true, false},
                                        {true, true, false},
                                        {true, true, true}};
  o.require(rows.size() == 5, fmt::format("{} ablation rows", rows.size()));
  for (std::size_t i = 0; i < std::min<std::size_t>(rows.size(), 5); ++i)
    o.require(rows[i].flags == want[i], fmt::format("row {} is {}", i, rows[i].flags.label()));
  if (rows.size() == 5) {
    const double base = rows[0].report.accuracy.mean, full = rows[4].report.accuracy.mean;
    o.require(full >= base, fmt::format("full {:.4f} < baseline {:.4f}", full, base));
    std::string acc;
    for (const auto& r : rows) acc += fmt::format(" {}={:.2f}%", r.flags.label(), 100 * r.report.accuracy.mean);
    if (o.pass) o.detail = fmt::format("{} paired episodes:{}", kAblationEpisodes, acc);
  }
  return o;
}

Outcome determinism_and_format() {
  Outcome o;
  RegimeBankConfig bc;
  bc.regime = Regime::Clustered;
  bc.views_per_item = 2;
  bc.semantic_per_class = 2;
  const auto bank = synthesize_regime_bank(bc);
  PipelineConfig cfg;
  cfg.flags = {true, true, true};
  const EpisodeSpec spec{5, 1, 10, 42};
  const auto a = to_json(run_evaluation(bank, spec, cfg, 20, SemanticResolver{}), false);
  cfg.workers = 3;
  const auto b = to_json(run_evaluation(bank, spec, cfg, 20, SemanticResolver{}), false);
  o.require(a == b, "reports differ between identical runs");

  RngStream rng(8);
  std::vector<LabeledEmbedding> recs;
  Manifest m{"roundtrip", "none", {}, {}};
  for (std::uint32_t i = 0; i < 1000; ++i) {
    std::vector<double> v(12);
    for (auto& x : v) x = static_cast<float>(rng.normal() * 100.0);
    const auto cls = static_cast<std::uint32_t>(rng.below(50));
    m.class_names[cls] = "c" + std::to_string(cls);
    recs.push_back({cls, i, static_cast<std::uint16_t>(rng.below(11)), static_cast<Modality>(rng.below(4)),
                    EmbeddingVector(std::move(v))});
  }
  const auto path = std::filesystem::temp_directory_path() / fmt::format("mpa-acceptance-{}.bank", ::getpid());
  write_bank(recs, m, path);
  const auto back = read_bank(path);
  std::filesystem::remove(path);
  std::filesystem::remove(manifest_path(path));
  bool exact = back.records.size() == recs.size() && back.manifest == m;
  for (std::size_t i = 0; exact && i < recs.size(); ++i) {
    const auto &p = recs[i], &q = back.records[i];
    exact = p.class_id == q.class_id && p.item_id == q.item_id && p.view_id == q.view_id &&
            p.modality == q.modality && p.vector == q.vector;
  }
  o.require(exact, "bank round trip is not bit-exact");

  // Two dim-2 records laid out by hand.
  std::vector<std::uint8_t> bytes{'M', 'P', 'A', 'B', 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0};
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put32(7), put32(3), bytes.insert(bytes.end(), {0, 0, 0, 0});
  put32(std::bit_cast<std::uint32_t>(1.5f)), put32(std::bit_cast<std::uint32_t>(-0.25f));
  put32(9), put32(0), bytes.insert(bytes.end(), {4, 0, 3, 0});
  put32(std::bit_cast<std::uint32_t>(0.125f)), put32(std::bit_cast<std::uint32_t>(8.0f));
  const auto d = decode_bank(bytes);
  const bool fixture_ok = d.records.size() == 2 && d.records[0].class_id == 7 && d.records[0].item_id == 3 &&
                          d.records[0].modality == Modality::VisualRaw &&
                          d.records[0].vector == EmbeddingVector({1.5, -0.25}) && d.records[1].class_id == 9 &&
                          d.records[1].view_id == 4 && d.records[1].modality == Modality::Semantic &&
                          d.records[1].vector == EmbeddingVector({0.125, 8.0});
  o.require(fixture_ok, "hand-built fixture decoded incorrectly");
  if (o.pass) o.detail = "reports byte-identical (1 vs 3 workers); 1000-record round trip exact; byte fixture ok";
  return o;
}

Outcome efficiency() {
  Outcome o;
  RegimeBankConfig bc;
  bc.views_per_item = 10;
  bc.semantic_per_class = 5;
  const auto bank = synthesize_regime_bank(bc);
  const auto rows = efficiency_run(bank, EpisodeSpec{}, PipelineConfig{}, 5, SemanticResolver{});
  o.require(rows.size() == 3, fmt::format("{} efficiency rows", rows.size()));
  if (rows.size() != 3) return o;
  o.require(rows[0].flags == PipelineFlags{} && rows[1].flags == PipelineFlags{true, false, false} &&
                rows[2].flags == PipelineFlags{false, true, false},
            "unexpected row flags");
  for (const auto& r : rows) {
    o.require(r.seconds_per_episode > 0 && r.seconds_per_query > 0, "missing per-episode timing");
    o.require(r.working_set_bytes > 0 && r.peak_rss_bytes > 0, "missing memory fields");
    o.require(r.timings.training > 0 && r.timings.scoring > 0, "missing stage timings");
  }
  o.require(rows[1].timings.semantic > 0 && rows[0].timings.semantic == 0, "LMSE stage not reported separately");
  o.require(rows[2].timings.augmentation > 0 && rows[0].timings.augmentation == 0,
            "HMA stage not reported separately");
  const auto json = to_json(std::span<const EfficiencyRow>(rows));
  for (const char* key : {"semantic", "augmentation", "working_set_bytes", "peak_rss_bytes"})
    o.require(json.find(key) != std::string::npos, fmt::format("report lacks '{}'", key));
  if (o.pass)
    o.detail = fmt::format("LMSE +{:.3f} ms, HMA +{:.3f} ms per episode", 1e3 * rows[1].timings.semantic,
                           1e3 * rows[2].timings.augmentation);
  return o;
}

struct Criterion {
  const char* name;
  double limit_s;  // 0 = structural, no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"auca-formula", 1, auca_formula},
      {"mixture-law", 5, mixture_law},
      {"gaussian-sampler", 5, gaussian_sampler},
      {"lambda-regime", 30, lambda_regime},
      {"classifier", 30, classifier},
      {"transforms", 5, transforms},
      {"ablation-direction", 120, ablation},
      {"determinism-format", 10, determinism_and_format},
      {"efficiency-report", 0, efficiency},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && secs >= c.limit_s) o.require(false, fmt::format("over the {} s limit", c.limit_s));
    const auto limit = c.limit_s > 0 ? fmt::format("limit {} s", c.limit_s) : std::string("structural");
    std::printf("%s  %-20s %7.3f s (%s)  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, limit.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
