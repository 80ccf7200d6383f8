#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "mpa/episodes.hpp"
#include "mpa/report.hpp"
#include "mpa/synth.hpp"

using namespace mpa;
using mpa::test::error_of;

namespace {

/// Class c holds `items` identical copies of the basis vector e_c (dim >= 8).
EmbeddingBank one_hot_bank(std::uint32_t classes, std::uint32_t items) {
  std::vector<LabeledEmbedding> recs;
  Manifest m{"one-hot", "fixture", {}, {}};
  for (std::uint32_t c = 0; c < classes; ++c) {
    m.class_names[c] = "c" + std::to_string(c);
    for (std::uint32_t i = 0; i < items; ++i) {
      std::vector<double> v(std::max(8u, classes), 0.0);
      v[c] = 1.0;
      recs.push_back({c, i, 0, Modality::VisualRaw, EmbeddingVector(v)});
    }
  }
  return EmbeddingBank(std::move(recs), m);
}

EmbeddingBank regime_bank(Regime r, std::uint32_t classes = 5, std::uint32_t views = 0, std::uint32_t semantic = 0) {
  RegimeBankConfig cfg;
  cfg.regime = r;
  cfg.n_classes = classes;
  cfg.views_per_item = views;
  cfg.semantic_per_class = semantic;
  cfg.seed = 11;
  return synthesize_regime_bank(cfg);
}

}  // namespace

TEST_CASE("episode sampling is deterministic and disjoint") {
  const auto bank = regime_bank(Regime::Separated, 8);
  const EpisodeSpec spec{5, 2, 3, 99};
  for (std::uint64_t idx = 0; idx < 50; ++idx) {
    const auto a = sample_episode(bank, spec, idx);
    const auto b = sample_episode(bank, spec, idx);
    CHECK(a.class_ids == b.class_ids);
    CHECK(a.support == b.support);
    CHECK(a.queries == b.queries);
    CHECK(std::set<std::uint32_t>(a.class_ids.begin(), a.class_ids.end()).size() == 5);
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(a.support[c].size() == 2);
      CHECK(a.queries[c].size() == 3);
      std::set<std::uint32_t> items(a.support[c].begin(), a.support[c].end());
      items.insert(a.queries[c].begin(), a.queries[c].end());
      CHECK(items.size() == 5);
    }
  }
  CHECK(sample_episode(bank, spec, 0).class_ids != sample_episode(bank, EpisodeSpec{5, 2, 3, 100}, 0).class_ids);
}

TEST_CASE("class selection is uniform") {
  // 5 of 20 classes: each class appears with probability 1/4.
  const auto bank = one_hot_bank(20, 2);
  std::vector<int> hits(20, 0);
  const int n = 1000;
  const EpisodeSpec spec{5, 1, 1, 4};
  for (int i = 0; i < n; ++i)
    for (auto c : sample_episode(bank, spec, static_cast<std::uint64_t>(i)).class_ids) ++hits[c];
  const double sd = std::sqrt(n * 0.25 * 0.75);
  for (int h : hits) CHECK(std::abs(h - n * 0.25) <= 3 * sd + 1);  // +1 for rounding at the 3-sigma edge
}

TEST_CASE("insufficient data is reported") {
  const auto bank = one_hot_bank(4, 10);
  CHECK(error_of([&] { sample_episode(bank, EpisodeSpec{5, 1, 1, 0}, 0); }) == ErrorKind::InsufficientData);
  CHECK(error_of([&] { sample_episode(bank, EpisodeSpec{2, 5, 6, 0}, 0); }) == ErrorKind::InsufficientData);
  try {
    sample_episode(bank, EpisodeSpec{2, 5, 6, 0}, 0);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'c0'") != std::string::npos);
  }
  CHECK(error_of([&] { sample_episode(bank, EpisodeSpec{1, 1, 1, 0}, 0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("support row counts per component") {
  const auto bank = regime_bank(Regime::Separated, 5, 10, 5);
  const EpisodeSpec spec{5, 1, 5, 1};
  const auto ep = sample_episode(bank, spec, 0);
  const SemanticResolver none;
  auto count = [&](PipelineFlags f) {
    PipelineConfig cfg;
    cfg.flags = f;
    auto rng = episode_stream(spec.seed, 0);
    return assemble_support(ep, bank, cfg, none, rng);
  };
  const auto base = count({});
  CHECK(base.rows.size() == 5);
  CHECK(base.counts.raw == 5);
  const auto h = count({false, true, false});
  CHECK(h.rows.size() == 55);
  CHECK(h.counts.natural + h.counts.geometric == 50);
  const auto l = count({true, false, false});
  CHECK(l.rows.size() == 30);
  CHECK(l.counts.semantic == 25);
  const auto lha = count({true, true, true});
  CHECK(lha.counts.total() == lha.rows.size());
  REQUIRE(lha.uncertain.has_value());
  CHECK(lha.counts.uncertain == lha.uncertain->samples.size());
  // ceil(80 rows / 5 classes)
  CHECK(lha.counts.uncertain == 16);
  for (const auto& r : lha.rows) CHECK(r.label <= 5);
  CHECK(std::count_if(lha.rows.begin(), lha.rows.end(), [](const LabeledRow& r) { return r.label == 5; }) == 16);
}

TEST_CASE("HMA without stored views is an error") {
  const auto bank = one_hot_bank(3, 4);
  PipelineConfig cfg;
  cfg.flags.hma = true;
  CHECK(error_of([&] { evaluate_episode(bank, EpisodeSpec{3, 1, 1, 0}, 0, cfg, SemanticResolver{}); }) ==
        ErrorKind::InsufficientData);
}

TEST_CASE("queries identical to support are classified perfectly") {
  const auto bank = one_hot_bank(5, 6);
  const auto r = evaluate_episode(bank, EpisodeSpec{5, 1, 5, 2}, 0, PipelineConfig{}, SemanticResolver{});
  CHECK(r.accuracy == 1.0);
  CHECK(r.queries == 25);
}

TEST_CASE("separated data is easy") {
  const auto bank = regime_bank(Regime::Separated);
  PipelineConfig cfg;
  const EpisodeSpec spec{5, 1, 10, 3};
  CHECK(run_evaluation(bank, spec, cfg, 20, SemanticResolver{}).accuracy.mean == 1.0);
  // The absorber may capture the odd query, but real classes are never confused.
  cfg.flags.auca = true;
  const auto report = run_evaluation(bank, spec, cfg, 20, SemanticResolver{});
  for (const auto& e : report.episodes)
    CHECK(e.accuracy == doctest::Approx(1.0 - static_cast<double>(e.absorbed) / e.queries).epsilon(1e-12));
  CHECK(report.lambdas.size() == 20);
}

TEST_CASE("accuracy summary") {
  const std::vector<double> two{0.8, 1.0};
  const auto s = summarize(two);
  CHECK(s.mean == doctest::Approx(0.9));
  // s = sqrt(0.02) = 0.141421...; 1.96 * s / sqrt(2) = 0.196
  CHECK(s.ci95 == doctest::Approx(0.196).epsilon(1e-12));
  const std::vector<double> one{0.4};
  CHECK(summarize(one).ci95 == 0.0);
  const std::vector<double> flat(10, 0.7);
  CHECK(summarize(flat).ci95 == doctest::Approx(0.0));
}

TEST_CASE("results do not depend on worker count") {
  const auto bank = regime_bank(Regime::Clustered, 6, 3, 2);
  PipelineConfig cfg;
  cfg.flags = {true, true, true};
  const EpisodeSpec spec{5, 2, 4, 17};
  const auto serial = run_evaluation(bank, spec, cfg, 12, SemanticResolver{});
  cfg.workers = 4;
  const auto parallel = run_evaluation(bank, spec, cfg, 12, SemanticResolver{});
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(serial.episodes[i].accuracy == parallel.episodes[i].accuracy);
    CHECK(serial.episodes[i].final_loss == parallel.episodes[i].final_loss);
  }
  auto serial_json = to_json(serial, false);
  auto parallel_json = to_json(parallel, false);
  CHECK(serial_json == parallel_json);
  CHECK(to_json(serial, true).find("wall_seconds") != std::string::npos);
  CHECK(serial_json.find("wall_seconds") == std::string::npos);
}

TEST_CASE("lambda statistics") {
  // Orthogonal prototypes: every pair similarity is 0, so lambda is the
  // degenerate constant in every trial.
  const auto bank = one_hot_bank(6, 3);
  PipelineConfig cfg;
  const auto stats = lambda_statistics(bank, EpisodeSpec{5, 1, 1, 0}, cfg, 30, SemanticResolver{});
  CHECK(stats.lambdas.size() == 30);
  CHECK(stats.variance == doctest::Approx(0.0));
  CHECK(stats.mean == doctest::Approx(cfg.auca.degenerate_lambda));
  CHECK(error_of([&] { lambda_statistics(bank, EpisodeSpec{5, 1, 1, 0}, cfg, 1, SemanticResolver{}); }) ==
        ErrorKind::InvalidArgument);

  cfg.auca.lambda_mode = LambdaMode::PairMean;
  const auto sep = lambda_statistics(regime_bank(Regime::Separated), EpisodeSpec{5, 1, 1, 0}, cfg, 200, {});
  double mean = 0, var = 0;
  for (double l : sep.lambdas) mean += l;
  mean /= 200;
  for (double l : sep.lambdas) var += (l - mean) * (l - mean);
  var /= 200;
  CHECK(sep.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(sep.variance == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("ablation and efficiency") {
  const auto bank = regime_bank(Regime::Clustered, 6, 2, 3);
  const EpisodeSpec spec{4, 1, 3, 5};
  PipelineConfig cfg;
  const auto rows = ablation_run(bank, spec, cfg, 6, SemanticResolver{});
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].flags == PipelineFlags{});
  CHECK(rows[4].flags == PipelineFlags{true, true, true});
  CHECK(rows[4].flags.label() == "L,H,A");
  CHECK(rows[0].flags.label() == "-,-,-");
  const auto baseline = run_evaluation(bank, spec, cfg, 6, SemanticResolver{});
  CHECK(rows[0].report.accuracy.mean == baseline.accuracy.mean);
  for (std::size_t i = 0; i < 6; ++i) CHECK(rows[3].report.episodes[i].class_ids == baseline.episodes[i].class_ids);
  const auto table = render_table(rows);
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);

  const auto eff = efficiency_run(bank, spec, cfg, 6, SemanticResolver{});
  REQUIRE(eff.size() == 3);
  for (const auto& e : eff) {
    CHECK(e.seconds_per_episode > 0.0);
    CHECK(e.seconds_per_query == doctest::Approx(e.seconds_per_episode / 12.0));
    CHECK(e.working_set_bytes > 0);
    CHECK(e.peak_rss_bytes > 0);
  }
  CHECK(eff[2].working_set_bytes > eff[0].working_set_bytes);
}
