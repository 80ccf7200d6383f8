#include "mpa/report.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <json.hpp>

namespace mpa {

namespace {

using nlohmann::ordered_json;

ordered_json spec_json(const EpisodeSpec& spec) {
  return {{"n_way", spec.n_way}, {"k_shot", spec.k_shot}, {"q_queries", spec.q_queries}, {"seed", spec.seed}};
}

ordered_json auca_json(const AucaConfig& a) {
  ordered_json j{{"alpha_low", a.alpha_low},
                 {"alpha_high", a.alpha_high},
                 {"lambda_mode", std::string(to_string(a.lambda_mode))},
                 {"lambda_clamp", a.lambda_clamp},
                 {"degenerate_lambda", a.degenerate_lambda},
                 {"interpolate_raw_only", a.interpolate_raw_only}};
  j["sample_count"] = a.sample_count ? ordered_json(*a.sample_count) : ordered_json("auto");
  j["forced_lambda"] = a.forced_lambda ? ordered_json(*a.forced_lambda) : ordered_json(nullptr);
  return j;
}

ordered_json config_json(const PipelineConfig& c) {
  return {{"lmse", c.flags.lmse},
          {"hma", c.flags.hma},
          {"auca", c.flags.auca},
          {"auca_config", auca_json(c.auca)},
          {"train",
           {{"l2_strength", c.train.l2_strength},
            {"max_iterations", c.train.max_iterations},
            {"gradient_tolerance", c.train.gradient_tolerance},
            {"optimizer", std::string(to_string(c.train.optimizer))}}},
          {"n_variants", c.lmse.n_variants},
          {"llm_id", c.lmse.llm_id},
          {"uncertain_policy", std::string(to_string(c.uncertain_policy))},
          {"prototype_raw_only", c.prototype_raw_only},
          {"l2_normalize", c.l2_normalize}};
}

ordered_json timings_json(const StageTimings& t) {
  return {{"extraction", t.extraction}, {"augmentation", t.augmentation}, {"semantic", t.semantic},
          {"auca", t.auca},             {"training", t.training},         {"scoring", t.scoring}};
}

ordered_json report_json(const RunReport& r, bool include_timings) {
  ordered_json j;
  j["spec"] = spec_json(r.spec);
  j["config"] = config_json(r.config);
  j["episodes"] = r.episodes.size();
  j["mean_accuracy"] = r.accuracy.mean;
  j["ci95"] = r.accuracy.ci95;
  if (!r.lambdas.empty()) j["lambdas"] = r.lambdas;
  j["working_set_bytes"] = r.working_set_bytes;
  ordered_json eps = ordered_json::array();
  for (const auto& e : r.episodes) {
    ordered_json ej{{"index", e.index},
                    {"class_ids", e.class_ids},
                    {"accuracy", e.accuracy},
                    {"queries", e.queries},
                    {"absorbed", e.absorbed},
                    {"rows",
                     {{"raw", e.counts.raw},
                      {"natural", e.counts.natural},
                      {"geometric", e.counts.geometric},
                      {"semantic", e.counts.semantic},
                      {"uncertain", e.counts.uncertain}}},
                    {"train_iterations", e.train_iterations},
                    {"final_loss", e.final_loss}};
    if (e.lambda) {
      ej["lambda"] = *e.lambda;
      ordered_json prov = ordered_json::array();
      for (const auto& p : e.provenance) {
        if (p.kind == SampleKind::Interpolated)
          prov.push_back({{"kind", "interpolated"}, {"a", p.class_a}, {"b", p.class_b}, {"alpha", p.alpha}});
        else
          prov.push_back({{"kind", "gaussian"}});
      }
      ej["provenance"] = std::move(prov);
    }
    if (include_timings) ej["timings"] = timings_json(e.timings);
    eps.push_back(std::move(ej));
  }
  j["per_episode"] = std::move(eps);
  if (include_timings) {
    j["timings"] = timings_json(r.timings);
    j["wall_seconds"] = r.wall_seconds;
    j["peak_rss_bytes"] = r.peak_rss_bytes;
    j["workers"] = r.config.workers;
  }
  return j;
}

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }
std::string mib(std::size_t b) { return fmt::format("{:.3f}", static_cast<double>(b) / (1024.0 * 1024.0)); }

std::string layout(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  std::string out;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& r = rows[ri];
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += "  ";
      out += i == 0 ? fmt::format("{:<{}}", r[i], width[i]) : fmt::format("{:>{}}", r[i], width[i]);
    }
    out += '\n';
    if (ri == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
    }
  }
  return out;
}

}  // namespace

std::string to_json(const RunReport& report, bool include_timings) {
  return report_json(report, include_timings).dump(2) + "\n";
}

std::string to_json(const LambdaStatistics& stats, const EpisodeSpec& spec, const AucaConfig& auca) {
  ordered_json j{{"spec", spec_json(spec)},
                 {"auca_config", auca_json(auca)},
                 {"trials", stats.lambdas.size()},
                 {"mean", stats.mean},
                 {"variance", stats.variance},
                 {"lambdas", stats.lambdas}};
  return j.dump(2) + "\n";
}

std::string to_json(std::span<const AblationRow> rows, bool include_timings) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows)
    arr.push_back({{"flags", r.flags.label()}, {"report", report_json(r.report, include_timings)}});
  return arr.dump(2) + "\n";
}

std::string to_json(std::span<const EfficiencyRow> rows) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows)
    arr.push_back({{"flags", r.flags.label()},
                   {"mean_accuracy", r.mean_accuracy},
                   {"seconds_per_episode", r.seconds_per_episode},
                   {"seconds_per_query", r.seconds_per_query},
                   {"working_set_bytes", r.working_set_bytes},
                   {"peak_rss_bytes", r.peak_rss_bytes},
                   {"timings_per_episode", timings_json(r.timings)}});
  return arr.dump(2) + "\n";
}

std::string render_table(const RunReport& report) {
  std::vector<std::vector<std::string>> rows{{"metric", "value"}};
  rows.push_back({"task", fmt::format("{}-way {}-shot, {} queries/class", report.spec.n_way, report.spec.k_shot,
                                      report.spec.q_queries)});
  rows.push_back({"components", report.config.flags.label()});
  rows.push_back({"episodes", std::to_string(report.episodes.size())});
  rows.push_back({"accuracy %", fmt::format("{} +- {}", pct(report.accuracy.mean), pct(report.accuracy.ci95))});
  if (!report.lambdas.empty()) {
    double s = 0.0;
    for (double l : report.lambdas) s += l;
    rows.push_back({"mean lambda", fmt::format("{:.4f}", s / report.lambdas.size())});
  }
  rows.push_back({"working set MiB", mib(report.working_set_bytes)});
  rows.push_back({"peak RSS MiB", mib(report.peak_rss_bytes)});
  rows.push_back({"wall s", fmt::format("{:.3f}", report.wall_seconds)});
  return layout(rows);
}

std::string render_table(std::span<const AblationRow> rows) {
  std::vector<std::vector<std::string>> t{{"LMSE", "HMA", "AUCA", "accuracy %", "ci95 %"}};
  for (const auto& r : rows)
    t.push_back({r.flags.lmse ? "x" : "-", r.flags.hma ? "x" : "-", r.flags.auca ? "x" : "-",
                 pct(r.report.accuracy.mean), pct(r.report.accuracy.ci95)});
  return layout(t);
}

std::string render_table(std::span<const EfficiencyRow> rows) {
  std::vector<std::vector<std::string>> t{
      {"LMSE", "HMA", "working set MiB", "peak RSS MiB", "ms/episode", "ms/query", "accuracy %"}};
  for (const auto& r : rows)
    t.push_back({r.flags.lmse ? "x" : "-", r.flags.hma ? "x" : "-", mib(r.working_set_bytes), mib(r.peak_rss_bytes),
                 fmt::format("{:.3f}", 1e3 * r.seconds_per_episode), fmt::format("{:.4f}", 1e3 * r.seconds_per_query),
                 pct(r.mean_accuracy)});
  return layout(t);
}

std::string render_table(const LambdaStatistics& stats) {
  return layout({{"statistic", "value"},
                 {"trials", std::to_string(stats.lambdas.size())},
                 {"mean", fmt::format("{:.6f}", stats.mean)},
                 {"variance", fmt::format("{:.6f}", stats.variance)}});
}

}  // namespace mpa
