#include "mpa/episodes.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include <fmt/format.h>

#include "mpa/error.hpp"
#include "mpa/vector_math.hpp"

namespace mpa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kSamplingTag = 1;
constexpr std::uint64_t kUncertainTag = 2;

EmbeddingVector prepare(const EmbeddingVector& v, const PipelineConfig& config) {
  return config.l2_normalize ? l2_normalize(v) : v;
}

template <typename Fn>
void parallel_for(std::uint32_t n, std::uint32_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::uint32_t> next{0};
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::uint32_t i = next++; i < n && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  const std::uint32_t count = std::max<std::uint32_t>(1, std::min(workers, n));
  if (count == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::string PipelineFlags::label() const {
  return fmt::format("{},{},{}", lmse ? "L" : "-", hma ? "H" : "-", auca ? "A" : "-");
}

StageTimings& StageTimings::operator+=(const StageTimings& o) {
  extraction += o.extraction;
  augmentation += o.augmentation;
  semantic += o.semantic;
  auca += o.auca;
  training += o.training;
  scoring += o.scoring;
  return *this;
}

std::vector<EmbeddingVector> SemanticResolver::features(const EmbeddingBank& bank, std::uint32_t class_id,
                                                        const LmseConfig& config) const {
  auto stored = bank.semantic(class_id);
  if (!stored.empty()) {
    std::vector<EmbeddingVector> out;
    out.reserve(stored.size());
    for (const auto* r : stored) out.push_back(r->vector);
    return out;
  }
  if (text_encoder_ == nullptr)
    fail(ErrorKind::InsufficientData,
         fmt::format("class {} has no semantic records and no text encoder is configured", class_id));

  std::lock_guard lock(mutex_);
  if (auto it = failures_.find(class_id); it != failures_.end()) std::rethrow_exception(it->second);
  if (auto it = memo_.find(class_id); it != memo_.end()) return it->second;
  try {
    auto set = fetch_variants(class_id, bank.class_name(class_id), config, variants_, cache_);
    std::vector<EmbeddingVector> out;
    for (auto& rec : semantic_features(set, *text_encoder_, bank.dim())) out.push_back(std::move(rec.vector));
    memo_.emplace(class_id, out);
    return out;
  } catch (...) {
    failures_.emplace(class_id, std::current_exception());
    throw;
  }
}

RngStream episode_stream(std::uint64_t seed, std::uint64_t episode_index) {
  return RngStream(mix_seed(seed, episode_index));
}

Episode sample_episode(const EmbeddingBank& bank, const EpisodeSpec& spec, std::uint64_t episode_index) {
  spec.validate();
  const std::size_t need = static_cast<std::size_t>(spec.k_shot) + spec.q_queries;

  std::vector<std::uint32_t> eligible;
  std::optional<std::uint32_t> short_class;
  std::size_t short_count = 0;
  for (auto c : bank.class_ids()) {
    const auto n = bank.raw_items(c).size();
    if (n >= need)
      eligible.push_back(c);
    else if (!short_class || n < short_count) {
      short_class = c;
      short_count = n;
    }
  }
  if (eligible.size() < spec.n_way) {
    std::string detail = short_class ? fmt::format("; class {} ('{}') has {} raw items", *short_class,
                                                   bank.class_name(*short_class), short_count)
                                     : std::string{};
    fail(ErrorKind::InsufficientData,
         fmt::format("{}-way {}-shot with {} queries needs {} classes with >= {} raw items, found {}{}", spec.n_way,
                     spec.k_shot, spec.q_queries, spec.n_way, need, eligible.size(), detail));
  }

  auto rng = episode_stream(spec.seed, episode_index).child(kSamplingTag);
  for (std::size_t i = 0; i < spec.n_way; ++i) {
    const auto j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }

  Episode ep;
  ep.spec = spec;
  ep.index = episode_index;
  ep.class_ids.assign(eligible.begin(), eligible.begin() + spec.n_way);
  for (auto c : ep.class_ids) {
    auto items_span = bank.raw_items(c);
    std::vector<std::uint32_t> items(items_span.begin(), items_span.end());
    for (std::size_t i = 0; i < need; ++i) {
      const auto j = i + rng.below(items.size() - i);
      std::swap(items[i], items[j]);
    }
    ep.support.emplace_back(items.begin(), items.begin() + spec.k_shot);
    ep.queries.emplace_back(items.begin() + spec.k_shot, items.begin() + need);
  }
  return ep;
}

AssembledSupport assemble_support(const Episode& episode, const EmbeddingBank& bank, const PipelineConfig& config,
                                  const SemanticResolver& semantics, RngStream& rng) {
  AssembledSupport out;
  const auto n_way = static_cast<std::uint32_t>(episode.class_ids.size());
  std::vector<ClassFeatures> enriched(n_way);
  std::vector<ClassFeatures> raw_only(n_way);

  auto t = Clock::now();
  for (std::uint32_t label = 0; label < n_way; ++label) {
    const auto cls = episode.class_ids[label];
    enriched[label].class_id = raw_only[label].class_id = label;
    for (auto item : episode.support[label]) {
      auto v = prepare(bank.raw(cls, item).vector, config);
      raw_only[label].features.push_back(v);
      enriched[label].features.push_back(v);
      out.rows.push_back({std::move(v), label});
      ++out.counts.raw;
    }
  }
  out.timings.extraction = seconds_since(t);

  if (config.flags.hma) {
    t = Clock::now();
    for (std::uint32_t label = 0; label < n_way; ++label) {
      const auto cls = episode.class_ids[label];
      for (auto item : episode.support[label]) {
        auto views = bank.views(cls, item);
        if (views.empty())
          fail(ErrorKind::InsufficientData,
               fmt::format("augmentation enabled but class {} item {} has no view records", cls, item));
        for (const auto* r : views) {
          auto v = prepare(r->vector, config);
          enriched[label].features.push_back(v);
          out.rows.push_back({std::move(v), label});
          if (r->modality == Modality::VisualGeometric)
            ++out.counts.geometric;
          else
            ++out.counts.natural;
        }
      }
    }
    out.timings.augmentation = seconds_since(t);
  }

  if (config.flags.lmse) {
    t = Clock::now();
    for (std::uint32_t label = 0; label < n_way; ++label) {
      for (auto& f : semantics.features(bank, episode.class_ids[label], config.lmse)) {
        auto v = prepare(f, config);
        enriched[label].features.push_back(v);
        out.rows.push_back({std::move(v), label});
        ++out.counts.semantic;
      }
    }
    out.timings.semantic = seconds_since(t);
  }

  const auto& proto_source = config.prototype_raw_only ? raw_only : enriched;
  for (std::uint32_t label = 0; label < n_way; ++label)
    out.prototypes.push_back({label, mean_prototype(proto_source[label].features)});

  if (config.flags.auca) {
    t = Clock::now();
    auto u_rng = rng.child(kUncertainTag);
    auto batch = generate_uncertain(config.auca.interpolate_raw_only ? raw_only : enriched, out.prototypes,
                                    config.auca, u_rng);
    for (const auto& s : batch.samples) {
      out.rows.push_back({prepare(s, config), batch.class_id});
      ++out.counts.uncertain;
    }
    out.uncertain = std::move(batch);
    out.timings.auca = seconds_since(t);
  }
  return out;
}

std::vector<LabeledRow> query_rows(const Episode& episode, const EmbeddingBank& bank, const PipelineConfig& config) {
  std::vector<LabeledRow> rows;
  for (std::uint32_t label = 0; label < episode.class_ids.size(); ++label)
    for (auto item : episode.queries[label])
      rows.push_back({prepare(bank.raw(episode.class_ids[label], item).vector, config), label});
  return rows;
}

EpisodeResult evaluate_episode(const EmbeddingBank& bank, const EpisodeSpec& spec, std::uint64_t episode_index,
                               const PipelineConfig& config, const SemanticResolver& semantics,
                               LogisticModel* model_out) {
  const auto episode = sample_episode(bank, spec, episode_index);
  auto rng = episode_stream(spec.seed, episode_index);
  auto support = assemble_support(episode, bank, config, semantics, rng);

  EpisodeResult r;
  r.index = episode_index;
  r.class_ids = episode.class_ids;
  r.counts = support.counts;
  r.timings = support.timings;

  auto t = Clock::now();
  const auto queries = query_rows(episode, bank, config);
  r.timings.extraction += seconds_since(t);

  const std::uint32_t n_classes = spec.n_way + (support.uncertain ? 1u : 0u);
  t = Clock::now();
  auto trained = train(Dataset(support.rows), config.train, n_classes);
  r.timings.training = seconds_since(t);
  r.train_iterations = trained.iterations;
  r.final_loss = trained.final_loss;

  t = Clock::now();
  std::optional<std::uint32_t> absorber;
  if (support.uncertain) absorber = support.uncertain->class_id;
  auto score = score_queries(trained.model, queries, config.uncertain_policy, absorber);
  r.timings.scoring = seconds_since(t);
  r.accuracy = score.accuracy;
  r.queries = queries.size();
  r.absorbed = score.absorbed;

  if (support.uncertain) {
    r.lambda = support.uncertain->lambda;
    r.provenance = support.uncertain->provenance;
  }
  const std::size_t dim = bank.dim();
  r.working_set_bytes = (support.rows.size() + queries.size()) * (dim * sizeof(double) + sizeof(std::uint32_t)) +
                        static_cast<std::size_t>(n_classes) * (dim + 1) * sizeof(double) * 2;
  if (model_out != nullptr) *model_out = std::move(trained.model);
  return r;
}

AccuracySummary summarize(std::span<const double> accuracies) {
  if (accuracies.empty()) fail(ErrorKind::InvalidArgument, "no accuracies to summarise");
  const double n = static_cast<double>(accuracies.size());
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  AccuracySummary s;
  s.mean = sum / n;
  if (accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : accuracies) ss += (a - s.mean) * (a - s.mean);
    s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

std::size_t peak_rss_bytes() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return static_cast<std::size_t>(usage.ru_maxrss) * 1024u;
}

RunReport run_evaluation(const EmbeddingBank& bank, const EpisodeSpec& spec, const PipelineConfig& config,
                         std::uint32_t n_episodes, const SemanticResolver& semantics, LogisticModel* first_model) {
  spec.validate();
  config.auca.validate();
  config.train.validate();
  if (n_episodes == 0) fail(ErrorKind::InvalidArgument, "episode count must be positive");
  if (config.workers == 0) fail(ErrorKind::InvalidArgument, "worker count must be positive");

  RunReport report;
  report.spec = spec;
  report.config = config;
  report.episodes.resize(n_episodes);

  const auto start = Clock::now();
  parallel_for(n_episodes, config.workers, [&](std::uint32_t i) {
    report.episodes[i] =
        evaluate_episode(bank, spec, i, config, semantics, i == 0 ? first_model : nullptr);
  });
  report.wall_seconds = seconds_since(start);

  std::vector<double> acc;
  for (const auto& e : report.episodes) {
    acc.push_back(e.accuracy);
    if (e.lambda) report.lambdas.push_back(*e.lambda);
    report.timings += e.timings;
    report.working_set_bytes = std::max(report.working_set_bytes, e.working_set_bytes);
  }
  report.accuracy = summarize(acc);
  report.peak_rss_bytes = peak_rss_bytes();
  return report;
}

LambdaStatistics lambda_statistics(const EmbeddingBank& bank, const EpisodeSpec& spec, const PipelineConfig& config,
                                   std::uint32_t n_trials, const SemanticResolver& semantics) {
  if (n_trials < 2) fail(ErrorKind::InvalidArgument, "lambda statistics need at least 2 trials");
  config.auca.validate();
  PipelineConfig no_absorber = config;
  no_absorber.flags.auca = false;

  LambdaStatistics stats;
  stats.lambdas.resize(n_trials);
  parallel_for(n_trials, config.workers, [&](std::uint32_t i) {
    const auto episode = sample_episode(bank, spec, i);
    auto rng = episode_stream(spec.seed, i);
    auto support = assemble_support(episode, bank, no_absorber, semantics, rng);
    stats.lambdas[i] = lambda_from_prototypes(support.prototypes, config.auca);
  });
  double sum = 0.0;
  for (double l : stats.lambdas) sum += l;
  stats.mean = sum / n_trials;
  double ss = 0.0;
  for (double l : stats.lambdas) ss += (l - stats.mean) * (l - stats.mean);
  stats.variance = ss / n_trials;
  return stats;
}

std::vector<PipelineFlags> ablation_flags() {
  return {{false, false, false}, {true, false, false}, {false, true, false}, {true, true, false}, {true, true, true}};
}

std::vector<AblationRow> ablation_run(const EmbeddingBank& bank, const EpisodeSpec& spec, const PipelineConfig& config,
                                      std::uint32_t n_episodes, const SemanticResolver& semantics) {
  std::vector<AblationRow> rows;
  for (const auto& flags : ablation_flags()) {
    PipelineConfig c = config;
    c.flags = flags;
    rows.push_back({flags, run_evaluation(bank, spec, c, n_episodes, semantics)});
  }
  return rows;
}

std::vector<EfficiencyRow> efficiency_run(const EmbeddingBank& bank, const EpisodeSpec& spec,
                                          const PipelineConfig& config, std::uint32_t n_episodes,
                                          const SemanticResolver& semantics) {
  const std::vector<PipelineFlags> combos = {{false, false, false}, {true, false, false}, {false, true, false}};
  std::vector<EfficiencyRow> rows;
  for (const auto& flags : combos) {
    PipelineConfig c = config;
    c.flags = flags;
    auto report = run_evaluation(bank, spec, c, n_episodes, semantics);
    EfficiencyRow row;
    row.flags = flags;
    row.mean_accuracy = report.accuracy.mean;
    std::size_t queries = 0;
    for (const auto& e : report.episodes) queries += e.queries;
    const double per_episode = report.timings.total() / n_episodes;
    row.seconds_per_episode = per_episode;
    row.seconds_per_query = queries ? report.timings.total() / static_cast<double>(queries) : 0.0;
    row.working_set_bytes = report.working_set_bytes;
    row.peak_rss_bytes = report.peak_rss_bytes;
    row.timings = report.timings;
    const double inv = 1.0 / n_episodes;
    row.timings.extraction *= inv;
    row.timings.augmentation *= inv;
    row.timings.semantic *= inv;
    row.timings.auca *= inv;
    row.timings.training *= inv;
    row.timings.scoring *= inv;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mpa
