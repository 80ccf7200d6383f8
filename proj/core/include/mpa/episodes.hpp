#pragma once

#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mpa/auca.hpp"
#include "mpa/bank.hpp"
#include "mpa/classifier.hpp"
#include "mpa/encoders.hpp"
#include "mpa/lmse.hpp"
#include "mpa/rng.hpp"
#include "mpa/types.hpp"

namespace mpa {

/// One N-way K-shot task. class_ids[i] is the bank class behind episode label i;
/// support[i] and queries[i] are disjoint raw item ids of that class.
struct Episode {
  EpisodeSpec spec;
  std::uint64_t index = 0;
  std::vector<std::uint32_t> class_ids;
  std::vector<std::vector<std::uint32_t>> support;
  std::vector<std::vector<std::uint32_t>> queries;
};

struct PipelineFlags {
  bool lmse = false;
  bool hma = false;
  bool auca = false;

  /// e.g. "L,H,-"
  std::string label() const;
  bool operator==(const PipelineFlags&) const = default;
};

struct PipelineConfig {
  PipelineFlags flags;
  AucaConfig auca;
  TrainConfig train;
  LmseConfig lmse;
  UncertainPolicy uncertain_policy = UncertainPolicy::CountWrong;
  /// Prototypes from raw support features only instead of the enriched set.
  bool prototype_raw_only = false;
  /// L2-normalise every row (support, semantic, uncertain and query).
  bool l2_normalize = false;
  std::uint32_t workers = 1;
};

/// Supplies semantic support rows for a class: Semantic records stored in the
/// bank when present, otherwise generated live through the LMSE chain and
/// memoised for the lifetime of the resolver (failures included, so an
/// unreachable provider is asked once per class). Thread-safe.
class SemanticResolver {
 public:
  SemanticResolver() = default;
  SemanticResolver(const VariantSource* variants, const TextEncoder* text_encoder, VariantCache* cache)
      : variants_(variants), text_encoder_(text_encoder), cache_(cache) {}

  std::vector<EmbeddingVector> features(const EmbeddingBank& bank, std::uint32_t class_id,
                                        const LmseConfig& config) const;

 private:
  const VariantSource* variants_ = nullptr;
  const TextEncoder* text_encoder_ = nullptr;
  VariantCache* cache_ = nullptr;
  mutable std::mutex mutex_;
  mutable std::map<std::uint32_t, std::vector<EmbeddingVector>> memo_;
  mutable std::map<std::uint32_t, std::exception_ptr> failures_;
};

/// Per-episode RNG stream: RngStream(mix_seed(seed, episode_index)). Children:
/// tag 1 drives episode sampling, tag 2 the uncertain class.
RngStream episode_stream(std::uint64_t seed, std::uint64_t episode_index);

/// Classes without replacement, then items without replacement (first k_shot
/// support, next q_queries queries). Throws InsufficientData naming the
/// limiting class.
Episode sample_episode(const EmbeddingBank& bank, const EpisodeSpec& spec, std::uint64_t episode_index);

struct RowCounts {
  std::size_t raw = 0;
  std::size_t natural = 0;
  std::size_t geometric = 0;
  std::size_t semantic = 0;
  std::size_t uncertain = 0;

  std::size_t total() const noexcept { return raw + natural + geometric + semantic + uncertain; }
};

struct StageTimings {
  double extraction = 0.0;    // raw support/query lookup
  double augmentation = 0.0;  // HMA view rows
  double semantic = 0.0;      // LMSE rows
  double auca = 0.0;
  double training = 0.0;
  double scoring = 0.0;

  double total() const noexcept { return extraction + augmentation + semantic + auca + training + scoring; }
  StageTimings& operator+=(const StageTimings& o);
};

struct AssembledSupport {
  /// Labels are episode labels; the absorber class (if any) is n_way.
  std::vector<LabeledRow> rows;
  std::vector<Prototype> prototypes;  // class_id = episode label
  std::optional<UncertainBatch> uncertain;
  RowCounts counts;
  StageTimings timings;
};

/// Raw support rows, + HMA view rows, + semantic rows, then prototypes, then
/// (if enabled) the uncertain class. `rng` feeds the uncertain class only.
AssembledSupport assemble_support(const Episode& episode, const EmbeddingBank& bank, const PipelineConfig& config,
                                  const SemanticResolver& semantics, RngStream& rng);

/// Raw query rows with episode labels.
std::vector<LabeledRow> query_rows(const Episode& episode, const EmbeddingBank& bank, const PipelineConfig& config);

struct EpisodeResult {
  std::uint64_t index = 0;
  std::vector<std::uint32_t> class_ids;
  double accuracy = 0.0;
  std::optional<double> lambda;
  std::vector<SampleProvenance> provenance;
  RowCounts counts;
  std::size_t queries = 0;
  std::size_t absorbed = 0;
  std::uint32_t train_iterations = 0;
  double final_loss = 0.0;
  /// Bytes held by the training matrix, query rows and model parameters.
  std::size_t working_set_bytes = 0;
  StageTimings timings;
};

/// Samples, assembles, trains and scores one episode; all randomness derives
/// from (spec.seed, episode_index).
EpisodeResult evaluate_episode(const EmbeddingBank& bank, const EpisodeSpec& spec, std::uint64_t episode_index,
                               const PipelineConfig& config, const SemanticResolver& semantics,
                               LogisticModel* model_out = nullptr);

/// Mean and 95% half-width 1.96 * s / sqrt(n) with the (n-1) sample deviation;
/// a single value has half-width 0.
struct AccuracySummary {
  double mean = 0.0;
  double ci95 = 0.0;
};
AccuracySummary summarize(std::span<const double> accuracies);

struct RunReport {
  EpisodeSpec spec;
  PipelineConfig config;
  std::vector<EpisodeResult> episodes;
  AccuracySummary accuracy;
  std::vector<double> lambdas;  // populated only with AUCA enabled
  StageTimings timings;         // summed over episodes
  double wall_seconds = 0.0;
  std::size_t peak_rss_bytes = 0;
  std::size_t working_set_bytes = 0;  // max over episodes
};

/// Evaluates episodes 0..n_episodes-1 with config.workers threads; results
/// are keyed by episode index so worker count never changes them.
RunReport run_evaluation(const EmbeddingBank& bank, const EpisodeSpec& spec, const PipelineConfig& config,
                         std::uint32_t n_episodes, const SemanticResolver& semantics,
                         LogisticModel* first_model = nullptr);

struct LambdaStatistics {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  std::vector<double> lambdas;
};

/// Lambda of n_trials sampled episodes (no training). Throws InvalidArgument
/// for n_trials < 2.
LambdaStatistics lambda_statistics(const EmbeddingBank& bank, const EpisodeSpec& spec, const PipelineConfig& config,
                                   std::uint32_t n_trials, const SemanticResolver& semantics);

struct AblationRow {
  PipelineFlags flags;
  RunReport report;
};

/// The five component combinations (-,-,-) (L,-,-) (-,H,-) (L,H,-) (L,H,A),
/// evaluated on the same episodes.
std::vector<PipelineFlags> ablation_flags();
std::vector<AblationRow> ablation_run(const EmbeddingBank& bank, const EpisodeSpec& spec, const PipelineConfig& config,
                                      std::uint32_t n_episodes, const SemanticResolver& semantics);

struct EfficiencyRow {
  PipelineFlags flags;
  double mean_accuracy = 0.0;
  double seconds_per_episode = 0.0;
  double seconds_per_query = 0.0;
  std::size_t working_set_bytes = 0;
  std::size_t peak_rss_bytes = 0;
  StageTimings timings;  // per episode
};

/// Cost of the enrichment stages: rows for (-,-), (L,-) and (-,H), AUCA off.
std::vector<EfficiencyRow> efficiency_run(const EmbeddingBank& bank, const EpisodeSpec& spec,
                                          const PipelineConfig& config, std::uint32_t n_episodes,
                                          const SemanticResolver& semantics);

/// Process peak resident set size.
std::size_t peak_rss_bytes();

}  // namespace mpa
