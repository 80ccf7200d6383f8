#include "mpa/auca.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mpa/error.hpp"
#include "mpa/vector_math.hpp"

namespace mpa {

std::vector<double> SimilarityMatrix::pair_values() const {
  std::vector<double> out;
  out.reserve(n_classes * (n_classes - 1) / 2);
  for (std::size_t j = 0; j < n_classes; ++j)
    for (std::size_t k = j + 1; k < n_classes; ++k) out.push_back(at(j, k));
  return out;
}

SimilarityMatrix similarity_matrix(std::span<const Prototype> prototypes) {
  if (prototypes.size() < 2) fail(ErrorKind::TooFewClasses, "similarity analysis needs at least 2 prototypes");
  for (std::size_t i = 1; i < prototypes.size(); ++i) {
    if (prototypes[i].class_id <= prototypes[i - 1].class_id) {
      fail(ErrorKind::InvalidArgument, "prototypes must be ordered by strictly increasing class_id");
    }
  }
  const std::size_t n = prototypes.size();
  SimilarityMatrix s{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j; k < n; ++k) {
      s.entries[j * n + k] = j == k ? cosine_similarity(prototypes[j].vector, prototypes[j].vector)
                                    : cosine_similarity(prototypes[j].vector, prototypes[k].vector);
    }
  }
  return s;
}

NormalizedSimilarities normalize_pair_similarities(std::span<const double> pairs) {
  if (pairs.empty()) fail(ErrorKind::TooFewClasses, "no class pairs to normalise");
  // Recover C from C(C-1)/2 pairs.
  const auto c = static_cast<std::size_t>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * pairs.size())) / 2.0));
  if (c * (c - 1) / 2 != pairs.size()) {
    fail(ErrorKind::InvalidArgument, fmt::format("{} pair values is not a triangular count", pairs.size()));
  }
  NormalizedSimilarities out{c, {}, false};
  const auto [lo, hi] = std::minmax_element(pairs.begin(), pairs.end());
  const double range = *hi - *lo;
  if (range <= 1e-12) {
    out.degenerate = true;
    out.values.assign(pairs.size(), 0.5);
    return out;
  }
  out.values.reserve(pairs.size());
  for (double v : pairs) out.values.push_back((v - *lo) / range);
  return out;
}

NormalizedSimilarities normalize_similarities(const SimilarityMatrix& s) {
  if (s.n_classes < 2) fail(ErrorKind::TooFewClasses, "similarity matrix needs at least 2 classes");
  return normalize_pair_similarities(s.pair_values());
}

std::string_view to_string(LambdaMode mode) noexcept {
  return mode == LambdaMode::AsWritten ? "as_written" : "pair_mean";
}

void AucaConfig::validate() const {
  if (!(0.0 <= alpha_low && alpha_low <= alpha_high && alpha_high <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "alpha range must satisfy 0 <= low <= high <= 1");
  }
  if (sample_count && *sample_count == 0) fail(ErrorKind::InvalidArgument, "uncertain sample count must be >= 1");
  if (forced_lambda && !(*forced_lambda >= 0.0 && *forced_lambda <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "forced lambda must lie in [0, 1]");
  }
  if (!(degenerate_lambda >= 0.0 && degenerate_lambda <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "degenerate lambda must lie in [0, 1]");
  }
}

double compute_lambda(const NormalizedSimilarities& normalized, const AucaConfig& config) {
  if (normalized.degenerate) return config.degenerate_lambda;
  const double pairs = static_cast<double>(normalized.values.size());
  if (pairs == 0.0) fail(ErrorKind::TooFewClasses, "no class pairs");
  double sum = 0.0;
  for (double v : normalized.values) sum += v;
  if (config.lambda_mode == LambdaMode::PairMean) return 1.0 - sum / pairs;
  const double raw = 1.0 - (2.0 / pairs) * sum;
  return config.lambda_clamp ? std::clamp(raw, 0.0, 1.0) : raw;
}

double lambda_from_prototypes(std::span<const Prototype> prototypes, const AucaConfig& config) {
  return compute_lambda(normalize_similarities(similarity_matrix(prototypes)), config);
}

std::string_view to_string(SampleKind kind) noexcept {
  return kind == SampleKind::Gaussian ? "gaussian" : "interpolated";
}

InterpolatedSample sample_interpolated(std::span<const ClassFeatures> support, double alpha_low, double alpha_high,
                                       RngStream& rng) {
  const std::size_t n = support.size();
  if (n < 2) fail(ErrorKind::TooFewClasses, "interpolation needs at least 2 classes");
  for (const auto& c : support) {
    if (c.features.empty()) fail(ErrorKind::EmptyClass, fmt::format("class {} has no features", c.class_id));
  }
  // Pair index p enumerates j < k in row-major order.
  std::uint64_t p = rng.below(n * (n - 1) / 2);
  std::size_t j = 0;
  while (p >= n - 1 - j) {
    p -= n - 1 - j;
    ++j;
  }
  const std::size_t k = j + 1 + p;
  const auto& fa = support[j].features[rng.below(support[j].features.size())];
  const auto& fb = support[k].features[rng.below(support[k].features.size())];
  const double alpha = rng.uniform(alpha_low, alpha_high);
  return {interpolate(fa, fb, alpha),
          SampleProvenance{SampleKind::Interpolated, support[j].class_id, support[k].class_id, alpha}};
}

EmbeddingVector sample_gaussian(std::size_t dim, RngStream& rng) {
  if (dim == 0) fail(ErrorKind::InvalidArgument, "gaussian sample dim must be >= 1");
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return EmbeddingVector(std::move(v));
}

std::size_t UncertainBatch::interpolated_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(provenance.begin(), provenance.end(), [](const SampleProvenance& p) {
    return p.kind == SampleKind::Interpolated;
  }));
}

UncertainBatch generate_uncertain(std::span<const ClassFeatures> support, std::span<const Prototype> prototypes,
                                  const AucaConfig& config, RngStream& rng) {
  config.validate();
  if (support.size() < 2) fail(ErrorKind::TooFewClasses, "uncertain class needs at least 2 support classes");
  std::size_t total_rows = 0;
  for (const auto& c : support) {
    if (c.features.empty()) fail(ErrorKind::EmptyClass, fmt::format("class {} has no features", c.class_id));
    total_rows += c.features.size();
  }
  const std::size_t dim = support.front().features.front().dim();

  UncertainBatch batch;
  batch.lambda = config.forced_lambda ? *config.forced_lambda : lambda_from_prototypes(prototypes, config);
  batch.mixture_probability = std::clamp(batch.lambda, 0.0, 1.0);
  batch.class_id = static_cast<std::uint32_t>(support.size());

  const std::size_t count = config.sample_count
                                ? *config.sample_count
                                : (total_rows + support.size() - 1) / support.size();
  batch.samples.reserve(count);
  batch.provenance.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (rng.bernoulli(batch.mixture_probability)) {
      auto s = sample_interpolated(support, config.alpha_low, config.alpha_high, rng);
      batch.samples.push_back(std::move(s.vector));
      batch.provenance.push_back(s.provenance);
    } else {
      batch.samples.push_back(sample_gaussian(dim, rng));
      batch.provenance.push_back({SampleKind::Gaussian});
    }
  }
  return batch;
}

}  // namespace mpa
