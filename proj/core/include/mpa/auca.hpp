#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mpa/rng.hpp"
#include "mpa/types.hpp"

namespace mpa {

/// Upper-triangular cosine-similarity matrix over class prototypes; entries
/// below the diagonal are zero.
struct SimilarityMatrix {
  std::size_t n_classes = 0;
  std::vector<double> entries;  // row-major n x n

  double at(std::size_t j, std::size_t k) const { return entries[j * n_classes + k]; }
  /// Strict upper triangle in row-major pair order (0,1), (0,2), ..., (n-2,n-1).
  std::vector<double> pair_values() const;
};

/// Prototypes must be ordered by strictly increasing class_id.
/// Throws TooFewClasses (< 2), ZeroNormVector, DimMismatch, InvalidArgument.
SimilarityMatrix similarity_matrix(std::span<const Prototype> prototypes);

struct NormalizedSimilarities {
  std::size_t n_classes = 0;
  std::vector<double> values;  // strict upper triangle, pair order as above
  /// max == min (within 1e-12): every value is 0.5 and lambda takes the
  /// configured degenerate value.
  bool degenerate = false;
};

/// Min-max normalisation over the strict upper triangle only (the unit diagonal
/// would otherwise pin the maximum).
NormalizedSimilarities normalize_similarities(const SimilarityMatrix& s);
/// Same, from raw pair similarities. The pair count must be a triangular number.
NormalizedSimilarities normalize_pair_similarities(std::span<const double> pair_similarities);

enum class LambdaMode : std::uint8_t {
  AsWritten,  // 1 - (2 / C(C,2)) * sum, optionally clamped to [0, 1]
  PairMean,   // 1 - (1 / C(C,2)) * sum
};
std::string_view to_string(LambdaMode mode) noexcept;

struct AucaConfig {
  double alpha_low = 0.2;
  double alpha_high = 0.8;
  /// Absorber rows per episode; nullopt = ceil(mean enriched support rows per class).
  std::optional<std::uint32_t> sample_count;
  LambdaMode lambda_mode = LambdaMode::AsWritten;
  bool lambda_clamp = true;
  double degenerate_lambda = 0.5;
  /// Bypasses the similarity analysis; used for experiments and tests.
  std::optional<double> forced_lambda;
  /// Interpolate between raw support features only instead of the enriched set.
  bool interpolate_raw_only = false;

  void validate() const;
};

double compute_lambda(const NormalizedSimilarities& normalized, const AucaConfig& config);

/// Full similarity -> normalisation -> lambda chain.
double lambda_from_prototypes(std::span<const Prototype> prototypes, const AucaConfig& config);

struct ClassFeatures {
  std::uint32_t class_id = 0;
  std::vector<EmbeddingVector> features;
};

enum class SampleKind : std::uint8_t { Gaussian, Interpolated };
std::string_view to_string(SampleKind kind) noexcept;

struct SampleProvenance {
  SampleKind kind = SampleKind::Gaussian;
  std::uint32_t class_a = 0;  // interpolated only
  std::uint32_t class_b = 0;
  double alpha = 0.0;
};

struct InterpolatedSample {
  EmbeddingVector vector;
  SampleProvenance provenance;
};

/// Unordered class pair uniformly, one feature uniformly from each, alpha
/// uniformly in [alpha_low, alpha_high]; returns alpha * F_a + (1 - alpha) * F_b.
InterpolatedSample sample_interpolated(std::span<const ClassFeatures> support, double alpha_low, double alpha_high,
                                       RngStream& rng);

/// dim independent standard-normal draws.
EmbeddingVector sample_gaussian(std::size_t dim, RngStream& rng);

struct UncertainBatch {
  /// Lambda as computed (may lie outside [0, 1] when clamping is disabled).
  double lambda = 0.0;
  /// Probability of an interpolated draw: lambda clamped to [0, 1].
  double mixture_probability = 0.0;
  /// Reserved label for the absorber class (= number of real classes).
  std::uint32_t class_id = 0;
  std::vector<EmbeddingVector> samples;
  std::vector<SampleProvenance> provenance;

  std::size_t interpolated_count() const noexcept;
};

/// Per sample, an independent Bernoulli(lambda) switch picks an interpolated
/// draw, otherwise a Gaussian one.
UncertainBatch generate_uncertain(std::span<const ClassFeatures> support, std::span<const Prototype> prototypes,
                                  const AucaConfig& config, RngStream& rng);

}  // namespace mpa
