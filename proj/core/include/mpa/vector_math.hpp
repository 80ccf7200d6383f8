#pragma once

#include <span>

#include "mpa/types.hpp"

namespace mpa {

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double euclidean_norm(const EmbeddingVector& v) noexcept;

/// (a.b) / (|a||b|), clamped to [-1, 1] against rounding.
/// Throws DimMismatch or ZeroNormVector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Element-wise arithmetic mean. Throws EmptyClass or DimMismatch.
EmbeddingVector mean_prototype(std::span<const EmbeddingVector> members);

/// Throws ZeroNormVector.
EmbeddingVector l2_normalize(const EmbeddingVector& v);

/// alpha * a + (1 - alpha) * b.
EmbeddingVector interpolate(const EmbeddingVector& a, const EmbeddingVector& b, double alpha);

}  // namespace mpa
