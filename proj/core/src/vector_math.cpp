#include "mpa/vector_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mpa/error.hpp"

namespace mpa {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) fail(ErrorKind::InvalidArgument, "embedding vector must have dim >= 1");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(ErrorKind::NonFiniteValue, "embedding coordinate " + std::to_string(i) + " is not finite");
    }
  }
}

EmbeddingVector::EmbeddingVector(std::initializer_list<double> values)
    : EmbeddingVector(std::vector<double>(values)) {}

std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::VisualRaw: return "raw";
    case Modality::VisualNatural: return "natural";
    case Modality::VisualGeometric: return "geometric";
    case Modality::Semantic: return "semantic";
    case Modality::Uncertain: return "uncertain";
  }
  return "unknown";
}

Modality modality_from_code(std::uint8_t code) {
  if (code > 4) fail(ErrorKind::FormatError, "modality code " + std::to_string(code) + " outside 0..4");
  return static_cast<Modality>(code);
}

void EpisodeSpec::validate() const {
  if (n_way < 2) fail(ErrorKind::InvalidArgument, "n_way must be >= 2");
  if (k_shot < 1) fail(ErrorKind::InvalidArgument, "k_shot must be >= 1");
  if (q_queries < 1) fail(ErrorKind::InvalidArgument, "q_queries must be >= 1");
}

namespace {

void require_same_dim(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    fail(ErrorKind::DimMismatch,
         "dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
}

}  // namespace

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double euclidean_norm(const EmbeddingVector& v) noexcept {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  require_same_dim(a, b);
  const double na = euclidean_norm(a);
  const double nb = euclidean_norm(b);
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::ZeroNormVector, "cosine similarity of a zero-norm vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

EmbeddingVector mean_prototype(std::span<const EmbeddingVector> members) {
  if (members.empty()) fail(ErrorKind::EmptyClass, "cannot average an empty member list");
  const std::size_t dim = members.front().dim();
  std::vector<double> acc(dim, 0.0);
  for (const auto& m : members) {
    require_same_dim(members.front(), m);
    for (std::size_t i = 0; i < dim; ++i) acc[i] += m[i];
  }
  const double n = static_cast<double>(members.size());
  for (double& x : acc) x /= n;
  return EmbeddingVector(std::move(acc));
}

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
  const double n = euclidean_norm(v);
  if (n == 0.0) fail(ErrorKind::ZeroNormVector, "cannot normalize a zero-norm vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return EmbeddingVector(std::move(out));
}

EmbeddingVector interpolate(const EmbeddingVector& a, const EmbeddingVector& b, double alpha) {
  require_same_dim(a, b);
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  return EmbeddingVector(std::move(out));
}

}  // namespace mpa
