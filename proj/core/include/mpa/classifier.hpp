#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpa/types.hpp"

namespace mpa {

/// Multinomial logistic regression parameters. weights is row-major
/// n_classes x dim.
struct LogisticModel {
  std::uint32_t n_classes = 0;
  std::uint32_t dim = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  static LogisticModel zeros(std::uint32_t n_classes, std::uint32_t dim);
  double weight(std::uint32_t c, std::uint32_t d) const { return weights[static_cast<std::size_t>(c) * dim + d]; }
  std::string to_json() const;
};

enum class Optimizer : std::uint8_t { QuasiNewton, GradientDescentLineSearch };
std::string_view to_string(Optimizer o) noexcept;

struct TrainConfig {
  double l2_strength = 1.0;
  std::uint32_t max_iterations = 1000;
  double gradient_tolerance = 1e-6;
  Optimizer optimizer = Optimizer::QuasiNewton;

  void validate() const;
};

struct LabeledRow {
  EmbeddingVector vector;
  std::uint32_t label = 0;
};

/// Dense row-major design matrix with labels.
class Dataset {
 public:
  explicit Dataset(std::span<const LabeledRow> rows);

  std::size_t rows() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  std::uint32_t label(std::size_t i) const { return labels_[i]; }
  std::span<const std::uint32_t> labels() const noexcept { return labels_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<std::uint32_t> labels_;
};

struct LossGradient {
  double loss = 0.0;
  LogisticModel gradient;  // same shape as the model
};

/// Mean softmax cross-entropy + (l2/2) * |weights|^2 (biases unregularised),
/// with its exact gradient. Throws LabelRange / DimMismatch.
LossGradient loss_and_gradient(const LogisticModel& model, const Dataset& data, double l2_strength);

struct TrainResult {
  LogisticModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::uint32_t iterations = 0;
  double gradient_inf_norm = 0.0;
  bool converged = false;
};

/// Deterministic fit from zero (or `init`) parameters. n_classes defaults to
/// max label + 1; every class in [0, n_classes) needs at least one row and at
/// least two classes are required. Throws NumericalDivergence on a non-finite loss.
TrainResult train(const Dataset& data, const TrainConfig& config, std::optional<std::uint32_t> n_classes = {},
                  const LogisticModel* init = nullptr);

struct Prediction {
  std::uint32_t label = 0;
  std::vector<double> probabilities;
};

/// Softmax of weights * v + biases; ties go to the lowest class id.
Prediction predict(const LogisticModel& model, const EmbeddingVector& v);

enum class UncertainPolicy : std::uint8_t { CountWrong, FallbackSecondBest };
std::string_view to_string(UncertainPolicy p) noexcept;

struct QueryOutcome {
  std::uint32_t true_label = 0;
  std::uint32_t predicted = 0;
  std::uint32_t scored_label = 0;
  bool absorbed = false;
  bool correct = false;
};

struct QueryScore {
  std::vector<QueryOutcome> outcomes;
  std::size_t absorbed = 0;
  double accuracy = 0.0;
};

/// Scores queries with real labels. With an absorber class, CountWrong treats
/// absorbed queries as errors; FallbackSecondBest rescores them with the most
/// probable real class.
QueryScore score_queries(const LogisticModel& model, std::span<const LabeledRow> queries, UncertainPolicy policy,
                         std::optional<std::uint32_t> absorber_class);

}  // namespace mpa
