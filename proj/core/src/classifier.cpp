#include "mpa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "mpa/error.hpp"

namespace mpa {

LogisticModel LogisticModel::zeros(std::uint32_t n_classes, std::uint32_t dim) {
  return {n_classes, dim, std::vector<double>(static_cast<std::size_t>(n_classes) * dim, 0.0),
          std::vector<double>(n_classes, 0.0)};
}

std::string LogisticModel::to_json() const {
  nlohmann::json w = nlohmann::json::array();
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    w.push_back(std::vector<double>(weights.begin() + static_cast<std::ptrdiff_t>(c) * dim,
                                    weights.begin() + static_cast<std::ptrdiff_t>(c + 1) * dim));
  }
  return nlohmann::json{{"n_classes", n_classes}, {"dim", dim}, {"weights", w}, {"biases", biases}}.dump(2) + "\n";
}

std::string_view to_string(Optimizer o) noexcept {
  return o == Optimizer::QuasiNewton ? "quasi_newton" : "gradient_descent_line_search";
}

std::string_view to_string(UncertainPolicy p) noexcept {
  return p == UncertainPolicy::CountWrong ? "count_wrong" : "fallback_second_best";
}

void TrainConfig::validate() const {
  if (!(l2_strength >= 0.0) || !std::isfinite(l2_strength)) fail(ErrorKind::InvalidArgument, "l2 strength must be >= 0");
  if (max_iterations == 0) fail(ErrorKind::InvalidArgument, "max_iterations must be >= 1");
  if (!(gradient_tolerance > 0.0)) fail(ErrorKind::InvalidArgument, "gradient tolerance must be > 0");
}

Dataset::Dataset(std::span<const LabeledRow> rows) {
  if (rows.empty()) fail(ErrorKind::InvalidArgument, "dataset needs at least one row");
  dim_ = rows.front().vector.dim();
  features_.reserve(rows.size() * dim_);
  labels_.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.vector.dim() != dim_) {
      fail(ErrorKind::DimMismatch, fmt::format("row dim {} differs from {}", r.vector.dim(), dim_));
    }
    features_.insert(features_.end(), r.vector.begin(), r.vector.end());
    labels_.push_back(r.label);
  }
}

namespace {

// Parameters are flattened as [weights (row-major), biases].
struct Problem {
  const Dataset& data;
  std::uint32_t n_classes;
  double l2;

  std::size_t size() const { return n_classes * (data.dim() + 1); }

  double evaluate(std::span<const double> params, std::span<double> grad) const {
    const std::size_t d = data.dim();
    const std::size_t n = data.rows();
    const double* w = params.data();
    const double* b = params.data() + n_classes * d;
    std::fill(grad.begin(), grad.end(), 0.0);
    double* gw = grad.data();
    double* gb = grad.data() + n_classes * d;

    std::vector<double> z(n_classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.row(i);
      const std::uint32_t y = data.label(i);
      double zmax = -std::numeric_limits<double>::infinity();
      for (std::uint32_t c = 0; c < n_classes; ++c) {
        double acc = b[c];
        const double* wc = w + c * d;
        for (std::size_t k = 0; k < d; ++k) acc += wc[k] * x[k];
        z[c] = acc;
        zmax = std::max(zmax, acc);
      }
      double sum = 0.0;
      for (std::uint32_t c = 0; c < n_classes; ++c) {
        z[c] = std::exp(z[c] - zmax);
        sum += z[c];
      }
      // -log p_y = log(sum) - (z_y - zmax); z[y] now holds exp(z_y - zmax).
      loss += std::log(sum) - std::log(z[y]);
      for (std::uint32_t c = 0; c < n_classes; ++c) {
        const double r = z[c] / sum - (c == y ? 1.0 : 0.0);
        gb[c] += r;
        double* gwc = gw + c * d;
        for (std::size_t k = 0; k < d; ++k) gwc[k] += r * x[k];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    loss *= inv_n;
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] *= inv_n;
    double reg = 0.0;
    for (std::size_t j = 0; j < n_classes * d; ++j) {
      reg += w[j] * w[j];
      gw[j] += l2 * w[j];
    }
    return loss + 0.5 * l2 * reg;
  }
};

void check_labels(const Dataset& data, std::uint32_t n_classes) {
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.label(i) >= n_classes) {
      fail(ErrorKind::LabelRange, fmt::format("label {} outside [0, {})", data.label(i), n_classes));
    }
  }
}

std::vector<double> flatten(const LogisticModel& m) {
  std::vector<double> p(m.weights);
  p.insert(p.end(), m.biases.begin(), m.biases.end());
  return p;
}

LogisticModel unflatten(std::span<const double> p, std::uint32_t n_classes, std::uint32_t dim) {
  const std::size_t nw = static_cast<std::size_t>(n_classes) * dim;
  return {n_classes, dim, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(nw)),
          std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(nw), p.end())};
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

LossGradient loss_and_gradient(const LogisticModel& model, const Dataset& data, double l2_strength) {
  if (model.dim != data.dim()) {
    fail(ErrorKind::DimMismatch, fmt::format("model dim {} vs data dim {}", model.dim, data.dim()));
  }
  check_labels(data, model.n_classes);
  const Problem problem{data, model.n_classes, l2_strength};
  const auto params = flatten(model);
  std::vector<double> grad(params.size());
  const double loss = problem.evaluate(params, grad);
  return {loss, unflatten(grad, model.n_classes, model.dim)};
}

TrainResult train(const Dataset& data, const TrainConfig& config, std::optional<std::uint32_t> n_classes_opt,
                  const LogisticModel* init) {
  config.validate();
  const std::uint32_t n_classes =
      n_classes_opt.value_or(*std::max_element(data.labels().begin(), data.labels().end()) + 1);
  check_labels(data, n_classes);
  if (n_classes < 2) fail(ErrorKind::InvalidArgument, "training needs at least two classes");
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto y : data.labels()) ++counts[y];
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) fail(ErrorKind::InvalidArgument, fmt::format("class {} has no training rows", c));
  }
  const auto dim = static_cast<std::uint32_t>(data.dim());
  if (init != nullptr && (init->n_classes != n_classes || init->dim != dim)) {
    fail(ErrorKind::DimMismatch, "initial model shape does not match the data");
  }

  const Problem problem{data, n_classes, config.l2_strength};
  std::vector<double> x = init ? flatten(*init) : flatten(LogisticModel::zeros(n_classes, dim));
  std::vector<double> g(x.size()), x_new(x.size()), g_new(x.size()), dir(x.size());
  double f = problem.evaluate(x, g);
  if (!std::isfinite(f)) fail(ErrorKind::NumericalDivergence, "initial loss is not finite");

  TrainResult result;
  result.initial_loss = f;

  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  std::deque<std::pair<std::vector<double>, std::vector<double>>> history;  // (s, y)
  double step_hint = 1.0;

  std::uint32_t it = 0;
  for (; it < config.max_iterations && inf_norm(g) > config.gradient_tolerance; ++it) {
    // Search direction.
    if (config.optimizer == Optimizer::QuasiNewton && !history.empty()) {
      std::vector<double> q(g);
      std::vector<double> alphas(history.size());
      for (std::size_t h = history.size(); h-- > 0;) {
        const auto& [s, yv] = history[h];
        alphas[h] = dot(s, q) / dot(yv, s);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alphas[h] * yv[j];
      }
      const auto& [s_last, y_last] = history.back();
      const double gamma = dot(s_last, y_last) / dot(y_last, y_last);
      for (double& v : q) v *= gamma;
      for (std::size_t h = 0; h < history.size(); ++h) {
        const auto& [s, yv] = history[h];
        const double beta = dot(yv, q) / dot(yv, s);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] += s[j] * (alphas[h] - beta);
      }
      for (std::size_t j = 0; j < q.size(); ++j) dir[j] = -q[j];
    } else {
      for (std::size_t j = 0; j < g.size(); ++j) dir[j] = -g[j];
    }
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      history.clear();
      for (std::size_t j = 0; j < g.size(); ++j) dir[j] = -g[j];
      slope = dot(g, dir);
    }
    if (!std::isfinite(slope)) fail(ErrorKind::NumericalDivergence, "gradient overflowed; rescale the features");

    double t = (config.optimizer == Optimizer::QuasiNewton && !history.empty()) ? 1.0 : step_hint;
    if (history.empty() && config.optimizer == Optimizer::QuasiNewton && it == 0) t = 1.0 / std::max(1.0, inf_norm(g));
    bool accepted = false;
    double f_new = f;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < x.size(); ++j) x_new[j] = x[j] + t * dir[j];
      f_new = problem.evaluate(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!history.empty()) {  // retry from steepest descent before giving up
        history.clear();
        continue;
      }
      break;  // no representable decrease left
    }

    std::vector<double> s(x.size()), yv(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      s[j] = x_new[j] - x[j];
      yv[j] = g_new[j] - g[j];
    }
    if (config.optimizer == Optimizer::QuasiNewton && dot(s, yv) > 1e-12 * std::sqrt(dot(s, s) * dot(yv, yv))) {
      history.emplace_back(std::move(s), std::move(yv));
      if (history.size() > kMemory) history.pop_front();
    }
    step_hint = std::min(1e6, t * 2.0);
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    if (!std::isfinite(f)) fail(ErrorKind::NumericalDivergence, "loss diverged during optimisation");
  }

  result.model = unflatten(x, n_classes, dim);
  result.final_loss = f;
  result.iterations = it;
  result.gradient_inf_norm = inf_norm(g);
  result.converged = result.gradient_inf_norm <= config.gradient_tolerance;
  return result;
}

Prediction predict(const LogisticModel& model, const EmbeddingVector& v) {
  if (v.dim() != model.dim) fail(ErrorKind::DimMismatch, fmt::format("query dim {} vs model dim {}", v.dim(), model.dim));
  Prediction p;
  p.probabilities.resize(model.n_classes);
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::uint32_t c = 0; c < model.n_classes; ++c) {
    double acc = model.biases[c];
    for (std::uint32_t k = 0; k < model.dim; ++k) acc += model.weight(c, k) * v[k];
    p.probabilities[c] = acc;
    zmax = std::max(zmax, acc);
  }
  double sum = 0.0;
  for (double& z : p.probabilities) {
    z = std::exp(z - zmax);
    sum += z;
  }
  for (double& z : p.probabilities) z /= sum;
  p.label = 0;
  for (std::uint32_t c = 1; c < model.n_classes; ++c) {
    if (p.probabilities[c] > p.probabilities[p.label]) p.label = c;
  }
  return p;
}

QueryScore score_queries(const LogisticModel& model, std::span<const LabeledRow> queries, UncertainPolicy policy,
                         std::optional<std::uint32_t> absorber_class) {
  QueryScore score;
  score.outcomes.reserve(queries.size());
  std::size_t correct = 0;
  for (const auto& q : queries) {
    if (absorber_class && q.label == *absorber_class) {
      fail(ErrorKind::LabelRange, "query labelled with the absorber class");
    }
    const auto pred = predict(model, q.vector);
    QueryOutcome o{q.label, pred.label, pred.label, false, false};
    if (absorber_class && pred.label == *absorber_class) {
      o.absorbed = true;
      ++score.absorbed;
      if (policy == UncertainPolicy::FallbackSecondBest) {
        std::optional<std::uint32_t> best;
        for (std::uint32_t c = 0; c < model.n_classes; ++c) {
          if (c == *absorber_class) continue;
          if (!best || pred.probabilities[c] > pred.probabilities[*best]) best = c;
        }
        o.scored_label = *best;
      }
    }
    o.correct = o.scored_label == q.label && !(o.absorbed && policy == UncertainPolicy::CountWrong);
    correct += o.correct ? 1 : 0;
    score.outcomes.push_back(o);
  }
  score.accuracy = queries.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(queries.size());
  return score;
}

}  // namespace mpa
