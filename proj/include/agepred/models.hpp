#pragma once

// From-scratch regression suite. OLS goes through jittered normal equations,
// LASSO/ElasticNet through cyclic coordinate descent with soft-thresholding,
// SVR through an SMO solver on the epsilon-insensitive dual (maximal-violating
// pair selection), plus the predict-the-mean baseline.
//
// Convention note: the shared regularized cost keeps the unnormalized data
// term Sum (h - y)^2 + (lambda/2)||theta||^2. The coordinate-descent solvers
// minimize (1/(2n)) Sum (h - y)^2 + lambda*l1_ratio*||theta||_1 +
// (lambda/2)(1 - l1_ratio)*||theta||_2^2 so a given lambda means the same
// thing regardless of dataset size; multiply by n to convert a solver lambda
// into the cost-function scale.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agepred/domain.hpp"
#include "agepred/featurize.hpp"
#include "agepred/linalg.hpp"
#include "agepred/log.hpp"

namespace agepred::models {

using nlohmann::json;

inline constexpr double kDefaultCdTol = 1e-6;
inline constexpr std::size_t kDefaultCdMaxIter = 10000;
inline constexpr double kDefaultSvrTol = 1e-3;
inline constexpr std::size_t kDefaultSvrMaxIter = 200000;

struct KernelSpec {
  enum class Kind { Linear, Rbf };
  Kind kind = Kind::Linear;
  double gamma = 0.0;  // required > 0 for Rbf

  static KernelSpec linear() { return {Kind::Linear, 0.0}; }
  static KernelSpec rbf(double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("KernelSpec: rbf gamma must be > 0");
    return {Kind::Rbf, gamma};
  }
};

namespace detail {

inline void require_clean(const Dataset& dataset, const char* op) {
  if (dataset.has_missing())
    throw std::invalid_argument(std::string(op) + ": dataset contains missing values");
  if (dataset.targets.size() != dataset.n_rows())
    throw std::invalid_argument(std::string(op) + ": target/row count mismatch");
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared cost function
// ---------------------------------------------------------------------------

// Sum of squared residuals plus (lambda/2) * ||theta||^2; the intercept is
// never penalized.
inline double regularized_cost(const std::vector<double>& theta, double intercept,
                               const Dataset& dataset, double lambda) {
  detail::require_clean(dataset, "regularized_cost");
  if (theta.size() != dataset.n_cols())
    throw std::invalid_argument("regularized_cost: theta length does not match columns");
  if (lambda < 0.0) throw std::invalid_argument("regularized_cost: lambda must be >= 0");
  double cost = 0.0;
  for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
    const double h = linalg::dot(dataset.matrix.row(r), theta) + intercept;
    const double err = h - dataset.targets[r];
    cost += err * err;
  }
  double penalty = 0.0;
  for (const double t : theta) penalty += t * t;
  return cost + 0.5 * lambda * penalty;
}

struct CostGradient {
  std::vector<double> theta;
  double intercept = 0.0;
};

inline CostGradient regularized_cost_gradient(const std::vector<double>& theta,
                                              double intercept, const Dataset& dataset,
                                              double lambda) {
  detail::require_clean(dataset, "regularized_cost_gradient");
  if (theta.size() != dataset.n_cols())
    throw std::invalid_argument("regularized_cost_gradient: theta length mismatch");
  CostGradient grad;
  grad.theta.assign(theta.size(), 0.0);
  for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
    const auto row = dataset.matrix.row(r);
    const double err = linalg::dot(row, theta) + intercept - dataset.targets[r];
    for (std::size_t j = 0; j < theta.size(); ++j) grad.theta[j] += 2.0 * err * row[j];
    grad.intercept += 2.0 * err;
  }
  for (std::size_t j = 0; j < theta.size(); ++j) grad.theta[j] += lambda * theta[j];
  return grad;
}

// ---------------------------------------------------------------------------
// OLS
// ---------------------------------------------------------------------------

inline TrainedModel fit_ols(const Dataset& dataset) {
  detail::require_clean(dataset, "fit_ols");
  if (dataset.n_rows() == 0) throw std::invalid_argument("fit_ols: empty dataset");
  if (dataset.n_cols() == 0) throw std::invalid_argument("fit_ols: no feature columns");

  // Normal equations on [X | 1]; the jittered solve covers rank-deficient
  // Gram matrices (duplicate columns and the like).
  const std::size_t n = dataset.n_rows();
  const std::size_t p = dataset.n_cols();
  Matrix gram(p + 1, p + 1);
  std::vector<double> rhs(p + 1, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = dataset.matrix.row(r);
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a; b < p; ++b) gram(a, b) += row[a] * row[b];
      gram(a, p) += row[a];
      rhs[a] += row[a] * dataset.targets[r];
    }
    gram(p, p) += 1.0;
    rhs[p] += dataset.targets[r];
  }
  for (std::size_t a = 0; a < p + 1; ++a)
    for (std::size_t b = 0; b < a; ++b) gram(a, b) = gram(b, a);

  const auto solved = linalg::solve_spd_with_jitter(gram, rhs);
  TrainedModel model;
  model.spec.kind = ModelKind::Ols;
  model.coefficients.assign(solved.solution.begin(), solved.solution.end() - 1);
  model.intercept = solved.solution.back();
  model.columns = dataset.column_names;
  model.train_scaling_state = dataset.scaling_state;
  model.normalization = dataset.normalization;
  model.training_meta.n_train = n;
  model.training_meta.converged = solved.jitter_used == 0.0;
  model.training_meta.iterations = 1;
  if (solved.jitter_used != 0.0)
    log::warn("fit_ols: singular normal equations; solved with diagonal jitter");
  return model;
}

// ---------------------------------------------------------------------------
// Coordinate descent (LASSO / ElasticNet)
// ---------------------------------------------------------------------------

inline double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

// Smallest lambda at which LASSO coordinate descent zeroes every coefficient:
// max_j |(1/n) x_j . (y - mean(y))|.
inline double lasso_lambda_max(const Dataset& dataset) {
  detail::require_clean(dataset, "lasso_lambda_max");
  const double y_bar = detail::mean(dataset.targets);
  double best = 0.0;
  for (std::size_t j = 0; j < dataset.n_cols(); ++j) {
    double dot = 0.0;
    for (std::size_t r = 0; r < dataset.n_rows(); ++r)
      dot += dataset.matrix(r, j) * (dataset.targets[r] - y_bar);
    best = std::max(best, std::abs(dot / double(dataset.n_rows())));
  }
  return best;
}

namespace detail {

#ifndef NDEBUG
inline double cd_objective(const std::vector<double>& residual,
                           const std::vector<double>& theta, double lambda,
                           double l1_ratio) {
  double rss = 0.0;
  for (const double r : residual) rss += r * r;
  double l1 = 0.0, l2 = 0.0;
  for (const double t : theta) {
    l1 += std::abs(t);
    l2 += t * t;
  }
  return rss / (2.0 * double(residual.size())) + lambda * l1_ratio * l1 +
         0.5 * lambda * (1.0 - l1_ratio) * l2;
}
#endif

inline TrainedModel fit_coordinate_descent(const Dataset& dataset, ModelKind kind,
                                           double lambda, double l1_ratio, double tol,
                                           std::size_t max_iter) {
  require_clean(dataset, "fit_coordinate_descent");
  if (dataset.n_rows() == 0)
    throw std::invalid_argument("fit_coordinate_descent: empty dataset");
  if (!(lambda > 0.0)) throw std::invalid_argument("coordinate descent: lambda must be > 0");
  if (l1_ratio < 0.0 || l1_ratio > 1.0)
    throw std::invalid_argument("coordinate descent: l1_ratio must be in [0,1]");
  if (!is_normalized(dataset.scaling_state))
    throw std::invalid_argument(
        "coordinate descent assumes comparable column scales; normalize the dataset first");

  const std::size_t n = dataset.n_rows();
  const std::size_t p = dataset.n_cols();
  const double l1_penalty = lambda * l1_ratio;
  const double l2_penalty = lambda * (1.0 - l1_ratio);

  std::vector<double> col_sq(p, 0.0);  // (1/n) sum_i x_ij^2
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = dataset.matrix.row(r);
    for (std::size_t j = 0; j < p; ++j) col_sq[j] += row[j] * row[j];
  }
  for (double& v : col_sq) v /= double(n);

  std::vector<double> theta(p, 0.0);
  double intercept = mean(dataset.targets);
  std::vector<double> residual(n);
  for (std::size_t r = 0; r < n; ++r) residual[r] = dataset.targets[r] - intercept;

#ifndef NDEBUG
  double prev_objective = cd_objective(residual, theta, lambda, l1_ratio);
#endif

  bool converged = false;
  std::size_t sweeps = 0;
  while (sweeps < max_iter) {
    ++sweeps;
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double denom = col_sq[j] + l2_penalty;
      if (denom == 0.0) continue;  // all-zero column: coefficient stays 0
      const double old = theta[j];
      double rho = 0.0;
      for (std::size_t r = 0; r < n; ++r) rho += dataset.matrix(r, j) * residual[r];
      rho = rho / double(n) + col_sq[j] * old;
      const double updated = soft_threshold(rho, l1_penalty) / denom;
      const double delta = updated - old;
      if (delta != 0.0) {
        for (std::size_t r = 0; r < n; ++r) residual[r] -= delta * dataset.matrix(r, j);
        theta[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    const double intercept_shift = mean(residual);
    if (intercept_shift != 0.0) {
      intercept += intercept_shift;
      for (double& r : residual) r -= intercept_shift;
    }
    max_change = std::max(max_change, std::abs(intercept_shift));
#ifndef NDEBUG
    const double objective = cd_objective(residual, theta, lambda, l1_ratio);
    assert(objective <= prev_objective + 1e-10 && "coordinate descent objective increased");
    prev_objective = objective;
#endif
    if (max_change < tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    log::warn("coordinate descent did not converge in " + std::to_string(max_iter) + " sweeps");

  TrainedModel model;
  model.spec.kind = kind;
  model.spec.lambda = lambda;
  model.spec.l1_ratio = l1_ratio;
  model.coefficients = std::move(theta);
  model.intercept = intercept;
  model.columns = dataset.column_names;
  model.train_scaling_state = dataset.scaling_state;
  model.normalization = dataset.normalization;
  model.training_meta.n_train = n;
  model.training_meta.converged = converged;
  model.training_meta.iterations = sweeps;
  return model;
}

}  // namespace detail

inline TrainedModel fit_lasso(const Dataset& dataset, double lambda,
                              double tol = kDefaultCdTol,
                              std::size_t max_iter = kDefaultCdMaxIter) {
  return detail::fit_coordinate_descent(dataset, ModelKind::Lasso, lambda, 1.0, tol, max_iter);
}

inline TrainedModel fit_elastic_net(const Dataset& dataset, double lambda, double l1_ratio,
                                    double tol = kDefaultCdTol,
                                    std::size_t max_iter = kDefaultCdMaxIter) {
  return detail::fit_coordinate_descent(dataset, ModelKind::ElasticNet, lambda, l1_ratio, tol,
                                        max_iter);
}

// ---------------------------------------------------------------------------
// epsilon-SVR via SMO
// ---------------------------------------------------------------------------

// Default RBF bandwidth when none is configured: 1 / (n_cols * variance of
// all matrix entries).
inline double default_rbf_gamma(const Matrix& matrix) {
  if (matrix.data.empty() || matrix.cols == 0) return 1.0;
  double mean = 0.0;
  for (const double v : matrix.data) mean += v;
  mean /= double(matrix.data.size());
  double variance = 0.0;
  for (const double v : matrix.data) variance += (v - mean) * (v - mean);
  variance /= double(matrix.data.size());
  if (variance <= 0.0) {
    log::warn("default_rbf_gamma: zero-variance matrix; falling back to gamma = 1");
    return 1.0;
  }
  return 1.0 / (double(matrix.cols) * variance);
}

inline double kernel_value(const KernelSpec& kernel, std::span<const double> a,
                           std::span<const double> b) {
  if (kernel.kind == KernelSpec::Kind::Linear) return linalg::dot(a, b);
  return std::exp(-kernel.gamma * linalg::squared_distance(a, b));
}

namespace detail {

constexpr double kSmoTau = 1e-12;

// One flat view over the 2l-variable dual: t < l carries sign +1 (the alpha
// side), t >= l carries sign -1 (the alpha* side).
struct SmoProblem {
  std::size_t l = 0;
  double c = 0.0;
  const std::vector<std::vector<double>>* kernel = nullptr;

  double sign(std::size_t t) const { return t < l ? 1.0 : -1.0; }
  double q(std::size_t t, std::size_t s) const {
    return sign(t) * sign(s) * (*kernel)[t % l][s % l];
  }
};

}  // namespace detail

inline TrainedModel fit_svr(const Dataset& dataset, const KernelSpec& kernel, double c,
                            double epsilon, double tol = kDefaultSvrTol,
                            std::size_t max_iter = kDefaultSvrMaxIter) {
  detail::require_clean(dataset, "fit_svr");
  if (dataset.n_rows() == 0) throw std::invalid_argument("fit_svr: empty dataset");
  if (!(c > 0.0)) throw std::invalid_argument("fit_svr: c must be > 0");
  if (epsilon < 0.0) throw std::invalid_argument("fit_svr: epsilon must be >= 0");
  if (kernel.kind == KernelSpec::Kind::Rbf && !(kernel.gamma > 0.0))
    throw std::invalid_argument("fit_svr: rbf gamma must be > 0");

  const std::size_t l = dataset.n_rows();
  // The dense kernel matrix costs l^2 doubles; keep desk-scale problems only.
  if (l > 8000)
    throw std::invalid_argument("fit_svr: dataset too large for the dense kernel matrix (" +
                                std::to_string(l) + " rows; limit 8000)");

  std::vector<std::vector<double>> K(l, std::vector<double>(l));
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = i; j < l; ++j) {
      const double v = kernel_value(kernel, dataset.matrix.row(i), dataset.matrix.row(j));
      K[i][j] = v;
      K[j][i] = v;
    }
  }

  const detail::SmoProblem prob{l, c, &K};
  const std::size_t m = 2 * l;
  std::vector<double> alpha(m, 0.0);
  std::vector<double> grad(m);  // gradient of the dual objective, libsvm-style
  for (std::size_t i = 0; i < l; ++i) {
    grad[i] = epsilon - dataset.targets[i];
    grad[i + l] = epsilon + dataset.targets[i];
  }

  const auto in_up = [&](std::size_t t) {
    return t < l ? alpha[t] < c : alpha[t] > 0.0;
  };
  const auto in_low = [&](std::size_t t) {
    return t < l ? alpha[t] > 0.0 : alpha[t] < c;
  };

  bool converged = false;
  std::size_t iterations = 0;
  while (iterations < max_iter) {
    // Maximal violating pair; strict comparisons over ascending t make ties
    // resolve to the lowest index.
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    std::size_t i = m, j = m;
    for (std::size_t t = 0; t < m; ++t) {
      const double v = -prob.sign(t) * grad[t];
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    if (i == m || j == m || g_max - g_min < tol) {
      converged = true;
      break;
    }
    ++iterations;

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    if (prob.sign(i) != prob.sign(j)) {
      // The feasible direction raises both alphas, so the curvature is
      // ||phi(x_i) - phi(x_j)||^2 — the same cross-term sign as the
      // opposite branch once the dual signs cancel out of q().
      double quad = prob.q(i, i) + prob.q(j, j) - 2.0 * K[i % l][j % l];
      if (quad <= 0.0) quad = detail::kSmoTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = -diff;
        }
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = c + diff;
        }
      }
    } else {
      double quad = prob.q(i, i) + prob.q(j, j) - 2.0 * K[i % l][j % l];
      if (quad <= 0.0) quad = detail::kSmoTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else {
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }

    const double delta_i = alpha[i] - old_ai;
    const double delta_j = alpha[j] - old_aj;
    if (delta_i != 0.0 || delta_j != 0.0) {
      for (std::size_t t = 0; t < m; ++t)
        grad[t] += prob.q(t, i) * delta_i + prob.q(t, j) * delta_j;
    }
  }
  if (!converged)
    log::warn("fit_svr: SMO did not converge in " + std::to_string(max_iter) + " iterations");

  // Intercept from KKT conditions: average sign(t)*grad[t] over free
  // variables; bound midpoint when nothing is free.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < m; ++t) {
    const double yg = prob.sign(t) * grad[t];
    if (alpha[t] >= c) {
      if (prob.sign(t) < 0.0)
        upper = std::min(upper, yg);
      else
        lower = std::max(lower, yg);
    } else if (alpha[t] <= 0.0) {
      if (prob.sign(t) > 0.0)
        upper = std::min(upper, yg);
      else
        lower = std::max(lower, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / double(free_count) : 0.5 * (upper + lower);

  // Collapse the two dual halves into signed coefficients; only rows with a
  // nonzero difference become support vectors.
  std::vector<double> dual;
  std::vector<double> sv_cells;
  std::size_t sv_count = 0;
  for (std::size_t i = 0; i < l; ++i) {
    const double beta = alpha[i] - alpha[i + l];
    if (beta == 0.0) continue;
    dual.push_back(beta);
    const auto row = dataset.matrix.row(i);
    sv_cells.insert(sv_cells.end(), row.begin(), row.end());
    ++sv_count;
  }

  TrainedModel model;
  model.spec.kind =
      kernel.kind == KernelSpec::Kind::Linear ? ModelKind::SvrLinear : ModelKind::SvrRbf;
  model.spec.c = c;
  model.spec.epsilon = epsilon;
  model.spec.gamma = kernel.kind == KernelSpec::Kind::Rbf ? kernel.gamma : 0.0;
  model.dual_coefficients = std::move(dual);
  model.support_vectors = Matrix(sv_count, dataset.n_cols(), std::move(sv_cells));
  model.kernel_gamma = model.spec.gamma;
  model.intercept = -rho;
  model.columns = dataset.column_names;
  model.train_scaling_state = dataset.scaling_state;
  model.normalization = dataset.normalization;
  model.training_meta.n_train = l;
  model.training_meta.converged = converged;
  model.training_meta.iterations = iterations;
  return model;
}

// ---------------------------------------------------------------------------
// Baseline
// ---------------------------------------------------------------------------

inline TrainedModel fit_baseline_mean(const Dataset& dataset) {
  if (dataset.n_rows() == 0) throw std::invalid_argument("fit_baseline_mean: empty dataset");
  if (dataset.targets.size() != dataset.n_rows())
    throw std::invalid_argument("fit_baseline_mean: target/row count mismatch");
  TrainedModel model;
  model.spec.kind = ModelKind::BaselineMean;
  model.mean_value = detail::mean(dataset.targets);
  model.intercept = model.mean_value;
  model.columns = dataset.column_names;
  model.train_scaling_state = dataset.scaling_state;
  model.normalization = dataset.normalization;
  model.training_meta.n_train = dataset.n_rows();
  model.training_meta.converged = true;
  model.training_meta.iterations = 0;
  return model;
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

inline TrainedModel fit(const Dataset& dataset, ModelSpec spec) {
  spec.validate();
  switch (spec.kind) {
    case ModelKind::Ols:
      return fit_ols(dataset);
    case ModelKind::Lasso:
      return fit_lasso(dataset, spec.lambda);
    case ModelKind::ElasticNet:
      return fit_elastic_net(dataset, spec.lambda, spec.l1_ratio);
    case ModelKind::SvrLinear:
      return fit_svr(dataset, KernelSpec::linear(), spec.c, spec.epsilon);
    case ModelKind::SvrRbf: {
      const double gamma = spec.gamma > 0.0 ? spec.gamma : default_rbf_gamma(dataset.matrix);
      return fit_svr(dataset, KernelSpec::rbf(gamma), spec.c, spec.epsilon);
    }
    case ModelKind::BaselineMean:
      return fit_baseline_mean(dataset);
  }
  throw std::logic_error("fit: unhandled model kind");
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

namespace detail {

inline const Dataset& resolve_input(const TrainedModel& model, const Dataset& input,
                                    Dataset& storage) {
  if (!model.columns.empty() && !input.column_names.empty() &&
      model.columns != input.column_names) {
    std::string detail = "predict: input columns do not match training columns";
    const std::size_t upto = std::min(model.columns.size(), input.column_names.size());
    for (std::size_t j = 0; j < upto; ++j) {
      if (model.columns[j] != input.column_names[j]) {
        detail += " (first mismatch at column " + std::to_string(j) + ": trained on '" +
                  model.columns[j] + "', got '" + input.column_names[j] + "')";
        break;
      }
    }
    if (model.columns.size() != input.column_names.size())
      detail += " (trained on " + std::to_string(model.columns.size()) + " columns, got " +
                std::to_string(input.column_names.size()) + ")";
    throw std::invalid_argument(detail);
  }
  if (input.n_cols() != model.columns.size())
    throw std::invalid_argument("predict: input has " + std::to_string(input.n_cols()) +
                                " columns, model expects " +
                                std::to_string(model.columns.size()));
  if (input.has_missing())
    throw std::invalid_argument("predict: input contains missing values; impute first");

  if (input.scaling_state == model.train_scaling_state) return input;
  if (model.normalization &&
      strip_normalized(model.train_scaling_state) == input.scaling_state) {
    storage = featurize::apply_normalization(input, *model.normalization);
    return storage;
  }
  throw std::invalid_argument(
      std::string("predict: scaling state mismatch (model trained on ") +
      std::string(scaling_state_name(model.train_scaling_state)) + ", input is " +
      std::string(scaling_state_name(input.scaling_state)) + ")");
}

}  // namespace detail

inline std::vector<double> predict(const TrainedModel& model, const Dataset& input) {
  std::vector<double> out(input.n_rows());
  if (model.spec.kind == ModelKind::BaselineMean) {
    std::fill(out.begin(), out.end(), model.mean_value);
    return out;
  }

  Dataset storage;
  const Dataset& resolved = detail::resolve_input(model, input, storage);

  if (model.spec.kind == ModelKind::SvrLinear || model.spec.kind == ModelKind::SvrRbf) {
    const KernelSpec kernel = model.spec.kind == ModelKind::SvrLinear
                                  ? KernelSpec::linear()
                                  : KernelSpec::rbf(model.kernel_gamma);
    for (std::size_t r = 0; r < resolved.n_rows(); ++r) {
      double sum = model.intercept;
      for (std::size_t s = 0; s < model.support_vectors.rows; ++s)
        sum += model.dual_coefficients[s] *
               kernel_value(kernel, model.support_vectors.row(s), resolved.matrix.row(r));
      out[r] = sum;
    }
    return out;
  }

  for (std::size_t r = 0; r < resolved.n_rows(); ++r)
    out[r] = linalg::dot(resolved.matrix.row(r), model.coefficients) + model.intercept;
  return out;
}

// ---------------------------------------------------------------------------
// Model JSON round trip
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
           j.at("data").get<std::vector<double>>());
  return m;
}

inline json model_to_json(const TrainedModel& model) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["spec"] = {{"kind", model_kind_name(model.spec.kind)}, {"lambda", model.spec.lambda},
               {"l1_ratio", model.spec.l1_ratio},          {"c", model.spec.c},
               {"epsilon", model.spec.epsilon},            {"gamma", model.spec.gamma}};
  j["coefficients"] = model.coefficients;
  j["dual_coefficients"] = model.dual_coefficients;
  j["support_vectors"] = matrix_to_json(model.support_vectors);
  j["kernel_gamma"] = model.kernel_gamma;
  j["mean_value"] = model.mean_value;
  j["intercept"] = model.intercept;
  j["columns"] = model.columns;
  j["train_scaling_state"] = scaling_state_name(model.train_scaling_state);
  j["normalization"] = model.normalization
                           ? featurize::normalization_to_json(*model.normalization)
                           : json(nullptr);
  j["training_meta"] = {{"n_train", model.training_meta.n_train},
                        {"seed", model.training_meta.seed},
                        {"converged", model.training_meta.converged},
                        {"iterations", model.training_meta.iterations}};
  return j;
}

inline TrainedModel model_from_json(const json& j) {
  if (j.at("format_version").get<int>() != kModelFormatVersion)
    throw std::runtime_error("model file: unsupported format_version");
  TrainedModel model;
  const auto& spec = j.at("spec");
  model.spec.kind = model_kind_from_name(spec.at("kind").get<std::string>());
  model.spec.lambda = spec.at("lambda").get<double>();
  model.spec.l1_ratio = spec.at("l1_ratio").get<double>();
  model.spec.c = spec.at("c").get<double>();
  model.spec.epsilon = spec.at("epsilon").get<double>();
  model.spec.gamma = spec.at("gamma").get<double>();
  model.coefficients = j.at("coefficients").get<std::vector<double>>();
  model.dual_coefficients = j.at("dual_coefficients").get<std::vector<double>>();
  model.support_vectors = matrix_from_json(j.at("support_vectors"));
  model.kernel_gamma = j.at("kernel_gamma").get<double>();
  model.mean_value = j.at("mean_value").get<double>();
  model.intercept = j.at("intercept").get<double>();
  model.columns = j.at("columns").get<std::vector<std::string>>();
  model.train_scaling_state =
      scaling_state_from_name(j.at("train_scaling_state").get<std::string>());
  if (!j.at("normalization").is_null())
    model.normalization = featurize::normalization_from_json(j.at("normalization"));
  const auto& meta = j.at("training_meta");
  model.training_meta.n_train = meta.at("n_train").get<std::size_t>();
  model.training_meta.seed = meta.at("seed").get<std::uint64_t>();
  model.training_meta.converged = meta.at("converged").get<bool>();
  model.training_meta.iterations = meta.at("iterations").get<std::size_t>();
  return model;
}

inline void save_model(const std::string& path, const TrainedModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << model_to_json(model).dump(2) << '\n';
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": parse error: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace agepred::models
