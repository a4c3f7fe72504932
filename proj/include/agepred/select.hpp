#pragma once

// Model selection: deterministic train/test splitting, cross-validation
// grids with per-fold preprocessing (and a leak monitor that proves it),
// AIC/BIC, and mutual-information feature ranking.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "agepred/csv.hpp"
#include "agepred/domain.hpp"
#include "agepred/evaluate.hpp"
#include "agepred/featurize.hpp"
#include "agepred/log.hpp"
#include "agepred/models.hpp"

namespace agepred::select {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Split plans
// ---------------------------------------------------------------------------

struct SplitPlan {
  enum class Strategy { Shuffle, KFold };
  Strategy strategy = Strategy::Shuffle;
  double test_fraction = 0.25;  // Shuffle only, open interval (0,1)
  std::size_t k = 5;            // KFold only, >= 2
  std::uint64_t seed = 0;

  void validate() const {
    if (strategy == Strategy::Shuffle) {
      if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw std::invalid_argument("split plan: test_fraction must be in (0,1)");
    } else if (k < 2) {
      throw std::invalid_argument("split plan: k must be >= 2");
    }
  }

  std::string id() const {
    char buf[96];
    if (strategy == Strategy::Shuffle) {
      std::snprintf(buf, sizeof(buf), "shuffle:frac=%g,seed=%llu", test_fraction,
                    static_cast<unsigned long long>(seed));
    } else {
      std::snprintf(buf, sizeof(buf), "kfold:k=%zu,seed=%llu", k,
                    static_cast<unsigned long long>(seed));
    }
    return buf;
  }
};

namespace detail {

inline Dataset subset_dataset(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.column_names = dataset.column_names;
  out.scaling_state = dataset.scaling_state;
  out.normalization = dataset.normalization;
  std::vector<double> cells;
  cells.reserve(rows.size() * dataset.n_cols());
  for (const std::size_t r : rows) {
    const auto row = dataset.matrix.row(r);
    cells.insert(cells.end(), row.begin(), row.end());
    out.targets.push_back(dataset.targets[r]);
  }
  out.matrix = Matrix(rows.size(), dataset.n_cols(), std::move(cells));
  return out;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace detail

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline IndexSplit split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("split: need at least 2 rows");
  const auto test_size = std::size_t(std::llround(double(n) * test_fraction));
  if (test_size == 0 || test_size >= n)
    throw std::invalid_argument("split: degenerate partition (test size " +
                                std::to_string(test_size) + " of " + std::to_string(n) + ")");
  auto idx = detail::shuffled_indices(n, seed);
  IndexSplit out;
  out.test.assign(idx.begin(), idx.begin() + std::ptrdiff_t(test_size));
  out.train.assign(idx.begin() + std::ptrdiff_t(test_size), idx.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

// K near-equal folds; fold f is the test side, the rest train.
inline std::vector<IndexSplit> kfold_indices(std::size_t n, std::size_t k,
                                             std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
  if (k > n) throw std::invalid_argument("kfold: k exceeds row count");
  const auto idx = detail::shuffled_indices(n, seed);
  std::vector<IndexSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t begin = f * n / k;
    const std::size_t end = (f + 1) * n / k;
    auto& fold = folds[f];
    fold.test.assign(idx.begin() + std::ptrdiff_t(begin), idx.begin() + std::ptrdiff_t(end));
    fold.train.reserve(n - (end - begin));
    fold.train.insert(fold.train.end(), idx.begin(), idx.begin() + std::ptrdiff_t(begin));
    fold.train.insert(fold.train.end(), idx.begin() + std::ptrdiff_t(end), idx.end());
    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.train.begin(), fold.train.end());
  }
  return folds;
}

struct SplitResult {
  Dataset train;
  Dataset test;
};

inline SplitResult split(const Dataset& dataset, const SplitPlan& plan) {
  plan.validate();
  if (plan.strategy != SplitPlan::Strategy::Shuffle)
    throw std::invalid_argument("split: plan must use the Shuffle strategy");
  const IndexSplit idx = split_indices(dataset.n_rows(), plan.test_fraction, plan.seed);
  return {detail::subset_dataset(dataset, idx.train),
          detail::subset_dataset(dataset, idx.test)};
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvCell {
  std::size_t spec_index = 0;
  std::size_t plan_index = 0;
  std::string spec_id;
  std::string plan_id;
  double score = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool ok = false;
  std::string error;
};

struct CvTable {
  std::string metric;
  std::vector<CvCell> cells;  // spec-major, then plan order
  bool leak_detected = false;
};

namespace detail {

// Train-fold preprocessing: impute means and normalization are fitted on the
// train fold only, then applied to both sides. The fingerprints carried by
// the fitted params let us assert exactly that (any refactor that slips
// test rows into the fit changes the hash).
struct FoldData {
  Dataset train;
  Dataset test;
};

inline FoldData prepare_fold(const Dataset& dataset, const IndexSplit& idx,
                             std::atomic<bool>& leak_flag) {
  FoldData fold{subset_dataset(dataset, idx.train), subset_dataset(dataset, idx.test)};
  if (fold.train.has_missing() || fold.test.has_missing()) {
    const auto impute = featurize::fit_impute_means(fold.train);
    const auto train_print = linalg::matrix_fingerprint(fold.train.matrix);
    if (impute.fitted_hash != train_print || impute.fitted_rows != fold.train.n_rows())
      leak_flag = true;
    fold.train = featurize::apply_impute_means(std::move(fold.train), impute);
    fold.test = featurize::apply_impute_means(std::move(fold.test), impute);
  }
  const auto params = featurize::fit_normalization(fold.train);
  if (params.fitted_hash != linalg::matrix_fingerprint(fold.train.matrix) ||
      params.fitted_rows != fold.train.n_rows())
    leak_flag = true;
  fold.train = featurize::apply_normalization(std::move(fold.train), params);
  fold.test = featurize::apply_normalization(std::move(fold.test), params);
  return fold;
}

}  // namespace detail

inline CvTable cross_validate(const Dataset& dataset, const std::vector<ModelSpec>& specs,
                              const std::vector<SplitPlan>& plans,
                              const evaluate::MetricId& metric, std::size_t jobs = 1) {
  if (specs.empty()) throw std::invalid_argument("cross_validate: no model specs");
  if (plans.empty()) throw std::invalid_argument("cross_validate: no split plans");
  for (const auto& plan : plans) plan.validate();
  if (is_normalized(dataset.scaling_state))
    throw std::invalid_argument(
        "cross_validate: dataset is already normalized; per-fold preprocessing needs the "
        "unnormalized matrix");

  CvTable table;
  table.metric = metric.name();
  table.cells.resize(specs.size() * plans.size());
  std::atomic<bool> leak_flag{false};

  const auto run_cell = [&](std::size_t cell_index) {
    const std::size_t si = cell_index / plans.size();
    const std::size_t pi = cell_index % plans.size();
    const ModelSpec& spec = specs[si];
    const SplitPlan& plan = plans[pi];
    CvCell cell;
    cell.spec_index = si;
    cell.plan_index = pi;
    cell.spec_id = spec.id();
    cell.plan_id = plan.id();
    try {
      std::vector<IndexSplit> folds;
      if (plan.strategy == SplitPlan::Strategy::Shuffle)
        folds.push_back(split_indices(dataset.n_rows(), plan.test_fraction, plan.seed));
      else
        folds = kfold_indices(dataset.n_rows(), plan.k, plan.seed);

      double score_sum = 0.0;
      bool converged = true;
      for (const auto& fold_idx : folds) {
        const auto fold = detail::prepare_fold(dataset, fold_idx, leak_flag);
        const TrainedModel model = models::fit(fold.train, spec);
        converged = converged && model.training_meta.converged;
        const auto predicted = models::predict(model, fold.test);
        score_sum += evaluate::metric_score(metric, predicted, fold.test.targets);
      }
      cell.score = score_sum / double(folds.size());
      cell.converged = converged;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();  // recorded in-cell; the rest of the grid continues
    }
    table.cells[cell_index] = std::move(cell);
  };

  const std::size_t n_cells = table.cells.size();
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, n_cells));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < n_cells; ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&]() {
        for (std::size_t i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1))
          run_cell(i);
      });
    }
    for (auto& t : workers) t.join();
  }

  table.leak_detected = leak_flag.load();
  return table;
}

// Grid results CSV: spec_id, plan_id, metric, score, converged. Failed cells
// keep an empty score and converged=false.
inline void write_grid_csv(const std::string& path, const CvTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "spec_id,plan_id,metric,score,converged\n";
  for (const auto& cell : table.cells) {
    const std::vector<std::string> fields = {
        cell.spec_id, cell.plan_id, table.metric,
        cell.ok ? csv::format_double(cell.score) : "",
        cell.converged ? "true" : "false"};
    out << csv::join_row(fields) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Information criteria
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t parameter_count(const TrainedModel& model) {
  if (model.spec.kind == ModelKind::SvrLinear || model.spec.kind == ModelKind::SvrRbf)
    return model.support_vectors.rows + 1;
  std::size_t nonzero = 0;
  for (const double c : model.coefficients)
    if (c != 0.0) ++nonzero;
  return nonzero + 1;  // + intercept
}

inline double information_criterion(const TrainedModel& model, const Dataset& dataset,
                                    bool bayesian) {
  const auto predicted = models::predict(model, dataset);
  double rss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - dataset.targets[i];
    rss += e * e;
  }
  const double n = double(dataset.n_rows());
  const double k = double(parameter_count(model));
  if (rss == 0.0) {
    log::warn("information criterion: zero RSS; returning -inf");
    return -std::numeric_limits<double>::infinity();
  }
  const double penalty = bayesian ? k * std::log(n) : 2.0 * k;
  return n * std::log(rss / n) + penalty;
}

}  // namespace detail

inline double aic(const TrainedModel& model, const Dataset& dataset) {
  return detail::information_criterion(model, dataset, false);
}

inline double bic(const TrainedModel& model, const Dataset& dataset) {
  return detail::information_criterion(model, dataset, true);
}

// Fits a LASSO per grid point and keeps the AIC minimizer; ties go to the
// larger lambda (the more parsimonious fit).
inline double aic_guided_lambda(const Dataset& dataset, std::vector<double> grid) {
  if (grid.empty()) throw std::invalid_argument("aic_guided_lambda: empty grid");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  double best_lambda = 0.0;
  double best_aic = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const double lambda : grid) {
    double score = 0.0;
    try {
      const TrainedModel model = models::fit_lasso(dataset, lambda);
      score = aic(model, dataset);
    } catch (const std::exception& e) {
      log::warn("aic_guided_lambda: lambda " + std::to_string(lambda) +
                " failed: " + e.what());
      continue;
    }
    if (!any || score < best_aic) {
      any = true;
      best_aic = score;
      best_lambda = lambda;
    }
  }
  if (!any) throw std::runtime_error("aic_guided_lambda: every grid point failed");
  return best_lambda;
}

// ---------------------------------------------------------------------------
// Mutual information
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultMiBins = 10;

namespace detail {

// Equal-frequency bin assignment by rank; ties order by row index, which
// keeps the estimate deterministic.
inline std::vector<std::size_t> equal_frequency_bins(const std::vector<double>& values,
                                                     std::size_t n_bins) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  std::vector<std::size_t> bins(n);
  for (std::size_t rank = 0; rank < n; ++rank) bins[order[rank]] = rank * n_bins / n;
  return bins;
}

inline double plug_in_mi(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                         std::size_t n_bins) {
  const std::size_t n = a.size();
  std::vector<double> joint(n_bins * n_bins, 0.0);
  std::vector<double> pa(n_bins, 0.0), pb(n_bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    joint[a[i] * n_bins + b[i]] += 1.0;
    pa[a[i]] += 1.0;
    pb[b[i]] += 1.0;
  }
  double mi = 0.0;
  for (std::size_t x = 0; x < n_bins; ++x) {
    for (std::size_t y = 0; y < n_bins; ++y) {
      const double pxy = joint[x * n_bins + y] / double(n);
      if (pxy == 0.0) continue;
      mi += pxy * std::log(pxy / ((pa[x] / double(n)) * (pb[y] / double(n))));
    }
  }
  return mi;
}

}  // namespace detail

inline std::vector<double> mutual_information_scores(const Dataset& dataset,
                                                     std::size_t n_bins = kDefaultMiBins) {
  if (dataset.n_rows() == 0) throw std::invalid_argument("mutual information: empty dataset");
  const auto target_bins = detail::equal_frequency_bins(dataset.targets, n_bins);
  std::vector<double> scores(dataset.n_cols(), 0.0);
  std::vector<double> column(dataset.n_rows());
  for (std::size_t j = 0; j < dataset.n_cols(); ++j) {
    for (std::size_t r = 0; r < dataset.n_rows(); ++r) column[r] = dataset.matrix(r, j);
    scores[j] = detail::plug_in_mi(detail::equal_frequency_bins(column, n_bins),
                                   target_bins, n_bins);
  }
  return scores;
}

inline std::vector<std::size_t> mutual_information_topk(const Dataset& dataset,
                                                        std::size_t k,
                                                        std::size_t n_bins = kDefaultMiBins) {
  if (k < 1 || k > dataset.n_cols())
    throw std::invalid_argument("mutual_information_topk: k out of range");
  const auto scores = mutual_information_scores(dataset, n_bins);
  std::vector<std::size_t> order(dataset.n_cols());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // ties break toward the lower column index
  });
  order.resize(k);
  return order;
}

// ---------------------------------------------------------------------------
// Grid files
// ---------------------------------------------------------------------------

struct GridFile {
  std::vector<ModelSpec> specs;
  std::vector<SplitPlan> plans;
  evaluate::MetricId metric;
};

inline SplitPlan plan_from_json(const json& j) {
  SplitPlan plan;
  const auto strategy = j.at("strategy").get<std::string>();
  if (strategy == "shuffle") {
    plan.strategy = SplitPlan::Strategy::Shuffle;
    plan.test_fraction = j.at("test_fraction").get<double>();
  } else if (strategy == "kfold") {
    plan.strategy = SplitPlan::Strategy::KFold;
    plan.k = j.at("k").get<std::size_t>();
  } else {
    throw std::invalid_argument("unknown split strategy '" + strategy + "'");
  }
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.validate();
  return plan;
}

inline GridFile load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": parse error: " + e.what());
  }
  GridFile grid;
  for (const auto& s : j.at("specs")) grid.specs.push_back(parse_model_spec(s.get<std::string>()));
  for (const auto& p : j.at("plans")) grid.plans.push_back(plan_from_json(p));
  grid.metric = evaluate::parse_metric(j.at("metric").get<std::string>());
  if (grid.specs.empty() || grid.plans.empty())
    throw std::runtime_error(path + ": grid needs at least one spec and one plan");
  return grid;
}

}  // namespace agepred::select
