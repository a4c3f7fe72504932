#pragma once

// Evaluation metrics (MAE, MedAE, R^2, Accuracy@error-bound, two-sample KS)
// and the report artifacts: report.json plus plot-ready residual and
// accuracy-curve CSVs.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agepred/csv.hpp"
#include "agepred/domain.hpp"
#include "agepred/log.hpp"
#include "agepred/models.hpp"

namespace agepred::evaluate {

using nlohmann::json;

inline constexpr int kDefaultMaxBound = 10;

namespace detail {

inline void require_pair(const std::vector<double>& predicted,
                         const std::vector<double>& actual, const char* op) {
  if (predicted.size() != actual.size())
    throw std::invalid_argument(std::string(op) + ": length mismatch (" +
                                std::to_string(predicted.size()) + " vs " +
                                std::to_string(actual.size()) + ")");
  if (predicted.empty())
    throw std::invalid_argument(std::string(op) + ": empty input");
}

inline double median_inplace(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

inline double mae(const std::vector<double>& predicted, const std::vector<double>& actual) {
  detail::require_pair(predicted, actual, "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    sum += std::abs(predicted[i] - actual[i]);
  return sum / double(predicted.size());
}

inline double medae(const std::vector<double>& predicted, const std::vector<double>& actual) {
  detail::require_pair(predicted, actual, "medae");
  std::vector<double> errors(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i)
    errors[i] = std::abs(predicted[i] - actual[i]);
  return detail::median_inplace(errors);
}

inline double r2(const std::vector<double>& predicted, const std::vector<double>& actual) {
  detail::require_pair(predicted, actual, "r2");
  if (predicted.size() < 2) throw std::invalid_argument("r2: need at least 2 samples");
  const double mean =
      std::accumulate(actual.begin(), actual.end(), 0.0) / double(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ss_res += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot == 0.0)
    throw std::invalid_argument("r2: actual values have zero variance");
  return 1.0 - ss_res / ss_tot;
}

// Fraction of predictions within +/- bound of the truth, boundary inclusive.
inline double accuracy_at(const std::vector<double>& predicted,
                          const std::vector<double>& actual, int bound) {
  detail::require_pair(predicted, actual, "accuracy_at");
  if (bound < 0) throw std::invalid_argument("accuracy_at: bound must be >= 0");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (std::abs(predicted[i] - actual[i]) <= double(bound)) ++hits;
  return double(hits) / double(predicted.size());
}

inline std::vector<std::pair<int, double>> accuracy_curve(
    const std::vector<double>& predicted, const std::vector<double>& actual,
    int max_bound) {
  if (max_bound < 0) throw std::invalid_argument("accuracy_curve: max_bound must be >= 0");
  std::vector<std::pair<int, double>> curve;
  curve.reserve(std::size_t(max_bound) + 1);
  for (int b = 0; b <= max_bound; ++b)
    curve.emplace_back(b, accuracy_at(predicted, actual, b));
  return curve;
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

namespace detail {

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1}
// exp(-2 k^2 lambda^2); returns 1 when the series will not converge.
inline double kolmogorov_q(double lambda) {
  const double a2 = -2.0 * lambda * lambda;
  double fac = 2.0, sum = 0.0, prev_term = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = fac * std::exp(a2 * double(k) * double(k));
    sum += term;
    if (std::abs(term) <= 0.001 * prev_term || std::abs(term) <= 1e-8 * std::abs(sum))
      return std::clamp(sum, 0.0, 1.0);
    fac = -fac;
    prev_term = std::abs(term);
  }
  return 1.0;
}

}  // namespace detail

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_two_sample: samples must be nonempty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = double(a.size()), nb = double(b.size());
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double va = a[i], vb = b[j];
    if (va <= vb) fa = double(++i) / na;
    if (vb <= va) fb = double(++j) / nb;
    d = std::max(d, std::abs(fa - fb));
  }
  const double ne = na * nb / (na + nb);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  return {d, detail::kolmogorov_q(lambda)};
}

// ---------------------------------------------------------------------------
// Metric identifiers ("mae", "medae", "r2", "acc@B")
// ---------------------------------------------------------------------------

struct MetricId {
  enum class Kind { Mae, Medae, R2, AccuracyAt };
  Kind kind = Kind::Mae;
  int bound = 10;  // only for AccuracyAt

  std::string name() const {
    switch (kind) {
      case Kind::Mae: return "mae";
      case Kind::Medae: return "medae";
      case Kind::R2: return "r2";
      case Kind::AccuracyAt: return "acc@" + std::to_string(bound);
    }
    throw std::logic_error("unknown metric kind");
  }
};

inline MetricId parse_metric(const std::string& text) {
  if (text == "mae") return {MetricId::Kind::Mae, 0};
  if (text == "medae") return {MetricId::Kind::Medae, 0};
  if (text == "r2") return {MetricId::Kind::R2, 0};
  if (text.rfind("acc@", 0) == 0) {
    const std::string tail = text.substr(4);
    std::size_t used = 0;
    int bound = -1;
    try {
      bound = std::stoi(tail, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad metric '" + text + "'");
    }
    if (used != tail.size() || bound < 0)
      throw std::invalid_argument("bad metric '" + text + "'");
    return {MetricId::Kind::AccuracyAt, bound};
  }
  throw std::invalid_argument("unknown metric '" + text +
                              "' (expected mae|medae|r2|acc@B)");
}

inline double metric_score(const MetricId& metric, const std::vector<double>& predicted,
                           const std::vector<double>& actual) {
  switch (metric.kind) {
    case MetricId::Kind::Mae: return mae(predicted, actual);
    case MetricId::Kind::Medae: return medae(predicted, actual);
    case MetricId::Kind::R2: return r2(predicted, actual);
    case MetricId::Kind::AccuracyAt: return accuracy_at(predicted, actual, metric.bound);
  }
  throw std::logic_error("unknown metric kind");
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline EvalReport build_report(const TrainedModel& model, const Dataset& test,
                               int max_bound = kDefaultMaxBound) {
  const std::vector<double> predicted = models::predict(model, test);
  const std::vector<double>& actual = test.targets;
  EvalReport report;
  report.mae = mae(predicted, actual);
  report.medae = medae(predicted, actual);
  report.r2 = r2(predicted, actual);
  report.accuracy_curve = accuracy_curve(predicted, actual, max_bound);
  report.residuals.resize(predicted.size());
  report.predicted_vs_expected.resize(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    report.residuals[i] = predicted[i] - actual[i];  // signed convention
    report.predicted_vs_expected[i] = {predicted[i], actual[i]};
  }
  return report;
}

inline constexpr int kReportFormatVersion = 1;

inline json report_to_json(const EvalReport& report) {
  json curve = json::array();
  for (const auto& [bound, acc] : report.accuracy_curve)
    curve.push_back({{"bound", bound}, {"accuracy", acc}});
  json pve = json::array();
  for (const auto& [p, e] : report.predicted_vs_expected)
    pve.push_back({{"predicted", p}, {"expected", e}});
  return json{{"format_version", kReportFormatVersion},
              {"mae", report.mae},
              {"medae", report.medae},
              {"r2", report.r2},
              {"accuracy_curve", std::move(curve)},
              {"residuals", report.residuals},
              {"predicted_vs_expected", std::move(pve)}};
}

inline EvalReport report_from_json(const json& j) {
  if (j.at("format_version").get<int>() != kReportFormatVersion)
    throw std::runtime_error("report file: unsupported format_version");
  EvalReport report;
  report.mae = j.at("mae").get<double>();
  report.medae = j.at("medae").get<double>();
  report.r2 = j.at("r2").get<double>();
  for (const auto& cell : j.at("accuracy_curve"))
    report.accuracy_curve.emplace_back(cell.at("bound").get<int>(),
                                       cell.at("accuracy").get<double>());
  report.residuals = j.at("residuals").get<std::vector<double>>();
  for (const auto& cell : j.at("predicted_vs_expected"))
    report.predicted_vs_expected.emplace_back(cell.at("predicted").get<double>(),
                                              cell.at("expected").get<double>());
  return report;
}

// Writes report.json, residuals.csv (index, predicted, actual, residual) and
// accuracy_curve.csv (bound, accuracy) into out_dir.
inline void export_report(const EvalReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());

  const auto write_file = [&](const std::string& name, auto&& body) {
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    body(out);
    if (!out) throw std::runtime_error("write failed for " + path);
  };

  write_file("report.json",
             [&](std::ofstream& out) { out << report_to_json(report).dump(2) << '\n'; });
  write_file("residuals.csv", [&](std::ofstream& out) {
    out << "index,predicted,actual,residual\n";
    for (std::size_t i = 0; i < report.residuals.size(); ++i) {
      const auto& [p, e] = report.predicted_vs_expected[i];
      out << i << ',' << csv::format_double(p) << ',' << csv::format_double(e) << ','
          << csv::format_double(report.residuals[i]) << '\n';
    }
  });
  write_file("accuracy_curve.csv", [&](std::ofstream& out) {
    out << "bound,accuracy\n";
    for (const auto& [bound, acc] : report.accuracy_curve)
      out << bound << ',' << csv::format_double(acc) << '\n';
  });
}

inline EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": parse error: " + e.what());
  }
  return report_from_json(j);
}

}  // namespace agepred::evaluate
