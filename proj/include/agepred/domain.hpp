#pragma once

// Core value types shared by every pipeline stage. All of them are plain
// data, immutable by convention after construction, and safe to share
// across threads.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "agepred/linalg.hpp"

namespace agepred {

using Date = std::chrono::year_month_day;

// Missing value sentinel at the Dataset level. Models refuse matrices that
// still contain it; impute_missing resolves it.
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

inline std::optional<Date> parse_date(const std::string& text) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) return std::nullopt;
  const Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", int(d.year()),
                unsigned(d.month()), unsigned(d.day()));
  return buf;
}

// ---------------------------------------------------------------------------
// Observations and knowledge-base side data
// ---------------------------------------------------------------------------

struct UserRecord {
  std::string user_id;
  std::string screen_name;
  std::string name;
  std::string description;
  std::int64_t followers_count = 0;
  std::int64_t friends_count = 0;
  std::vector<std::string> friend_ids;
  std::optional<int> extracted_age;  // regression target when present

  // Self-reported ages outside this window are treated as noise.
  static constexpr int kMinAge = 10;
  static constexpr int kMaxAge = 99;

  std::vector<std::string> invariant_violations() const {
    std::vector<std::string> v;
    if (followers_count < 0) v.push_back("followers_count negative");
    if (friends_count < 0) v.push_back("friends_count negative");
    if (extracted_age && (*extracted_age < kMinAge || *extracted_age > kMaxAge))
      v.push_back("extracted_age outside [10,99]");
    return v;
  }
};

struct PopularUser {
  std::string user_id;
  std::string screen_name;
  std::optional<std::string> kb_entity_uri;
  std::set<std::string> kb_types;
  std::optional<Date> birth_date;
  std::optional<int> age_years;  // derived from birth_date at a reference date
  std::int64_t followers_count = 0;

  std::vector<std::string> invariant_violations() const {
    std::vector<std::string> v;
    if (age_years.has_value() != birth_date.has_value())
      v.push_back("age_years present iff birth_date present");
    if (!kb_types.empty() && !kb_entity_uri)
      v.push_back("kb_types nonempty but kb_entity_uri absent");
    if (followers_count < 0) v.push_back("followers_count negative");
    return v;
  }
};

// Ordered mapping from knowledge-base type URI to feature-column index.
// Fixes the sparse half of the feature schema.
class TypeVocabulary {
 public:
  TypeVocabulary() = default;

  // Types must arrive sorted and unique; indices are assigned contiguously.
  static TypeVocabulary from_sorted_types(std::vector<std::string> types) {
    TypeVocabulary v;
    v.uris_ = std::move(types);
    for (std::size_t i = 0; i < v.uris_.size(); ++i) {
      if (i > 0 && !(v.uris_[i - 1] < v.uris_[i]))
        throw std::invalid_argument("TypeVocabulary: types not sorted/unique");
      v.index_.emplace(v.uris_[i], i);
    }
    return v;
  }

  std::size_t size() const { return uris_.size(); }
  const std::vector<std::string>& uris() const { return uris_; }

  std::optional<std::size_t> index_of(const std::string& uri) const {
    auto it = index_.find(uri);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> uris_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Fixed feature layout: seven count/aggregate columns, then one column per
// vocabulary type. featurize_user fills it in exactly this order.
using FeatureVector = std::vector<double>;

inline constexpr std::size_t kFixedFeatureCount = 7;
inline constexpr std::size_t kFriendsCountCol = 0;
inline constexpr std::size_t kFollowersCountCol = 1;
inline constexpr std::size_t kPopularFriendsCountCol = 2;
inline constexpr std::size_t kMeanFriendsFollowersCol = 3;
inline constexpr std::size_t kMedianFriendsFollowersCol = 4;
inline constexpr std::size_t kMeanFriendsAgeCol = 5;
inline constexpr std::size_t kMedianFriendsAgeCol = 6;

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class ScalingState {
  Raw,
  InteractionScaled,
  Normalized,
  InteractionScaledAndNormalized,
};

inline bool is_normalized(ScalingState s) {
  return s == ScalingState::Normalized || s == ScalingState::InteractionScaledAndNormalized;
}

inline ScalingState with_normalized(ScalingState s) {
  switch (s) {
    case ScalingState::Raw: return ScalingState::Normalized;
    case ScalingState::InteractionScaled: return ScalingState::InteractionScaledAndNormalized;
    default: return s;
  }
}

inline ScalingState strip_normalized(ScalingState s) {
  switch (s) {
    case ScalingState::Normalized: return ScalingState::Raw;
    case ScalingState::InteractionScaledAndNormalized: return ScalingState::InteractionScaled;
    default: return s;
  }
}

inline std::string scaling_state_name(ScalingState s) {
  switch (s) {
    case ScalingState::Raw: return "raw";
    case ScalingState::InteractionScaled: return "interaction_scaled";
    case ScalingState::Normalized: return "normalized";
    case ScalingState::InteractionScaledAndNormalized:
      return "interaction_scaled_normalized";
  }
  throw std::logic_error("unknown scaling state");
}

inline ScalingState scaling_state_from_name(const std::string& name) {
  if (name == "raw") return ScalingState::Raw;
  if (name == "interaction_scaled") return ScalingState::InteractionScaled;
  if (name == "normalized") return ScalingState::Normalized;
  if (name == "interaction_scaled_normalized")
    return ScalingState::InteractionScaledAndNormalized;
  throw std::invalid_argument("unknown scaling state: " + name);
}

// Per-column centering/range statistics, plus a fingerprint of the exact
// matrix they were fitted on (used by the cross-validation leak monitor).
struct NormalizationParams {
  struct Column {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
  };
  std::vector<Column> columns;
  std::uint64_t fitted_rows = 0;
  std::uint64_t fitted_hash = 0;
};

struct Dataset {
  Matrix matrix;
  std::vector<double> targets;  // ages in years
  std::vector<std::string> column_names;
  ScalingState scaling_state = ScalingState::Raw;
  std::optional<NormalizationParams> normalization;

  std::size_t n_rows() const { return matrix.rows; }
  std::size_t n_cols() const { return matrix.cols; }

  bool has_missing() const {
    for (double v : matrix.data)
      if (is_missing(v)) return true;
    return false;
  }
};

// Returns the list of invariant violations; empty means valid.
inline std::vector<std::string> validate_dataset(const Dataset& d) {
  std::vector<std::string> v;
  if (d.matrix.data.size() != d.matrix.rows * d.matrix.cols)
    v.push_back("matrix storage size does not match rows*cols");
  if (d.matrix.rows != d.targets.size()) v.push_back("row/target mismatch");
  if (d.matrix.cols != d.column_names.size())
    v.push_back("column count does not match column_names");
  if (is_normalized(d.scaling_state)) {
    if (!d.normalization)
      v.push_back("scaling_state normalized but normalization_params absent");
    else if (d.normalization->columns.size() != d.matrix.cols)
      v.push_back("normalization_params column count mismatch");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Model specifications and trained models
// ---------------------------------------------------------------------------

enum class ModelKind { Ols, Lasso, ElasticNet, SvrLinear, SvrRbf, BaselineMean };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Ols: return "ols";
    case ModelKind::Lasso: return "lasso";
    case ModelKind::ElasticNet: return "elasticnet";
    case ModelKind::SvrLinear: return "svr_linear";
    case ModelKind::SvrRbf: return "svr_rbf";
    case ModelKind::BaselineMean: return "baseline_mean";
  }
  throw std::logic_error("unknown model kind");
}

inline ModelKind model_kind_from_name(const std::string& name) {
  if (name == "ols") return ModelKind::Ols;
  if (name == "lasso") return ModelKind::Lasso;
  if (name == "elasticnet") return ModelKind::ElasticNet;
  if (name == "svr_linear") return ModelKind::SvrLinear;
  if (name == "svr_rbf") return ModelKind::SvrRbf;
  if (name == "baseline_mean") return ModelKind::BaselineMean;
  throw std::invalid_argument("unknown model kind: " + name);
}

struct ModelSpec {
  ModelKind kind = ModelKind::BaselineMean;
  double lambda = 1.0;    // lasso / elastic net penalty
  double l1_ratio = 0.5;  // elastic net mix
  double c = 1.0;         // svr box constraint
  double epsilon = 0.1;   // svr insensitivity width
  double gamma = 0.0;     // rbf width; 0 means "pick at fit time"

  void validate() const {
    switch (kind) {
      case ModelKind::Lasso:
        if (!(lambda > 0)) throw std::invalid_argument("lasso: lambda must be > 0");
        break;
      case ModelKind::ElasticNet:
        if (!(lambda > 0)) throw std::invalid_argument("elasticnet: lambda must be > 0");
        if (l1_ratio < 0 || l1_ratio > 1)
          throw std::invalid_argument("elasticnet: l1_ratio must be in [0,1]");
        break;
      case ModelKind::SvrLinear:
      case ModelKind::SvrRbf:
        if (!(c > 0)) throw std::invalid_argument("svr: c must be > 0");
        if (epsilon < 0) throw std::invalid_argument("svr: epsilon must be >= 0");
        if (kind == ModelKind::SvrRbf && gamma < 0)
          throw std::invalid_argument("svr: gamma must be > 0 (or 0 for automatic)");
        break;
      default:
        break;
    }
  }

  std::string id() const {
    char buf[160];
    switch (kind) {
      case ModelKind::Ols: return "ols";
      case ModelKind::BaselineMean: return "baseline";
      case ModelKind::Lasso:
        std::snprintf(buf, sizeof(buf), "lasso:lambda=%g", lambda);
        return buf;
      case ModelKind::ElasticNet:
        std::snprintf(buf, sizeof(buf), "elasticnet:lambda=%g,l1_ratio=%g", lambda,
                      l1_ratio);
        return buf;
      case ModelKind::SvrLinear:
        std::snprintf(buf, sizeof(buf), "svr:kernel=linear,c=%g,eps=%g", c, epsilon);
        return buf;
      case ModelKind::SvrRbf:
        if (gamma > 0) {
          std::snprintf(buf, sizeof(buf), "svr:kernel=rbf,c=%g,eps=%g,gamma=%g", c,
                        epsilon, gamma);
        } else {
          std::snprintf(buf, sizeof(buf), "svr:kernel=rbf,c=%g,eps=%g", c, epsilon);
        }
        return buf;
    }
    throw std::logic_error("unknown model kind");
  }
};

// Parses the model SPEC mini-grammar used on the command line and in grid
// files:
//   ols | baseline
//   lasso:lambda=L
//   elasticnet:lambda=L,l1_ratio=R
//   svr:kernel=linear|rbf[,c=C][,eps=E][,gamma=G]
inline ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec spec;
  const auto bad = [&](const std::string& why) {
    return std::invalid_argument("bad model spec '" + text + "': " + why);
  };

  const std::size_t colon = text.find(':');
  const std::string head = text.substr(0, colon);
  std::map<std::string, std::string> kv;
  if (colon != std::string::npos) {
    std::string rest = text.substr(colon + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      std::size_t end = rest.find(',', start);
      if (end == std::string::npos) end = rest.size();
      const std::string item = rest.substr(start, end - start);
      const std::size_t eq = item.find('=');
      if (item.empty() || eq == std::string::npos || eq == 0)
        throw bad("expected key=value, got '" + item + "'");
      if (!kv.emplace(item.substr(0, eq), item.substr(eq + 1)).second)
        throw bad("duplicate key '" + item.substr(0, eq) + "'");
      start = end + 1;
    }
  }

  const auto take_number = [&](const char* key, double& out) {
    const auto it = kv.find(key);
    if (it == kv.end()) return false;
    std::size_t used = 0;
    try {
      out = std::stod(it->second, &used);
    } catch (const std::exception&) {
      throw bad(std::string("bad number for ") + key);
    }
    if (used != it->second.size()) throw bad(std::string("bad number for ") + key);
    kv.erase(it);
    return true;
  };

  if (head == "ols") {
    spec.kind = ModelKind::Ols;
  } else if (head == "baseline") {
    spec.kind = ModelKind::BaselineMean;
  } else if (head == "lasso") {
    spec.kind = ModelKind::Lasso;
    if (!take_number("lambda", spec.lambda)) throw bad("lasso requires lambda");
  } else if (head == "elasticnet") {
    spec.kind = ModelKind::ElasticNet;
    if (!take_number("lambda", spec.lambda)) throw bad("elasticnet requires lambda");
    if (!take_number("l1_ratio", spec.l1_ratio)) throw bad("elasticnet requires l1_ratio");
  } else if (head == "svr") {
    const auto kernel = kv.find("kernel");
    if (kernel == kv.end()) throw bad("svr requires kernel=linear|rbf");
    if (kernel->second == "linear") {
      spec.kind = ModelKind::SvrLinear;
    } else if (kernel->second == "rbf") {
      spec.kind = ModelKind::SvrRbf;
    } else {
      throw bad("unknown kernel '" + kernel->second + "'");
    }
    kv.erase(kernel);
    take_number("c", spec.c);
    take_number("eps", spec.epsilon);
    take_number("gamma", spec.gamma);
  } else {
    throw bad("unknown model '" + head + "'");
  }
  if (!kv.empty()) throw bad("unknown key '" + kv.begin()->first + "'");
  spec.validate();
  return spec;
}

struct TrainingMeta {
  std::uint64_t n_train = 0;
  std::uint64_t seed = 0;
  bool converged = true;
  std::uint64_t iterations = 0;
};

struct TrainedModel {
  ModelSpec spec;
  // Linear family.
  std::vector<double> coefficients;
  // SVR: dual coefficient differences plus the rows they attach to.
  std::vector<double> dual_coefficients;
  Matrix support_vectors;
  double kernel_gamma = 0.0;
  // Baseline.
  double mean_value = 0.0;

  double intercept = 0.0;
  TrainingMeta training_meta;

  // Schema captured at training time so predictions can refuse mismatched
  // matrices and re-apply normalization to raw inputs.
  std::vector<std::string> columns;
  ScalingState train_scaling_state = ScalingState::Raw;
  std::optional<NormalizationParams> normalization;
};

// ---------------------------------------------------------------------------
// Evaluation artifacts
// ---------------------------------------------------------------------------

struct EvalReport {
  double mae = 0.0;
  double medae = 0.0;
  double r2 = 0.0;
  std::vector<std::pair<int, double>> accuracy_curve;  // (bound, accuracy)
  std::vector<double> residuals;                       // predicted - actual
  std::vector<std::pair<double, double>> predicted_vs_expected;
};

}  // namespace agepred
