#pragma once

// Feature extraction: users + enriched popular index -> fixed-width feature
// matrix, plus interactional scaling, Eq.-style mean/range normalization and
// missing-value imputation. Matrix CSV and schema-sidecar round trip lives
// here too.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agepred/csv.hpp"
#include "agepred/domain.hpp"
#include "agepred/linalg.hpp"
#include "agepred/log.hpp"

namespace agepred::featurize {

using nlohmann::json;

// Keyed by user_id; only users resolvable to a KB entity count as popular.
using PopularIndex = std::map<std::string, PopularUser>;

inline PopularIndex build_popular_index(const std::vector<PopularUser>& users) {
  PopularIndex index;
  for (const auto& u : users) {
    if (!u.kb_entity_uri) continue;  // unlinked candidates are not popular
    const auto violations = u.invariant_violations();
    if (!violations.empty()) {
      log::warn("popular user " + u.user_id + " malformed (" + violations.front() +
                "); excluded from index");
      continue;
    }
    if (!index.emplace(u.user_id, u).second)
      log::warn("duplicate popular user " + u.user_id + "; first record kept");
  }
  return index;
}

inline TypeVocabulary build_vocabulary(const PopularIndex& index) {
  std::set<std::string> types;
  for (const auto& [id, user] : index) types.insert(user.kb_types.begin(), user.kb_types.end());
  return TypeVocabulary::from_sorted_types({types.begin(), types.end()});
}

inline std::vector<std::string> feature_column_names(const TypeVocabulary& vocab) {
  std::vector<std::string> names = {
      "friends_count",
      "followers_count",
      "popular_friends_count",
      "mean_friends_followers_count",
      "median_friends_followers_count",
      "mean_friends_age",
      "median_friends_age",
  };
  for (const auto& uri : vocab.uris()) names.push_back("type:" + uri);
  return names;
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Even-sized sets take the mean of the two middle values.
inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Pure per-user extraction; aggregate columns carry the missing sentinel when
// no popular friend (or none with a known age) is available.
inline FeatureVector featurize_user(const UserRecord& user, const PopularIndex& index,
                                    const TypeVocabulary& vocab) {
  FeatureVector row(kFixedFeatureCount + vocab.size(), 0.0);
  row[kFriendsCountCol] = double(user.friends_count);
  row[kFollowersCountCol] = double(user.followers_count);

  // Set semantics on friend ids: duplicates collapse, order is irrelevant.
  std::set<std::string> seen;
  std::vector<double> follower_counts;
  std::vector<double> ages;
  for (const auto& fid : user.friend_ids) {
    if (!seen.insert(fid).second) continue;
    const auto it = index.find(fid);
    if (it == index.end()) continue;
    const PopularUser& friend_user = it->second;
    follower_counts.push_back(double(friend_user.followers_count));
    if (friend_user.age_years) ages.push_back(double(*friend_user.age_years));
    for (const auto& type : friend_user.kb_types) {
      if (const auto col = vocab.index_of(type))
        row[kFixedFeatureCount + *col] += 1.0;
    }
  }

  row[kPopularFriendsCountCol] = double(follower_counts.size());
  if (follower_counts.empty()) {
    row[kMeanFriendsFollowersCol] = missing_value();
    row[kMedianFriendsFollowersCol] = missing_value();
  } else {
    row[kMeanFriendsFollowersCol] = detail::mean_of(follower_counts);
    row[kMedianFriendsFollowersCol] = detail::median_of(follower_counts);
  }
  if (ages.empty()) {
    row[kMeanFriendsAgeCol] = missing_value();
    row[kMedianFriendsAgeCol] = missing_value();
  } else {
    row[kMeanFriendsAgeCol] = detail::mean_of(ages);
    row[kMedianFriendsAgeCol] = detail::median_of(ages);
  }
  return row;
}

struct DatasetBuild {
  Dataset dataset;
  std::size_t unlabeled_skipped = 0;
};

// Assembles the labeled feature matrix. Users without an extracted age carry
// no target and are skipped (counted).
inline DatasetBuild build_dataset(const std::vector<UserRecord>& users,
                                  const PopularIndex& index, const TypeVocabulary& vocab) {
  DatasetBuild out;
  out.dataset.column_names = feature_column_names(vocab);
  out.dataset.scaling_state = ScalingState::Raw;
  const std::size_t width = out.dataset.column_names.size();
  std::vector<double> cells;
  std::size_t rows = 0;
  for (const auto& user : users) {
    if (!user.extracted_age) {
      ++out.unlabeled_skipped;
      continue;
    }
    const FeatureVector row = featurize_user(user, index, vocab);
    cells.insert(cells.end(), row.begin(), row.end());
    out.dataset.targets.push_back(double(*user.extracted_age));
    ++rows;
  }
  out.dataset.matrix = Matrix(rows, width, std::move(cells));
  return out;
}

// ---------------------------------------------------------------------------
// Interactional scaling
// ---------------------------------------------------------------------------

// Divides each type-count column by the row's popular_friends_count so type
// columns become proportions. Zero-count rows keep their all-zero type block.
inline Dataset apply_interactional_scaling(Dataset dataset, const TypeVocabulary& vocab) {
  if (dataset.scaling_state != ScalingState::Raw)
    throw std::invalid_argument("apply_interactional_scaling: dataset must be in raw state, got " +
                                std::string(scaling_state_name(dataset.scaling_state)));
  if (dataset.n_cols() != kFixedFeatureCount + vocab.size())
    throw std::invalid_argument("apply_interactional_scaling: column count does not match vocabulary");
  for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
    const double count = dataset.matrix(r, kPopularFriendsCountCol);
    if (count < 0.0)
      throw std::runtime_error("apply_interactional_scaling: negative popular_friends_count at row " +
                               std::to_string(r));
    if (count == 0.0) continue;
    for (std::size_t j = kFixedFeatureCount; j < dataset.n_cols(); ++j)
      dataset.matrix(r, j) /= count;
  }
  dataset.scaling_state = ScalingState::InteractionScaled;
  return dataset;
}

// ---------------------------------------------------------------------------
// Normalization (mean-centering with range scaling, per the written formula)
// ---------------------------------------------------------------------------

inline NormalizationParams fit_normalization(const Dataset& dataset) {
  if (dataset.has_missing())
    throw std::invalid_argument("fit_normalization: missing values present; impute first");
  if (dataset.n_rows() == 0)
    throw std::invalid_argument("fit_normalization: empty dataset");
  NormalizationParams params;
  params.columns.resize(dataset.n_cols());
  for (std::size_t j = 0; j < dataset.n_cols(); ++j) {
    double sum = 0.0;
    double lo = dataset.matrix(0, j);
    double hi = lo;
    for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
      const double v = dataset.matrix(r, j);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    params.columns[j] = {sum / double(dataset.n_rows()), lo, hi};
    if (lo == hi)
      log::warn("constant column '" + dataset.column_names[j] + "' normalizes to zero");
  }
  params.fitted_rows = dataset.n_rows();
  params.fitted_hash = linalg::matrix_fingerprint(dataset.matrix);
  return params;
}

// (x − mean) / (max − min) per column, with constant columns mapped to zero.
inline Dataset apply_normalization(Dataset dataset, const NormalizationParams& params) {
  if (is_normalized(dataset.scaling_state))
    throw std::invalid_argument("apply_normalization: dataset already normalized");
  if (params.columns.size() != dataset.n_cols())
    throw std::invalid_argument("apply_normalization: params fitted on a different schema");
  for (std::size_t j = 0; j < dataset.n_cols(); ++j) {
    const auto& col = params.columns[j];
    const double range = col.max - col.min;
    for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
      double& cell = dataset.matrix(r, j);
      cell = range == 0.0 ? 0.0 : (cell - col.mean) / range;
    }
  }
  dataset.scaling_state = with_normalized(dataset.scaling_state);
  dataset.normalization = params;
  return dataset;
}

inline Dataset min_max_normalize(Dataset dataset) {
  NormalizationParams params = fit_normalization(dataset);
  return apply_normalization(std::move(dataset), params);
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

enum class ImputeStrategy { ColumnMean, Drop };

inline ImputeStrategy impute_strategy_from_name(const std::string& name) {
  if (name == "mean") return ImputeStrategy::ColumnMean;
  if (name == "drop") return ImputeStrategy::Drop;
  throw std::invalid_argument("unknown impute strategy '" + name + "' (expected mean|drop)");
}

struct ImputeParams {
  std::vector<double> means;
  std::size_t fitted_rows = 0;
  std::uint64_t fitted_hash = 0;
};

inline ImputeParams fit_impute_means(const Dataset& dataset) {
  ImputeParams params;
  params.means.resize(dataset.n_cols(), 0.0);
  for (std::size_t j = 0; j < dataset.n_cols(); ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
      const double v = dataset.matrix(r, j);
      if (is_missing(v)) continue;
      sum += v;
      ++count;
    }
    if (count == 0)
      throw std::runtime_error("impute_missing: column '" + dataset.column_names[j] +
                               "' has no observed values; mean undefined");
    params.means[j] = sum / double(count);
  }
  params.fitted_rows = dataset.n_rows();
  params.fitted_hash = linalg::matrix_fingerprint(dataset.matrix);
  return params;
}

inline Dataset apply_impute_means(Dataset dataset, const ImputeParams& params) {
  if (params.means.size() != dataset.n_cols())
    throw std::invalid_argument("apply_impute_means: params fitted on a different schema");
  for (std::size_t r = 0; r < dataset.n_rows(); ++r)
    for (std::size_t j = 0; j < dataset.n_cols(); ++j) {
      double& cell = dataset.matrix(r, j);
      if (is_missing(cell)) cell = params.means[j];
    }
  return dataset;
}

inline Dataset drop_missing_rows(const Dataset& dataset) {
  Dataset out;
  out.column_names = dataset.column_names;
  out.scaling_state = dataset.scaling_state;
  out.normalization = dataset.normalization;
  std::vector<double> cells;
  std::size_t rows = 0;
  for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
    const auto row = dataset.matrix.row(r);
    if (std::any_of(row.begin(), row.end(), [](double v) { return is_missing(v); }))
      continue;
    cells.insert(cells.end(), row.begin(), row.end());
    out.targets.push_back(dataset.targets[r]);
    ++rows;
  }
  out.matrix = Matrix(rows, dataset.n_cols(), std::move(cells));
  return out;
}

inline Dataset impute_missing(Dataset dataset, ImputeStrategy strategy) {
  if (strategy == ImputeStrategy::Drop) return drop_missing_rows(dataset);
  const ImputeParams params = fit_impute_means(dataset);
  return apply_impute_means(std::move(dataset), params);
}

// ---------------------------------------------------------------------------
// Matrix CSV + schema sidecar
// ---------------------------------------------------------------------------

inline constexpr int kMatrixFormatVersion = 1;
inline constexpr const char* kTargetColumn = "age";

inline std::string sidecar_path(const std::string& matrix_path) {
  return matrix_path + ".schema.json";
}

inline json normalization_to_json(const NormalizationParams& params) {
  json cols = json::array();
  for (const auto& c : params.columns)
    cols.push_back({{"mean", c.mean}, {"min", c.min}, {"max", c.max}});
  return json{{"columns", std::move(cols)},
              {"fitted_rows", params.fitted_rows},
              {"fitted_hash", params.fitted_hash}};
}

inline NormalizationParams normalization_from_json(const json& j) {
  NormalizationParams params;
  for (const auto& c : j.at("columns"))
    params.columns.push_back({c.at("mean").get<double>(), c.at("min").get<double>(),
                              c.at("max").get<double>()});
  params.fitted_rows = j.at("fitted_rows").get<std::size_t>();
  params.fitted_hash = j.at("fitted_hash").get<std::uint64_t>();
  return params;
}

// The CSV holds features plus a trailing target column; everything a reader
// needs to interpret it (state, params, vocabulary) rides in the sidecar.
inline void write_dataset_csv(const std::string& path, const Dataset& dataset,
                              const std::vector<std::string>& vocabulary = {},
                              const std::optional<Date>& reference_date = std::nullopt) {
  if (dataset.targets.size() != dataset.n_rows())
    throw std::invalid_argument("write_dataset_csv: target/row count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  std::vector<std::string> header = dataset.column_names;
  header.push_back(kTargetColumn);
  out << csv::join_row(header) << '\n';
  std::vector<std::string> fields(header.size());
  for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
    for (std::size_t j = 0; j < dataset.n_cols(); ++j)
      fields[j] = csv::format_double(dataset.matrix(r, j));
    fields.back() = csv::format_double(dataset.targets[r]);
    out << csv::join_row(fields) << '\n';
  }

  json schema;
  schema["format_version"] = kMatrixFormatVersion;
  schema["columns"] = dataset.column_names;
  schema["target_column"] = kTargetColumn;
  schema["scaling_state"] = scaling_state_name(dataset.scaling_state);
  schema["normalization"] =
      dataset.normalization ? normalization_to_json(*dataset.normalization) : json(nullptr);
  schema["vocabulary"] = vocabulary;
  schema["reference_date"] =
      reference_date ? json(format_date(*reference_date)) : json(nullptr);
  std::ofstream side(sidecar_path(path));
  if (!side) throw std::runtime_error("cannot open " + sidecar_path(path) + " for writing");
  side << schema.dump(2) << '\n';
}

struct LoadedDataset {
  Dataset dataset;
  std::vector<std::string> vocabulary;
  std::optional<Date> reference_date;
};

inline LoadedDataset load_dataset_csv(const std::string& path) {
  const auto rows = csv::read_rows(path);
  if (rows.empty()) throw std::runtime_error(path + ": empty matrix file");
  const auto& header = rows.front();
  if (header.empty() || header.back() != kTargetColumn)
    throw std::runtime_error(path + ": last column must be '" + std::string(kTargetColumn) + "'");

  LoadedDataset out;
  out.dataset.column_names.assign(header.begin(), header.end() - 1);
  const std::size_t width = out.dataset.column_names.size();
  std::vector<double> cells;
  cells.reserve((rows.size() - 1) * width);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::runtime_error(path + ": row " + std::to_string(r + 1) + " has " +
                               std::to_string(rows[r].size()) + " fields, expected " +
                               std::to_string(header.size()));
    for (std::size_t j = 0; j < width; ++j) cells.push_back(csv::parse_double(rows[r][j]));
    out.dataset.targets.push_back(csv::parse_double(rows[r].back()));
  }
  out.dataset.matrix = Matrix(rows.size() - 1, width, std::move(cells));

  std::ifstream side(sidecar_path(path));
  if (!side)
    throw std::runtime_error(path + ": missing schema sidecar " + sidecar_path(path));
  json schema;
  try {
    schema = json::parse(side);
  } catch (const std::exception& e) {
    throw std::runtime_error(sidecar_path(path) + ": parse error: " + e.what());
  }
  if (schema.at("format_version").get<int>() != kMatrixFormatVersion)
    throw std::runtime_error(sidecar_path(path) + ": unsupported format_version");
  if (schema.at("columns").get<std::vector<std::string>>() != out.dataset.column_names)
    throw std::runtime_error(sidecar_path(path) + ": column list disagrees with CSV header");
  out.dataset.scaling_state =
      scaling_state_from_name(schema.at("scaling_state").get<std::string>());
  if (!schema.at("normalization").is_null())
    out.dataset.normalization = normalization_from_json(schema.at("normalization"));
  out.vocabulary = schema.value("vocabulary", std::vector<std::string>{});
  if (schema.contains("reference_date") && !schema.at("reference_date").is_null()) {
    out.reference_date = parse_date(schema.at("reference_date").get<std::string>());
    if (!out.reference_date)
      throw std::runtime_error(sidecar_path(path) + ": malformed reference_date");
  }
  return out;
}

}  // namespace agepred::featurize
