// Shared builders for the test suite.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "agepred/domain.hpp"
#include "agepred/linalg.hpp"

namespace testutil {

using agepred::Dataset;
using agepred::Matrix;
using agepred::ScalingState;

// Build a dataset from row-major cells with auto-generated column names.
inline Dataset make_dataset(std::size_t rows, std::size_t cols, std::vector<double> cells,
                            std::vector<double> targets,
                            ScalingState state = ScalingState::Raw) {
  Dataset d;
  d.matrix = Matrix(rows, cols, std::move(cells));
  d.targets = std::move(targets);
  d.scaling_state = state;
  for (std::size_t j = 0; j < cols; ++j) d.column_names.push_back("x" + std::to_string(j));
  return d;
}

// Well-conditioned random design: entries uniform in [-1, 1].
inline Dataset random_dataset(std::size_t rows, std::size_t cols, std::uint64_t seed,
                              ScalingState state = ScalingState::Raw) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> cells(rows * cols);
  for (auto& v : cells) v = unif(rng);
  std::vector<double> targets(rows, 0.0);
  return make_dataset(rows, cols, std::move(cells), std::move(targets), state);
}

// Linear targets y = X theta + intercept + noise_std * N(0,1).
inline void set_linear_targets(Dataset& d, const std::vector<double>& theta, double intercept,
                               double noise_std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    double y = intercept;
    for (std::size_t j = 0; j < d.n_cols(); ++j) y += theta[j] * d.matrix(i, j);
    if (noise_std > 0.0) y += noise_std * noise(rng);
    d.targets[i] = y;
  }
}

// Unique scratch directory under the system temp dir; removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("agepred_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
