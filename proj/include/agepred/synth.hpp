#pragma once

// Synthetic cohort generator. Ages follow a clipped log-normal shaped by the
// target mean/std; the signal is planted feature-side: every user's popular
// friends are chosen so their mean age hits a planted function of the user's
// age exactly (symmetric integer offsets around the target mean), so a
// zero-noise linear plant is recoverable by OLS to machine precision. Output
// files use the very formats the ingest stage consumes, which closes the
// loop for end-to-end tests.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agepred/domain.hpp"
#include "agepred/featurize.hpp"
#include "agepred/ingest.hpp"
#include "agepred/log.hpp"

namespace agepred::synth {

using nlohmann::json;

struct GeneratorParams {
  double target_mean = 23.77;
  double target_std = 12.58;
  double age_min = 10.0;
  double age_max = 99.0;
  std::size_t n_popular = 120;
  std::size_t n_types = 8;
  double noise_std = 2.0;  // feature-side noise; the age distribution is untouched
  enum class Nonlinearity { None, Quadratic };
  Nonlinearity nonlinearity = Nonlinearity::None;

  void validate() const {
    if (!(age_min < age_max)) throw std::invalid_argument("generator: age_min must be < age_max");
    if (n_popular < 1) throw std::invalid_argument("generator: n_popular must be >= 1");
    if (n_types < 1) throw std::invalid_argument("generator: n_types must be >= 1");
    if (noise_std < 0) throw std::invalid_argument("generator: noise_std must be >= 0");
    if (!(target_mean > 0) || !(target_std > 0))
      throw std::invalid_argument("generator: target mean/std must be > 0");
  }
};

// Every run records what was planted so tests can treat the generator as an
// oracle.
struct GeneratorMeta {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  GeneratorParams params;
  Date reference_date;
  // Linear plant: age = intercept + slope * mean_friends_age (exact when
  // noise_std = 0). Quadratic plant: age = y0 + ((m - m0) / scale)^2.
  double linear_intercept = 0.0;
  double linear_slope = 0.0;
  double quad_y0 = 0.0;
  double quad_m0 = 0.0;
  double quad_scale = 0.0;
  double achieved_age_mean = 0.0;
  double achieved_age_std = 0.0;
};

struct Cohort {
  std::vector<UserRecord> users;
  std::vector<UserRecord> popular_profiles;  // what popular.jsonl holds
  ingest::KbFixture fixture;
  featurize::PopularIndex index;  // built through the real enrichment path
  GeneratorMeta meta;
};

namespace detail {

// The planted mean-friend-age always lands on the half-integer grid inside
// [13, 57.5]; friends are drawn from a pool covering every integer age in
// [10, 60] so any grid point is realizable with an exactly-symmetric set.
inline constexpr int kPoolAgeMin = 10;
inline constexpr int kPoolAgeMax = 60;
inline constexpr double kLinearIntercept = -16.0;
inline constexpr double kLinearSlope = 2.0;
inline constexpr double kQuadY0 = 8.0;
inline constexpr double kQuadM0 = 35.0;
inline constexpr double kQuadScale = 2.6;
inline constexpr double kMeanGridLo = 13.0;
inline constexpr double kMeanGridHi = 57.5;

inline double round_to_half_grid(double v) { return std::round(v * 2.0) / 2.0; }

inline std::string zero_pad(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

// Friend-age offsets realizing an exact mean m on integer ages: a symmetric
// base quartet plus an optional extra symmetric pair for size variety.
inline std::vector<double> friend_offsets(double mean, bool extra_pair) {
  const bool half = std::abs(mean - std::floor(mean) - 0.5) < 1e-9;
  std::vector<double> offsets =
      half ? std::vector<double>{-2.5, -0.5, 0.5, 2.5} : std::vector<double>{-3, -1, 1, 3};
  if (extra_pair) {
    if (half) {
      offsets.push_back(-1.5);
      offsets.push_back(1.5);
    } else {
      offsets.push_back(-2);
      offsets.push_back(2);
    }
  }
  std::sort(offsets.begin(), offsets.end());
  return offsets;
}

}  // namespace detail

inline Cohort generate_cohort(std::size_t n, std::uint64_t seed,
                              const GeneratorParams& params = {}) {
  params.validate();
  if (n < 10) throw std::invalid_argument("generate_cohort: n must be >= 10");
  if (params.age_min < double(UserRecord::kMinAge) ||
      params.age_max > double(UserRecord::kMaxAge))
    throw std::invalid_argument(
        "generate_cohort: infeasible params: age range must stay within [10,99] so "
        "self-reported ages survive extraction");
  const std::size_t pool_span = detail::kPoolAgeMax - detail::kPoolAgeMin + 1;  // 51
  if (params.n_popular < pool_span)
    throw std::invalid_argument(
        "generate_cohort: infeasible params: n_popular must be >= " +
        std::to_string(pool_span) + " so every friend age in [10,60] is realizable");

  Cohort cohort;
  cohort.meta.n = n;
  cohort.meta.seed = seed;
  cohort.meta.params = params;
  cohort.meta.reference_date = *parse_date("2017-01-01");
  cohort.meta.linear_intercept = detail::kLinearIntercept;
  cohort.meta.linear_slope = detail::kLinearSlope;
  cohort.meta.quad_y0 = detail::kQuadY0;
  cohort.meta.quad_m0 = detail::kQuadM0;
  cohort.meta.quad_scale = detail::kQuadScale;

  std::mt19937_64 rng(seed);

  // --- popular pool: ages cycle over [10,60], one KB entity each -----------
  const std::size_t pad = std::max<std::size_t>(4, std::to_string(params.n_popular).size());
  std::map<int, std::vector<std::string>> ids_by_age;
  const std::size_t bands = params.n_types > 1 ? params.n_types - 1 : 0;
  const std::size_t band_width = bands > 0 ? (pool_span + bands - 1) / bands : pool_span;
  for (std::size_t k = 0; k < params.n_popular; ++k) {
    const int age = detail::kPoolAgeMin + int(k % pool_span);
    const std::string tag = detail::zero_pad(k, pad);
    const std::string uri = "synth:entity/Syn_Pop_" + tag;

    ingest::KbEntry entry;
    entry.types.insert("synth:type/Person");
    if (bands > 0) {
      const std::size_t band =
          std::min(std::size_t(age - detail::kPoolAgeMin) / band_width, bands - 1);
      entry.types.insert("synth:type/AgeBand_" + std::to_string(band));
    }
    entry.birth_date = Date{std::chrono::year{2016 - age}, std::chrono::month{7},
                            std::chrono::day{1}};  // exact integer age at 2017-01-01
    cohort.fixture.entities.emplace(uri, entry);

    UserRecord profile;
    profile.user_id = "p" + tag;
    profile.screen_name = "syn_pop_" + tag;
    profile.name = "Syn Pop " + tag;  // matches the URI-derived surface form
    profile.description = "synthetic popular profile";
    profile.followers_count = 10000 + std::int64_t(k) * 5417;
    profile.friends_count = 0;
    cohort.popular_profiles.push_back(std::move(profile));
    ids_by_age[age].push_back("p" + tag);
  }

  // --- users ----------------------------------------------------------------
  const double ratio = params.target_std / params.target_mean;
  const double sigma2 = std::log(1.0 + ratio * ratio);
  const double mu = std::log(params.target_mean) - 0.5 * sigma2;
  std::lognormal_distribution<double> age_dist(mu, std::sqrt(sigma2));
  std::normal_distribution<double> noise_dist(0.0, 1.0);
  std::bernoulli_distribution branch_dist(0.5);
  std::bernoulli_distribution extra_pair_dist(0.5);
  std::uniform_int_distribution<std::int64_t> followers_dist(10, 5000);
  std::uniform_int_distribution<std::size_t> filler_dist(0, 3);

  const std::size_t user_pad = std::max<std::size_t>(5, std::to_string(n).size());
  double age_sum = 0.0, age_sq_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = age_dist(rng);
    const int age = int(std::llround(std::clamp(raw, params.age_min, params.age_max)));
    age_sum += age;
    age_sq_sum += double(age) * double(age);

    double mean_target;
    if (params.nonlinearity == GeneratorParams::Nonlinearity::Quadratic) {
      const double arm = detail::kQuadScale * std::sqrt(std::max(double(age) - detail::kQuadY0, 0.0));
      const double side = branch_dist(rng) ? arm : -arm;
      mean_target = detail::kQuadM0 + side;
    } else {
      mean_target = (double(age) - detail::kLinearIntercept) / detail::kLinearSlope;
    }
    if (params.noise_std > 0.0) mean_target += params.noise_std * noise_dist(rng);
    mean_target = detail::round_to_half_grid(
        std::clamp(mean_target, detail::kMeanGridLo, detail::kMeanGridHi));

    UserRecord user;
    const std::string tag = detail::zero_pad(i, user_pad);
    user.user_id = "u" + tag;
    user.screen_name = "syn_user_" + tag;
    user.name = "Syn User " + tag;
    user.description = std::to_string(age) + " years old. synthetic profile.";
    user.extracted_age = age;
    user.followers_count = followers_dist(rng);

    for (const double offset : detail::friend_offsets(mean_target, extra_pair_dist(rng))) {
      const int friend_age = int(std::llround(mean_target + offset));
      const auto& pool = ids_by_age.at(friend_age);
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      user.friend_ids.push_back(pool[pick(rng)]);
    }
    const std::size_t fillers = filler_dist(rng);
    for (std::size_t f = 0; f < fillers; ++f)
      user.friend_ids.push_back("synth:filler/" + tag + "_" + std::to_string(f));
    user.friends_count = std::int64_t(user.friend_ids.size());
    cohort.users.push_back(std::move(user));
  }
  cohort.meta.achieved_age_mean = age_sum / double(n);
  cohort.meta.achieved_age_std =
      std::sqrt(std::max(age_sq_sum / double(n) -
                             cohort.meta.achieved_age_mean * cohort.meta.achieved_age_mean,
                         0.0));

  // Enrich through the real ingest path so the emitted files and the returned
  // index can never drift apart.
  const auto client = ingest::client_from_kb_uris(cohort.fixture);
  const auto enriched = ingest::enrich_popular(cohort.popular_profiles, cohort.fixture,
                                               client, cohort.meta.reference_date);
  cohort.index = featurize::build_popular_index(enriched);
  if (cohort.index.size() != params.n_popular)
    throw std::logic_error("generate_cohort: enrichment lost popular users");
  return cohort;
}

// ---------------------------------------------------------------------------
// Params / meta JSON
// ---------------------------------------------------------------------------

inline GeneratorParams params_from_json(const json& j) {
  GeneratorParams p;
  p.target_mean = j.value("target_mean", p.target_mean);
  p.target_std = j.value("target_std", p.target_std);
  p.age_min = j.value("age_min", p.age_min);
  p.age_max = j.value("age_max", p.age_max);
  p.n_popular = j.value("n_popular", p.n_popular);
  p.n_types = j.value("n_types", p.n_types);
  p.noise_std = j.value("noise_std", p.noise_std);
  const std::string nl = j.value("nonlinearity", std::string("none"));
  if (nl == "none")
    p.nonlinearity = GeneratorParams::Nonlinearity::None;
  else if (nl == "quadratic")
    p.nonlinearity = GeneratorParams::Nonlinearity::Quadratic;
  else
    throw std::invalid_argument("generator params: unknown nonlinearity '" + nl + "'");
  p.validate();
  return p;
}

inline json params_to_json(const GeneratorParams& p) {
  return json{{"target_mean", p.target_mean},
              {"target_std", p.target_std},
              {"age_min", p.age_min},
              {"age_max", p.age_max},
              {"n_popular", p.n_popular},
              {"n_types", p.n_types},
              {"noise_std", p.noise_std},
              {"nonlinearity",
               p.nonlinearity == GeneratorParams::Nonlinearity::Quadratic ? "quadratic"
                                                                          : "none"}};
}

inline json meta_to_json(const GeneratorMeta& meta) {
  json plant;
  if (meta.params.nonlinearity == GeneratorParams::Nonlinearity::Quadratic) {
    plant = json{{"kind", "quadratic"},
                 {"y0", meta.quad_y0},
                 {"m0", meta.quad_m0},
                 {"scale", meta.quad_scale},
                 {"relation", "age = y0 + ((mean_friends_age - m0) / scale)^2"}};
  } else {
    plant = json{{"kind", "linear"},
                 {"intercept", meta.linear_intercept},
                 {"slope", meta.linear_slope},
                 {"relation", "age = intercept + slope * mean_friends_age"}};
  }
  plant["noise_std"] = meta.params.noise_std;
  return json{{"format_version", 1},
              {"n", meta.n},
              {"seed", meta.seed},
              {"params", params_to_json(meta.params)},
              {"reference_date", format_date(meta.reference_date)},
              {"plant", std::move(plant)},
              {"achieved", {{"age_mean", meta.achieved_age_mean},
                            {"age_std", meta.achieved_age_std}}}};
}

// Writes users.jsonl, popular.jsonl, kb_fixture.json and generator_meta.json.
inline void write_cohort(const std::string& out_dir, const Cohort& cohort) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());
  const auto at = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  ingest::write_users_jsonl(at("users.jsonl"), cohort.users);
  ingest::write_users_jsonl(at("popular.jsonl"), cohort.popular_profiles);
  ingest::write_kb_fixture(at("kb_fixture.json"), cohort.fixture);
  std::ofstream meta(at("generator_meta.json"));
  if (!meta) throw std::runtime_error("cannot open generator_meta.json for writing");
  meta << meta_to_json(cohort.meta).dump(2) << '\n';
}

}  // namespace agepred::synth
