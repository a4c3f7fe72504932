#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "agepred/featurize.hpp"
#include "helpers.hpp"

using namespace agepred;
using namespace agepred::featurize;
using testutil::TempDir;
using testutil::make_dataset;

namespace {

PopularUser popular(const std::string& id, std::optional<int> age,
                    std::int64_t followers, std::set<std::string> types) {
  PopularUser p;
  p.user_id = id;
  p.screen_name = id;
  p.kb_entity_uri = "db:" + id;
  p.kb_types = std::move(types);
  p.followers_count = followers;
  if (age) {
    p.age_years = age;
    // Any consistent birth date satisfies the age/birth-date pairing invariant.
    p.birth_date = *parse_date(std::to_string(2017 - *age) + "-01-01");
  }
  return p;
}

UserRecord user_following(std::vector<std::string> friends) {
  UserRecord u;
  u.user_id = "u";
  u.name = "user";
  u.friend_ids = std::move(friends);
  u.friends_count = std::int64_t(u.friend_ids.size());
  u.followers_count = 50;
  return u;
}

}  // namespace

// ---------------------------------------------------------------------------
// index and vocabulary
// ---------------------------------------------------------------------------

TEST_CASE("build_popular_index keeps only linked users, first wins on duplicates") {
  PopularUser linked = popular("a", 30, 100, {"db:Person"});
  PopularUser unlinked;
  unlinked.user_id = "b";
  PopularUser duplicate = popular("a", 40, 999, {"db:Person"});

  const auto index = build_popular_index({linked, unlinked, duplicate});
  REQUIRE(index.size() == 1);
  CHECK(index.count("a") == 1);
  CHECK(index.at("a").followers_count == 100);  // first occurrence kept
}

TEST_CASE("build_vocabulary sorts distinct types") {
  const auto index = build_popular_index(
      {popular("a", 30, 1, {"db:Person", "db:MusicalArtist"}), popular("b", 40, 2, {"db:Person"})});
  const auto vocab = build_vocabulary(index);
  REQUIRE(vocab.size() == 2);
  CHECK(vocab.uris()[0] == "db:MusicalArtist");  // lexicographic order
  CHECK(vocab.uris()[1] == "db:Person");

  CHECK(build_vocabulary({}).size() == 0);
}

// ---------------------------------------------------------------------------
// featurize_user
// ---------------------------------------------------------------------------

TEST_CASE("featurize_user aggregates popular friends") {
  const auto index = build_popular_index(
      {popular("p1", 30, 1000, {"db:Person", "db:MusicalArtist"}),
       popular("p2", 50, 3000, {"db:Person"})});
  const auto vocab = build_vocabulary(index);
  const auto u = user_following({"p1", "p2", "nobody"});

  const auto row = featurize_user(u, index, vocab);
  REQUIRE(row.size() == kFixedFeatureCount + 2);
  CHECK(row[kFriendsCountCol] == 3.0);
  CHECK(row[kFollowersCountCol] == 50.0);
  CHECK(row[kPopularFriendsCountCol] == 2.0);
  CHECK(row[kMeanFriendsFollowersCol] == 2000.0);
  CHECK(row[kMedianFriendsFollowersCol] == 2000.0);
  CHECK(row[kMeanFriendsAgeCol] == 40.0);
  CHECK(row[kMedianFriendsAgeCol] == 40.0);
  CHECK(row[kFixedFeatureCount + *vocab.index_of("db:Person")] == 2.0);
  CHECK(row[kFixedFeatureCount + *vocab.index_of("db:MusicalArtist")] == 1.0);
}

TEST_CASE("featurize_user with no popular friends emits sentinels and zero counts") {
  const auto index = build_popular_index({popular("p1", 30, 1000, {"db:Person"})});
  const auto vocab = build_vocabulary(index);
  const auto row = featurize_user(user_following({"x", "y"}), index, vocab);

  CHECK(row[kPopularFriendsCountCol] == 0.0);
  CHECK(is_missing(row[kMeanFriendsFollowersCol]));
  CHECK(is_missing(row[kMedianFriendsFollowersCol]));
  CHECK(is_missing(row[kMeanFriendsAgeCol]));
  CHECK(is_missing(row[kMedianFriendsAgeCol]));
  CHECK(row[kFixedFeatureCount] == 0.0);
}

TEST_CASE("age aggregates use only friends with a known age") {
  const auto index = build_popular_index(
      {popular("aged", 44, 500, {"db:Person"}), popular("ageless", std::nullopt, 1500, {"db:Organisation"})});
  const auto vocab = build_vocabulary(index);
  const auto row = featurize_user(user_following({"aged", "ageless"}), index, vocab);

  CHECK(row[kPopularFriendsCountCol] == 2.0);
  CHECK(row[kMeanFriendsFollowersCol] == 1000.0);  // both friends count for followers
  CHECK(row[kMeanFriendsAgeCol] == 44.0);          // only the aged friend counts here
  CHECK(row[kMedianFriendsAgeCol] == 44.0);
}

TEST_CASE("one friend with no age leaves age aggregates missing") {
  const auto index = build_popular_index({popular("org", std::nullopt, 800, {"db:Organisation"})});
  const auto vocab = build_vocabulary(index);
  const auto row = featurize_user(user_following({"org"}), index, vocab);

  CHECK(row[kPopularFriendsCountCol] == 1.0);
  CHECK(row[kMeanFriendsFollowersCol] == 800.0);
  CHECK(is_missing(row[kMeanFriendsAgeCol]));
  CHECK(is_missing(row[kMedianFriendsAgeCol]));
}

TEST_CASE("featurize_user is order independent and collapses duplicates") {
  const auto index = build_popular_index(
      {popular("p1", 20, 100, {"db:Person"}), popular("p2", 30, 200, {"db:Person"}),
       popular("p3", 40, 300, {"db:MusicalArtist"})});
  const auto vocab = build_vocabulary(index);

  const auto a = featurize_user(user_following({"p1", "p2", "p3"}), index, vocab);
  const auto b = featurize_user(user_following({"p3", "p1", "p2"}), index, vocab);
  const auto c = featurize_user(user_following({"p1", "p1", "p2", "p3", "p3"}), index, vocab);
  CHECK(a == b);
  // Duplicate friend ids collapse; only friends_count (a raw profile field) differs.
  for (std::size_t j = 1; j < a.size(); ++j) CHECK(a[j] == c[j]);
}

TEST_CASE("even-sized aggregates use the mean of the two middle values") {
  const auto index = build_popular_index(
      {popular("a", 20, 100, {}), popular("b", 30, 200, {}), popular("c", 31, 450, {}),
       popular("d", 60, 500, {})});
  const auto vocab = build_vocabulary(index);
  const auto row = featurize_user(user_following({"a", "b", "c", "d"}), index, vocab);
  CHECK(row[kMedianFriendsFollowersCol] == 325.0);  // (200 + 450) / 2
  CHECK(row[kMedianFriendsAgeCol] == 30.5);         // (30 + 31) / 2
}

// ---------------------------------------------------------------------------
// build_dataset
// ---------------------------------------------------------------------------

TEST_CASE("build_dataset skips unlabeled users and records targets") {
  const auto index = build_popular_index({popular("p1", 30, 1000, {"db:Person"})});
  const auto vocab = build_vocabulary(index);

  auto labeled = user_following({"p1"});
  labeled.extracted_age = 25;
  auto unlabeled = user_following({"p1"});
  unlabeled.user_id = "u2";

  const auto build = build_dataset({labeled, unlabeled}, index, vocab);
  CHECK(build.unlabeled_skipped == 1);
  REQUIRE(build.dataset.n_rows() == 1);
  CHECK(build.dataset.targets[0] == 25.0);
  CHECK(build.dataset.scaling_state == ScalingState::Raw);
  CHECK(build.dataset.column_names == feature_column_names(vocab));
  CHECK(validate_dataset(build.dataset).empty());
}

// ---------------------------------------------------------------------------
// interactional scaling
// ---------------------------------------------------------------------------

namespace {

// Rows: 7 fixed columns then |vocab| type columns.
Dataset type_count_dataset(const TypeVocabulary& vocab,
                           const std::vector<std::vector<double>>& type_counts,
                           const std::vector<double>& popular_counts) {
  const std::size_t cols = kFixedFeatureCount + vocab.size();
  std::vector<double> cells;
  for (std::size_t i = 0; i < type_counts.size(); ++i) {
    std::vector<double> row(cols, 1.0);
    row[kPopularFriendsCountCol] = popular_counts[i];
    for (std::size_t t = 0; t < vocab.size(); ++t)
      row[kFixedFeatureCount + t] = type_counts[i][t];
    cells.insert(cells.end(), row.begin(), row.end());
  }
  Dataset d;
  d.matrix = Matrix(type_counts.size(), cols, std::move(cells));
  d.targets.assign(type_counts.size(), 20.0);
  d.column_names = feature_column_names(vocab);
  d.scaling_state = ScalingState::Raw;
  return d;
}

}  // namespace

TEST_CASE("interactional scaling divides type counts by popular friend count") {
  const auto vocab = TypeVocabulary::from_sorted_types({"db:A", "db:B"});
  const auto scaled = apply_interactional_scaling(
      type_count_dataset(vocab, {{2, 3}}, {5}), vocab);
  CHECK(scaled.matrix(0, kFixedFeatureCount + 0) == 0.4);
  CHECK(scaled.matrix(0, kFixedFeatureCount + 1) == 0.6);
  CHECK(scaled.matrix(0, kPopularFriendsCountCol) == 5.0);  // non-type columns untouched
  CHECK(scaled.matrix(0, kFriendsCountCol) == 1.0);
  CHECK(scaled.scaling_state == ScalingState::InteractionScaled);
}

TEST_CASE("interactional scaling leaves zero rows at zero") {
  const auto vocab = TypeVocabulary::from_sorted_types({"db:A", "db:B"});
  const auto scaled = apply_interactional_scaling(
      type_count_dataset(vocab, {{0, 0}}, {0}), vocab);
  CHECK(scaled.matrix(0, kFixedFeatureCount + 0) == 0.0);
  CHECK(scaled.matrix(0, kFixedFeatureCount + 1) == 0.0);
}

TEST_CASE("full proportion scales to exactly one") {
  const auto vocab = TypeVocabulary::from_sorted_types({"db:A"});
  const auto scaled = apply_interactional_scaling(
      type_count_dataset(vocab, {{5}}, {5}), vocab);
  CHECK(scaled.matrix(0, kFixedFeatureCount) == 1.0);
}

TEST_CASE("interactional scaling preserves per-row type ordering") {
  const auto vocab = TypeVocabulary::from_sorted_types({"db:A", "db:B", "db:C", "db:D"});
  const std::vector<std::vector<double>> counts = {{4, 1, 3, 2}, {0, 7, 7, 1}, {2, 2, 2, 2}};
  const auto raw = type_count_dataset(vocab, counts, {7, 9, 3});
  const auto scaled = apply_interactional_scaling(raw, vocab);

  for (std::size_t i = 0; i < raw.n_rows(); ++i) {
    for (std::size_t a = 0; a < vocab.size(); ++a) {
      for (std::size_t b = 0; b < vocab.size(); ++b) {
        const double ra = raw.matrix(i, kFixedFeatureCount + a);
        const double rb = raw.matrix(i, kFixedFeatureCount + b);
        const double sa = scaled.matrix(i, kFixedFeatureCount + a);
        const double sb = scaled.matrix(i, kFixedFeatureCount + b);
        if (ra < rb) CHECK(sa < sb);
        if (ra == rb) CHECK(sa == sb);
      }
    }
  }
}

TEST_CASE("interactional scaling enforces its preconditions") {
  const auto vocab = TypeVocabulary::from_sorted_types({"db:A"});
  auto d = type_count_dataset(vocab, {{1}}, {2});

  SECTION("negative counts are a corrupt matrix") {
    d.matrix(0, kPopularFriendsCountCol) = -1.0;
    CHECK_THROWS_AS(apply_interactional_scaling(d, vocab), std::runtime_error);
  }
  SECTION("state machine rejects double application") {
    const auto once = apply_interactional_scaling(d, vocab);
    CHECK_THROWS_AS(apply_interactional_scaling(once, vocab), std::invalid_argument);
  }
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

TEST_CASE("normalization centers by mean and scales by range") {
  const auto d = make_dataset(3, 1, {10, 20, 30}, {1, 2, 3});
  const auto norm = min_max_normalize(d);
  CHECK(norm.matrix(0, 0) == Catch::Approx(-0.5).margin(1e-12));
  CHECK(norm.matrix(1, 0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(norm.matrix(2, 0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(norm.scaling_state == ScalingState::Normalized);
  REQUIRE(norm.normalization.has_value());
  CHECK(norm.normalization->columns[0].mean == 20.0);
  CHECK(norm.normalization->columns[0].min == 10.0);
  CHECK(norm.normalization->columns[0].max == 30.0);
}

TEST_CASE("constant columns normalize to zero") {
  const auto d = make_dataset(3, 1, {5, 5, 5}, {1, 2, 3});
  const auto norm = min_max_normalize(d);
  for (std::size_t i = 0; i < 3; ++i) CHECK(norm.matrix(i, 0) == 0.0);
}

TEST_CASE("normalized columns have unit range and zero mean") {
  auto d = testutil::random_dataset(200, 4, 99);
  for (std::size_t i = 0; i < d.n_rows(); ++i) d.targets[i] = double(i);
  const auto norm = min_max_normalize(d);
  for (std::size_t j = 0; j < norm.n_cols(); ++j) {
    double lo = norm.matrix(0, j), hi = norm.matrix(0, j), sum = 0.0;
    for (std::size_t i = 0; i < norm.n_rows(); ++i) {
      lo = std::min(lo, norm.matrix(i, j));
      hi = std::max(hi, norm.matrix(i, j));
      sum += norm.matrix(i, j);
    }
    CHECK(hi - lo == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(sum / double(norm.n_rows()) == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("normalization refuses missing values and double application") {
  auto d = make_dataset(2, 1, {1.0, missing_value()}, {1, 2});
  CHECK_THROWS_AS(min_max_normalize(d), std::invalid_argument);

  const auto norm = min_max_normalize(make_dataset(3, 1, {1, 2, 3}, {1, 2, 3}));
  CHECK_THROWS_AS(min_max_normalize(norm), std::invalid_argument);
}

TEST_CASE("params fitted on train reproduce the test-side transform") {
  const auto train = make_dataset(4, 2, {1, 10, 2, 20, 3, 30, 4, 40}, {1, 2, 3, 4});
  const auto test = make_dataset(2, 2, {1.5, 15, 3.5, 35}, {1, 2});

  const auto params = fit_normalization(train);
  const auto test_a = apply_normalization(test, params);
  // Refit on the identical train split: the test-side transform is identical,
  // proving the transform reads nothing from the test rows.
  const auto params_again = fit_normalization(train);
  const auto test_b = apply_normalization(test, params_again);
  CHECK(test_a.matrix == test_b.matrix);

  // Hand check: column 0 mean 2.5, range 3; column 1 mean 25, range 30.
  CHECK(test_a.matrix(0, 0) == Catch::Approx((1.5 - 2.5) / 3.0).margin(1e-12));
  CHECK(test_a.matrix(0, 1) == Catch::Approx((15.0 - 25.0) / 30.0).margin(1e-12));

  // The params remember what they were fitted on.
  CHECK(params.fitted_rows == 4);
  CHECK(params.fitted_hash == linalg::matrix_fingerprint(train.matrix));
}

TEST_CASE("apply_normalization rejects schema mismatches") {
  const auto train = make_dataset(3, 2, {1, 2, 3, 4, 5, 6}, {1, 2, 3});
  const auto params = fit_normalization(train);
  const auto narrow = make_dataset(2, 1, {1, 2}, {1, 2});
  CHECK_THROWS_AS(apply_normalization(narrow, params), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// imputation
// ---------------------------------------------------------------------------

TEST_CASE("column-mean imputation fills sentinels with per-column means") {
  auto d = make_dataset(3, 1, {1.0, missing_value(), 3.0}, {1, 2, 3});
  const auto filled = impute_missing(d, ImputeStrategy::ColumnMean);
  CHECK(filled.matrix(0, 0) == 1.0);
  CHECK(filled.matrix(1, 0) == 2.0);
  CHECK(filled.matrix(2, 0) == 3.0);
  CHECK_FALSE(filled.has_missing());
}

TEST_CASE("drop strategy removes rows containing any sentinel") {
  auto d = make_dataset(3, 2, {1, 2, missing_value(), 4, 5, 6}, {10, 20, 30});
  const auto dropped = impute_missing(d, ImputeStrategy::Drop);
  REQUIRE(dropped.n_rows() == 2);
  CHECK(dropped.targets == std::vector<double>{10, 30});
  CHECK(dropped.matrix(0, 0) == 1.0);
  CHECK(dropped.matrix(1, 0) == 5.0);
}

TEST_CASE("all-missing column cannot be mean-imputed") {
  auto d = make_dataset(2, 1, {missing_value(), missing_value()}, {1, 2});
  CHECK_THROWS_AS(impute_missing(d, ImputeStrategy::ColumnMean), std::runtime_error);
}

TEST_CASE("impute strategies parse by name") {
  CHECK(impute_strategy_from_name("mean") == ImputeStrategy::ColumnMean);
  CHECK(impute_strategy_from_name("drop") == ImputeStrategy::Drop);
  CHECK_THROWS_AS(impute_strategy_from_name("median"), std::invalid_argument);
}

TEST_CASE("sentinel-free data is unchanged by either strategy") {
  const auto d = make_dataset(2, 2, {1, 2, 3, 4}, {1, 2});
  CHECK(impute_missing(d, ImputeStrategy::ColumnMean).matrix == d.matrix);
  CHECK(impute_missing(d, ImputeStrategy::Drop).n_rows() == 2);
}

// ---------------------------------------------------------------------------
// CSV round-trip
// ---------------------------------------------------------------------------

TEST_CASE("dataset csv round-trip is bit-identical") {
  TempDir dir("featurize_csv");
  const auto vocab = TypeVocabulary::from_sorted_types({"db:A"});

  Dataset d;
  d.matrix = Matrix(3, 8, std::vector<double>(24, 0.0));
  // Values chosen to stress the float formatter, plus a missing sentinel.
  d.matrix(0, 0) = 0.1;
  d.matrix(0, 3) = missing_value();
  d.matrix(1, 1) = 1.0 / 3.0;
  d.matrix(2, 7) = 1e-17;
  d.matrix(2, 2) = 12345678.987654321;
  d.targets = {21.0, 35.5, 99.0};
  d.column_names = feature_column_names(vocab);
  d.scaling_state = ScalingState::Raw;

  write_dataset_csv(dir.file("m.csv"), d, vocab.uris(), *parse_date("2017-01-01"));
  const auto loaded = load_dataset_csv(dir.file("m.csv"));

  REQUIRE(loaded.dataset.n_rows() == 3);
  REQUIRE(loaded.dataset.n_cols() == 8);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      if (is_missing(d.matrix(i, j)))
        CHECK(is_missing(loaded.dataset.matrix(i, j)));
      else
        CHECK(loaded.dataset.matrix(i, j) == d.matrix(i, j));
    }
  CHECK(loaded.dataset.targets == d.targets);
  CHECK(loaded.dataset.column_names == d.column_names);
  CHECK(loaded.dataset.scaling_state == d.scaling_state);
  CHECK(loaded.vocabulary == vocab.uris());
  REQUIRE(loaded.reference_date.has_value());
  CHECK(format_date(*loaded.reference_date) == "2017-01-01");
}

TEST_CASE("normalization params survive the csv sidecar") {
  TempDir dir("featurize_sidecar");
  const auto vocab = TypeVocabulary::from_sorted_types({});
  auto d = make_dataset(3, 2, {1, 10, 2, 20, 3, 30}, {1, 2, 3});
  d.column_names = {"friends_count", "followers_count"};
  const auto norm = min_max_normalize(d);

  write_dataset_csv(dir.file("n.csv"), norm, vocab.uris(), *parse_date("2017-01-01"));
  const auto loaded = load_dataset_csv(dir.file("n.csv"));
  CHECK(loaded.dataset.scaling_state == ScalingState::Normalized);
  REQUIRE(loaded.dataset.normalization.has_value());
  CHECK(loaded.dataset.normalization->columns[0].mean == 2.0);
  CHECK(loaded.dataset.normalization->columns[1].max == 30.0);
  CHECK(loaded.dataset.normalization->fitted_rows == 3);
}

TEST_CASE("loading a csv without its sidecar fails") {
  TempDir dir("featurize_nosidecar");
  const auto vocab = TypeVocabulary::from_sorted_types({});
  auto d = make_dataset(2, 1, {1, 2}, {1, 2});
  d.column_names = {"friends_count"};
  write_dataset_csv(dir.file("m.csv"), d, vocab.uris(), *parse_date("2017-01-01"));
  std::filesystem::remove(sidecar_path(dir.file("m.csv")));
  CHECK_THROWS(load_dataset_csv(dir.file("m.csv")));
}
