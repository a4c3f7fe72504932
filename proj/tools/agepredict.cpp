// Batch front end for the age-prediction pipeline.
//
//   agepredict synth      --n N --seed S --out-dir DIR [--params FILE]
//   agepredict featurize  --users F --popular F --kb F --out matrix.csv ...
//   agepredict train      --matrix F --model SPEC [--split FRAC --seed S] --out F
//   agepredict grid       --matrix F --grid FILE --out results.csv [--jobs J]
//   agepredict evaluate   --model F --matrix F --out-dir DIR
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
// Every subcommand accepts --config FILE (JSON); explicit flags override
// config values.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agepred/agepred.hpp"

namespace {

using nlohmann::json;
using namespace agepred;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for errors that are the caller's fault (bad flags, bad spec string).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kSpecGrammar =
    "model SPEC grammar:\n"
    "  ols\n"
    "  baseline\n"
    "  lasso:lambda=L                      (L > 0)\n"
    "  elasticnet:lambda=L,l1_ratio=R      (L > 0, R in [0,1])\n"
    "  svr:kernel=linear[,c=C][,eps=E]\n"
    "  svr:kernel=rbf[,c=C][,eps=E][,gamma=G]   (gamma omitted/0: picked from data)\n"
    "defaults: c=1.0, eps=0.1";

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw UsageError(path + ": config parse error: " + e.what());
  }
}

// Config overlay: a flag wins when given on the command line; otherwise the
// config value (keyed by the long flag name, no dashes) applies.
template <typename T>
void overlay(const CLI::App& cmd, const json& cfg, const std::string& key, T& var) {
  if (!cfg.contains(key)) return;
  const CLI::Option* opt = cmd.get_option_no_throw("--" + key);
  if (opt != nullptr && opt->count() > 0) return;
  try {
    var = cfg.at(key).get<T>();
  } catch (const std::exception& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

Date parse_reference_date(const std::string& text) {
  const auto date = parse_date(text);
  if (!date) throw UsageError("bad reference date '" + text + "' (expected YYYY-MM-DD)");
  return *date;
}

bool parse_switch(const std::string& value, const std::string& flag) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw UsageError("--" + flag + " expects on|off, got '" + value + "'");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string params_path;
  std::string config_path;
};

int run_synth(const SynthArgs& args_in, const CLI::App& cmd) {
  SynthArgs args = args_in;
  if (!args.config_path.empty()) {
    const json cfg = load_config_file(args.config_path);
    overlay(cmd, cfg, "n", args.n);
    overlay(cmd, cfg, "seed", args.seed);
    overlay(cmd, cfg, "out-dir", args.out_dir);
    overlay(cmd, cfg, "params", args.params_path);
  }
  if (args.out_dir.empty()) throw UsageError("--out-dir is required");
  if (args.n == 0) throw UsageError("--n is required");

  synth::GeneratorParams params;
  if (!args.params_path.empty()) {
    std::ifstream in(args.params_path);
    if (!in) throw std::runtime_error("cannot open " + args.params_path);
    try {
      params = synth::params_from_json(json::parse(in));
    } catch (const std::invalid_argument& e) {
      throw UsageError(args.params_path + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(args.params_path + ": parse error: " + e.what());
    }
  }
  const synth::Cohort cohort = synth::generate_cohort(args.n, args.seed, params);
  synth::write_cohort(args.out_dir, cohort);
  std::cout << "wrote " << cohort.users.size() << " users, " << cohort.popular_profiles.size()
            << " popular profiles to " << args.out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string users_path;
  std::string popular_path;
  std::string kb_path;
  std::string annotations_path;
  std::string out_path;
  std::string interaction_scaling = "on";
  std::string normalize = "on";
  std::string impute = "mean";
  std::string reference_date = "2017-01-01";
  double confidence = ingest::kDefaultLinkConfidence;
  std::string config_path;
};

int run_featurize(const FeaturizeArgs& args_in, const CLI::App& cmd) {
  FeaturizeArgs args = args_in;
  if (!args.config_path.empty()) {
    const json cfg = load_config_file(args.config_path);
    overlay(cmd, cfg, "users", args.users_path);
    overlay(cmd, cfg, "popular", args.popular_path);
    overlay(cmd, cfg, "kb", args.kb_path);
    overlay(cmd, cfg, "annotations", args.annotations_path);
    overlay(cmd, cfg, "out", args.out_path);
    overlay(cmd, cfg, "interaction-scaling", args.interaction_scaling);
    overlay(cmd, cfg, "normalize", args.normalize);
    overlay(cmd, cfg, "impute", args.impute);
    overlay(cmd, cfg, "reference-date", args.reference_date);
    overlay(cmd, cfg, "confidence", args.confidence);
  }
  for (const auto& [value, flag] :
       {std::pair{&args.users_path, "users"}, {&args.popular_path, "popular"},
        {&args.kb_path, "kb"}, {&args.out_path, "out"}}) {
    if (value->empty()) throw UsageError(std::string("--") + flag + " is required");
  }
  const bool scaling_on = parse_switch(args.interaction_scaling, "interaction-scaling");
  const bool normalize_on = parse_switch(args.normalize, "normalize");
  featurize::ImputeStrategy impute_strategy;
  try {
    impute_strategy = featurize::impute_strategy_from_name(args.impute);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Date reference = parse_reference_date(args.reference_date);

  auto users = ingest::load_users(args.users_path);
  if (users.skipped > 0)
    std::cerr << users.skipped << " user record(s) skipped for invariant violations\n";
  // Records that arrive without a label get one extracted from their
  // description; an explicit extracted_age in the input always wins.
  for (auto& u : users.records)
    if (!u.extracted_age) u.extracted_age = ingest::extract_age(u.description);
  const auto popular_profiles = ingest::load_users(args.popular_path);
  if (popular_profiles.skipped > 0)
    std::cerr << popular_profiles.skipped << " popular record(s) skipped\n";
  const auto fixture = ingest::load_kb_fixture(args.kb_path);
  const ingest::FixtureAnnotationClient client =
      args.annotations_path.empty() ? ingest::client_from_kb_uris(fixture)
                                    : ingest::load_annotation_fixture(args.annotations_path);

  const auto enriched = ingest::enrich_popular(popular_profiles.records, fixture, client,
                                               reference, args.confidence);
  const auto index = featurize::build_popular_index(enriched);
  const auto vocab = featurize::build_vocabulary(index);

  auto built = featurize::build_dataset(users.records, index, vocab);
  if (built.unlabeled_skipped > 0)
    std::cerr << built.unlabeled_skipped << " user(s) without an extracted age skipped\n";
  Dataset dataset = std::move(built.dataset);
  if (dataset.n_rows() == 0) throw std::runtime_error("no labeled users; matrix would be empty");

  if (scaling_on) dataset = featurize::apply_interactional_scaling(std::move(dataset), vocab);
  dataset = featurize::impute_missing(std::move(dataset), impute_strategy);
  if (dataset.n_rows() == 0)
    throw std::runtime_error("all rows dropped by --impute drop; matrix would be empty");
  if (normalize_on) dataset = featurize::min_max_normalize(std::move(dataset));

  featurize::write_dataset_csv(args.out_path, dataset, vocab.uris(), reference);
  std::cout << "wrote " << dataset.n_rows() << " x " << dataset.n_cols() << " matrix ("
            << scaling_state_name(dataset.scaling_state) << ") to " << args.out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string matrix_path;
  std::string model_spec;
  double split_fraction = 0.0;  // 0 = train on the full matrix
  std::uint64_t seed = 0;
  std::string out_path;
  std::string config_path;
};

json metric_block(const std::vector<double>& predicted, const std::vector<double>& actual) {
  return json{{"mae", evaluate::mae(predicted, actual)},
              {"medae", evaluate::medae(predicted, actual)},
              {"r2", evaluate::r2(predicted, actual)}};
}

int run_train(const TrainArgs& args_in, const CLI::App& cmd) {
  TrainArgs args = args_in;
  if (!args.config_path.empty()) {
    const json cfg = load_config_file(args.config_path);
    overlay(cmd, cfg, "matrix", args.matrix_path);
    overlay(cmd, cfg, "model", args.model_spec);
    overlay(cmd, cfg, "split", args.split_fraction);
    overlay(cmd, cfg, "seed", args.seed);
    overlay(cmd, cfg, "out", args.out_path);
  }
  if (args.matrix_path.empty()) throw UsageError("--matrix is required");
  if (args.model_spec.empty()) throw UsageError("--model is required");
  if (args.out_path.empty()) throw UsageError("--out is required");

  ModelSpec spec;
  try {
    spec = parse_model_spec(args.model_spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string(e.what()) + "\n" + kSpecGrammar);
  }

  const auto loaded = featurize::load_dataset_csv(args.matrix_path);

  Dataset train = loaded.dataset;
  std::optional<Dataset> test;
  if (args.split_fraction != 0.0) {
    select::SplitPlan plan;
    plan.strategy = select::SplitPlan::Strategy::Shuffle;
    plan.test_fraction = args.split_fraction;
    plan.seed = args.seed;
    auto parts = select::split(loaded.dataset, plan);
    train = std::move(parts.train);
    test = std::move(parts.test);
  }

  TrainedModel model = models::fit(train, spec);
  model.training_meta.seed = args.seed;
  models::save_model(args.out_path, model);

  json summary;
  summary["model"] = spec.id();
  summary["n_train"] = train.n_rows();
  summary["converged"] = model.training_meta.converged;
  summary["train"] = metric_block(models::predict(model, train), train.targets);
  if (test) {
    summary["n_test"] = test->n_rows();
    summary["test"] = metric_block(models::predict(model, *test), test->targets);
    summary["split"] = {{"test_fraction", args.split_fraction}, {"seed", args.seed}};
  } else {
    summary["n_test"] = 0;
    summary["test"] = nullptr;
    summary["split"] = nullptr;
  }
  const std::string metrics_path = args.out_path + ".metrics.json";
  std::ofstream metrics(metrics_path);
  if (!metrics) throw std::runtime_error("cannot open " + metrics_path + " for writing");
  metrics << summary.dump(2) << '\n';
  std::cout << "wrote " << args.out_path << " (train mae "
            << summary["train"]["mae"].get<double>() << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

struct GridArgs {
  std::string matrix_path;
  std::string grid_path;
  std::string out_path;
  std::size_t jobs = 0;  // 0 = hardware concurrency
  std::string config_path;
};

int run_grid(const GridArgs& args_in, const CLI::App& cmd) {
  GridArgs args = args_in;
  if (!args.config_path.empty()) {
    const json cfg = load_config_file(args.config_path);
    overlay(cmd, cfg, "matrix", args.matrix_path);
    overlay(cmd, cfg, "grid", args.grid_path);
    overlay(cmd, cfg, "out", args.out_path);
    overlay(cmd, cfg, "jobs", args.jobs);
  }
  if (args.matrix_path.empty()) throw UsageError("--matrix is required");
  if (args.grid_path.empty()) throw UsageError("--grid is required");
  if (args.out_path.empty()) throw UsageError("--out is required");
  if (args.jobs == 0) {
    args.jobs = std::max(1u, std::thread::hardware_concurrency());
  }

  select::GridFile grid;
  try {
    grid = select::load_grid_file(args.grid_path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(args.grid_path + ": " + e.what() + "\n" + kSpecGrammar);
  }
  const auto loaded = featurize::load_dataset_csv(args.matrix_path);
  if (is_normalized(loaded.dataset.scaling_state))
    throw std::runtime_error(
        "grid needs an unnormalized matrix (per-fold preprocessing); re-run featurize with "
        "--normalize off");

  const auto table = select::cross_validate(loaded.dataset, grid.specs, grid.plans,
                                            grid.metric, args.jobs);
  if (table.leak_detected)
    throw std::runtime_error("cross-validation leak monitor tripped; results discarded");
  select::write_grid_csv(args.out_path, table);

  std::size_t failed = 0;
  for (const auto& cell : table.cells) {
    if (!cell.ok) {
      ++failed;
      std::cerr << "cell " << cell.spec_id << " / " << cell.plan_id << ": " << cell.error
                << "\n";
    }
  }
  std::cout << "wrote " << table.cells.size() << " grid cells to " << args.out_path;
  if (failed > 0) std::cout << " (" << failed << " failed)";
  std::cout << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string model_path;
  std::string matrix_path;
  std::string out_dir;
  int max_bound = evaluate::kDefaultMaxBound;
  std::string config_path;
};

int run_evaluate(const EvaluateArgs& args_in, const CLI::App& cmd) {
  EvaluateArgs args = args_in;
  if (!args.config_path.empty()) {
    const json cfg = load_config_file(args.config_path);
    overlay(cmd, cfg, "model", args.model_path);
    overlay(cmd, cfg, "matrix", args.matrix_path);
    overlay(cmd, cfg, "out-dir", args.out_dir);
    overlay(cmd, cfg, "max-bound", args.max_bound);
  }
  if (args.model_path.empty()) throw UsageError("--model is required");
  if (args.matrix_path.empty()) throw UsageError("--matrix is required");
  if (args.out_dir.empty()) throw UsageError("--out-dir is required");

  const TrainedModel model = models::load_model(args.model_path);
  const auto loaded = featurize::load_dataset_csv(args.matrix_path);
  const EvalReport report = evaluate::build_report(model, loaded.dataset, args.max_bound);
  evaluate::export_report(report, args.out_dir);
  std::cout << "mae " << report.mae << "  medae " << report.medae << "  r2 " << report.r2
            << "  -> " << args.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact-age prediction from popular-friend network statistics"};
  app.require_subcommand(1);
  app.footer(kSpecGrammar);

  SynthArgs synth_args;
  CLI::App* cmd_synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  cmd_synth->add_option("--n", synth_args.n, "Number of users");
  cmd_synth->add_option("--seed", synth_args.seed, "PRNG seed");
  cmd_synth->add_option("--out-dir", synth_args.out_dir, "Output directory");
  cmd_synth->add_option("--params", synth_args.params_path, "Generator params JSON");
  cmd_synth->add_option("--config", synth_args.config_path, "Config JSON (flags override)");

  FeaturizeArgs feat_args;
  CLI::App* cmd_feat = app.add_subcommand("featurize", "Build the feature matrix");
  cmd_feat->add_option("--users", feat_args.users_path, "Users JSONL");
  cmd_feat->add_option("--popular", feat_args.popular_path, "Popular profiles JSONL");
  cmd_feat->add_option("--kb", feat_args.kb_path, "Knowledge-base fixture JSON");
  cmd_feat->add_option("--annotations", feat_args.annotations_path,
                       "Annotation fixture JSON (default: derive surfaces from KB URIs)");
  cmd_feat->add_option("--confidence", feat_args.confidence, "Linking confidence in (0,1]");
  cmd_feat->add_option("--reference-date", feat_args.reference_date,
                       "Age reference date (YYYY-MM-DD)");
  cmd_feat->add_option("--interaction-scaling", feat_args.interaction_scaling,
                       "on|off: divide type counts by popular_friends_count");
  cmd_feat->add_option("--normalize", feat_args.normalize, "on|off: mean/range normalization");
  cmd_feat->add_option("--impute", feat_args.impute, "mean|drop missing-value handling");
  cmd_feat->add_option("--out", feat_args.out_path, "Output matrix CSV");
  cmd_feat->add_option("--config", feat_args.config_path, "Config JSON (flags override)");

  TrainArgs train_args;
  CLI::App* cmd_train = app.add_subcommand("train", "Fit a model");
  cmd_train->add_option("--matrix", train_args.matrix_path, "Feature matrix CSV");
  cmd_train->add_option("--model", train_args.model_spec, "Model SPEC (see footer)");
  cmd_train->add_option("--split", train_args.split_fraction,
                        "Hold-out test fraction in (0,1); omit to train on all rows");
  cmd_train->add_option("--seed", train_args.seed, "Split seed");
  cmd_train->add_option("--out", train_args.out_path, "Output model JSON");
  cmd_train->add_option("--config", train_args.config_path, "Config JSON (flags override)");

  GridArgs grid_args;
  CLI::App* cmd_grid = app.add_subcommand("grid", "Cross-validate a spec/plan grid");
  cmd_grid->add_option("--matrix", grid_args.matrix_path, "Feature matrix CSV (unnormalized)");
  cmd_grid->add_option("--grid", grid_args.grid_path, "Grid JSON (specs, plans, metric)");
  cmd_grid->add_option("--out", grid_args.out_path, "Output results CSV");
  cmd_grid->add_option("--jobs", grid_args.jobs, "Worker pool size (default: processors)");
  cmd_grid->add_option("--config", grid_args.config_path, "Config JSON (flags override)");

  EvaluateArgs eval_args;
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "Score a model and export reports");
  cmd_eval->add_option("--model", eval_args.model_path, "Model JSON");
  cmd_eval->add_option("--matrix", eval_args.matrix_path, "Feature matrix CSV");
  cmd_eval->add_option("--out-dir", eval_args.out_dir, "Report output directory");
  cmd_eval->add_option("--max-bound", eval_args.max_bound, "Accuracy curve upper bound");
  cmd_eval->add_option("--config", eval_args.config_path, "Config JSON (flags override)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, returns 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_synth->parsed()) return run_synth(synth_args, *cmd_synth);
    if (cmd_feat->parsed()) return run_featurize(feat_args, *cmd_feat);
    if (cmd_train->parsed()) return run_train(train_args, *cmd_train);
    if (cmd_grid->parsed()) return run_grid(grid_args, *cmd_grid);
    if (cmd_eval->parsed()) return run_evaluate(eval_args, *cmd_eval);
    std::cerr << "no subcommand\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
