// tt2rnn command-line tool: generate | learn | evaluate | experiment.
// Exit codes: 0 success, 1 user error, 2 internal error.

#include "tt2rnn/tt2rnn.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tt2rnn;

namespace {

/// Invalid input, missing files, bad configuration.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kManifest = "manifest.json";

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string task = "random";
  std::size_t N = 1000;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  std::size_t L = 2;
  std::size_t test_size = 1000;
  bool per_step = false;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const TaskKind kind = parse_task_kind(a.task);
  TaskOptions o;
  o.N = a.N;
  o.sigma2 = a.sigma2;
  o.seed = a.seed;
  o.L = a.L;
  o.test_size = a.test_size;
  if (o.N < 1) throw UserError("--N must be >= 1");
  if (o.L < 1) throw UserError("--L must be >= 1");
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw UserError("cannot create output directory '" + a.out + "': " + ec.message());

  const auto task = make_task(kind, o);
  const fs::path dir(a.out);
  json files;
  files["d_L"] = "d_L.jsonl";
  files["d_2L"] = "d_2L.jsonl";
  files["d_2L1"] = "d_2L1.jsonl";
  files["test"] = "test.jsonl";
  save_dataset(task.d_l, (dir / "d_L.jsonl").string());
  save_dataset(task.d_2l, (dir / "d_2L.jsonl").string());
  save_dataset(task.d_2l1, (dir / "d_2L1.jsonl").string());
  save_dataset(task.test, (dir / "test.jsonl").string());
  if (a.per_step) {
    // Drawn from a generator seeded independently of the main draws.
    std::mt19937_64 rng(a.seed ^ 0x9e3779b97f4a7c15ULL);
    const bool arith = kind == TaskKind::Arithmetic;
    const auto seqs = gen_per_step_dataset(task.target, a.N, 2 * a.L + 1, a.sigma2, rng,
                                           arith ? with_bias : nullptr,
                                           arith ? std::optional<std::size_t>(2) : std::nullopt);
    save_dataset(seqs, (dir / "sequences.jsonl").string());
    files["sequences"] = "sequences.jsonl";
  }
  save_model(task.target, (dir / "target.json").string());

  json manifest;
  manifest["generator"] = to_string(kind);
  manifest["seed"] = a.seed;
  manifest["N"] = a.N;
  manifest["sigma2"] = a.sigma2;
  manifest["L"] = a.L;
  manifest["test_size"] = a.test_size;
  manifest["per_step"] = a.per_step;
  manifest["files"] = files;
  manifest["target"] = "target.json";
  write_json_file(manifest, (dir / kManifest).string());
  std::cout << "wrote " << (dir / kManifest).string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- learn

struct LearnArgs {
  std::string data_dir;
  std::string d_l, d_2l, d_2l1, sequences, test;
  std::string method = "ls";
  std::size_t rank = 1;
  std::optional<double> step;
  std::size_t max_iters = 5000;
  double tol = 1e-7;
  std::size_t minibatch = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> L;
  bool general = false;
  bool refine = false;
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double lr = 1e-3;
  bool strict = false;
  bool no_fallback = false;
  std::string out = "model.json";
  std::string report;
};

json recovery_report_json(const RecoveryReport& r) {
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"step", r.step},
          {"objective", r.objective}};
}

int cmd_learn(LearnArgs a) {
  MethodSpec spec = parse_method_spec(a.method);
  if (spec.refine) a.refine = true;
  if (!a.data_dir.empty()) {
    const fs::path dir(a.data_dir);
    const json manifest = read_json_file((dir / kManifest).string());
    const json& files = manifest.at("files");
    auto pick = [&](std::string& dst, const char* key) {
      if (dst.empty() && files.contains(key)) dst = (dir / files[key].get<std::string>()).string();
    };
    pick(a.d_l, "d_L");
    pick(a.d_2l, "d_2L");
    pick(a.d_2l1, "d_2L1");
    pick(a.test, "test");
    pick(a.sequences, "sequences");
    if (!a.L) a.L = manifest.at("L").get<std::size_t>();
  }

  RecoveryConfig cfg;
  cfg.method = spec.method;
  cfg.rank = a.rank;
  cfg.step = a.step;
  cfg.max_iters = a.max_iters;
  cfg.rel_tol = a.tol;
  cfg.minibatch = a.minibatch;
  cfg.seed = a.seed;
  cfg.validate();
  SpectralOptions opts;
  opts.strict = a.strict;
  opts.zero_fallback = !a.no_fallback;

  SpectralResult res;
  std::vector<SequenceExample> pooled;
  if (a.general) {
    if (a.sequences.empty()) throw UserError("--general needs --sequences (or a data dir with them)");
    if (!a.L) throw UserError("--general needs --L");
    const auto seqs = load_dataset(a.sequences);
    const auto parts = per_step_datasets(seqs, *a.L);
    res = spectral_learn_general(parts, *a.L, cfg, opts);
    for (const auto& [l, ds] : parts)
      pooled.insert(pooled.end(), ds.examples().begin(), ds.examples().end());
  } else {
    if (a.d_l.empty() || a.d_2l.empty() || a.d_2l1.empty()) {
      throw UserError("learn needs --data-dir or all of --d-l, --d-2l, --d-2l1");
    }
    const auto dl = load_dataset(a.d_l);
    const auto d2l = load_dataset(a.d_2l);
    const auto d2l1 = load_dataset(a.d_2l1);
    res = spectral_learn(dl, d2l, d2l1, cfg, opts);
    for (const auto* ds : {&dl, &d2l, &d2l1})
      pooled.insert(pooled.end(), ds->examples().begin(), ds->examples().end());
  }

  json report;
  report["method"] = spec.name();
  report["rank"] = a.rank;
  json rec = json::object();
  for (const auto& [l, r] : res.diagnostics.recovery) rec[std::to_string(l)] = recovery_report_json(r);
  report["recovery"] = rec;
  report["converged"] = std::all_of(res.diagnostics.recovery.begin(),
                                    res.diagnostics.recovery.end(),
                                    [](const auto& kv) { return kv.second.converged; });
  report["numerical_rank"] = res.diagnostics.numerical_rank;
  report["singular_values"] = res.diagnostics.singular_values;
  report["warnings"] = res.diagnostics.warnings;
  report["fallback"] = res.diagnostics.fallback;
  report["train_mse"] = res.diagnostics.train_mse;
  report["zero_mse"] = res.diagnostics.zero_mse;

  Linear2RNN model = res.model;
  if (a.refine) {
    RefineConfig rc;
    rc.epochs = a.epochs;
    rc.minibatch = a.batch;
    rc.adam.lr = a.lr;
    rc.seed = a.seed;
    const auto rr = sgd_refine(model, pooled, rc);
    model = rr.model;
    report["refine"] = {{"initial_loss", rr.initial_loss},
                        {"best_loss", rr.best_loss},
                        {"best_epoch", rr.best_epoch},
                        {"epochs_run", rr.epochs_run},
                        {"retries", rr.retries}};
    report["train_mse"] = mse(model, SequenceDataset(pooled));
  }
  if (!a.test.empty()) report["test_mse"] = mse(model, load_dataset(a.test));

  for (const auto& w : res.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
  save_model(model, a.out);
  const std::string report_path =
      a.report.empty() ? fs::path(a.out).replace_extension(".report.json").string() : a.report;
  write_json_file(report, report_path);
  std::cout << report.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& out) {
  const auto model = load_model(model_path);
  const auto data = load_dataset(data_path);
  if (data.empty()) throw UserError("dataset '" + data_path + "' is empty");
  if (auto d = data.input_dim(); d && *d != model.d()) {
    throw UserError("model input dimension does not match the dataset");
  }
  if (data.output_dim() != model.p()) {
    throw UserError("model output dimension does not match the dataset");
  }
  const auto m = evaluate_model(model, data);
  const json j = {{"mse", m.mse}, {"rmse", m.rmse}, {"mae", m.mae},
                  {"mape", m.mape}, {"count", m.count}};
  if (!out.empty()) write_json_file(j, out);
  std::cout << j.dump(2) << "\n";
  return 0;
}

// -------------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string config;
  std::string task;
  std::vector<std::string> methods;
  std::vector<std::size_t> Ns;
  std::vector<double> sigma2s;
  std::vector<std::size_t> ranks;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> n_seeds;
  std::optional<std::size_t> L;
  std::optional<std::size_t> max_iters;
  std::optional<std::size_t> minibatch;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> test_size;
  bool full_grid = false;
  std::string out = "results.csv";
  std::string summary;
};

void apply_config_file(SweepConfig& sc, const json& j) {
  if (j.contains("task")) sc.task = parse_task_kind(j["task"].get<std::string>());
  if (j.contains("methods")) {
    sc.methods.clear();
    for (const auto& m : j["methods"]) sc.methods.push_back(parse_method_spec(m.get<std::string>()));
  }
  if (j.contains("N")) sc.Ns = j["N"].get<std::vector<std::size_t>>();
  if (j.contains("sigma2")) sc.sigma2s = j["sigma2"].get<std::vector<double>>();
  if (j.contains("ranks")) sc.ranks = j["ranks"].get<std::vector<std::size_t>>();
  if (j.contains("seeds")) sc.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("L")) sc.L = j["L"].get<std::size_t>();
  if (j.contains("test_size")) sc.test_size = j["test_size"].get<std::size_t>();
  if (j.contains("max_iters")) sc.recovery.max_iters = j["max_iters"].get<std::size_t>();
  if (j.contains("minibatch")) sc.recovery.minibatch = j["minibatch"].get<std::size_t>();
  if (j.contains("epochs")) sc.refine.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("threads")) sc.threads = j["threads"].get<std::size_t>();
}

int cmd_experiment(const ExperimentArgs& a) {
  SweepConfig sc;
  if (a.full_grid) {
    sc.Ns = {20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000};
    sc.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  }
  if (!a.config.empty()) {
    try {
      apply_config_file(sc, read_json_file(a.config));
    } catch (const json::exception& e) {
      throw UserError("config '" + a.config + "': " + e.what());
    }
  }
  if (!a.task.empty()) sc.task = parse_task_kind(a.task);
  if (!a.methods.empty()) {
    sc.methods.clear();
    for (const auto& m : a.methods) sc.methods.push_back(parse_method_spec(m));
  }
  if (!a.Ns.empty()) sc.Ns = a.Ns;
  if (!a.sigma2s.empty()) sc.sigma2s = a.sigma2s;
  if (!a.ranks.empty()) sc.ranks = a.ranks;
  if (!a.seeds.empty()) sc.seeds = a.seeds;
  if (a.n_seeds) {
    sc.seeds.clear();
    for (std::size_t s = 0; s < *a.n_seeds; ++s) sc.seeds.push_back(s);
  }
  if (a.L) sc.L = *a.L;
  if (a.max_iters) sc.recovery.max_iters = *a.max_iters;
  if (a.minibatch) sc.recovery.minibatch = *a.minibatch;
  if (a.epochs) sc.refine.epochs = *a.epochs;
  if (a.threads) sc.threads = *a.threads;
  if (a.test_size) sc.test_size = *a.test_size;
  for (auto N : sc.Ns)
    if (N < 1) throw UserError("N values must be >= 1");
  for (auto R : sc.ranks)
    if (R < 1) throw UserError("ranks must be >= 1");

  std::ofstream out(a.out);
  if (!out) throw UserError("cannot write '" + a.out + "'");
  out << sweep_csv_header() << "\n" << std::flush;
  const auto rows = run_sweep(sc, [&](const SweepRow& r) {
    out << sweep_csv_line(r) << "\n" << std::flush;
    std::cerr << r.method << " N=" << r.N << " sigma2=" << r.sigma2 << " R=" << r.R
              << " seed=" << r.seed << " test_mse=" << r.test_mse << " [" << r.status << "]\n";
  });
  const std::string summary_path =
      a.summary.empty() ? fs::path(a.out).replace_extension(".summary.csv").string() : a.summary;
  std::ofstream sum(summary_path);
  if (!sum) throw UserError("cannot write '" + summary_path + "'");
  write_summary_csv(summarize(rows), sum);
  std::cout << "wrote " << a.out << " and " << summary_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral learning of linear second-order RNNs"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic task as JSON-lines datasets");
  g->add_option("--task", gen.task, "random | arithmetic")->capture_default_str();
  g->add_option("--N", gen.N, "Examples per training dataset")->capture_default_str();
  g->add_option("--sigma2", gen.sigma2, "Output noise variance")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--L", gen.L, "Prefix length L")->capture_default_str();
  g->add_option("--test-size", gen.test_size, "Test sequences")->capture_default_str();
  g->add_flag("--per-step", gen.per_step, "Also write length 2L+1 sequences with per-step targets");
  g->add_option("--out", gen.out, "Output directory")->required();

  LearnArgs learn;
  auto* l = app.add_subcommand("learn", "Learn a model by spectral learning");
  l->add_option("--data-dir", learn.data_dir, "Directory written by 'generate'");
  l->add_option("--d-l", learn.d_l, "Dataset of length-L sequences");
  l->add_option("--d-2l", learn.d_2l, "Dataset of length-2L sequences");
  l->add_option("--d-2l1", learn.d_2l1, "Dataset of length-(2L+1) sequences");
  l->add_option("--sequences", learn.sequences, "Per-step sequences for --general");
  l->add_option("--test", learn.test, "Test dataset reported in the run report");
  l->add_option("--method", learn.method, "ls | nn | iht | tiht | tiht-tt, optional +sgd")
      ->capture_default_str();
  l->add_option("--rank,-R", learn.rank, "Rank R (hidden size)")->capture_default_str();
  l->add_option("--step", learn.step, "Gradient step (default 1/lambda_max)");
  l->add_option("--max-iters", learn.max_iters)->capture_default_str();
  l->add_option("--tol", learn.tol, "Relative change tolerance")->capture_default_str();
  l->add_option("--minibatch", learn.minibatch, "tiht-tt minibatch (0 = full batch)")
      ->capture_default_str();
  l->add_option("--seed", learn.seed)->capture_default_str();
  l->add_option("--L", learn.L, "Prefix length (general algorithm)");
  l->add_flag("--general", learn.general, "Use the basis of all words of length <= L");
  l->add_flag("--refine", learn.refine, "Refine with Adam after spectral learning");
  l->add_option("--epochs", learn.epochs)->capture_default_str();
  l->add_option("--batch", learn.batch, "Refinement minibatch")->capture_default_str();
  l->add_option("--lr", learn.lr, "Refinement learning rate")->capture_default_str();
  l->add_flag("--strict", learn.strict, "Fail on ill-conditioned factorizations");
  l->add_flag("--no-fallback", learn.no_fallback, "Disable the zero-function fallback");
  l->add_option("--out", learn.out, "Model JSON path")->capture_default_str();
  l->add_option("--report", learn.report, "Run report path (default <out>.report.json)");

  std::string eval_model, eval_data, eval_out;
  auto* e = app.add_subcommand("evaluate", "Compute MSE, RMSE, MAE and MAPE");
  e->add_option("--model", eval_model)->required();
  e->add_option("--data", eval_data)->required();
  e->add_option("--out", eval_out, "Metrics JSON path");

  ExperimentArgs ex;
  auto* x = app.add_subcommand("experiment", "Sweep methods, sample sizes, noise and ranks");
  x->add_option("--config", ex.config, "JSON sweep configuration");
  x->add_option("--task", ex.task, "random | arithmetic");
  x->add_option("--methods", ex.methods, "Methods, e.g. ls nn tiht tiht+sgd");
  x->add_option("--N", ex.Ns, "Training set sizes");
  x->add_option("--sigma2", ex.sigma2s, "Noise variances");
  x->add_option("--ranks", ex.ranks, "Ranks R");
  x->add_option("--seeds", ex.seeds, "Seeds");
  x->add_option("--n-seeds", ex.n_seeds, "Use seeds 0..n-1");
  x->add_option("--L", ex.L);
  x->add_option("--max-iters", ex.max_iters);
  x->add_option("--minibatch", ex.minibatch);
  x->add_option("--epochs", ex.epochs, "Refinement epochs");
  x->add_option("--threads", ex.threads, "Worker threads (default TT2RNN_THREADS or all cores)");
  x->add_option("--test-size", ex.test_size);
  x->add_flag("--full-grid", ex.full_grid, "Ten N values from 20 to 20000, ten seeds");
  x->add_option("--out", ex.out, "Results CSV")->capture_default_str();
  x->add_option("--summary", ex.summary, "Summary CSV (default <out>.summary.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*l) return cmd_learn(learn);
    if (*e) return cmd_evaluate(eval_model, eval_data, eval_out);
    if (*x) return cmd_experiment(ex);
  } catch (const UserError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
