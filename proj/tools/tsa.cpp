// Command-line front end: dataset construction, offline training and online
// assessment.
#include "tsa/dal.hpp"
#include "tsa/dataset.hpp"
#include "tsa/gin.hpp"
#include "tsa/online.hpp"
#include "tsa/parallel.hpp"
#include "tsa/rng.hpp"
#include "tsa/scenario.hpp"
#include "tsa/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace tsa;

struct Globals {
  std::uint64_t seed = 1;
  std::size_t threads = default_threads();
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::vector<const GraphSample*> pointers(const std::vector<GraphSample>& samples) {
  std::vector<const GraphSample*> p;
  p.reserve(samples.size());
  for (const auto& s : samples) p.push_back(&s);
  return p;
}

void print_metrics(const char* title, const Metrics& m) {
  std::printf("%s: acc %.2f  f1 %.2f  tnr %.2f  tpr %.2f  (tp %zu tn %zu fp %zu fn %zu)\n", title, 100 * m.acc,
              100 * m.f1, 100 * m.tnr, 100 * m.tpr, m.tp, m.tn, m.fp, m.fn);
  if (m.tpr_undefined || m.tnr_undefined || m.f1_undefined)
    std::printf("  note: undefined rates reported as 0 (%s%s%s)\n", m.tpr_undefined ? "tpr " : "",
                m.tnr_undefined ? "tnr " : "", m.f1_undefined ? "f1" : "");
}

// ---- simulate ----

struct SimulateArgs {
  std::string case_name = "39bus";
  std::optional<std::size_t> line;
  std::string end = "from";
  double clear = 0.1;
  double load = 1.0;
  double horizon = 10.0;
  double dt = 0.005;
  std::string out;
};

int run_simulate(const SimulateArgs& a, const Globals& g) {
  const auto grid = load_case(resolve_case_path(a.case_name));
  ScenarioConfig cfg;
  cfg.horizon = a.horizon;
  cfg.dt = a.dt;
  ScenarioSpec spec;
  if (a.line) {
    if (*a.line >= grid.lines.size()) throw std::runtime_error("line index out of range");
    spec.load_factors.assign(grid.loads.size(), a.load);
    spec.fault = {*a.line, a.end == "to" ? LineEnd::to : LineEnd::from, a.clear};
  } else {
    spec = scenario_of(sample_scenario(grid, g.seed, cfg).sample);
  }
  const auto prepared = prepare_scenario(grid, spec, cfg);
  SimulationOptions opts;
  opts.early_exit = false;
  const auto traj = simulate(prepared.model, spec.fault.clear_time, cfg.horizon, cfg.dt, opts);
  const auto v = assess_trajectory(traj);
  std::printf("line %zu (%s end), clear %.4f s: max separation %.2f deg, TSI %.3f, %s\n", spec.fault.line_index,
              spec.fault.faulted_end == LineEnd::to ? "to" : "from", spec.fault.clear_time, v.max_sep_deg, v.tsi,
              v.label ? "stable" : "unstable");
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_trajectory_csv(traj, out);
  }
  return 0;
}

// ---- gen-dataset / stats ----

struct GenArgs {
  std::string case_name = "39bus";
  std::size_t samples = 100;
  std::string out;
};

int run_gen(const GenArgs& a, const Globals& g) {
  const auto grid = load_case(resolve_case_path(a.case_name));
  const auto s = generate_dataset(grid, a.samples, g.seed, a.out, {}, g.threads);
  std::printf("%zu samples: %zu stable, %zu unstable (%.1f%% unstable) -> %s\n", s.total, s.stable, s.unstable,
              100.0 * static_cast<double>(s.unstable) / static_cast<double>(s.total), a.out.c_str());
  return 0;
}

struct StatsArgs {
  std::string data;
  std::size_t bins = 20;
  std::string histograms;
};

int run_stats(const StatsArgs& a, const Globals&) {
  const auto samples = read_dataset(std::filesystem::path(a.data));
  const auto s = summarize(samples);
  std::printf("%zu samples: %zu stable, %zu unstable (%.1f%% unstable)\n", s.total, s.stable, s.unstable,
              s.total ? 100.0 * static_cast<double>(s.unstable) / static_cast<double>(s.total) : 0.0);
  const auto hists = feature_histograms(samples, a.bins);
  if (a.histograms.empty()) {
    write_histograms_csv(hists, std::cout);
  } else {
    auto out = open_out(a.histograms);
    write_histograms_csv(hists, out);
  }
  return 0;
}

// ---- train / evaluate ----

struct TrainArgs {
  std::string data;
  std::string pool = "dal";
  std::size_t layers = 4;
  std::size_t hidden = 64;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t folds = 10;
  double val_fraction = 0.1;
  std::string out;
  std::string report;
  std::string cr;
};

TrainConfig train_config(const TrainArgs& a, const Globals& g) {
  TrainConfig cfg;
  cfg.model.layers = a.layers;
  cfg.model.hidden = a.hidden;
  cfg.model.pooling = parse_pooling(a.pool);
  cfg.model.seed = derive_seed(g.seed, 1);
  cfg.epochs = a.epochs;
  cfg.lr = a.lr;
  cfg.batch_size = a.batch;
  cfg.val_fraction = a.val_fraction;
  cfg.seed = g.seed;
  return cfg;
}

int run_train(const TrainArgs& a, const Globals& g) {
  const auto samples = read_dataset(std::filesystem::path(a.data));
  const auto cfg = train_config(a, g);
  if (a.folds >= 2) {
    const auto plan = make_folds(samples, a.folds, g.seed);
    const auto report = cross_validate(samples, plan, cfg, g.threads);
    for (std::size_t f = 0; f < report.folds.size(); ++f)
      print_metrics(("fold " + std::to_string(f)).c_str(), report.folds[f]);
    std::printf("mean: acc %.2f±%.2f  f1 %.2f±%.2f  tnr %.2f±%.2f  tpr %.2f±%.2f\n", 100 * report.mean.acc,
                100 * report.stddev.acc, 100 * report.mean.f1, 100 * report.stddev.f1, 100 * report.mean.tnr,
                100 * report.stddev.tnr, 100 * report.mean.tpr, 100 * report.stddev.tpr);
    if (!a.report.empty()) {
      auto out = open_out(a.report);
      write_cv_report(report, out);
    }
    if (!a.cr.empty()) {
      const auto grid = threshold_grid(100);
      auto out = open_out(a.cr);
      write_cr_curve(compute_cr_curve(report.test_predictions, grid), out);
    }
  } else if (!a.report.empty() || !a.cr.empty()) {
    throw std::runtime_error("--report and --cr need --folds >= 2");
  }
  if (!a.out.empty()) {
    // Final model: every sample, with the usual validation split for epoch selection.
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto [tr_idx, va_idx] = split_validation(samples, all, cfg.val_fraction, derive_seed(g.seed, 999));
    std::vector<const GraphSample*> tr, va;
    for (auto i : tr_idx) tr.push_back(&samples[i]);
    for (auto i : va_idx) va.push_back(&samples[i]);
    const auto res = train_fold(tr, va, cfg);
    print_metrics("final model (validation)", res.val_metrics);
    save_model(res.model, std::filesystem::path(a.out));
    std::printf("model -> %s (best epoch %zu)\n", a.out.c_str(), res.best_epoch);
  }
  return 0;
}

struct EvaluateArgs {
  std::string model;
  std::string data;
  std::string cr;
};

int run_evaluate(const EvaluateArgs& a, const Globals&) {
  const auto model = load_model(std::filesystem::path(a.model));
  const auto samples = read_dataset(std::filesystem::path(a.data));
  const auto preds = predict(model, pointers(samples));
  print_metrics("evaluation", metrics_of(preds));
  if (!a.cr.empty()) {
    const auto grid = threshold_grid(100);
    auto out = open_out(a.cr);
    write_cr_curve(compute_cr_curve(preds, grid), out);
  }
  return 0;
}

// ---- diagnose ----

struct DiagnoseArgs {
  std::string data;
  std::string model;
  std::size_t count = 5;
};

int run_diagnose(const DiagnoseArgs& a, const Globals& g) {
  const auto samples = read_dataset(std::filesystem::path(a.data));
  if (samples.empty()) throw std::runtime_error("dataset is empty");
  std::optional<TsaModel> model;
  if (!a.model.empty()) model = load_model(std::filesystem::path(a.model));
  Rng rng(g.seed);
  for (std::size_t c = 0; c < a.count; ++c) {
    const auto idx = rng.index(samples.size());
    const auto& s = samples[idx];
    // Without a model the readout is applied to the raw bus features.
    const Eigen::MatrixXd h = model ? gin_forward(*model, s) : s.features;
    const auto pooled = dal_pool(h);
    const auto d = spectral_check(pooled);
    std::printf("sample %zu (label %d, n %zu, f %td): rank %zu, residual %.3e, |z| %.3e, orthogonality %.3e, %d sweeps\n",
                idx, s.label, s.n, h.cols(), d.rank, d.residual, pooled.z.norm(), d.orthogonality, d.sweeps);
    std::printf("  eigenvalues:");
    for (Eigen::Index i = 0; i < d.eigenvalues.size(); ++i) std::printf(" %.4e", d.eigenvalues[i]);
    std::printf("\n  alpha:");
    for (Eigen::Index i = 0; i < d.alpha.size(); ++i) std::printf(" %.4e", d.alpha[i]);
    std::printf("\n");
  }
  return 0;
}

// ---- assess ----

struct AssessArgs {
  std::string model;
  std::string case_name = "39bus";
  std::string scenarios;
  double threshold = 0.5;
  std::string report;
};

std::vector<ScenarioSpec> load_scenarios(const std::string& arg, const GridCase& grid, std::size_t threads) {
  std::vector<ScenarioSpec> specs;
  if (std::filesystem::exists(arg)) {
    for (const auto& s : read_dataset(std::filesystem::path(arg))) specs.push_back(scenario_of(s));
    return specs;
  }
  const auto colon = arg.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("--scenarios must be a dataset file or seed:count, got '" + arg + "'");
  std::uint64_t seed = 0;
  std::size_t count = 0;
  try {
    seed = std::stoull(arg.substr(0, colon));
    count = std::stoull(arg.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::runtime_error("cannot parse seed:count '" + arg + "'");
  }
  for (const auto& s : generate_samples(grid, count, seed, {}, threads)) specs.push_back(scenario_of(s));
  return specs;
}

int run_assess(const AssessArgs& a, const Globals& g) {
  const auto model = load_model(std::filesystem::path(a.model));
  const auto grid = load_case(resolve_case_path(a.case_name));
  const auto specs = load_scenarios(a.scenarios, grid, g.threads);
  const auto r = batch_assess(model, grid, specs, a.threshold, {}, g.threads);
  std::printf("%zu scenarios, k = %.3f: accuracy vs simulation %.2f%%, fallback %.1f%%\n", r.n, a.threshold,
              100 * r.accuracy, 100 * r.fallback_fraction);
  std::printf("mean time: model path %.3f ms, fallback path %.3f ms, overall %.3f ms, simulation baseline %.3f ms "
              "(ratio %.3f)\n",
              1e3 * r.mean_model_time, 1e3 * r.mean_tds_path_time, 1e3 * r.mean_overall_time,
              1e3 * r.mean_baseline_time, r.time_ratio());
  if (!a.report.empty()) {
    auto out = open_out(a.report);
    write_assessment_csv(r, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transient stability assessment with graph networks and distribution-aware pooling"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run one fault simulation and print its stability verdict");
  c_sim->add_option("--case", sim.case_name, "Case name (39bus, 9bus) or JSON path")->capture_default_str();
  c_sim->add_option("--line", sim.line, "Faulted line index (omit to draw a scenario from --seed)");
  c_sim->add_option("--end", sim.end, "Faulted line end")->check(CLI::IsMember({"from", "to"}))->capture_default_str();
  c_sim->add_option("--clear", sim.clear, "Clearing time [s]")->capture_default_str();
  c_sim->add_option("--load", sim.load, "Uniform load factor")->capture_default_str();
  c_sim->add_option("--horizon", sim.horizon, "Simulated time [s]")->capture_default_str();
  c_sim->add_option("--dt", sim.dt, "Integration step [s]")->capture_default_str();
  c_sim->add_option("--out", sim.out, "Trajectory CSV");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-dataset", "Generate a labeled graph dataset");
  c_gen->add_option("--case", gen.case_name, "Case name or JSON path")->capture_default_str();
  c_gen->add_option("--samples", gen.samples, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  c_gen->add_option("--out", gen.out, "Output dataset file")->required();

  StatsArgs st;
  auto* c_stats = app.add_subcommand("stats", "Class balance and feature histograms of a dataset");
  c_stats->add_option("--data", st.data, "Dataset file")->required();
  c_stats->add_option("--bins", st.bins, "Histogram bins")->capture_default_str()->check(CLI::PositiveNumber);
  c_stats->add_option("--histograms", st.histograms, "Histogram CSV (default: stdout)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Cross-validate and/or train a model");
  c_train->add_option("--data", tr.data, "Dataset file")->required();
  c_train->add_option("--pool", tr.pool, "Readout")->check(CLI::IsMember({"dal", "mean", "sum"}))->capture_default_str();
  c_train->add_option("--layers", tr.layers, "GIN layers")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--hidden", tr.hidden, "Hidden width")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  c_train->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--folds", tr.folds, "Cross-validation folds (0 or 1 to skip)")->capture_default_str();
  c_train->add_option("--val-fraction", tr.val_fraction, "Validation share of each training fold")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c_train->add_option("--out", tr.out, "Model checkpoint trained on the whole dataset");
  c_train->add_option("--report", tr.report, "Per-fold metric CSV");
  c_train->add_option("--cr", tr.cr, "Credibility-rating curve CSV from held-out predictions");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Metrics of a trained model on a dataset");
  c_eval->add_option("--model", ev.model, "Model checkpoint")->required();
  c_eval->add_option("--data", ev.data, "Dataset file")->required();
  c_eval->add_option("--cr", ev.cr, "Credibility-rating curve CSV");

  DiagnoseArgs dg;
  auto* c_diag = app.add_subcommand("diagnose", "Eigen-spectrum of the pooled covariance for random samples");
  c_diag->add_option("--data", dg.data, "Dataset file")->required();
  c_diag->add_option("--model", dg.model, "Model checkpoint (omit to pool raw features)");
  c_diag->add_option("--count", dg.count, "Samples to inspect")->capture_default_str();

  AssessArgs as;
  auto* c_assess = app.add_subcommand("assess", "Online assessment with credibility gate and simulation fallback");
  c_assess->add_option("--model", as.model, "Model checkpoint")->required();
  c_assess->add_option("--case", as.case_name, "Case name or JSON path")->capture_default_str();
  c_assess->add_option("--scenarios", as.scenarios, "Dataset file or seed:count")->required();
  c_assess->add_option("--threshold", as.threshold, "Margin threshold k")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  c_assess->add_option("--report", as.report, "Per-scenario CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*c_sim) return run_simulate(sim, g);
    if (*c_gen) return run_gen(gen, g);
    if (*c_stats) return run_stats(st, g);
    if (*c_train) return run_train(tr, g);
    if (*c_eval) return run_evaluate(ev, g);
    if (*c_diag) return run_diagnose(dg, g);
    if (*c_assess) return run_assess(as, g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
