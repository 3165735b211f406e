#include "tsa/online.hpp"

#include "tsa/parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace tsa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

const char* source_name(Source s) { return s == Source::model ? "model" : "tds_fallback"; }

GateDecision gate(const std::array<double, 2>& probs, double k) {
  if (!(k >= 0.0)) throw std::invalid_argument("threshold k must be non-negative");
  GateDecision d;
  d.label = probs[1] > probs[0] ? 1 : 0;
  d.margin = std::abs(probs[0] - probs[1]);
  d.use_model = d.margin >= k;
  return d;
}

AssessmentOutcome assess_online(const TsaModel& model, const GridCase& base, const ScenarioSpec& scenario, double k,
                                const ScenarioConfig& cfg) {
  if (!(k >= 0.0)) throw std::invalid_argument("threshold k must be non-negative");
  const auto start = Clock::now();
  const auto prepared = prepare_scenario(base, scenario, cfg);
  const auto injections = snapshot_at_clearing(prepared.model, scenario.fault.clear_time, cfg.dt);
  const auto graph = build_graph(prepared.grid, injections, 0, scenario.fault.line_index);
  const auto decision = gate(classify(model, graph), k);

  AssessmentOutcome out;
  out.margin = decision.margin;
  if (decision.use_model) {
    out.label = decision.label;
    out.source = Source::model;
  } else {
    out.label = run_tds(prepared, cfg).label;
    out.source = Source::tds_fallback;
  }
  out.elapsed = seconds_since(start);
  return out;
}

BatchTimingReport batch_assess(const TsaModel& model, const GridCase& base, std::span<const ScenarioSpec> scenarios,
                               double k, const ScenarioConfig& cfg, std::size_t threads) {
  if (scenarios.empty()) throw std::invalid_argument("batch_assess needs at least one scenario");
  BatchTimingReport r;
  r.n = scenarios.size();
  r.outcomes.resize(r.n);
  r.tds_labels.resize(r.n);
  std::vector<double> baseline(r.n);
  parallel_for(r.n, threads, [&](std::size_t i) {
    const auto start = Clock::now();
    const auto prepared = prepare_scenario(base, scenarios[i], cfg);
    r.tds_labels[i] = run_tds(prepared, cfg).label;
    baseline[i] = seconds_since(start);
    r.outcomes[i] = assess_online(model, base, scenarios[i], k, cfg);
  });

  std::size_t fallbacks = 0, correct = 0;
  double model_time = 0, tds_time = 0, total_time = 0, base_time = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const auto& o = r.outcomes[i];
    if (o.source == Source::tds_fallback) {
      ++fallbacks;
      tds_time += o.elapsed;
    } else {
      model_time += o.elapsed;
    }
    total_time += o.elapsed;
    base_time += baseline[i];
    correct += o.label == r.tds_labels[i];
  }
  const double n = static_cast<double>(r.n);
  r.fallback_fraction = static_cast<double>(fallbacks) / n;
  r.mean_model_time = fallbacks < r.n ? model_time / static_cast<double>(r.n - fallbacks) : 0.0;
  r.mean_tds_path_time = fallbacks > 0 ? tds_time / static_cast<double>(fallbacks) : 0.0;
  r.mean_overall_time = total_time / n;
  r.mean_baseline_time = base_time / n;
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

void write_assessment_csv(const BatchTimingReport& report, std::ostream& out) {
  out << "scenario_id,label,source,margin,elapsed\n";
  char buf[160];
  for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
    const auto& o = report.outcomes[i];
    std::snprintf(buf, sizeof buf, "%zu,%d,%s,%.6f,%.6e\n", i, o.label, source_name(o.source), o.margin, o.elapsed);
    out << buf;
  }
}

}  // namespace tsa
