#include "tsa/scenario.hpp"

#include "tsa/parallel.hpp"
#include "tsa/rng.hpp"

namespace tsa {

PreparedScenario prepare_scenario(const GridCase& base, const ScenarioSpec& spec, const ScenarioConfig& cfg) {
  PreparedScenario p;
  p.grid = apply_load_factors(base, spec.load_factors);
  p.pf = solve_power_flow(p.grid, cfg.power_flow);
  p.model = prepare_dynamics(p.grid, p.pf, spec.fault);
  return p;
}

StabilityVerdict run_tds(const PreparedScenario& prepared, const ScenarioConfig& cfg) {
  const auto traj = simulate(prepared.model, prepared.model.fault.clear_time, cfg.horizon, cfg.dt);
  return assess_trajectory(traj);
}

ScenarioRecord sample_scenario(const GridCase& grid, std::uint64_t seed, const ScenarioConfig& cfg) {
  if (grid.lines.empty()) throw ScenarioError("case has no lines to fault");
  Rng rng(seed);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    ScenarioSpec spec;
    spec.load_factors.resize(grid.loads.size());
    for (auto& f : spec.load_factors) f = rng.uniform(cfg.load_min, cfg.load_max);
    spec.fault.line_index = rng.index(grid.lines.size());
    spec.fault.faulted_end = rng.uniform() < 0.5 ? LineEnd::from : LineEnd::to;
    spec.fault.clear_time = rng.uniform(cfg.clear_min, cfg.clear_max);
    if (!is_connected(grid, spec.fault.line_index)) continue;

    PreparedScenario prepared;
    try {
      prepared = prepare_scenario(grid, spec, cfg);
    } catch (const PowerFlowError&) {
      continue;
    } catch (const DynamicsError&) {
      continue;
    }
    const auto traj = simulate(prepared.model, spec.fault.clear_time, cfg.horizon, cfg.dt);
    ScenarioRecord rec;
    rec.seed = seed;
    rec.fault = spec.fault;
    rec.load_factors = spec.load_factors;
    rec.verdict = assess_trajectory(traj);
    rec.sample = build_graph(grid, traj, rec.verdict, spec.fault.line_index);
    rec.sample.meta.seed = seed;
    rec.sample.meta.fault = spec.fault;
    rec.sample.meta.load_factors = spec.load_factors;
    return rec;
  }
  throw ScenarioError("scenario retry budget exhausted for seed " + std::to_string(seed));
}

ScenarioSpec scenario_of(const GraphSample& sample) { return {sample.meta.load_factors, sample.meta.fault}; }

DatasetSummary summarize(const std::vector<GraphSample>& samples) {
  DatasetSummary s;
  s.total = samples.size();
  for (const auto& g : samples) (g.label ? s.stable : s.unstable)++;
  return s;
}

std::vector<GraphSample> generate_samples(const GridCase& grid, std::size_t n_samples, std::uint64_t seed,
                                          const ScenarioConfig& cfg, std::size_t threads) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be at least 1");
  std::vector<GraphSample> samples(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    samples[i] = sample_scenario(grid, derive_seed(seed, i), cfg).sample;
  });
  return samples;
}

DatasetSummary generate_dataset(const GridCase& grid, std::size_t n_samples, std::uint64_t seed,
                                const std::filesystem::path& out, const ScenarioConfig& cfg, std::size_t threads) {
  const auto samples = generate_samples(grid, n_samples, seed, cfg, threads);
  write_dataset(samples, out);
  return summarize(samples);
}

}  // namespace tsa
