#pragma once

#include "tsa/dataset.hpp"
#include "tsa/grid.hpp"
#include "tsa/power_flow.hpp"
#include "tsa/tds.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace tsa {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset-construction protocol parameters.
struct ScenarioConfig {
  double load_min = 0.8;
  double load_max = 1.2;
  double clear_min = kMinClearTime;
  double clear_max = kMaxClearTime;
  double horizon = 10.0;
  double dt = 0.005;
  int max_retries = 200;
  PowerFlowOptions power_flow;
};

/// An operating point plus a fault: everything needed to replay a case.
struct ScenarioSpec {
  std::vector<double> load_factors;
  FaultSpec fault;
};

struct PreparedScenario {
  GridCase grid;  // after load scaling and redispatch
  PowerFlowSolution pf;
  DynamicsModel model;
};

/// Applies the load factors, solves the power flow and builds the dynamics.
PreparedScenario prepare_scenario(const GridCase& base, const ScenarioSpec& spec, const ScenarioConfig& cfg = {});

/// Full-horizon simulation of a scenario and its verdict.
StabilityVerdict run_tds(const PreparedScenario& prepared, const ScenarioConfig& cfg = {});

struct ScenarioRecord {
  std::uint64_t seed = 0;
  FaultSpec fault;
  std::vector<double> load_factors;
  StabilityVerdict verdict;
  GraphSample sample;
};

/// Draws load factors, a fault line/end and a clearing time, simulates and
/// labels. Non-convergent power flows and islanding faults are redrawn.
ScenarioRecord sample_scenario(const GridCase& grid, std::uint64_t seed, const ScenarioConfig& cfg = {});

/// Replays the scenario stored in a sample's provenance.
ScenarioSpec scenario_of(const GraphSample& sample);

struct DatasetSummary {
  std::size_t total = 0;
  std::size_t stable = 0;
  std::size_t unstable = 0;
};

DatasetSummary summarize(const std::vector<GraphSample>& samples);

/// Record i uses seed derive_seed(seed, i); records are written in index order.
std::vector<GraphSample> generate_samples(const GridCase& grid, std::size_t n_samples, std::uint64_t seed,
                                          const ScenarioConfig& cfg = {}, std::size_t threads = 1);
DatasetSummary generate_dataset(const GridCase& grid, std::size_t n_samples, std::uint64_t seed,
                                const std::filesystem::path& out, const ScenarioConfig& cfg = {},
                                std::size_t threads = 1);

}  // namespace tsa
