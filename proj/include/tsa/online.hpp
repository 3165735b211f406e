#pragma once

#include "tsa/gin.hpp"
#include "tsa/scenario.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

namespace tsa {

enum class Source { model, tds_fallback };

const char* source_name(Source s);

/// Result of the credibility gate alone: the model answers when its softmax
/// margin |S0 - S1| reaches k.
struct GateDecision {
  int label = 0;  // argmax(S0, S1)
  double margin = 0.0;
  bool use_model = false;
};

GateDecision gate(const std::array<double, 2>& probs, double k);

struct AssessmentOutcome {
  int label = 0;
  Source source = Source::model;
  double margin = 0.0;
  double elapsed = 0.0;  // seconds
};

/// Simulates to the clearing instant, classifies the snapshot graph and falls
/// back to the full-horizon simulation when the margin is below k.
AssessmentOutcome assess_online(const TsaModel& model, const GridCase& base, const ScenarioSpec& scenario, double k,
                                const ScenarioConfig& cfg = {});

struct BatchTimingReport {
  std::size_t n = 0;
  double fallback_fraction = 0.0;
  double mean_model_time = 0.0;     // over scenarios answered by the model
  double mean_tds_path_time = 0.0;  // over scenarios that fell back
  double mean_overall_time = 0.0;
  double mean_baseline_time = 0.0;  // full simulation of every scenario
  double accuracy = 0.0;            // against the full-simulation labels
  std::vector<AssessmentOutcome> outcomes;
  std::vector<int> tds_labels;

  double time_ratio() const { return mean_baseline_time > 0 ? mean_overall_time / mean_baseline_time : 0.0; }
};

/// Runs the online assessment and a pure-simulation baseline for every
/// scenario. Scenarios are processed in parallel on `threads` workers.
BatchTimingReport batch_assess(const TsaModel& model, const GridCase& base, std::span<const ScenarioSpec> scenarios,
                               double k, const ScenarioConfig& cfg = {}, std::size_t threads = 1);

/// CSV: scenario_id,label,source,margin,elapsed.
void write_assessment_csv(const BatchTimingReport& report, std::ostream& out);

}  // namespace tsa
