#include "helpers.hpp"
#include "tsa/online.hpp"
#include "tsa/rng.hpp"

#include <doctest.h>

#include <sstream>

using namespace tsa;

namespace {

TsaModel small_model() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.seed = 4;
  return init_model(cfg);
}

std::vector<ScenarioSpec> draws(const GridCase& grid, std::size_t n, std::uint64_t seed) {
  std::vector<ScenarioSpec> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto rec = sample_scenario(grid, derive_seed(seed, i));
    out.push_back({rec.load_factors, rec.fault});
  }
  return out;
}

}  // namespace

TEST_CASE("gate examples") {
  const auto confident = gate({0.02, 0.98}, 0.5);
  CHECK(confident.use_model);
  CHECK(confident.label == 1);
  CHECK(confident.margin == doctest::Approx(0.96));
  const auto unsure = gate({0.45, 0.55}, 0.5);
  CHECK_FALSE(unsure.use_model);
  CHECK(gate({0.5, 0.5}, 0.0).use_model);
  CHECK_THROWS(gate({0.3, 0.7}, -0.1));
}

TEST_CASE("gate follows the margin rule") {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const double s1 = rng.uniform(0, 1), k = rng.uniform(0, 1);
    const auto d = gate({1 - s1, s1}, k);
    CHECK(d.use_model == (std::abs(1 - 2 * s1) >= k));
    CHECK(gate({1 - s1, s1}, 0.0).use_model);
  }
}

TEST_CASE("fallback reproduces the full simulation") {
  const auto grid = case9();
  const auto model = small_model();
  for (const auto& spec : draws(grid, 5, 21)) {
    const auto out = assess_online(model, grid, spec, 1.01);
    CHECK(out.source == Source::tds_fallback);
    CHECK(out.label == run_tds(prepare_scenario(grid, spec)).label);
    CHECK(out.elapsed > 0.0);
  }
}

TEST_CASE("batch assessment with an unreachable threshold") {
  const auto grid = case9();
  const auto specs = draws(grid, 6, 22);
  const auto r = batch_assess(small_model(), grid, specs, 1.01, {}, 2);
  CHECK(r.n == 6);
  CHECK(r.fallback_fraction == 1.0);
  CHECK(r.accuracy == 1.0);
  CHECK(r.mean_baseline_time > 0.0);
  std::ostringstream out;
  write_assessment_csv(r, out);
  CHECK(out.str().rfind("scenario_id,label,source,margin,elapsed\n0,", 0) == 0);
  CHECK(out.str().find("tds_fallback") != std::string::npos);
}

TEST_CASE("zero threshold always trusts the model") {
  const auto grid = case9();
  const auto specs = draws(grid, 4, 23);
  const auto r = batch_assess(small_model(), grid, specs, 0.0);
  CHECK(r.fallback_fraction == 0.0);
  for (const auto& o : r.outcomes) CHECK(o.source == Source::model);
}
