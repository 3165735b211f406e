#include "helpers.hpp"
#include "tsa/scenario.hpp"
#include "tsa/tds.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace tsa;

namespace {

constexpr double kPi = std::numbers::pi;

// Hand-derived SMIB quantities for the fixture: V∞ = 1∠0, terminal |V| = 1,
// P = 0.8 through two parallel x = 0.4 lines, x'd = 0.2, H = 5.
struct SmibOracle {
  double pm = 0.8;
  double h = 5.0;
  double omega_s = 2 * kPi * 60;
  double e = 0.0;
  double delta0 = 0.0;
  double pmax_pre = 0.0;
  double pmax_post = 0.0;

  SmibOracle() {
    const double theta = std::asin(pm * 0.2);
    const Complex v2 = std::polar(1.0, theta), v1 = 1.0;
    const Complex ev = v2 + Complex(0, 0.2) * (v2 - v1) / Complex(0, 0.2);
    e = std::abs(ev);
    delta0 = std::arg(ev);
    pmax_pre = e / 0.4;
    pmax_post = e / 0.6;
  }

  // Equal-area critical clearing time for a bolted terminal fault (Pe = 0).
  double critical_clearing_time() const {
    const double dmax = kPi - std::asin(pm / pmax_post);
    const double cos_dc = (pm * (dmax - delta0) + pmax_post * std::cos(dmax)) / pmax_post;
    const double dc = std::acos(cos_dc);
    return std::sqrt(4 * h * (dc - delta0) / (omega_s * pm));
  }
};

PreparedScenario smib_scenario(double clear, LineEnd end = LineEnd::from) {
  return prepare_scenario(smib(), {{}, {0, end, clear}});
}

}  // namespace

TEST_CASE("SMIB reduction matches the hand model") {
  const SmibOracle o;
  const auto p = smib_scenario(0.1);
  const auto& m = p.model;
  REQUIRE(m.gen_count() == 1);
  CHECK(m.y_red_prefault.y_gg.rows() == 1);
  CHECK(m.y_red_fault.y_gg.rows() == 1);
  CHECK(m.y_red_postfault.y_gg.rows() == 1);
  CHECK(m.p_mech[0] == doctest::Approx(0.8).epsilon(1e-10));
  CHECK(m.e_mag[0] == doctest::Approx(o.e).epsilon(1e-10));
  CHECK(m.delta0[0] == doctest::Approx(o.delta0).epsilon(1e-10));
  CHECK(m.m[0] == doctest::Approx(2 * o.h / o.omega_s));
}

TEST_CASE("electrical power equals mechanical power at equilibrium") {
  for (const auto& g : {smib(), case9(), case39()}) {
    std::vector<double> ones(g.loads.size(), 1.0);
    std::size_t line = 0;
    while (!is_connected(g, line)) ++line;
    const auto p = prepare_scenario(g, {ones, {line, LineEnd::to, 0.1}});
    const auto pe = electrical_power(p.model, Topology::prefault, p.model.delta0);
    CHECK((pe - p.model.p_mech).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("tripping a radial line is an islanding error") {
  const auto g = case39();
  // Bus 30's generator hangs off a single line.
  std::size_t radial = g.lines.size();
  for (std::size_t i = 0; i < g.lines.size(); ++i)
    if (!is_connected(g, i)) radial = i;
  REQUIRE(radial < g.lines.size());
  std::vector<double> ones(g.loads.size(), 1.0);
  CHECK_THROWS_AS(prepare_scenario(g, {ones, {radial, LineEnd::from, 0.1}}), DynamicsError);
}

TEST_CASE("equilibrium holds without a fault") {
  SimulationOptions opts;
  opts.apply_fault = false;
  for (const auto& g : {smib(), case39()}) {
    std::vector<double> ones(g.loads.size(), 1.0);
    std::size_t line = 0;
    while (!is_connected(g, line)) ++line;
    const auto p = prepare_scenario(g, {ones, {line, LineEnd::to, 0.1}});
    const auto traj = simulate(p.model, 0.1, 10.0, 0.005, opts);
    double drift = 0.0;
    for (Eigen::Index r = 0; r < traj.delta.rows(); ++r)
      drift = std::max(drift, (traj.delta.row(r).transpose() - p.model.delta0).cwiseAbs().maxCoeff());
    CHECK(drift < 1e-6);
    CHECK(assess_trajectory(traj).label == 1);
  }
}

TEST_CASE("SMIB small-signal frequency matches linearisation") {
  const SmibOracle o;
  const auto p = smib_scenario(0.1);
  SimulationOptions opts;
  opts.apply_fault = false;
  opts.initial_offset = Eigen::VectorXd::Constant(1, 0.01);
  const auto traj = simulate(p.model, 0.1, 10.0, 0.005, opts);

  // Upward zero crossings of δ − δ0, linearly interpolated.
  std::vector<double> crossings;
  for (Eigen::Index r = 1; r < traj.delta.rows(); ++r) {
    const double a = traj.delta(r - 1, 0) - o.delta0, b = traj.delta(r, 0) - o.delta0;
    if (a < 0 && b >= 0) {
      const auto ta = traj.times[static_cast<std::size_t>(r - 1)], tb = traj.times[static_cast<std::size_t>(r)];
      crossings.push_back(ta + (tb - ta) * (-a) / (b - a));
    }
  }
  REQUIRE(crossings.size() >= 3);
  const double period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  const double analytic = std::sqrt(o.pmax_pre * std::cos(o.delta0) * o.omega_s / (2 * o.h)) / (2 * kPi);
  CHECK(std::abs(1.0 / period - analytic) / analytic < 0.02);
}

TEST_CASE("zero-damping energy is conserved after clearing") {
  const SmibOracle o;
  const double clear = 0.1;
  const auto p = smib_scenario(clear);
  SimulationOptions opts;
  opts.early_exit = false;
  const auto traj = simulate(p.model, clear, 10.0, 0.005, opts);
  const double m = 2 * o.h / o.omega_s;
  auto energy = [&](Eigen::Index r) {
    const double d = traj.delta(r, 0) - traj.source_angle[0], w = traj.omega(r, 0);
    return 0.5 * m * w * w - o.pm * d - o.pmax_post * std::cos(d);
  };
  Eigen::Index first = 0;
  while (traj.times[static_cast<std::size_t>(first)] < clear - 1e-12) ++first;
  const double w0 = energy(first);
  double drift = 0.0, kinetic = 0.0;
  for (Eigen::Index r = first; r < traj.delta.rows(); ++r) {
    drift = std::max(drift, std::abs(energy(r) - w0));
    kinetic = std::max(kinetic, 0.5 * m * traj.omega(r, 0) * traj.omega(r, 0));
  }
  REQUIRE(kinetic > 0.0);
  // Relative to the energy exchanged in the swing.
  CHECK(drift / kinetic < 1e-3);
}

TEST_CASE("SMIB verdicts agree with the equal-area criterion") {
  const SmibOracle o;
  const double tcc = o.critical_clearing_time();
  REQUIRE(tcc > kMinClearTime);
  REQUIRE(tcc < 0.5);
  for (double f : {0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.05, 1.1, 1.3, 1.6}) {
    const double clear = f * tcc;
    const auto p = smib_scenario(clear);
    const auto v = run_tds(p);
    CAPTURE(clear);
    CHECK(v.label == (clear < tcc ? 1 : 0));
  }
}

TEST_CASE("clearing past the critical time gives monotonic angle growth") {
  const SmibOracle o;
  const auto p = smib_scenario(1.3 * o.critical_clearing_time());
  SimulationOptions opts;
  opts.early_exit = false;
  const auto traj = simulate(p.model, p.model.fault.clear_time, 2.0, 0.005, opts);
  for (Eigen::Index r = 1; r < traj.delta.rows(); ++r) CHECK(traj.delta(r, 0) >= traj.delta(r - 1, 0));
  CHECK(assess_trajectory(traj).label == 0);
}

TEST_CASE("halving the step barely moves a stable 39-bus run") {
  const auto g = case39();
  std::vector<double> ones(g.loads.size(), 1.0);
  // A short fault on a meshed line.
  std::size_t line = 0;
  while (!is_connected(g, line)) ++line;
  const auto p = prepare_scenario(g, {ones, {line, LineEnd::from, 0.05}});
  SimulationOptions opts;
  opts.early_exit = false;
  const auto a = simulate(p.model, 0.05, 3.0, 0.005, opts);
  const auto b = simulate(p.model, 0.05, 3.0, 0.0025, opts);
  REQUIRE(assess_trajectory(a).label == 1);
  const Eigen::VectorXd da = a.delta.row(a.delta.rows() - 1), db = b.delta.row(b.delta.rows() - 1);
  CHECK((da - db).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("a common angle shift changes nothing relative") {
  const auto g = case9();
  std::vector<double> ones(g.loads.size(), 1.0);
  const auto p = prepare_scenario(g, {ones, {3, LineEnd::from, 0.1}});
  const double shift = 0.7;
  const auto pe0 = electrical_power(p.model, Topology::postfault, p.model.delta0);
  const auto pe1 = electrical_power(p.model, Topology::postfault,
                                    (p.model.delta0.array() + shift).matrix());
  CHECK((pe0 - pe1).cwiseAbs().maxCoeff() < 1e-10);

  // case9 keeps its slack generator, so there is no fixed source.
  REQUIRE(p.model.source_bus.empty());
  SimulationOptions opts;
  opts.initial_offset = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p.model.gen_count()), shift);
  const auto base = simulate(p.model, 0.1, 5.0, 0.005);
  const auto moved = simulate(p.model, 0.1, 5.0, 0.005, opts);
  REQUIRE(base.delta.rows() == moved.delta.rows());
  const Eigen::MatrixXd diff = moved.delta.array() - shift - base.delta.array();
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-8);
  CHECK(assess_trajectory(base).label == assess_trajectory(moved).label);
  CHECK(std::abs(assess_trajectory(base).max_sep_deg - assess_trajectory(moved).max_sep_deg) < 1e-6);
}

TEST_CASE("TSI and label") {
  CHECK(verdict_from_separation(0.0).tsi == doctest::Approx(100.0));
  CHECK(verdict_from_separation(0.0).label == 1);
  CHECK(verdict_from_separation(120.0).tsi == doctest::Approx(50.0));
  CHECK(verdict_from_separation(120.0).label == 1);
  CHECK(verdict_from_separation(360.0).tsi == 0.0);
  CHECK(verdict_from_separation(360.0).label == 0);
  CHECK(verdict_from_separation(1e9).max_sep_deg == kSeparationCapDeg);
  CHECK(verdict_from_separation(std::nan("")).label == 0);
  for (double s : {0.0, 1.0, 359.999, 360.0, 720.0, 1e4}) {
    const auto v = verdict_from_separation(s);
    CHECK(v.tsi > -100.0);
    CHECK(v.tsi <= 100.0);
    CHECK(v.label == (s < 360.0 ? 1 : 0));
  }
}

TEST_CASE("identical angles give zero separation") {
  Trajectory t;
  t.times = {0.0, 0.005, 0.01};
  t.delta = Eigen::MatrixXd::Constant(3, 4, 0.3);
  t.omega = Eigen::MatrixXd::Zero(3, 4);
  const auto v = assess_trajectory(t);
  CHECK(v.max_sep_deg == 0.0);
  CHECK(v.tsi == 100.0);
  CHECK(v.label == 1);

  Trajectory short_traj;
  short_traj.times = {0.0};
  short_traj.delta = Eigen::MatrixXd::Zero(1, 2);
  CHECK_THROWS(assess_trajectory(short_traj));
}

TEST_CASE("trajectory CSV layout") {
  const auto p = smib_scenario(0.1);
  const auto traj = simulate(p.model, 0.1, 0.05 + 0.1, 0.005);
  std::ostringstream out;
  write_trajectory_csv(traj, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,delta_1,omega_1");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == traj.steps());
}

TEST_CASE("snapshot matches the full run at clearing") {
  const auto g = case39();
  std::vector<double> ones(g.loads.size(), 1.0);
  std::size_t line = 0;
  while (!is_connected(g, line)) ++line;
  const auto p = prepare_scenario(g, {ones, {line, LineEnd::to, 0.0731}});
  const auto full = simulate(p.model, 0.0731, 10.0, 0.005);
  const auto snap = snapshot_at_clearing(p.model, 0.0731, 0.005);
  CHECK(snap.rows() == 39);
  CHECK(snap.cols() == 2);
  CHECK((snap - full.snapshot_injections).cwiseAbs().maxCoeff() == 0.0);
}
