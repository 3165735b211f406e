#include "tsa/tds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace tsa {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct AugmentedNetwork {
  ComplexMatrix y;                       // (n + g) × (n + g)
  std::vector<Eigen::Index> kept;        // internal nodes, then sources
  std::vector<Eigen::Index> eliminated;  // remaining buses
};

// Bus-level Ybus plus load admittances, extended with one internal node per
// generator behind its transient reactance.
ComplexMatrix augment(const ComplexMatrix& ybus_with_loads, const std::vector<std::size_t>& gen_bus,
                      const Eigen::VectorXd& xd_prime) {
  const auto n = ybus_with_loads.rows();
  const auto g = static_cast<Eigen::Index>(gen_bus.size());
  ComplexMatrix y = ComplexMatrix::Zero(n + g, n + g);
  y.topLeftCorner(n, n) = ybus_with_loads;
  for (Eigen::Index k = 0; k < g; ++k) {
    const Complex yk = 1.0 / Complex(0.0, xd_prime[k]);
    const auto b = static_cast<Eigen::Index>(gen_bus[static_cast<std::size_t>(k)]);
    y(n + k, n + k) += yk;
    y(b, b) += yk;
    y(n + k, b) -= yk;
    y(b, n + k) -= yk;
  }
  return y;
}

// Node partition; `grounded` (if < n) is a bus held at zero voltage.
AugmentedNetwork partition(ComplexMatrix y, std::size_t n, std::size_t g, const std::vector<std::size_t>& sources,
                           std::size_t grounded) {
  AugmentedNetwork net;
  net.y = std::move(y);
  for (std::size_t k = 0; k < g; ++k) net.kept.push_back(static_cast<Eigen::Index>(n + k));
  for (auto s : sources) net.kept.push_back(static_cast<Eigen::Index>(s));
  for (std::size_t i = 0; i < n; ++i) {
    if (i == grounded) continue;
    if (std::find(sources.begin(), sources.end(), i) != sources.end()) continue;
    net.eliminated.push_back(static_cast<Eigen::Index>(i));
  }
  return net;
}

ComplexMatrix select(const ComplexMatrix& y, const std::vector<Eigen::Index>& rows,
                     const std::vector<Eigen::Index>& cols) {
  ComplexMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = y(rows[r], cols[c]);
  return out;
}

ReducedNetwork reduce(const AugmentedNetwork& net, std::size_t g, const Eigen::VectorXcd& source_v,
                      std::size_t grounded_source) {
  ComplexMatrix yr = select(net.y, net.kept, net.kept);
  if (!net.eliminated.empty()) {
    const ComplexMatrix y_ee = select(net.y, net.eliminated, net.eliminated);
    Eigen::FullPivLU<ComplexMatrix> lu(y_ee);
    if (!lu.isInvertible()) throw DynamicsError("singular block in Kron reduction (isolated network part)");
    const ComplexMatrix y_ke = select(net.y, net.kept, net.eliminated);
    const ComplexMatrix y_ek = select(net.y, net.eliminated, net.kept);
    yr -= y_ke * lu.solve(y_ek);
  }
  const auto gi = static_cast<Eigen::Index>(g);
  ReducedNetwork red;
  red.y_gg = yr.topLeftCorner(gi, gi);
  red.y_gs = yr.topRightCorner(gi, yr.cols() - gi);
  red.source_v = source_v;
  if (grounded_source < static_cast<std::size_t>(source_v.size())) red.source_v[static_cast<Eigen::Index>(grounded_source)] = 0.0;
  return red;
}

const ReducedNetwork& stage(const DynamicsModel& m, Topology t) {
  switch (t) {
    case Topology::prefault: return m.y_red_prefault;
    case Topology::fault: return m.y_red_fault;
    case Topology::postfault: return m.y_red_postfault;
  }
  return m.y_red_prefault;
}

struct State {
  Eigen::VectorXd delta;
  Eigen::VectorXd omega;
};

class Integrator {
 public:
  explicit Integrator(const DynamicsModel& model) : model_(model) {}

  void step(State& s, double h, Topology topo) const {
    const auto& net = stage(model_, topo);
    const Eigen::VectorXcd inject = net.y_gs * net.source_v;
    auto accel = [&](const Eigen::VectorXd& delta, const Eigen::VectorXd& omega) {
      const Eigen::VectorXd pe = power(net, inject, delta);
      return Eigen::VectorXd(((model_.p_mech - pe - model_.d.cwiseProduct(omega)).array() / model_.m.array()).matrix());
    };
    const Eigen::VectorXd k1d = s.omega;
    const Eigen::VectorXd k1w = accel(s.delta, s.omega);
    const Eigen::VectorXd k2d = s.omega + 0.5 * h * k1w;
    const Eigen::VectorXd k2w = accel(s.delta + 0.5 * h * k1d, k2d);
    const Eigen::VectorXd k3d = s.omega + 0.5 * h * k2w;
    const Eigen::VectorXd k3w = accel(s.delta + 0.5 * h * k2d, k3d);
    const Eigen::VectorXd k4d = s.omega + h * k3w;
    const Eigen::VectorXd k4w = accel(s.delta + h * k3d, k4d);
    s.delta += (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
    s.omega += (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
  }

  Eigen::VectorXd power(const ReducedNetwork& net, const Eigen::VectorXcd& inject,
                        const Eigen::VectorXd& delta) const {
    Eigen::VectorXcd e(delta.size());
    for (Eigen::Index i = 0; i < delta.size(); ++i) e[i] = std::polar(model_.e_mag[i], delta[i]);
    const Eigen::VectorXcd current = net.y_gg * e + inject;
    return e.cwiseProduct(current.conjugate()).real();
  }

 private:
  const DynamicsModel& model_;
};

double separation_deg(const Eigen::VectorXd& delta, const Eigen::VectorXd& sources) {
  double hi = -HUGE_VAL, lo = HUGE_VAL;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    hi = std::max(hi, delta[i]);
    lo = std::min(lo, delta[i]);
  }
  for (Eigen::Index i = 0; i < sources.size(); ++i) {
    hi = std::max(hi, sources[i]);
    lo = std::min(lo, sources[i]);
  }
  return hi < lo ? 0.0 : (hi - lo) * kRadToDeg;
}

// Bus injections for the given machine angles on the pre- or post-fault network.
Eigen::MatrixXd bus_injections(const DynamicsModel& model, const Eigen::VectorXd& delta, bool postfault) {
  const auto n = static_cast<std::size_t>(model.bus_count());
  const auto g = model.gen_count();
  const ComplexMatrix& full = postfault ? model.ybus_full_postfault : model.ybus_full_prefault;
  const auto net = partition(augment(full, model.gen_bus, model.xd_prime), n, g, model.source_bus, n);

  Eigen::VectorXcd x_k(static_cast<Eigen::Index>(net.kept.size()));
  for (std::size_t k = 0; k < g; ++k)
    x_k[static_cast<Eigen::Index>(k)] = std::polar(model.e_mag[static_cast<Eigen::Index>(k)], delta[static_cast<Eigen::Index>(k)]);
  for (std::size_t s = 0; s < model.source_bus.size(); ++s)
    x_k[static_cast<Eigen::Index>(g + s)] = (postfault ? model.y_red_postfault : model.y_red_prefault).source_v[static_cast<Eigen::Index>(s)];

  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < model.source_bus.size(); ++s)
    v[static_cast<Eigen::Index>(model.source_bus[s])] = x_k[static_cast<Eigen::Index>(g + s)];
  if (!net.eliminated.empty()) {
    const ComplexMatrix y_ee = select(net.y, net.eliminated, net.eliminated);
    const ComplexMatrix y_ek = select(net.y, net.eliminated, net.kept);
    const Eigen::VectorXcd v_e = -Eigen::FullPivLU<ComplexMatrix>(y_ee).solve(y_ek * x_k);
    for (std::size_t i = 0; i < net.eliminated.size(); ++i) v[net.eliminated[i]] = v_e[static_cast<Eigen::Index>(i)];
  }
  const ComplexMatrix y_lines = full - ComplexMatrix(model.load_admittance.asDiagonal());
  const Eigen::VectorXcd s = v.cwiseProduct((y_lines * v).conjugate());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), 2);
  out.col(0) = s.real();
  out.col(1) = s.imag();
  return out;
}

}  // namespace

DynamicsModel prepare_dynamics(const GridCase& grid, const PowerFlowSolution& pf, const FaultSpec& fault) {
  const auto n = grid.bus_count();
  const auto g = grid.generators.size();
  if (fault.line_index >= grid.lines.size()) throw DynamicsError("fault line index out of range");
  if (!is_connected(grid, fault.line_index))
    throw DynamicsError("tripping line " + std::to_string(fault.line_index) + " islands part of the network");

  DynamicsModel model;
  model.omega_s = grid.omega_sync();
  model.fault = fault;
  const auto& line = grid.lines[fault.line_index];
  model.faulted_bus = fault.faulted_end == LineEnd::from ? line.from_bus : line.to_bus;

  const Eigen::VectorXcd v = pf.voltage();
  const auto ni = static_cast<Eigen::Index>(n);

  model.load_admittance = Eigen::VectorXcd::Zero(ni);
  Eigen::VectorXd load_p = Eigen::VectorXd::Zero(ni), load_q = Eigen::VectorXd::Zero(ni);
  for (const auto& l : grid.loads) {
    const auto b = static_cast<Eigen::Index>(l.bus);
    load_p[b] += l.p;
    load_q[b] += l.q;
  }
  for (Eigen::Index i = 0; i < ni; ++i) {
    const double vm2 = std::norm(v[i]);
    model.load_admittance[i] = Complex(load_p[i], -load_q[i]) / vm2;
  }

  // Generator terminal output: the slack bus takes the power-flow residual;
  // reactive output at a bus is shared equally among its machines.
  std::vector<int> gens_at(n, 0);
  for (const auto& gen : grid.generators) ++gens_at[gen.bus];
  const auto slack = grid.slack_index();

  const auto gi = static_cast<Eigen::Index>(g);
  model.e_mag.resize(gi);
  model.m.resize(gi);
  model.d.resize(gi);
  model.p_mech.resize(gi);
  model.delta0.resize(gi);
  model.xd_prime.resize(gi);
  for (std::size_t k = 0; k < g; ++k) {
    const auto& gen = grid.generators[k];
    const auto b = static_cast<Eigen::Index>(gen.bus);
    const double share = 1.0 / gens_at[gen.bus];
    const double p = gen.bus == slack ? (pf.p_inj[b] + load_p[b]) * share : gen.p_set;
    const double q = (pf.q_inj[b] + load_q[b]) * share;
    const Complex current = std::conj(Complex(p, q) / v[b]);
    const Complex e = v[b] + Complex(0.0, gen.xd_prime) * current;
    const auto ki = static_cast<Eigen::Index>(k);
    model.gen_bus.push_back(gen.bus);
    model.e_mag[ki] = std::abs(e);
    model.delta0[ki] = std::arg(e);
    model.p_mech[ki] = p;
    model.m[ki] = 2.0 * gen.inertia_h / model.omega_s;
    model.d[ki] = gen.damping_d / model.omega_s;
    model.xd_prime[ki] = gen.xd_prime;
  }

  // A slack bus without a machine behaves as an infinite bus.
  Eigen::VectorXcd source_v(0);
  if (gens_at[slack] == 0) {
    model.source_bus.push_back(slack);
    source_v = Eigen::VectorXcd::Constant(1, v[static_cast<Eigen::Index>(slack)]);
  }
  model.source_angle.resize(static_cast<Eigen::Index>(model.source_bus.size()));
  for (std::size_t s = 0; s < model.source_bus.size(); ++s)
    model.source_angle[static_cast<Eigen::Index>(s)] = std::arg(source_v[static_cast<Eigen::Index>(s)]);

  ComplexMatrix ybus = build_ybus(grid);
  ybus.diagonal() += model.load_admittance;
  model.ybus_full_prefault = ybus;
  model.ybus_full_fault = ybus;
  model.ybus_full_postfault = ybus;
  stamp_line(model.ybus_full_postfault, line, -1.0);

  const auto no_source = model.source_bus.size();
  auto grounded_source = no_source;
  for (std::size_t s = 0; s < model.source_bus.size(); ++s)
    if (model.source_bus[s] == model.faulted_bus) grounded_source = s;

  model.y_red_prefault =
      reduce(partition(augment(ybus, model.gen_bus, model.xd_prime), n, g, model.source_bus, n), g, source_v, no_source);
  model.y_red_fault = reduce(
      partition(augment(ybus, model.gen_bus, model.xd_prime), n, g, model.source_bus, model.faulted_bus), g,
      source_v, grounded_source);
  if (grounded_source < no_source)
    model.y_red_fault.y_gs.col(static_cast<Eigen::Index>(grounded_source)).setZero();
  model.y_red_postfault =
      reduce(partition(augment(model.ybus_full_postfault, model.gen_bus, model.xd_prime), n, g, model.source_bus, n),
             g, source_v, no_source);
  return model;
}

Eigen::VectorXd electrical_power(const DynamicsModel& model, Topology topo, const Eigen::VectorXd& delta) {
  const auto& net = stage(model, topo);
  return Integrator(model).power(net, net.y_gs * net.source_v, delta);
}

namespace {

struct RunResult {
  Trajectory traj;
  State at_clear;
  bool reached_clear = false;
};

// Shared integration loop; `stop_at_clear` ends the run at the clearing instant.
RunResult run(const DynamicsModel& model, double clear_time, double horizon, double dt,
              const SimulationOptions& opts, bool stop_at_clear) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Integrator integ(model);
  RunResult res;
  Trajectory& tr = res.traj;
  State s{model.delta0, Eigen::VectorXd::Zero(model.delta0.size())};
  if (opts.initial_offset.size() == s.delta.size()) s.delta += opts.initial_offset;

  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  const auto g = s.delta.size();
  std::vector<double> rows_d, rows_w;
  rows_d.reserve((steps + 1) * static_cast<std::size_t>(g));
  rows_w.reserve((steps + 1) * static_cast<std::size_t>(g));
  auto record = [&](double t) {
    tr.times.push_back(t);
    rows_d.insert(rows_d.end(), s.delta.data(), s.delta.data() + g);
    rows_w.insert(rows_w.end(), s.omega.data(), s.omega.data() + g);
  };
  record(0.0);

  const bool fault = opts.apply_fault;
  bool cleared = !fault;
  if (!fault) {
    res.at_clear = s;
    res.reached_clear = true;
  }
  constexpr double kEdge = 1e-12;
  for (std::size_t k = 0; k < steps; ++k) {
    if (stop_at_clear && res.reached_clear) break;
    const double t0 = static_cast<double>(k) * dt;
    const double t1 = static_cast<double>(k + 1) * dt;
    if (!cleared) {
      if (clear_time < t1 - kEdge) {
        integ.step(s, clear_time - t0, Topology::fault);
        cleared = true;
        res.at_clear = s;
        res.reached_clear = true;
        if (stop_at_clear) break;
        integ.step(s, t1 - clear_time, Topology::postfault);
      } else {
        integ.step(s, dt, Topology::fault);
        if (std::abs(t1 - clear_time) <= kEdge) {
          cleared = true;
          res.at_clear = s;
          res.reached_clear = true;
          if (stop_at_clear) break;
        }
      }
    } else {
      integ.step(s, dt, fault ? Topology::postfault : Topology::prefault);
    }
    if (!s.delta.allFinite() || !s.omega.allFinite()) {
      tr.overflowed = true;
      break;
    }
    record(t1);
    if (opts.early_exit && separation_deg(s.delta, model.source_angle) > 360.0) {
      tr.early_exit = true;
      break;
    }
  }
  if (!res.reached_clear && stop_at_clear) {
    // clear_time beyond the horizon grid: finish the fault-on period.
    integ.step(s, clear_time - tr.times.back(), Topology::fault);
    res.at_clear = s;
    res.reached_clear = true;
  }

  const auto rows = static_cast<Eigen::Index>(tr.times.size());
  tr.delta = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(rows_d.data(), rows, g);
  tr.omega = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(rows_w.data(), rows, g);
  tr.source_angle = model.source_angle;
  if (res.reached_clear && res.at_clear.delta.allFinite())
    tr.snapshot_injections = bus_injections(model, res.at_clear.delta, fault);
  return res;
}

}  // namespace

Trajectory simulate(const DynamicsModel& model, double clear_time, double horizon, double dt,
                    const SimulationOptions& opts) {
  if (opts.apply_fault && !(clear_time > 0.0 && clear_time < horizon))
    throw std::invalid_argument("clear_time must lie in (0, horizon)");
  return run(model, clear_time, horizon, dt, opts, false).traj;
}

Eigen::MatrixXd snapshot_at_clearing(const DynamicsModel& model, double clear_time, double dt) {
  if (!(clear_time > 0.0)) throw std::invalid_argument("clear_time must be positive");
  SimulationOptions opts;
  opts.early_exit = false;
  const double horizon = dt * std::ceil(clear_time / dt + 1.0);
  return run(model, clear_time, horizon, dt, opts, true).traj.snapshot_injections;
}

StabilityVerdict verdict_from_separation(double max_sep_deg) {
  StabilityVerdict v;
  v.max_sep_deg = std::isfinite(max_sep_deg) ? std::min(std::max(max_sep_deg, 0.0), kSeparationCapDeg)
                                             : kSeparationCapDeg;
  v.tsi = (360.0 - v.max_sep_deg) / (360.0 + v.max_sep_deg) * 100.0;
  v.label = v.tsi > 0.0 ? 1 : 0;
  return v;
}

StabilityVerdict assess_trajectory(const Trajectory& traj) {
  if (traj.steps() < 2) throw std::invalid_argument("trajectory needs at least two steps");
  double worst = 0.0;
  for (Eigen::Index r = 0; r < traj.delta.rows(); ++r)
    worst = std::max(worst, separation_deg(traj.delta.row(r).transpose(), traj.source_angle));
  if (traj.overflowed) worst = kSeparationCapDeg;
  return verdict_from_separation(worst);
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const auto g = traj.delta.cols();
  out << "t";
  for (Eigen::Index i = 1; i <= g; ++i) out << ",delta_" << i;
  for (Eigen::Index i = 1; i <= g; ++i) out << ",omega_" << i;
  out << '\n';
  out.precision(10);
  for (std::size_t r = 0; r < traj.steps(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    out << traj.times[r];
    for (Eigen::Index i = 0; i < g; ++i) out << ',' << traj.delta(ri, i);
    for (Eigen::Index i = 0; i < g; ++i) out << ',' << traj.omega(ri, i);
    out << '\n';
  }
}

}  // namespace tsa
