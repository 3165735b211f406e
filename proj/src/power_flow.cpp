#include "tsa/power_flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tsa {

Eigen::VectorXcd PowerFlowSolution::voltage() const {
  Eigen::VectorXcd v(v_mag.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::polar(v_mag[i], v_ang[i]);
  return v;
}

void scheduled_injections(const GridCase& grid, Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  p = Eigen::VectorXd::Zero(n);
  q = Eigen::VectorXd::Zero(n);
  for (const auto& g : grid.generators) p[static_cast<Eigen::Index>(g.bus)] += g.p_set;
  for (const auto& l : grid.loads) {
    p[static_cast<Eigen::Index>(l.bus)] -= l.p;
    q[static_cast<Eigen::Index>(l.bus)] -= l.q;
  }
}

double mismatch_norm(const GridCase& grid, const Eigen::VectorXcd& v) {
  Eigen::VectorXd p_spec, q_spec;
  scheduled_injections(grid, p_spec, q_spec);
  const ComplexMatrix y = build_ybus(grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Row-by-row sum, independent of the Jacobian code path.
    Complex current{0.0, 0.0};
    for (Eigen::Index j = 0; j < v.size(); ++j) current += y(i, j) * v[j];
    const Complex s = v[i] * std::conj(current);
    const auto kind = grid.buses[static_cast<std::size_t>(i)].kind;
    if (kind == BusKind::slack) continue;
    worst = std::max(worst, std::abs(s.real() - p_spec[i]));
    if (kind == BusKind::pq) worst = std::max(worst, std::abs(s.imag() - q_spec[i]));
  }
  return worst;
}

PowerFlowSolution solve_power_flow(const GridCase& grid, const PowerFlowOptions& opts) {
  const auto n = static_cast<Eigen::Index>(grid.bus_count());
  const ComplexMatrix y = build_ybus(grid);
  Eigen::VectorXd p_spec, q_spec;
  scheduled_injections(grid, p_spec, q_spec);

  Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> ang_idx, mag_idx;  // unknown angles / magnitudes
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = grid.buses[static_cast<std::size_t>(i)];
    if (b.kind != BusKind::pq) vm[i] = b.voltage_setpoint;
    if (b.kind != BusKind::slack) ang_idx.push_back(i);
    if (b.kind == BusKind::pq) mag_idx.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(ang_idx.size());
  const auto nm = static_cast<Eigen::Index>(mag_idx.size());

  PowerFlowSolution sol;
  Eigen::VectorXcd v(n);
  Eigen::VectorXd f(na + nm);
  auto evaluate = [&] {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
    const Eigen::VectorXcd s = v.cwiseProduct((y * v).conjugate());
    for (Eigen::Index k = 0; k < na; ++k) f[k] = s[ang_idx[k]].real() - p_spec[ang_idx[k]];
    for (Eigen::Index k = 0; k < nm; ++k) f[na + k] = s[mag_idx[k]].imag() - q_spec[mag_idx[k]];
    return f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
  };

  double mis = evaluate();
  int it = 0;
  while (mis >= opts.tol) {
    if (it >= opts.max_iter)
      throw PowerFlowError("power flow did not converge in " + std::to_string(opts.max_iter) +
                           " iterations (mismatch " + std::to_string(mis) + ")");
    // dS/dθ and dS/d|V| in complex form.
    const Eigen::VectorXcd current = y * v;
    const Eigen::VectorXcd v_unit = v.cwiseQuotient(vm.cast<Complex>());
    ComplexMatrix ds_da = -(y * v.asDiagonal()).conjugate();
    ds_da.diagonal() += current.conjugate();
    ds_da = (Complex(0.0, 1.0) * v.asDiagonal()) * ds_da;
    ComplexMatrix ds_dm = v.asDiagonal() * (y * v_unit.asDiagonal()).conjugate();
    ds_dm.diagonal() += current.conjugate().cwiseProduct(v_unit);

    Eigen::MatrixXd jac(na + nm, na + nm);
    for (Eigen::Index r = 0; r < na; ++r) {
      for (Eigen::Index c = 0; c < na; ++c) jac(r, c) = ds_da(ang_idx[r], ang_idx[c]).real();
      for (Eigen::Index c = 0; c < nm; ++c) jac(r, na + c) = ds_dm(ang_idx[r], mag_idx[c]).real();
    }
    for (Eigen::Index r = 0; r < nm; ++r) {
      for (Eigen::Index c = 0; c < na; ++c) jac(na + r, c) = ds_da(mag_idx[r], ang_idx[c]).imag();
      for (Eigen::Index c = 0; c < nm; ++c) jac(na + r, na + c) = ds_dm(mag_idx[r], mag_idx[c]).imag();
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) throw PowerFlowError("singular power-flow Jacobian");
    const Eigen::VectorXd dx = lu.solve(-f);
    for (Eigen::Index k = 0; k < na; ++k) va[ang_idx[k]] += dx[k];
    for (Eigen::Index k = 0; k < nm; ++k) vm[mag_idx[k]] += dx[na + k];
    ++it;
    mis = evaluate();
    if (!std::isfinite(mis)) throw PowerFlowError("power flow diverged");
  }

  const Eigen::VectorXcd s = v.cwiseProduct((y * v).conjugate());
  sol.v_mag = vm;
  sol.v_ang = va;
  sol.p_inj = s.real();
  sol.q_inj = s.imag();
  sol.iterations = it;
  sol.max_mismatch = mis;
  return sol;
}

GridCase apply_load_factors(const GridCase& grid, const std::vector<double>& factors) {
  if (factors.size() != grid.loads.size())
    throw std::invalid_argument("load factor count does not match load count");
  GridCase out = grid;
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < out.loads.size(); ++i) {
    before += grid.loads[i].p;
    out.loads[i].p = grid.loads[i].p * factors[i];
    out.loads[i].q = grid.loads[i].q * factors[i];
    after += out.loads[i].p;
  }
  // Generation follows load proportionally; the base case's set points already
  // include its losses, so scaling them carries a proportional loss estimate.
  if (before != 0.0 && after != before) {
    const double ratio = after / before;
    for (auto& g : out.generators) g.p_set *= ratio;
  }
  return out;
}

DispatchResult scale_and_dispatch(const GridCase& grid, double lo, double hi, Rng& rng) {
  std::vector<double> factors(grid.loads.size());
  for (auto& f : factors) f = rng.uniform(lo, hi);
  return {apply_load_factors(grid, factors), std::move(factors)};
}

}  // namespace tsa
