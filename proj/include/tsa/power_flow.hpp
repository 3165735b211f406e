#pragma once

#include "tsa/grid.hpp"
#include "tsa/rng.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace tsa {

class PowerFlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PowerFlowSolution {
  Eigen::VectorXd v_mag;
  Eigen::VectorXd v_ang;  // radians, slack = 0
  Eigen::VectorXd p_inj;  // net injection (generation - load), pu
  Eigen::VectorXd q_inj;
  int iterations = 0;
  double max_mismatch = 0.0;

  Eigen::VectorXcd voltage() const;
};

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
};

/// Newton-Raphson on the polar mismatch equations from a flat start.
/// Throws PowerFlowError on non-convergence or a singular Jacobian.
PowerFlowSolution solve_power_flow(const GridCase& grid, const PowerFlowOptions& opts = {});

/// Scheduled net injections (generator set points minus loads) per bus.
void scheduled_injections(const GridCase& grid, Eigen::VectorXd& p, Eigen::VectorXd& q);

/// Max |ΔP|, |ΔQ| of the given voltages against the schedule, evaluated
/// directly from S = V·conj(Y·V). Slack P/Q and PV Q are free and skipped.
double mismatch_norm(const GridCase& grid, const Eigen::VectorXcd& v);

struct DispatchResult {
  GridCase grid;
  std::vector<double> load_factors;
};

/// Multiplies each load's p and q by its own factor drawn from U[lo, hi] and
/// rescales generator set points by the change in total active load.
DispatchResult scale_and_dispatch(const GridCase& grid, double lo, double hi, Rng& rng);

/// Deterministic counterpart: applies the given per-load factors.
GridCase apply_load_factors(const GridCase& grid, const std::vector<double>& factors);

}  // namespace tsa
