#pragma once

#include "tsa/grid.hpp"
#include "tsa/power_flow.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace tsa {

class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LineEnd : std::uint8_t { from = 0, to = 1 };

/// Bolted three-phase fault at one end of a line, cleared by tripping it.
struct FaultSpec {
  std::size_t line_index = 0;
  LineEnd faulted_end = LineEnd::from;
  double clear_time = 0.1;  // s
  bool operator==(const FaultSpec&) const = default;
};

inline constexpr double kMinClearTime = 1.0 / 60.0;
inline constexpr double kMaxClearTime = 1.0 / 6.0;

/// Network seen from the generator internal nodes after Kron reduction.
/// Infinite buses (a slack bus without a generator) stay as fixed sources.
struct ReducedNetwork {
  ComplexMatrix y_gg;          // g×g
  ComplexMatrix y_gs;          // g×s coupling to fixed sources
  Eigen::VectorXcd source_v;   // s source phasors for this topology
};

/// Classical-model swing dynamics for one operating point and fault.
struct DynamicsModel {
  double omega_s = 0.0;
  std::vector<std::size_t> gen_bus;
  Eigen::VectorXd e_mag;   // internal EMF magnitudes
  Eigen::VectorXd m;       // 2H/ω_s
  Eigen::VectorXd d;       // damping in pu power per rad/s
  Eigen::VectorXd xd_prime;
  Eigen::VectorXd p_mech;
  Eigen::VectorXd delta0;  // pre-fault rotor angles

  std::vector<std::size_t> source_bus;
  Eigen::VectorXd source_angle;  // fixed angles of the sources

  ReducedNetwork y_red_prefault;
  ReducedNetwork y_red_fault;
  ReducedNetwork y_red_postfault;

  // Unreduced bus admittance matrices with loads as constant admittances.
  // The fault-on variant equals the pre-fault one; the faulted bus is held at
  // zero voltage during reduction.
  ComplexMatrix ybus_full_prefault;
  ComplexMatrix ybus_full_fault;
  ComplexMatrix ybus_full_postfault;
  Eigen::VectorXcd load_admittance;

  FaultSpec fault;
  std::size_t faulted_bus = 0;

  std::size_t gen_count() const { return gen_bus.size(); }
  std::size_t bus_count() const { return static_cast<std::size_t>(load_admittance.size()); }
};

/// Builds the three reduced networks and the initial machine state from a
/// converged power flow. Throws DynamicsError if tripping the line islands
/// part of the network or a reduction block is singular.
DynamicsModel prepare_dynamics(const GridCase& grid, const PowerFlowSolution& pf, const FaultSpec& fault);

enum class Topology { prefault, fault, postfault };

/// Electrical power of every machine at the given rotor angles.
Eigen::VectorXd electrical_power(const DynamicsModel& model, Topology topo, const Eigen::VectorXd& delta);

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd delta;  // steps × g, rad
  Eigen::MatrixXd omega;  // steps × g, rad/s speed deviation
  Eigen::VectorXd source_angle;
  Eigen::MatrixXd snapshot_injections;  // n × 2 (P, Q) at clear time
  bool overflowed = false;
  bool early_exit = false;

  std::size_t steps() const { return times.size(); }
};

struct SimulationOptions {
  bool apply_fault = true;  // false keeps the pre-fault network throughout
  bool early_exit = true;   // stop once any pair separates by more than 360°
  Eigen::VectorXd initial_offset;  // optional Δδ added to delta0
};

/// Fixed-step RK4 through the fault. The step that contains clear_time is
/// split there so the switching instant is exact.
Trajectory simulate(const DynamicsModel& model, double clear_time, double horizon, double dt,
                    const SimulationOptions& opts = {});

/// Integrates only the fault-on period and returns bus (P, Q) injections
/// at the clearing instant on the post-fault network.
Eigen::MatrixXd snapshot_at_clearing(const DynamicsModel& model, double clear_time, double dt);

inline constexpr double kSeparationCapDeg = 1e4;

struct StabilityVerdict {
  double tsi = 100.0;
  double max_sep_deg = 0.0;
  int label = 1;
  bool operator==(const StabilityVerdict&) const = default;
};

/// TSI = (360 - sep)/(360 + sep)·100, label 1 iff TSI > 0.
StabilityVerdict verdict_from_separation(double max_sep_deg);
StabilityVerdict assess_trajectory(const Trajectory& traj);

/// CSV with header t,delta_1..delta_g,omega_1..omega_g.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

}  // namespace tsa
