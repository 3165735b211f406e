#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsa {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

/// Raised when a case file cannot be parsed. Carries the 1-based line number
/// of the offending input (0 when unknown).
class CaseParseError : public std::runtime_error {
 public:
  CaseParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a case violates one of the GridCase invariants.
class CaseValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BusKind { slack, pv, pq };

struct Bus {
  int id = 0;  // external id as written in the case file
  BusKind kind = BusKind::pq;
  double voltage_setpoint = 1.0;  // used for slack/pv only
  bool operator==(const Bus&) const = default;
};

// Line, Generator and Load refer to buses by internal index (0..n-1).
struct Line {
  std::size_t from_bus = 0;
  std::size_t to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_shunt = 0.0;
  bool operator==(const Line&) const = default;
};

struct Generator {
  std::size_t bus = 0;
  double p_set = 0.0;      // pu
  double inertia_h = 0.0;  // s, on system base
  double damping_d = 0.0;  // pu power per pu speed
  double xd_prime = 0.0;   // pu
  bool operator==(const Generator&) const = default;
};

struct Load {
  std::size_t bus = 0;
  double p = 0.0;
  double q = 0.0;
  bool operator==(const Load&) const = default;
};

/// Static network description, all quantities per-unit on base_mva.
struct GridCase {
  double base_mva = 100.0;
  double frequency_hz = 60.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<Load> loads;

  std::size_t bus_count() const { return buses.size(); }
  std::size_t slack_index() const;
  double omega_sync() const;
  bool operator==(const GridCase&) const = default;
};

/// Checks every GridCase invariant; throws CaseValidationError naming the
/// first violation.
void validate(const GridCase& grid);

/// True when the buses are connected by the given lines, ignoring the line at
/// `skip_line` (pass lines.size() to skip none).
bool is_connected(const GridCase& grid, std::size_t skip_line);

GridCase parse_case(const std::string& text);
GridCase load_case(const std::filesystem::path& path);

/// Writes the case in the same text format load_case reads. Physical values
/// are chosen so that reloading reproduces the per-unit values bit-for-bit.
std::string serialize_case(const GridCase& grid);
void save_case(const GridCase& grid, const std::filesystem::path& path);

/// Resolves a bundled case name ("39bus", "9bus") to its file, or returns the
/// argument unchanged when it is already a path.
std::filesystem::path resolve_case_path(const std::string& name_or_path);

/// Complex bus admittance matrix from π-section lines. Parallel lines add.
ComplexMatrix build_ybus(const GridCase& grid);

/// Admittance contribution of a single line, for incremental edits.
void stamp_line(ComplexMatrix& y, const Line& line, double sign = 1.0);

}  // namespace tsa
