#include "tsa/grid.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace tsa {

using nlohmann::json;

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  const auto end = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
}

BusKind parse_kind(const std::string& s) {
  if (s == "slack") return BusKind::slack;
  if (s == "pv") return BusKind::pv;
  if (s == "pq") return BusKind::pq;
  throw CaseValidationError("bus kind must be one of slack/pv/pq, got '" + s + "'");
}

const char* kind_name(BusKind k) {
  switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
  }
  return "pq";
}

// Smallest-magnitude physical value v with v / base == pu exactly.
double to_physical(double pu, double base) {
  double v = pu * base;
  if (v / base == pu) return v;
  double up = v, down = v;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, HUGE_VAL);
    down = std::nextafter(down, -HUGE_VAL);
    if (up / base == pu) return up;
    if (down / base == pu) return down;
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::size_t GridCase::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].kind == BusKind::slack) return i;
  throw CaseValidationError("case has no slack bus");
}

double GridCase::omega_sync() const { return 2.0 * std::numbers::pi * frequency_hz; }

bool is_connected(const GridCase& grid, std::size_t skip_line) {
  const auto n = grid.buses.size();
  if (n == 0) return true;
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t k = 0; k < grid.lines.size(); ++k) {
    if (k == skip_line) continue;
    adj[grid.lines[k].from_bus].push_back(grid.lines[k].to_bus);
    adj[grid.lines[k].to_bus].push_back(grid.lines[k].from_bus);
  }
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (auto u : adj[v]) {
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == n;
}

void validate(const GridCase& grid) {
  const auto n = grid.buses.size();
  if (n == 0) throw CaseValidationError("case has no buses");
  if (!(grid.base_mva > 0.0) || !std::isfinite(grid.base_mva))
    throw CaseValidationError("base_mva must be positive");
  if (!(grid.frequency_hz > 0.0)) throw CaseValidationError("frequency_hz must be positive");

  std::unordered_map<int, std::size_t> ids;
  std::size_t slack = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = grid.buses[i];
    if (!ids.emplace(b.id, i).second)
      throw CaseValidationError("duplicate bus id " + std::to_string(b.id));
    if (b.kind == BusKind::slack) ++slack;
    if (b.kind != BusKind::pq && !(b.voltage_setpoint > 0.0))
      throw CaseValidationError("bus " + std::to_string(b.id) + ": voltage_setpoint must be > 0");
  }
  if (slack != 1)
    throw CaseValidationError("case must have exactly one slack bus, found " + std::to_string(slack));

  for (const auto& l : grid.lines) {
    if (l.from_bus >= n || l.to_bus >= n) throw CaseValidationError("line references a missing bus");
    if (l.from_bus == l.to_bus) throw CaseValidationError("line from_bus equals to_bus");
    if (l.x == 0.0) throw CaseValidationError("line reactance x must be non-zero");
    if (!std::isfinite(l.r) || !std::isfinite(l.x) || !std::isfinite(l.b_shunt))
      throw CaseValidationError("line parameters must be finite");
  }
  std::vector<char> has_gen(n, 0);
  for (const auto& g : grid.generators) {
    if (g.bus >= n) throw CaseValidationError("generator references a missing bus");
    if (!(g.inertia_h > 0.0)) throw CaseValidationError("generator inertia_h must be > 0");
    if (!(g.xd_prime > 0.0)) throw CaseValidationError("generator xd_prime must be > 0");
    if (!(g.damping_d >= 0.0)) throw CaseValidationError("generator damping_d must be >= 0");
    if (!std::isfinite(g.p_set)) throw CaseValidationError("generator p_set must be finite");
    has_gen[g.bus] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (grid.buses[i].kind == BusKind::pv && !has_gen[i])
      throw CaseValidationError("pv bus " + std::to_string(grid.buses[i].id) + " has no generator");
  for (const auto& l : grid.loads) {
    if (l.bus >= n) throw CaseValidationError("load references a missing bus");
    if (!std::isfinite(l.p) || !std::isfinite(l.q)) throw CaseValidationError("load values must be finite");
  }
  if (!is_connected(grid, grid.lines.size()))
    throw CaseValidationError("network graph of in-service lines is not connected");
}

GridCase parse_case(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto line = line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1);
    throw CaseParseError("case parse error at line " + std::to_string(line) + ": " + e.what(), line);
  }

  GridCase grid;
  try {
    grid.base_mva = doc.at("base_mva").get<double>();
    grid.frequency_hz = doc.value("frequency_hz", 60.0);
    const double base = grid.base_mva;
    if (!(base > 0.0)) throw CaseValidationError("base_mva must be positive");

    std::unordered_map<int, std::size_t> index;
    for (const auto& jb : doc.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      b.kind = parse_kind(jb.at("kind").get<std::string>());
      if (b.kind != BusKind::pq) b.voltage_setpoint = jb.at("voltage_setpoint").get<double>();
      if (!index.emplace(b.id, grid.buses.size()).second)
        throw CaseValidationError("duplicate bus id " + std::to_string(b.id));
      grid.buses.push_back(b);
    }
    auto bus_ref = [&](const json& j, const char* key) {
      const int id = j.at(key).get<int>();
      auto it = index.find(id);
      if (it == index.end())
        throw CaseValidationError(std::string(key) + " references unknown bus " + std::to_string(id));
      return it->second;
    };
    for (const auto& jl : doc.at("lines")) {
      Line l;
      l.from_bus = bus_ref(jl, "from_bus");
      l.to_bus = bus_ref(jl, "to_bus");
      l.r = jl.at("r").get<double>();
      l.x = jl.at("x").get<double>();
      l.b_shunt = jl.value("b_shunt", 0.0);
      grid.lines.push_back(l);
    }
    for (const auto& jg : doc.at("generators")) {
      Generator g;
      g.bus = bus_ref(jg, "bus");
      g.p_set = jg.at("p_set").get<double>() / base;
      g.inertia_h = jg.at("inertia_h").get<double>();
      g.damping_d = jg.value("damping_d", 0.0);
      g.xd_prime = jg.at("xd_prime").get<double>();
      grid.generators.push_back(g);
    }
    for (const auto& jl : doc.at("loads")) {
      Load l;
      l.bus = bus_ref(jl, "bus");
      l.p = jl.at("p").get<double>() / base;
      l.q = jl.at("q").get<double>() / base;
      grid.loads.push_back(l);
    }
  } catch (const json::exception& e) {
    throw CaseParseError(std::string("case structure error: ") + e.what(), 0);
  }
  validate(grid);
  return grid;
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open case file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

std::string serialize_case(const GridCase& grid) {
  const double base = grid.base_mva;
  std::ostringstream os;
  os << "{\n  \"base_mva\": " << fmt(base) << ",\n  \"frequency_hz\": " << fmt(grid.frequency_hz)
     << ",\n  \"buses\": [\n";
  for (std::size_t i = 0; i < grid.buses.size(); ++i) {
    const auto& b = grid.buses[i];
    os << "    {\"id\": " << b.id << ", \"kind\": \"" << kind_name(b.kind) << "\"";
    if (b.kind != BusKind::pq) os << ", \"voltage_setpoint\": " << fmt(b.voltage_setpoint);
    os << "}" << (i + 1 < grid.buses.size() ? "," : "") << "\n";
  }
  os << "  ],\n  \"lines\": [\n";
  for (std::size_t i = 0; i < grid.lines.size(); ++i) {
    const auto& l = grid.lines[i];
    os << "    {\"from_bus\": " << grid.buses[l.from_bus].id << ", \"to_bus\": " << grid.buses[l.to_bus].id
       << ", \"r\": " << fmt(l.r) << ", \"x\": " << fmt(l.x) << ", \"b_shunt\": " << fmt(l.b_shunt) << "}"
       << (i + 1 < grid.lines.size() ? "," : "") << "\n";
  }
  os << "  ],\n  \"generators\": [\n";
  for (std::size_t i = 0; i < grid.generators.size(); ++i) {
    const auto& g = grid.generators[i];
    os << "    {\"bus\": " << grid.buses[g.bus].id << ", \"p_set\": " << fmt(to_physical(g.p_set, base))
       << ", \"inertia_h\": " << fmt(g.inertia_h) << ", \"damping_d\": " << fmt(g.damping_d)
       << ", \"xd_prime\": " << fmt(g.xd_prime) << "}" << (i + 1 < grid.generators.size() ? "," : "") << "\n";
  }
  os << "  ],\n  \"loads\": [\n";
  for (std::size_t i = 0; i < grid.loads.size(); ++i) {
    const auto& l = grid.loads[i];
    os << "    {\"bus\": " << grid.buses[l.bus].id << ", \"p\": " << fmt(to_physical(l.p, base))
       << ", \"q\": " << fmt(to_physical(l.q, base)) << "}" << (i + 1 < grid.loads.size() ? "," : "") << "\n";
  }
  os << "  ]\n}\n";
  return os.str();
}

void save_case(const GridCase& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write case file " + path.string());
  out << serialize_case(grid);
}

std::filesystem::path resolve_case_path(const std::string& name_or_path) {
  const std::filesystem::path data_dir{TSA_DATA_DIR};
  if (name_or_path == "39bus" || name_or_path == "case39") return data_dir / "case39.json";
  if (name_or_path == "9bus" || name_or_path == "case9") return data_dir / "case9.json";
  return name_or_path;
}

void stamp_line(ComplexMatrix& y, const Line& line, double sign) {
  const Complex ys = 1.0 / Complex(line.r, line.x);
  const Complex half_b(0.0, line.b_shunt / 2.0);
  const auto i = static_cast<Eigen::Index>(line.from_bus);
  const auto j = static_cast<Eigen::Index>(line.to_bus);
  y(i, i) += sign * (ys + half_b);
  y(j, j) += sign * (ys + half_b);
  y(i, j) -= sign * ys;
  y(j, i) -= sign * ys;
}

ComplexMatrix build_ybus(const GridCase& grid) {
  const auto n = static_cast<Eigen::Index>(grid.buses.size());
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& l : grid.lines) stamp_line(y, l);
  return y;
}

}  // namespace tsa
