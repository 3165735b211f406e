#include "helpers.hpp"
#include "tsa/rng.hpp"

#include <doctest.h>

using namespace tsa;

TEST_CASE("bundled 39-bus case loads with the expected size") {
  const auto g = case39();
  CHECK(g.bus_count() == 39);
  CHECK(g.generators.size() == 10);
  CHECK(g.lines.size() == 46);
  CHECK(g.buses[g.slack_index()].kind == BusKind::slack);
}

TEST_CASE("2-bus fixture has one slack and one pq bus") {
  const auto g = two_bus();
  REQUIRE(g.bus_count() == 2);
  CHECK(g.buses[0].kind == BusKind::slack);
  CHECK(g.buses[1].kind == BusKind::pq);
  CHECK(g.loads.at(0).p == doctest::Approx(0.5));
}

TEST_CASE("case validation errors") {
  SUBCASE("duplicate bus id") {
    const std::string text = R"({"base_mva": 100,
      "buses": [{"id": 1, "kind": "slack", "voltage_setpoint": 1.0}, {"id": 1, "kind": "pq"}],
      "lines": [], "generators": [], "loads": []})";
    CHECK_THROWS_AS(parse_case(text), CaseValidationError);
  }
  SUBCASE("two slack buses") {
    const std::string text = R"({"base_mva": 100,
      "buses": [{"id": 1, "kind": "slack", "voltage_setpoint": 1.0}, {"id": 2, "kind": "slack", "voltage_setpoint": 1.0}],
      "lines": [{"from_bus": 1, "to_bus": 2, "r": 0, "x": 0.1, "b_shunt": 0}], "generators": [], "loads": []})";
    CHECK_THROWS_AS(parse_case(text), CaseValidationError);
  }
  SUBCASE("non-positive inertia") {
    const std::string text = R"({"base_mva": 100,
      "buses": [{"id": 1, "kind": "slack", "voltage_setpoint": 1.0}, {"id": 2, "kind": "pv", "voltage_setpoint": 1.0}],
      "lines": [{"from_bus": 1, "to_bus": 2, "r": 0, "x": 0.1, "b_shunt": 0}],
      "generators": [{"bus": 2, "p_set": 10, "inertia_h": 0, "damping_d": 0, "xd_prime": 0.2}], "loads": []})";
    CHECK_THROWS_AS(parse_case(text), CaseValidationError);
  }
  SUBCASE("disconnected network") {
    const std::string text = R"({"base_mva": 100,
      "buses": [{"id": 1, "kind": "slack", "voltage_setpoint": 1.0}, {"id": 2, "kind": "pq"}],
      "lines": [], "generators": [], "loads": []})";
    CHECK_THROWS_AS(parse_case(text), CaseValidationError);
  }
}

TEST_CASE("parse errors carry a line number") {
  const std::string text = "{\n  \"base_mva\": 100,\n  \"buses\": [ oops ]\n}\n";
  try {
    parse_case(text);
    FAIL("expected a parse error");
  } catch (const CaseParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("Ybus of a single lossless line") {
  GridCase g;
  g.buses = {{1, BusKind::slack, 1.0}, {2, BusKind::pq, 1.0}};
  g.lines = {{0, 1, 0.0, 0.1, 0.0}};
  const auto y = build_ybus(g);
  CHECK(std::abs(y(0, 1) - Complex(0, 10)) < 1e-12);
  CHECK(std::abs(y(1, 0) - Complex(0, 10)) < 1e-12);
  CHECK(std::abs(y(0, 0) - Complex(0, -10)) < 1e-12);
  CHECK(std::abs(y(1, 1) - Complex(0, -10)) < 1e-12);

  SUBCASE("parallel line doubles the coupling") {
    g.lines.push_back(g.lines[0]);
    const auto y2 = build_ybus(g);
    CHECK(std::abs(y2(0, 1) - 2.0 * y(0, 1)) < 1e-12);
  }
  SUBCASE("no lines gives a zero matrix") {
    g.lines.clear();
    CHECK(build_ybus(g).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("Ybus symmetry and row sums equal shunt admittance") {
  for (const auto& g : {case39(), case9(), smib(), two_bus()}) {
    const auto y = build_ybus(g);
    CHECK((y - y.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::VectorXcd shunt = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(g.bus_count()));
    for (const auto& l : g.lines) {
      shunt[static_cast<Eigen::Index>(l.from_bus)] += Complex(0, l.b_shunt / 2);
      shunt[static_cast<Eigen::Index>(l.to_bus)] += Complex(0, l.b_shunt / 2);
    }
    const Eigen::VectorXcd rows = y.rowwise().sum();
    CHECK((rows - shunt).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("serialize/load round-trip is exact") {
  for (const auto& g : {case39(), case9(), smib(), two_bus()}) CHECK(parse_case(serialize_case(g)) == g);

  // Randomised parameters on the 9-bus topology. Powers are drawn in MW, as a
  // case file would hold them.
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = case9();
    for (auto& l : g.lines) {
      l.r = rng.uniform(0.0, 0.05);
      l.x = rng.uniform(0.01, 0.3);
      l.b_shunt = rng.uniform(0.0, 0.5);
    }
    for (auto& gen : g.generators) {
      gen.p_set = rng.uniform(10.0, 300.0) / g.base_mva;
      gen.inertia_h = rng.uniform(1.0, 20.0);
      gen.xd_prime = rng.uniform(0.01, 0.5);
    }
    for (auto& l : g.loads) l.q = rng.uniform(-100.0, 100.0) / g.base_mva;
    CHECK(parse_case(serialize_case(g)) == g);
  }
}

TEST_CASE("case name resolution") {
  CHECK(resolve_case_path("39bus").filename() == "case39.json");
  CHECK(resolve_case_path("9bus").filename() == "case9.json");
  CHECK(resolve_case_path("/some/where.json") == std::filesystem::path("/some/where.json"));
}
