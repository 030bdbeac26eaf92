#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "tacoord/errors.hpp"
#include "tacoord/netmodel.hpp"

using namespace tacoord;

namespace {

// Independent pi-model stamping straight from the branch list.
ComplexMatrix stamp_oracle(const SystemCase& c) {
  const auto n = static_cast<Eigen::Index>(c.buses.size());
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  auto idx = [&](int id) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (c.buses[static_cast<std::size_t>(k)].id == id) return k;
    }
    return Eigen::Index{-1};
  };
  for (const auto& l : c.lines) {
    const Complex z{l.r, l.x};
    const Complex half_b{0.0, l.b / 2.0};
    const auto f = idx(l.from);
    const auto t = idx(l.to);
    y(f, t) += -1.0 / z;
    y(t, f) += -1.0 / z;
    y(f, f) += 1.0 / z + half_b;
    y(t, t) += 1.0 / z + half_b;
  }
  return y;
}

// Two-bus fixed point V2 = V1 - z conj(S / V2) for a load S at bus 2.
Complex two_bus_oracle(Complex z, Complex s, Complex v1 = 1.0) {
  Complex v2 = v1;
  for (int it = 0; it < 200; ++it) v2 = v1 - z * std::conj(s / v2);
  return v2;
}

}  // namespace

TEST_CASE("single lossless line stamps +j10 off the diagonal") {
  SystemCase c = fixtures::two_bus(0.0);
  const ComplexMatrix y = build_ybus(c, NetworkStage::prefault());
  CHECK(y(0, 1).real() == doctest::Approx(0.0));
  CHECK(y(0, 1).imag() == doctest::Approx(10.0));
  CHECK(y(1, 0).imag() == doctest::Approx(10.0));
  CHECK(y(0, 0).imag() == doctest::Approx(-10.0));
}

TEST_CASE("fault-on stage adds the bolted-fault shunt") {
  SystemCase c = fixtures::two_bus(0.0);
  const ComplexMatrix pre = build_ybus(c, NetworkStage::prefault());
  const ComplexMatrix on = build_ybus(c, NetworkStage::fault_on(2));
  CHECK((on(1, 1) - pre(1, 1)).real() == doctest::Approx(1e6));
  CHECK((on(1, 1) - pre(1, 1)).imag() == doctest::Approx(0.0));
  CHECK(on(0, 0) == pre(0, 0));
  CHECK_THROWS_AS(build_ybus(c, NetworkStage::fault_on(99)), InputError);
}

TEST_CASE("Y-bus matches an element-stamping oracle and is symmetric") {
  const SystemCase c = fixtures::three_machine();
  const ComplexMatrix y = network_ybus(c);
  const ComplexMatrix o = stamp_oracle(c);
  CHECK((y - o).norm() <= 1e-12 * o.norm());
  CHECK(y == y.transpose());
  const SystemCase desk = fixtures::desk_case();
  CHECK((network_ybus(desk) - stamp_oracle(desk)).norm() <= 1e-12 * stamp_oracle(desk).norm());
}

TEST_CASE("flat no-flow case converges to 1 pu everywhere") {
  const SystemCase c = fixtures::smib(0.0);
  const PowerFlowSolution pf = solve_power_flow(c);
  for (Eigen::Index k = 0; k < pf.voltage.size(); ++k) {
    CHECK(std::abs(pf.voltage(k)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(std::arg(pf.voltage(k))) < 1e-12);
  }
  for (double f : line_flows(c, pf)) CHECK(std::abs(f) < 1e-12);
}

TEST_CASE("two-bus power flow matches the standalone fixed-point solver") {
  SystemCase c = fixtures::two_bus(1.0, 0.0);
  c.lines[0].r = 0.02;
  const PowerFlowSolution pf = solve_power_flow(c);
  const Complex v2 = two_bus_oracle({0.02, 0.1}, {1.0, 0.0});
  CHECK(std::abs(pf.voltage(1) - v2) < 1e-8);
  CHECK(pf.max_mismatch <= 1e-8);
  // Sending-end flow equals load plus I^2 r.
  const double i2 = std::norm((Complex{1.0} - v2) / Complex{0.02, 0.1});
  const std::vector<double> y01 = line_flows(c, pf);
  REQUIRE(y01.size() == 1);
  CHECK(y01[0] == doctest::Approx(1.0 + i2 * 0.02).epsilon(1e-8));
}

TEST_CASE("infeasible transfer does not converge") {
  // Lossless unity-pf limit is V^2 / (2x) = 5 pu, far below 50 pu.
  const double x = 0.1;
  const double p = 50.0;
  // |V2|^4 - |V2|^2 + (p x)^2 = 0 has no real root when 1 - 4 (p x)^2 < 0.
  CHECK(1.0 - 4.0 * (p * x) * (p * x) < 0.0);
  const SystemCase c = fixtures::two_bus(p, 0.0);
  CHECK_THROWS_AS(solve_power_flow(c), ConvergenceError);
}

TEST_CASE("power balance at the desk operating point") {
  const SystemCase c = fixtures::desk_case();
  const PowerFlowSolution pf = solve_power_flow(c);
  double gen = 0.0, load = 0.0, losses = 0.0;
  for (const auto& s : pf.gen_power) gen += s.real();
  for (const auto& ibr : c.ibrs) gen += ibr.p_ref;
  for (const auto& ld : c.loads) load += ld.p;
  for (const auto& f : pf.flows) losses += f.p_from + f.p_to;
  CHECK(std::abs(gen - load - losses) <= 1e-6);
  CHECK(pf.max_mismatch <= 1e-8);
}

TEST_CASE("reduction with nothing to eliminate returns the augmented matrix") {
  SystemCase c = fixtures::two_bus(0.5, 0.1);
  c.ibrs.push_back(fixtures::idle_ibr(1));
  const PowerFlowSolution pf = solve_power_flow(c);
  const ReducedNetwork red = reduce_network(c, pf, NetworkStage::prefault());
  const ComplexMatrix aug = augmented_ybus(c, pf, NetworkStage::prefault());
  const std::vector<int> keep = retained_nodes(c);
  REQUIRE(static_cast<Eigen::Index>(keep.size()) == aug.rows());
  CHECK((red.y - aug(keep, keep)).norm() == 0.0);
}

TEST_CASE("Kron reduction reproduces retained currents of the full network") {
  for (const SystemCase& c : {fixtures::three_machine(), fixtures::desk_case()}) {
    const PowerFlowSolution pf = solve_power_flow(c);
    for (const NetworkStage stage : {NetworkStage::prefault(), NetworkStage::fault_on(c.buses[3].id)}) {
      const ReducedNetwork red = reduce_network(c, pf, stage);
      CHECK(red.y.rows() == c.n_gen() + c.n_dc());
      CHECK((red.y - red.y.transpose()).norm() <= 1e-9 * red.y.norm());
      const ComplexMatrix full = augmented_ybus(c, pf, stage);
      const std::vector<int> keep = retained_nodes(c);
      std::vector<int> drop;
      for (int k = 0; k < full.rows(); ++k) {
        if (std::find(keep.begin(), keep.end(), k) == keep.end()) drop.push_back(k);
      }
      std::mt19937 rng(7);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      ComplexVector vr(static_cast<Eigen::Index>(keep.size()));
      for (auto& v : vr) v = {1.0 + 0.1 * u(rng), 0.3 * u(rng)};
      // Full network: zero injection at eliminated nodes.
      const ComplexVector ve = full(drop, drop).fullPivLu().solve(-full(drop, keep) * vr);
      const ComplexVector i_full = full(keep, keep) * vr + full(keep, drop) * ve;
      const ComplexVector i_red = red.y * vr;
      CHECK((i_full - i_red).norm() <= 1e-10 * i_full.norm());
    }
  }
}

TEST_CASE("fault-on reduction strengthens diagonal dominance near the fault") {
  const SystemCase c = fixtures::desk_case();
  const PowerFlowSolution pf = solve_power_flow(c);
  const ReducedNetwork pre = reduce_network(c, pf, NetworkStage::prefault());
  const ReducedNetwork on = reduce_network(c, pf, NetworkStage::fault_on(5));  // terminal of generator 1
  auto dominance = [](const ComplexMatrix& y, Eigen::Index i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (j != i) off += std::abs(y(i, j));
    }
    return std::abs(y(i, i)) / off;
  };
  CHECK(dominance(on.y, 0) > 10.0 * dominance(pre.y, 0));
}

TEST_CASE("feature flows follow the declared line order") {
  SystemCase c = fixtures::three_machine();
  const PowerFlowSolution pf = solve_power_flow(c);
  const std::vector<double> a = line_flows(c, pf);
  c.feature_lines = {6, 4, 5};
  const std::vector<double> b = line_flows(c, pf);
  CHECK(b[0] == a[2]);
  CHECK(b[1] == a[0]);
  CHECK(b[2] == a[1]);
  c.feature_lines = {42};
  CHECK_THROWS_AS(line_flows(c, pf), InputError);
}

TEST_CASE("case validation rejects broken cases") {
  SystemCase c = fixtures::two_bus();
  c.buses[1].type = BusType::Slack;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = fixtures::two_bus();
  c.generators[0].h = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = fixtures::two_bus();
  c.ibrs.clear();
  CHECK_THROWS_AS(c.validate(), InputError);
  c = fixtures::two_bus();
  c.lines[0].x = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("case JSON round trip") {
  const SystemCase c = fixtures::desk_case();
  const SystemCase back = case_from_json(case_to_json(c));
  CHECK(case_hash(back) == case_hash(c));
  CHECK_THROWS_AS(load_case("/nonexistent/case.json"), InputError);
  try {
    load_case("/nonexistent/case.json");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/case.json") != std::string::npos);
  }
}
