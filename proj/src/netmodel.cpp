#include "tacoord/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "tacoord/errors.hpp"

namespace tacoord {

namespace {

constexpr Complex kJ{0.0, 1.0};

Complex series_admittance(const Line& l) { return 1.0 / Complex{l.r, l.x}; }

}  // namespace

void SystemCase::validate() const {
  if (buses.empty()) throw InputError("case has no buses");
  std::set<int> ids;
  int slack = 0;
  for (const auto& b : buses) {
    if (!ids.insert(b.id).second) throw InputError("duplicate bus id " + std::to_string(b.id));
    if (b.type == BusType::Slack) ++slack;
    if (!(b.v_set > 0.0)) throw InputError("bus " + std::to_string(b.id) + ": non-positive voltage");
  }
  if (slack != 1) throw InputError("case must have exactly one slack bus, found " + std::to_string(slack));

  std::set<int> line_ids;
  for (const auto& l : lines) {
    if (!line_ids.insert(l.id).second) throw InputError("duplicate line id " + std::to_string(l.id));
    bus_index(l.from);
    bus_index(l.to);
    if (l.from == l.to) throw InputError("line " + std::to_string(l.id) + " is a self loop");
    if (!(std::hypot(l.r, l.x) > 0.0)) throw InputError("line " + std::to_string(l.id) + " has zero impedance");
  }

  if (generators.empty()) throw InputError("case has no generators");
  std::set<int> gen_buses;
  for (const auto& g : generators) {
    bus_index(g.bus);
    if (!gen_buses.insert(g.bus).second) throw InputError("more than one generator at bus " + std::to_string(g.bus));
    if (!(g.h > 0.0)) throw InputError("generator at bus " + std::to_string(g.bus) + ": H must be positive");
    if (!(g.xd_prime > 0.0)) throw InputError("generator at bus " + std::to_string(g.bus) + ": x'd must be positive");
    if (g.d < 0.0) throw InputError("generator at bus " + std::to_string(g.bus) + ": negative damping");
  }
  for (const auto& b : buses) {
    if (b.type != BusType::PQ && !gen_buses.contains(b.id)) {
      throw InputError("voltage-controlled bus " + std::to_string(b.id) + " has no generator");
    }
  }
  for (const auto& ld : loads) bus_index(ld.bus);

  if (ibrs.empty()) throw InputError("case needs at least one IBR damping controller");
  std::set<int> ibr_buses;
  for (const auto& ibr : ibrs) {
    bus_index(ibr.bus);
    if (!ibr_buses.insert(ibr.bus).second) throw InputError("more than one IBR at bus " + std::to_string(ibr.bus));
    ibr.dc.validate();
    if (ibr.dc.input_generator < 0 || ibr.dc.input_generator >= n_gen()) {
      throw InputError("IBR at bus " + std::to_string(ibr.bus) + ": input generator out of range");
    }
  }
  for (int id : feature_lines) line_index(id);
  if (reference_generator < 0 || reference_generator >= n_gen()) {
    throw InputError("reference generator index out of range");
  }
  if (!(base_mva > 0.0) || !(nominal_hz > 0.0)) throw InputError("base MVA and nominal frequency must be positive");
}

std::optional<int> SystemCase::find_bus(int id) const {
  for (std::size_t k = 0; k < buses.size(); ++k) {
    if (buses[k].id == id) return static_cast<int>(k);
  }
  return std::nullopt;
}

int SystemCase::bus_index(int id) const {
  if (auto k = find_bus(id)) return *k;
  throw InputError("unknown bus id " + std::to_string(id));
}

int SystemCase::line_index(int id) const {
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (lines[k].id == id) return static_cast<int>(k);
  }
  throw InputError("unknown line id " + std::to_string(id));
}

int SystemCase::slack_index() const {
  for (std::size_t k = 0; k < buses.size(); ++k) {
    if (buses[k].type == BusType::Slack) return static_cast<int>(k);
  }
  throw InputError("case has no slack bus");
}

double SystemCase::synchronous_speed() const { return 2.0 * std::numbers::pi * nominal_hz; }

ComplexMatrix network_ybus(const SystemCase& c) {
  const auto n = static_cast<Eigen::Index>(c.buses.size());
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& l : c.lines) {
    const int f = c.bus_index(l.from);
    const int t = c.bus_index(l.to);
    const Complex ys = series_admittance(l);
    const Complex ysh = kJ * (l.b / 2.0);
    y(f, f) += ys + ysh;
    y(t, t) += ys + ysh;
    y(f, t) -= ys;
    y(t, f) -= ys;
  }
  return y;
}

namespace {

void stamp_loads_and_fault(const SystemCase& c, const NetworkStage& stage,
                           const PowerFlowSolution* pf, ComplexMatrix& y) {
  for (const auto& ld : c.loads) {
    const int k = c.bus_index(ld.bus);
    const double vm = pf ? std::abs(pf->voltage(k)) : 1.0;
    y(k, k) += Complex{ld.p, -ld.q} / (vm * vm);
  }
  if (stage.kind == StageKind::FaultOn) {
    const auto k = c.find_bus(stage.fault_bus);
    if (!k) throw InputError("fault bus " + std::to_string(stage.fault_bus) + " not in case");
    y(*k, *k) += kFaultAdmittance;
  }
}

}  // namespace

ComplexMatrix build_ybus(const SystemCase& c, const NetworkStage& stage, const PowerFlowSolution* pf) {
  ComplexMatrix y = network_ybus(c);
  stamp_loads_and_fault(c, stage, pf, y);
  return y;
}

PowerFlowSolution solve_power_flow(const SystemCase& c, const PowerFlowOptions& opts) {
  c.validate();
  const int n = static_cast<int>(c.buses.size());
  const ComplexMatrix y = network_ybus(c);

  Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(n);
  for (const auto& g : c.generators) p_spec(c.bus_index(g.bus)) += g.pm;
  for (const auto& ibr : c.ibrs) p_spec(c.bus_index(ibr.bus)) += ibr.p_ref;
  for (const auto& ld : c.loads) {
    const int k = c.bus_index(ld.bus);
    p_spec(k) -= ld.p;
    q_spec(k) -= ld.q;
  }

  std::vector<int> pvpq;
  std::vector<int> pq;
  for (int k = 0; k < n; ++k) {
    if (c.buses[k].type != BusType::Slack) pvpq.push_back(k);
    if (c.buses[k].type == BusType::PQ) pq.push_back(k);
  }
  const int npv = static_cast<int>(pvpq.size());
  const int npq = static_cast<int>(pq.size());

  Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd vm(n);
  for (int k = 0; k < n; ++k) vm(k) = c.buses[k].type == BusType::PQ ? 1.0 : c.buses[k].v_set;

  auto voltage = [&] {
    ComplexVector v(n);
    for (int k = 0; k < n; ++k) v(k) = std::polar(vm(k), va(k));
    return v;
  };

  Eigen::VectorXd mismatch(npv + npq);
  auto evaluate = [&](const ComplexVector& v) {
    const ComplexVector s = v.cwiseProduct((y * v).conjugate());
    for (int a = 0; a < npv; ++a) mismatch(a) = s(pvpq[a]).real() - p_spec(pvpq[a]);
    for (int a = 0; a < npq; ++a) mismatch(npv + a) = s(pq[a]).imag() - q_spec(pq[a]);
    return mismatch.size() ? mismatch.cwiseAbs().maxCoeff() : 0.0;
  };

  ComplexVector v = voltage();
  double worst = evaluate(v);
  int iter = 0;
  while (!(worst <= opts.tolerance)) {
    if (iter >= opts.max_iterations || !std::isfinite(worst)) {
      throw ConvergenceError("power flow did not converge after " + std::to_string(iter) +
                                 " iterations (max mismatch " + std::to_string(worst) + " pu)",
                             iter, worst);
    }
    const ComplexVector current = y * v;
    const ComplexVector vnorm = v.cwiseQuotient(vm.cast<Complex>());
    const ComplexMatrix ds_dvm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate() +
                                 ComplexMatrix(current.conjugate().asDiagonal()) * vnorm.asDiagonal();
    ComplexMatrix inner = -(y * v.asDiagonal());
    inner.diagonal() += current;
    const ComplexMatrix ds_dva = kJ * (v.asDiagonal() * inner.conjugate());

    Eigen::MatrixXd jac(npv + npq, npv + npq);
    for (int a = 0; a < npv; ++a) {
      for (int b = 0; b < npv; ++b) jac(a, b) = ds_dva(pvpq[a], pvpq[b]).real();
      for (int b = 0; b < npq; ++b) jac(a, npv + b) = ds_dvm(pvpq[a], pq[b]).real();
    }
    for (int a = 0; a < npq; ++a) {
      for (int b = 0; b < npv; ++b) jac(npv + a, b) = ds_dva(pq[a], pvpq[b]).imag();
      for (int b = 0; b < npq; ++b) jac(npv + a, npv + b) = ds_dvm(pq[a], pq[b]).imag();
    }
    const Eigen::VectorXd dx = jac.partialPivLu().solve(-mismatch);
    for (int a = 0; a < npv; ++a) va(pvpq[a]) += dx(a);
    for (int a = 0; a < npq; ++a) vm(pq[a]) += dx(npv + a);
    ++iter;
    v = voltage();
    worst = evaluate(v);
  }

  PowerFlowSolution sol;
  sol.voltage = v;
  sol.iterations = iter;
  sol.max_mismatch = worst;

  const ComplexVector s = v.cwiseProduct((y * v).conjugate());
  for (const auto& g : c.generators) {
    const int k = c.bus_index(g.bus);
    Complex sg = s(k);
    for (const auto& ld : c.loads) {
      if (ld.bus == g.bus) sg += Complex{ld.p, ld.q};
    }
    for (const auto& ibr : c.ibrs) {
      if (ibr.bus == g.bus) sg -= ibr.p_ref;
    }
    sol.gen_power.push_back(sg);
  }

  for (const auto& l : c.lines) {
    const Complex vf = v(c.bus_index(l.from));
    const Complex vt = v(c.bus_index(l.to));
    const Complex ys = series_admittance(l);
    const Complex ysh = kJ * (l.b / 2.0);
    const Complex sf = vf * std::conj((vf - vt) * ys + vf * ysh);
    const Complex st = vt * std::conj((vt - vf) * ys + vt * ysh);
    sol.flows.push_back({sf.real(), sf.imag(), st.real(), st.imag()});
  }
  return sol;
}

ComplexMatrix augmented_ybus(const SystemCase& c, const PowerFlowSolution& pf, const NetworkStage& stage) {
  const auto nb = static_cast<Eigen::Index>(c.buses.size());
  const auto ng = static_cast<Eigen::Index>(c.generators.size());
  ComplexMatrix y = ComplexMatrix::Zero(nb + ng, nb + ng);
  y.topLeftCorner(nb, nb) = build_ybus(c, stage, &pf);
  for (Eigen::Index g = 0; g < ng; ++g) {
    const int k = c.bus_index(c.generators[g].bus);
    const Complex yg = 1.0 / Complex{0.0, c.generators[g].xd_prime};
    y(nb + g, nb + g) += yg;
    y(k, k) += yg;
    y(nb + g, k) -= yg;
    y(k, nb + g) -= yg;
  }
  return y;
}

std::vector<int> retained_nodes(const SystemCase& c) {
  std::vector<int> keep;
  const int nb = static_cast<int>(c.buses.size());
  for (int g = 0; g < c.n_gen(); ++g) keep.push_back(nb + g);
  for (const auto& ibr : c.ibrs) keep.push_back(c.bus_index(ibr.bus));
  return keep;
}

ReducedNetwork reduce_network(const SystemCase& c, const PowerFlowSolution& pf, const NetworkStage& stage) {
  const ComplexMatrix y = augmented_ybus(c, pf, stage);
  const std::vector<int> keep = retained_nodes(c);
  std::vector<int> drop;
  for (int k = 0; k < y.rows(); ++k) {
    if (std::find(keep.begin(), keep.end(), k) == keep.end()) drop.push_back(k);
  }
  const auto nd = static_cast<Eigen::Index>(drop.size());

  ComplexMatrix ykk = y(keep, keep);
  if (nd > 0) {
    const ComplexMatrix ykd = y(keep, drop);
    const ComplexMatrix ydk = y(drop, keep);
    const ComplexMatrix ydd = y(drop, drop);
    Eigen::FullPivLU<ComplexMatrix> lu(ydd);
    if (!lu.isInvertible()) throw DomainError("Kron reduction: eliminated sub-block is singular");
    ykk -= ykd * lu.solve(ydk);
  }

  ReducedNetwork red;
  red.y = ykk;
  red.stage = stage;
  red.n_gen = c.n_gen();
  red.n_ibr = c.n_dc();
  for (int g = 0; g < c.n_gen(); ++g) red.labels.push_back("gen" + std::to_string(g + 1) + "_internal");
  for (const auto& ibr : c.ibrs) red.labels.push_back("ibr_bus" + std::to_string(ibr.bus));
  return red;
}

std::vector<double> line_flows(const SystemCase& c, const PowerFlowSolution& pf) {
  if (c.feature_lines.empty()) throw InputError("case declares no feature lines");
  std::vector<double> out;
  out.reserve(c.feature_lines.size());
  for (int id : c.feature_lines) out.push_back(pf.flows.at(c.line_index(id)).p_from);
  return out;
}

}  // namespace tacoord
