#include "tacoord/dynamics.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "tacoord/errors.hpp"
#include "tacoord/metrics.hpp"

namespace tacoord {

void EventSchedule::validate(int n_dc) const {
  // t_activate may lie beyond t_end: the switching vector is then never applied.
  if (!(t_fault < t_clear && t_clear <= t_activate)) {
    throw InputError("event schedule must satisfy t_fault < t_clear <= t_activate");
  }
  if (!(t_end > 0.0)) throw InputError("event schedule: end time must be positive");
  if (!gamma.empty() && static_cast<int>(gamma.size()) != n_dc) {
    throw InputError(fmt::format("switching vector has {} entries, case has {} DCs", gamma.size(), n_dc));
  }
  if (!initial_gamma.empty() && static_cast<int>(initial_gamma.size()) != n_dc) {
    throw InputError("initial switching vector has wrong length");
  }
  for (int q : gamma) {
    if (q != 0 && q != 1) throw InputError("switching vector entries must be 0 or 1");
  }
  for (int q : initial_gamma) {
    if (q != 0 && q != 1) throw InputError("switching vector entries must be 0 or 1");
  }
}

std::vector<std::string> StateLayout::labels() const {
  std::vector<std::string> out;
  for (int g = 0; g < n_gen; ++g) out.push_back(fmt::format("gen{}_delta", g + 1));
  for (int g = 0; g < n_gen; ++g) out.push_back(fmt::format("gen{}_omega", g + 1));
  for (int l = 0; l < n_dc; ++l) {
    out.push_back(fmt::format("dc{}_washout", l + 1));
    out.push_back(fmt::format("dc{}_leadlag", l + 1));
  }
  return out;
}

PreparedNetwork::PreparedNetwork(ReducedNetwork red) : reduced(std::move(red)) {
  const int ng = reduced.n_gen;
  const int ni = reduced.n_ibr;
  y_gg = reduced.y.topLeftCorner(ng, ng);
  y_gi = reduced.y.topRightCorner(ng, ni);
  const ComplexMatrix y_ii = reduced.y.bottomRightCorner(ni, ni);
  Eigen::FullPivLU<ComplexMatrix> lu(y_ii);
  if (!lu.isInvertible()) throw DomainError("IBR admittance block is singular");
  y_ii_inv = lu.inverse();
  y_ii_inv_y_ig = y_ii_inv * reduced.y.bottomLeftCorner(ni, ng);
}

PreparedNetwork DynamicModel::network(const NetworkStage& stage) const {
  return PreparedNetwork(reduce_network(system, power_flow, stage));
}

DynamicModel build_dynamic_model(const SystemCase& c, const PowerFlowSolution& pf) {
  c.validate();
  const int ng = c.n_gen();
  const int nc = c.n_dc();
  StateLayout layout{ng, nc};
  Eigen::VectorXd emf(ng), pm(ng);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout.size());
  for (int g = 0; g < ng; ++g) {
    const Complex v = pf.voltage(c.bus_index(c.generators[g].bus));
    const Complex s = pf.gen_power[g];
    const Complex i = std::conj(s / v);
    const Complex e = v + Complex{0.0, c.generators[g].xd_prime} * i;
    emf(g) = std::abs(e);
    pm(g) = s.real();
    x(layout.delta(g)) = std::arg(e);
    x(layout.omega(g)) = 1.0;
  }
  ComplexVector v0(nc);
  for (int l = 0; l < nc; ++l) v0(l) = pf.voltage(c.bus_index(c.ibrs[l].bus));

  return DynamicModel{c, pf, layout, emf, pm, x, v0,
                      PreparedNetwork(reduce_network(c, pf, NetworkStage::prefault()))};
}

namespace {

Complex ibr_current(double p, Complex v, double v_low) {
  const double vm = std::abs(v);
  if (vm >= v_low) return p / std::conj(v);
  return p * v / (v_low * v_low);
}

}  // namespace

RateEvaluation derivatives(const DynamicModel& model, const PreparedNetwork& net, const Eigen::VectorXd& x,
                           std::span<const double> q, NetworkWorkspace& ws, const NetworkSolveOptions& opts) {
  const auto& c = model.system;
  const auto& lay = model.layout;
  const int ng = lay.n_gen;
  const int nc = lay.n_dc;
  if (x.size() != lay.size() || static_cast<int>(q.size()) != nc) {
    throw InputError("derivatives: state or switch vector has wrong dimension");
  }

  double h_sum = 0.0;
  double h_omega = 0.0;
  for (int g = 0; g < ng; ++g) {
    h_sum += c.generators[g].h;
    h_omega += c.generators[g].h * x(lay.omega(g));
  }
  const double omega_coi = h_omega / h_sum;

  RateEvaluation out;
  out.rates.resize(lay.size());
  Eigen::VectorXd p_ref(nc);
  for (int l = 0; l < nc; ++l) {
    const auto& dc = c.ibrs[l].dc;
    const DcState st{x(lay.washout(l)), x(lay.leadlag(l))};
    const double u = x(lay.omega(dc.input_generator)) - omega_coi;
    const DcRates r = dc_derivatives(dc, st, u);
    out.rates(lay.washout(l)) = r.washout;
    out.rates(lay.leadlag(l)) = r.leadlag;
    p_ref(l) = compose_reference_relaxed(dc_output(dc, st, u), q[l], c.ibrs[l].p_ref);
  }

  ComplexVector e(ng);
  for (int g = 0; g < ng; ++g) e(g) = std::polar(model.emf(g), x(lay.delta(g)));

  if (ws.ibr_voltage.size() != nc) ws.ibr_voltage = model.ibr_voltage0;
  const ComplexVector base = -(net.y_ii_inv_y_ig * e);
  ComplexVector v = ws.ibr_voltage;
  ComplexVector inj(nc);
  int iter = 0;
  double change = 0.0;
  for (;;) {
    for (int l = 0; l < nc; ++l) inj(l) = ibr_current(p_ref(l), v(l), opts.ibr_low_voltage);
    ComplexVector next = base + net.y_ii_inv * inj;
    change = (next - v).cwiseAbs().maxCoeff();
    v = next;
    ++iter;
    if (change <= opts.tolerance) break;
    if (iter >= opts.max_iterations || !std::isfinite(change)) {
      throw ConvergenceError(fmt::format("IBR network solve did not converge ({} iterations, step {:.3e})",
                                         iter, change),
                             iter, change);
    }
  }
  for (int l = 0; l < nc; ++l) inj(l) = ibr_current(p_ref(l), v(l), opts.ibr_low_voltage);
  ws.ibr_voltage = v;

  const ComplexVector i_gen = net.y_gg * e + net.y_gi * v;
  out.pe.resize(ng);
  const double ws_rad = c.synchronous_speed();
  for (int g = 0; g < ng; ++g) {
    const auto& gen = c.generators[g];
    const double pe = (e(g) * std::conj(i_gen(g))).real();
    const double slip = x(lay.omega(g)) - 1.0;
    out.pe(g) = pe;
    out.rates(lay.delta(g)) = ws_rad * slip;
    out.rates(lay.omega(g)) = (model.pm(g) - pe - gen.d * slip) / (2.0 * gen.h);
  }
  out.ibr_p.resize(nc);
  for (int l = 0; l < nc; ++l) out.ibr_p(l) = (v(l) * std::conj(inj(l))).real();
  out.ibr_voltage = v;
  out.iterations = iter;
  return out;
}

std::size_t Trajectory::index_of(double t) const {
  if (time.empty()) throw InputError("empty trajectory");
  const double k = std::round((t - time.front()) / step);
  if (k < 0.0 || k > static_cast<double>(time.size() - 1)) {
    throw InputError(fmt::format("time {} outside trajectory [{}, {}]", t, time.front(), time.back()));
  }
  return static_cast<std::size_t>(k);
}

Eigen::VectorXd Trajectory::state(std::size_t k) const {
  const auto ng = delta.cols();
  const auto nd = dc_state.cols();
  Eigen::VectorXd x(2 * ng + nd);
  x.head(ng) = delta.row(k).transpose();
  x.segment(ng, ng) = omega.row(k).transpose();
  x.tail(nd) = dc_state.row(k).transpose();
  return x;
}

namespace {

long snap(double t, double h) { return std::lround(t / h); }

}  // namespace

Trajectory simulate(const DynamicModel& model, const EventSchedule& events, const SimulationOptions& opts) {
  const auto& lay = model.layout;
  const int ng = lay.n_gen;
  const int nc = lay.n_dc;
  events.validate(nc);
  if (!(opts.step > 0.0)) throw InputError("simulation step must be positive");

  const double h = opts.step;
  const long n_steps = snap(events.t_end, h);
  const long i_fault = events.fault_bus ? snap(events.t_fault, h) : n_steps + 1;
  const long i_clear = events.fault_bus ? snap(events.t_clear, h) : n_steps + 1;
  const long i_act = events.t_activate <= events.t_end ? snap(events.t_activate, h) : n_steps + 1;

  const PreparedNetwork& pre = model.prefault;
  std::optional<PreparedNetwork> faulted;
  std::optional<PreparedNetwork> post;
  if (events.fault_bus) {
    faulted.emplace(model.network(NetworkStage::fault_on(*events.fault_bus)));
    post.emplace(model.network(NetworkStage::postfault()));
  }

  std::vector<double> q_before(nc, 0.0);
  std::vector<double> q_after(nc, 0.0);
  for (int l = 0; l < nc; ++l) {
    if (!events.initial_gamma.empty()) q_before[l] = events.initial_gamma[l];
    q_after[l] = events.gamma.empty() ? q_before[l] : events.gamma[l];
  }

  NetworkSolveOptions nopts{opts.network_max_iterations, opts.network_tolerance, opts.ibr_low_voltage};

  Trajectory traj;
  traj.step = h;
  const auto n_samples = static_cast<Eigen::Index>(n_steps + 1);
  traj.time.resize(n_samples);
  traj.delta.resize(n_samples, ng);
  traj.omega.resize(n_samples, ng);
  traj.dc_state.resize(n_samples, 2 * nc);
  traj.ibr_p.resize(n_samples, nc);
  traj.ibr_v.resize(n_samples, nc);
  traj.events = {events.t_fault, events.t_clear, events.t_activate, events.t_end, events.fault_bus, events.gamma};

  Eigen::VectorXd x = model.equilibrium;
  NetworkWorkspace ws{model.ibr_voltage0};

  for (long n = 0; n <= n_steps; ++n) {
    const PreparedNetwork& net = (n >= i_fault && n < i_clear) ? *faulted : (n >= i_clear ? *post : pre);
    const std::span<const double> q = n >= i_act ? std::span<const double>(q_after) : std::span<const double>(q_before);
    const double t = static_cast<double>(n) * h;

    const RateEvaluation k1 = derivatives(model, net, x, q, ws, nopts);
    traj.time[n] = t;
    traj.delta.row(n) = x.head(ng).transpose();
    traj.omega.row(n) = x.segment(ng, ng).transpose();
    traj.dc_state.row(n) = x.tail(2 * nc).transpose();
    traj.ibr_p.row(n) = k1.ibr_p.transpose();
    traj.ibr_v.row(n) = k1.ibr_voltage.cwiseAbs().transpose();
    if (n == n_steps) break;

    const Eigen::VectorXd k2 = derivatives(model, net, x + 0.5 * h * k1.rates, q, ws, nopts).rates;
    const Eigen::VectorXd k3 = derivatives(model, net, x + 0.5 * h * k2, q, ws, nopts).rates;
    const Eigen::VectorXd k4 = derivatives(model, net, x + h * k3, q, ws, nopts).rates;
    x += (h / 6.0) * (k1.rates + 2.0 * k2 + 2.0 * k3 + k4);

    if (!x.allFinite() || x.head(ng).cwiseAbs().maxCoeff() > 1e4) {
      throw InstabilityError(fmt::format("simulation blew up at t = {:.3f} s", t + h), t + h);
    }
  }
  return traj;
}

std::vector<double> snapshot_features(const Trajectory& traj, const SystemCase& c, double t) {
  const std::size_t k = traj.index_of(t);
  const double ref = traj.omega(static_cast<Eigen::Index>(k), c.reference_generator);
  std::vector<double> out(traj.omega.cols());
  for (Eigen::Index g = 0; g < traj.omega.cols(); ++g) out[g] = traj.omega(static_cast<Eigen::Index>(k), g) - ref;
  return out;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "time";
  const auto ng = traj.delta.cols();
  const auto nc = traj.ibr_p.cols();
  for (Eigen::Index g = 0; g < ng; ++g) out += fmt::format(",gen{0}_delta,gen{0}_omega", g + 1);
  for (Eigen::Index l = 0; l < nc; ++l) out += fmt::format(",ibr{}_p", l + 1);
  out += '\n';
  for (std::size_t k = 0; k < traj.samples(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    out += fmt::format("{}", traj.time[k]);
    for (Eigen::Index g = 0; g < ng; ++g) out += fmt::format(",{},{}", traj.delta(r, g), traj.omega(r, g));
    for (Eigen::Index l = 0; l < nc; ++l) out += fmt::format(",{}", traj.ibr_p(r, l));
    out += '\n';
  }
  return out;
}

std::string trajectory_events_json(const Trajectory& traj) {
  nlohmann::json j;
  j["step"] = traj.step;
  j["t_fault"] = traj.events.t_fault;
  j["t_clear"] = traj.events.t_clear;
  j["t_activate"] = traj.events.t_activate;
  j["t_end"] = traj.events.t_end;
  j["fault_bus"] = traj.events.fault_bus ? nlohmann::json(*traj.events.fault_bus) : nlohmann::json(nullptr);
  j["gamma"] = traj.events.gamma;
  return j.dump(2);
}

}  // namespace tacoord
