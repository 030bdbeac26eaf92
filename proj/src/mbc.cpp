#include "tacoord/mbc.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tacoord/errors.hpp"

namespace tacoord {

namespace {

// The linearization needs the network solved far below the simulation
// tolerance, otherwise the finite differences pick up solver noise.
constexpr NetworkSolveOptions kExactNetwork{500, 1e-15, 0.5};

int deviation_size(const StateLayout& lay) { return 2 * lay.n_gen - 1 + 2 * lay.n_dc; }

Eigen::VectorXd to_full(const DynamicModel& model, const Eigen::VectorXd& dev, int ref) {
  const auto& lay = model.layout;
  Eigen::VectorXd x = model.equilibrium;
  const double dref = model.equilibrium(lay.delta(ref));
  int r = 0;
  for (int g = 0; g < lay.n_gen; ++g) {
    if (g == ref) continue;
    x(lay.delta(g)) = dref + (model.equilibrium(lay.delta(g)) - dref) + dev(r++);
  }
  for (int g = 0; g < lay.n_gen; ++g) x(lay.omega(g)) = 1.0 + dev(r++);
  for (int k = 0; k < 2 * lay.n_dc; ++k) x(2 * lay.n_gen + k) = dev(r++);
  return x;
}

}  // namespace

Eigen::VectorXd to_deviation(const DynamicModel& model, const Eigen::VectorXd& state, int ref) {
  const auto& lay = model.layout;
  if (state.size() != lay.size()) throw InputError("to_deviation: state dimension mismatch");
  Eigen::VectorXd dev(deviation_size(lay));
  const double eq_ref = model.equilibrium(lay.delta(ref));
  int r = 0;
  for (int g = 0; g < lay.n_gen; ++g) {
    if (g == ref) continue;
    const double rel = state(lay.delta(g)) - state(lay.delta(ref));
    const double rel_eq = model.equilibrium(lay.delta(g)) - eq_ref;
    dev(r++) = rel - rel_eq;
  }
  for (int g = 0; g < lay.n_gen; ++g) dev(r++) = state(lay.omega(g)) - 1.0;
  for (int k = 0; k < 2 * lay.n_dc; ++k) dev(r++) = state(2 * lay.n_gen + k);
  return dev;
}

Eigen::VectorXd reduced_rates(const DynamicModel& model, std::span<const double> qhat, const Eigen::VectorXd& dev,
                              int ref) {
  const auto& lay = model.layout;
  NetworkWorkspace ws{model.ibr_voltage0};
  const RateEvaluation ev = derivatives(model, model.prefault, to_full(model, dev, ref), qhat, ws, kExactNetwork);
  Eigen::VectorXd out(dev.size());
  int r = 0;
  for (int g = 0; g < lay.n_gen; ++g) {
    if (g == ref) continue;
    out(r++) = ev.rates(lay.delta(g)) - ev.rates(lay.delta(ref));
  }
  for (int g = 0; g < lay.n_gen; ++g) out(r++) = ev.rates(lay.omega(g));
  for (int k = 0; k < 2 * lay.n_dc; ++k) out(r++) = ev.rates(2 * lay.n_gen + k);
  return out;
}

Eigen::MatrixXd energy_form(const SystemCase& c, int ref) {
  const int ng = c.n_gen();
  const int n = 2 * ng - 1 + 2 * c.n_dc();
  (void)ref;
  double h_sum = 0.0;
  for (const auto& g : c.generators) h_sum += g.h;
  // Speed block: P^T W P with P = I - 1 h^T / sum(h), W = diag(H ws).
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(ng, ng);
  for (int i = 0; i < ng; ++i) {
    for (int j = 0; j < ng; ++j) p(i, j) -= c.generators[j].h / h_sum;
  }
  Eigen::VectorXd w(ng);
  for (int j = 0; j < ng; ++j) w(j) = c.generators[j].h * c.synchronous_speed();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  q.block(ng - 1, ng - 1, ng, ng) = p.transpose() * w.asDiagonal() * p;
  return q;
}

LinearModel linearize(const DynamicModel& model, std::span<const double> qhat, const LinearizeOptions& opts) {
  const auto& c = model.system;
  const auto& lay = model.layout;
  if (static_cast<int>(qhat.size()) != lay.n_dc) throw InputError("linearize: relaxed gain vector has wrong length");
  for (double v : qhat) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("linearize: relaxed gains must lie in [0, 1]");
  }
  const int ref = c.reference_generator;
  const int n = deviation_size(lay);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd f0 = reduced_rates(model, qhat, zero, ref);
  if (f0.cwiseAbs().maxCoeff() > opts.equilibrium_tolerance) {
    throw DomainError(fmt::format("linearize: operating point is not an equilibrium (max rate {:.3e})",
                                  f0.cwiseAbs().maxCoeff()));
  }

  LinearModel lm;
  lm.a.resize(n, n);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd xp = zero;
    Eigen::VectorXd xm = zero;
    xp(k) += opts.perturbation;
    xm(k) -= opts.perturbation;
    lm.a.col(k) = (reduced_rates(model, qhat, xp, ref) - reduced_rates(model, qhat, xm, ref)) /
                  (2.0 * opts.perturbation);
  }
  if (!lm.a.allFinite()) throw DomainError("linearize: non-finite Jacobian entry");
  lm.q = energy_form(c, ref);
  lm.equilibrium = model.equilibrium;
  lm.qhat.assign(qhat.begin(), qhat.end());
  lm.reference = ref;
  for (int g = 0; g < lay.n_gen; ++g) {
    if (g != ref) lm.labels.push_back(fmt::format("gen{}_delta_rel", g + 1));
  }
  for (int g = 0; g < lay.n_gen; ++g) lm.labels.push_back(fmt::format("gen{}_omega", g + 1));
  for (int l = 0; l < lay.n_dc; ++l) {
    lm.labels.push_back(fmt::format("dc{}_washout", l + 1));
    lm.labels.push_back(fmt::format("dc{}_leadlag", l + 1));
  }
  return lm;
}

nlohmann::json LinearModel::to_json() const {
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(m.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["labels"] = labels;
  j["qhat"] = qhat;
  j["reference_generator"] = reference;
  j["A"] = matrix(a);
  j["Q"] = matrix(q);
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  nlohmann::json eig = nlohmann::json::array();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    eig.push_back({es.eigenvalues()(i).real(), es.eigenvalues()(i).imag()});
  }
  j["eigenvalues"] = eig;
  return j;
}

EigenDecomp eigen_decompose(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q, const Eigen::VectorXd& x0) {
  if (a.rows() != a.cols() || q.rows() != a.rows() || q.cols() != a.cols() || x0.size() != a.rows()) {
    throw InputError("eigen_decompose: dimension mismatch");
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw DomainError("eigen_decompose: eigensolver failed");
  EigenDecomp d;
  d.lambda = es.eigenvalues();
  d.m = es.eigenvectors();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(d.m);
  if (!lu.isInvertible()) throw DomainError("eigen_decompose: defective eigenvector matrix");
  d.z0 = lu.solve(x0.cast<std::complex<double>>());
  d.g = d.m.transpose() * q.cast<std::complex<double>>() * d.m;
  return d;
}

EigenTaResult eigen_ta_detail(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q, const Eigen::VectorXd& x0) {
  EigenTaResult out;
  if (x0.size() == a.rows() && x0.isZero(0.0)) {
    out.decomp.lambda = Eigen::VectorXcd::Zero(0);
    return out;
  }
  out.decomp = eigen_decompose(a, q, x0);
  const auto& d = out.decomp;
  const auto n = d.lambda.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(d.lambda(i).real() < -1e-9)) {
      throw DomainError(fmt::format("eigen_ta: unstable or marginal mode {:.6g}{:+.6g}j", d.lambda(i).real(),
                                    d.lambda(i).imag()));
    }
  }
  std::complex<double> sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::complex<double> den = d.lambda(i) + d.lambda(j);
      if (std::abs(den) < 1e-12) throw DomainError("eigen_ta: resonant denominator");
      sum -= d.z0(i) * d.z0(j) * d.g(i, j) / den;
    }
  }
  out.value = sum.real();
  out.imag_residue = std::abs(sum.imag());
  return out;
}

double eigen_ta(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q, const Eigen::VectorXd& x0) {
  return eigen_ta_detail(a, q, x0).value;
}

double eigen_ta(const LinearModel& lm, const Eigen::VectorXd& x0) { return eigen_ta(lm.a, lm.q, x0); }

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q) {
  const auto n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n) throw InputError("solve_lyapunov: dimension mismatch");
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd at = a.transpose();
  // vec(A^T P) = (I (x) A^T) vec(P), vec(P A) = (A^T (x) I) vec(P).
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) += id(i, j) * at;
      k.block(i * n, j * n, n, n) += at(i, j) * id;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  if (!lu.isInvertible()) throw DomainError("solve_lyapunov: Kronecker system is singular");
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
  const Eigen::VectorXd vec_p = lu.solve(rhs);
  Eigen::MatrixXd p = Eigen::Map<const Eigen::MatrixXd>(vec_p.data(), n, n);
  return 0.5 * (p + p.transpose());
}

std::vector<double> tas(const DynamicModel& model, std::span<const double> qhat0, const Eigen::VectorXd& x0,
                        const TasOptions& opts) {
  const int nc = model.layout.n_dc;
  if (static_cast<int>(qhat0.size()) != nc) throw InputError("tas: relaxed gain vector has wrong length");
  std::vector<double> out(nc);
  std::vector<double> q(qhat0.begin(), qhat0.end());
  for (int l = 0; l < nc; ++l) {
    const double lo = std::max(0.0, qhat0[l] - opts.step);
    const double hi = std::min(1.0, qhat0[l] + opts.step);
    q[l] = hi;
    const double s_hi = eigen_ta(linearize(model, q, opts.linearize), x0);
    q[l] = lo;
    const double s_lo = eigen_ta(linearize(model, q, opts.linearize), x0);
    q[l] = qhat0[l];
    out[l] = (s_hi - s_lo) / (hi - lo);
  }
  return out;
}

std::vector<int> mbc_switching(std::span<const double> sensitivities, std::span<const int> current) {
  if (sensitivities.size() != current.size()) throw InputError("mbc_switching: dimension mismatch");
  std::vector<int> out(current.begin(), current.end());
  for (std::size_t l = 0; l < sensitivities.size(); ++l) {
    if (sensitivities[l] < 0.0) out[l] = 1;
    else if (sensitivities[l] > 0.0) out[l] = 0;
  }
  return out;
}

}  // namespace tacoord
