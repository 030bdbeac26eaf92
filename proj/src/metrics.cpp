#include "tacoord/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tacoord/errors.hpp"

namespace tacoord {

double coi_speed(std::span<const double> speeds, std::span<const double> inertia) {
  if (speeds.empty()) throw InputError("coi_speed: empty input");
  if (speeds.size() != inertia.size()) throw InputError("coi_speed: dimension mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < speeds.size(); ++j) {
    if (!(inertia[j] > 0.0)) throw InputError("coi_speed: inertia must be positive");
    num += inertia[j] * speeds[j];
    den += inertia[j];
  }
  return num / den;
}

EnergySeries oscillation_energy(const Trajectory& traj, const SystemCase& c) {
  return oscillation_energy(traj, c, traj.time.empty() ? 0.0 : traj.time.front());
}

EnergySeries oscillation_energy(const Trajectory& traj, const SystemCase& c, double t0) {
  const auto ng = traj.omega.cols();
  if (ng < 1) throw InputError("oscillation_energy: trajectory has no generators");
  if (ng != c.n_gen()) throw InputError("oscillation_energy: trajectory does not match case");

  EnergySeries out;
  out.time = traj.time;
  out.synchronous_speed = c.synchronous_speed();
  out.t0 = t0;
  for (const auto& g : c.generators) out.inertia.push_back(g.h);
  out.energy.resize(traj.samples());

  std::vector<double> w(ng);
  for (std::size_t k = 0; k < traj.samples(); ++k) {
    for (Eigen::Index j = 0; j < ng; ++j) w[j] = traj.omega(static_cast<Eigen::Index>(k), j);
    const double coi = coi_speed(w, out.inertia);
    double e = 0.0;
    for (Eigen::Index j = 0; j < ng; ++j) {
      const double dw = w[j] - coi;
      e += out.inertia[j] * out.synchronous_speed * dw * dw;
    }
    out.energy[k] = e;
  }
  return out;
}

std::string EnergySeries::csv() const {
  std::string out = "time,E\n";
  for (std::size_t k = 0; k < time.size(); ++k) out += fmt::format("{},{}\n", time[k], energy[k]);
  return out;
}

std::string EnergySeries::normalized_csv() const {
  const auto it = std::lower_bound(time.begin(), time.end(), t0 - 1e-12);
  if (it == time.end()) throw DomainError("energy series ends before its reference time");
  const double ref = energy[static_cast<std::size_t>(it - time.begin())];
  if (!(ref > 0.0)) throw DomainError("oscillation energy is zero at the reference time");
  std::string out = "time,E,E_normalized\n";
  for (std::size_t k = 0; k < time.size(); ++k) out += fmt::format("{},{},{}\n", time[k], energy[k], energy[k] / ref);
  return out;
}

namespace {

double interpolate(const EnergySeries& s, std::size_t k, double t) {
  const double t0 = s.time[k];
  const double t1 = s.time[k + 1];
  const double a = (t - t0) / (t1 - t0);
  return s.energy[k] + a * (s.energy[k + 1] - s.energy[k]);
}

// Trapezoidal integral of the piecewise-linear interpolant over [a, b].
double integrate(const EnergySeries& s, double a, double b) {
  const auto& t = s.time;
  if (t.size() < 2 || b <= a) return 0.0;
  const double eps = 1e-9 * std::max(1.0, std::abs(t.back()));
  if (a < t.front() - eps || b > t.back() + eps) {
    throw InputError(fmt::format("action window [{}, {}] outside series [{}, {}]", a, b, t.front(), t.back()));
  }
  a = std::max(a, t.front());
  b = std::min(b, t.back());
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double lo = std::max(a, t[k]);
    const double hi = std::min(b, t[k + 1]);
    if (hi <= lo) continue;
    const bool whole = lo == t[k] && hi == t[k + 1];
    const double elo = whole ? s.energy[k] : interpolate(s, k, lo);
    const double ehi = whole ? s.energy[k + 1] : interpolate(s, k, hi);
    sum += 0.5 * (elo + ehi) * (hi - lo);
  }
  return sum;
}

}  // namespace

double action(const EnergySeries& series, double tau) {
  if (!(tau > 0.0)) throw InputError("action: horizon must be positive");
  return integrate(series, series.t0, series.t0 + tau);
}

TotalAction total_action(const EnergySeries& series, const TotalActionOptions& opts) {
  if (series.time.empty()) throw InputError("total_action: empty series");
  const double t_end = series.time.back();
  if (t_end - series.t0 < 1.0 - 1e-9) throw InputError("total_action: series must span at least 1 s beyond t0");

  TotalAction out;
  out.value = integrate(series, series.t0, t_end);
  const double tail_start = std::max(series.t0, t_end - opts.tail_window);
  const double tail = integrate(series, tail_start, t_end);
  out.tail_fraction = out.value > 0.0 ? tail / out.value : 0.0;
  out.converged = !(out.tail_fraction > opts.tail_tolerance) && std::isfinite(out.value);

  // Growth: the last window carries more action than the one before it.
  const double prev_start = std::max(series.t0, tail_start - opts.tail_window);
  const double prev = integrate(series, prev_start, tail_start);
  out.growing = tail_start > prev_start && tail > prev * (1.0 + 1e-9) && tail > 0.0 &&
                (tail_start - prev_start) >= opts.tail_window - 1e-9;
  if (out.growing) out.converged = false;
  return out;
}

}  // namespace tacoord
