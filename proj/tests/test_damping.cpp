#include <doctest.h>

#include <cmath>
#include <complex>
#include <functional>

#include "tacoord/damping.hpp"
#include "tacoord/errors.hpp"

using namespace tacoord;

namespace {

// Classical RK4 on the two filter states with an input u(t).
DcState integrate(const DcConfig& cfg, DcState s, const std::function<double(double)>& u, double t_end, double h) {
  const auto n = static_cast<long>(std::lround(t_end / h));
  for (long k = 0; k < n; ++k) {
    const double t = k * h;
    auto f = [&](const DcState& x, double tt) { return dc_derivatives(cfg, x, u(tt)); };
    auto add = [](DcState x, const DcRates& r, double a) {
      x.washout += a * r.washout;
      x.leadlag += a * r.leadlag;
      return x;
    };
    const DcRates k1 = f(s, t);
    const DcRates k2 = f(add(s, k1, h / 2), t + h / 2);
    const DcRates k3 = f(add(s, k2, h / 2), t + h / 2);
    const DcRates k4 = f(add(s, k3, h), t + h);
    s.washout += h / 6 * (k1.washout + 2 * k2.washout + 2 * k3.washout + k4.washout);
    s.leadlag += h / 6 * (k1.leadlag + 2 * k2.leadlag + 2 * k3.leadlag + k4.leadlag);
  }
  return s;
}

DcConfig config(double gain, double tw, double t1, double t2, double p_max = 1e9) {
  DcConfig c;
  c.gain = gain;
  c.tw = tw;
  c.t1 = t1;
  c.t2 = t2;
  c.p_max = p_max;
  return c;
}

}  // namespace

TEST_CASE("zero state and zero input give zero rates and output") {
  const DcConfig cfg = config(-50.0, 10.0, 0.2, 0.05, 1.0);
  const DcRates r = dc_derivatives(cfg, {}, 0.0);
  CHECK(r.washout == 0.0);
  CHECK(r.leadlag == 0.0);
  CHECK(dc_output(cfg, {}, 0.0) == 0.0);
}

TEST_CASE("equal lead and lag reduce to the washout step response") {
  const DcConfig cfg = config(3.0, 2.0, 0.1, 0.1);
  const double h = 1e-3;
  for (double t : {0.5, 1.0, 3.0}) {
    const DcState s = integrate(cfg, {}, [](double) { return 1.0; }, t, h);
    CHECK(dc_raw_output(cfg, s, 1.0) == doctest::Approx(3.0 * std::exp(-t / 2.0)).epsilon(1e-8));
  }
}

TEST_CASE("sinusoidal steady state matches the transfer function") {
  const DcConfig cfg = config(2.0, 10.0, 0.2, 0.05);
  const double f = 0.5;
  const double w = 2.0 * M_PI * f;
  const double h = 1e-3;
  auto u = [w](double t) { return std::sin(w * t); };
  // Let the washout transient die out, then project one more period.
  DcState s = integrate(cfg, {}, u, 200.0, h);
  double a = 0.0, b = 0.0;
  const int n = static_cast<int>(std::lround(1.0 / f / h));
  for (int k = 0; k < n; ++k) {
    const double t = 200.0 + k * h;
    const double y = dc_raw_output(cfg, s, u(t));
    a += y * std::sin(w * t) * h * 2.0 * f;
    b += y * std::cos(w * t) * h * 2.0 * f;
    s = integrate(cfg, s, [&](double tt) { return u(t + tt); }, h, h);
  }
  const std::complex<double> jw{0.0, w};
  const std::complex<double> tf =
      cfg.gain * (jw * cfg.tw / (1.0 + jw * cfg.tw)) * ((1.0 + jw * cfg.t1) / (1.0 + jw * cfg.t2));
  // y = |H| sin(wt + phi) = Re(H) sin + Im(H) cos
  CHECK(a == doctest::Approx(tf.real()).epsilon(1e-3));
  CHECK(b == doctest::Approx(tf.imag()).epsilon(1e-3));
}

TEST_CASE("output saturates at the limit and passes mid-range values") {
  const DcConfig cfg = config(1.0, 10.0, 0.2, 0.05, 0.5);
  // y_w = K u - x_w; y = x_l + (T1/T2)(y_w - x_l)
  DcState s{0.0, 1.0};
  CHECK(dc_raw_output(cfg, s, 0.0) == doctest::Approx(1.0 + 4.0 * (0.0 - 1.0)));
  s = {0.0, 1.0};
  CHECK(dc_output(cfg, s, 1.25) == doctest::Approx(0.5));  // raw 1 + 4 * 0.25 = 2 = 4 p_max
  CHECK(dc_output(cfg, {0.0, -1.0}, -1.25) == doctest::Approx(-0.5));
  const DcState mid{0.05, 0.1};
  const double u = 0.2;
  const double yw = 1.0 * u - 0.05;
  CHECK(dc_output(cfg, mid, u) == doctest::Approx(0.1 + (0.2 / 0.05) * (yw - 0.1)));
}

TEST_CASE("washout rejects constant inputs") {
  const DcConfig cfg = config(1.0, 10.0, 0.2, 0.05, 1.0);
  // Exact steady state: washout output zero for any constant input.
  CHECK(dc_output(cfg, {0.7, 0.0}, 0.7) == 0.0);
  const DcState s = integrate(cfg, {}, [](double) { return 0.01; }, 10.0 * cfg.tw, 5e-3);
  CHECK(std::abs(dc_output(cfg, s, 0.01)) <= 1e-6);
}

TEST_CASE("composed reference") {
  CHECK(compose_reference(0.2, 0, 0.5) == 0.5);
  CHECK(compose_reference(0.2, 1, 0.5) == doctest::Approx(0.7));
  CHECK(compose_reference(-0.3, 1, 0.5) == doctest::Approx(0.2));
  CHECK_THROWS_AS(compose_reference(0.2, 2, 0.5), InputError);
  CHECK(compose_reference_relaxed(0.2, 0.5, 0.5) == doctest::Approx(0.6));
}

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS(config(1.0, 0.0, 0.1, 0.05).validate(), InputError);
  CHECK_THROWS_AS(config(1.0, 10.0, 0.1, 0.0).validate(), InputError);
  CHECK_THROWS_AS(config(1.0, 10.0, 0.1, 0.05, 0.0).validate(), InputError);
  CHECK_NOTHROW(config(1.0, 10.0, 0.1, 0.05, 1.0).validate());
}
