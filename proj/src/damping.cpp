#include "tacoord/damping.hpp"

#include <algorithm>
#include <string>

#include "tacoord/errors.hpp"

namespace tacoord {

void DcConfig::validate() const {
  if (!(tw > 0.0)) throw InputError("damping controller: Tw must be positive");
  if (!(t2 > 0.0)) throw InputError("damping controller: T2 must be positive");
  if (!(p_max > 0.0)) throw InputError("damping controller: P_max must be positive");
  if (t1 < 0.0) throw InputError("damping controller: T1 must be non-negative");
}

// Washout: y_w = K u - x_w, dx_w/dt = (K u - x_w) / Tw.
// Lead-lag: y = x_l + (T1/T2)(y_w - x_l), dx_l/dt = (y_w - x_l) / T2.
DcRates dc_derivatives(const DcConfig& cfg, const DcState& state, double input) {
  const double washout_out = cfg.gain * input - state.washout;
  return {washout_out / cfg.tw, (washout_out - state.leadlag) / cfg.t2};
}

double dc_raw_output(const DcConfig& cfg, const DcState& state, double input) {
  const double washout_out = cfg.gain * input - state.washout;
  return state.leadlag + (cfg.t1 / cfg.t2) * (washout_out - state.leadlag);
}

double dc_output(const DcConfig& cfg, const DcState& state, double input) {
  return std::clamp(dc_raw_output(cfg, state, input), -cfg.p_max, cfg.p_max);
}

double compose_reference(double p_osc, int q, double p_ref_bar) {
  if (q != 0 && q != 1) {
    throw InputError("switch status must be 0 or 1, got " + std::to_string(q));
  }
  return p_osc * q + p_ref_bar;
}

double compose_reference_relaxed(double p_osc, double q, double p_ref_bar) {
  return p_osc * q + p_ref_bar;
}

}  // namespace tacoord
