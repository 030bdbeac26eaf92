#pragma once

#include <array>

namespace tacoord {

/// Phase-compensation damping controller: gain, washout and one lead-lag
/// stage. The input is the COI-relative speed deviation of `input_generator`.
struct DcConfig {
  double gain = 0.0;   // pu power per pu speed
  double tw = 10.0;    // washout time constant, s
  double t1 = 0.0;     // lead time constant, s
  double t2 = 0.05;    // lag time constant, s
  int input_generator = 0;
  double p_max = 1.0;  // symmetric output limit, pu

  void validate() const;
};

/// Internal states of the filter chain. Both are zero at equilibrium.
struct DcState {
  double washout = 0.0;
  double leadlag = 0.0;
};

struct DcRates {
  double washout = 0.0;
  double leadlag = 0.0;
};

/// State derivatives for K -> sTw/(1+sTw) -> (1+sT1)/(1+sT2).
DcRates dc_derivatives(const DcConfig& cfg, const DcState& state, double input);

/// Unclipped lead-lag output.
double dc_raw_output(const DcConfig& cfg, const DcState& state, double input);

/// Lead-lag output clipped to [-p_max, p_max]; this is P_osc.
double dc_output(const DcConfig& cfg, const DcState& state, double input);

/// P_ref = P_osc * q + P_ref_bar. Throws InputError when q is not 0 or 1.
double compose_reference(double p_osc, int q, double p_ref_bar);

/// Relaxed form used for linearization, q in [0, 1].
double compose_reference_relaxed(double p_osc, double q, double p_ref_bar);

}  // namespace tacoord
