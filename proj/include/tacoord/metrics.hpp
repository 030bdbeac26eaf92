#pragma once

#include <span>
#include <string>
#include <vector>

#include "tacoord/dynamics.hpp"

namespace tacoord {

/// Inertia-weighted mean speed. Throws InputError on empty or mismatched input.
double coi_speed(std::span<const double> speeds, std::span<const double> inertia);

/// Oscillation energy E(t) = sum_j H_j ws (w_j - w_coi)^2 on the trajectory grid.
struct EnergySeries {
  std::vector<double> time;
  std::vector<double> energy;
  std::vector<double> inertia;
  double synchronous_speed = 0.0;
  double t0 = 0.0;  // start of the action integral

  std::string csv() const;
  /// time, E and E / E(t0); E(t0) is the first sample at or after t0.
  std::string normalized_csv() const;
};

EnergySeries oscillation_energy(const Trajectory& traj, const SystemCase& c);
EnergySeries oscillation_energy(const Trajectory& traj, const SystemCase& c, double t0);

/// Trapezoidal integral of E over [t0, t0 + tau].
double action(const EnergySeries& series, double tau);

struct TotalAction {
  double value = 0.0;
  bool converged = true;   // tail increment below the threshold
  bool growing = false;    // E still rising at the end of the horizon
  double tail_fraction = 0.0;
};

struct TotalActionOptions {
  double tail_window = 2.0;        // s
  double tail_tolerance = 1e-3;    // fraction of the total
};

/// Action over the whole horizon from t0 with a convergence check on the tail.
TotalAction total_action(const EnergySeries& series, const TotalActionOptions& opts = {});

}  // namespace tacoord
