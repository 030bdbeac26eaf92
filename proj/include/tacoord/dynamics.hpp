#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tacoord/netmodel.hpp"

namespace tacoord {

/// Fault, clearing and coordination-activation instants for one run.
struct EventSchedule {
  std::optional<int> fault_bus;  // no fault when empty
  double t_fault = 2.0;
  double t_clear = 2.05;
  double t_activate = 2.55;
  double t_end = 30.0;
  std::vector<int> gamma;          // switching vector applied at t_activate
  std::vector<int> initial_gamma;  // before t_activate; empty means all off

  void validate(int n_dc) const;
};

struct SimulationOptions {
  double step = 0.005;
  int network_max_iterations = 10;
  double network_tolerance = 1e-8;
  /// Below this voltage an IBR behaves as a constant conductance drawing
  /// the same power it would at this voltage.
  double ibr_low_voltage = 0.5;
};

/// Offsets into the dynamic state vector:
/// [delta_1..delta_n, omega_1..omega_n, (washout, leadlag) per DC].
struct StateLayout {
  int n_gen = 0;
  int n_dc = 0;
  int size() const { return 2 * n_gen + 2 * n_dc; }
  int delta(int g) const { return g; }
  int omega(int g) const { return n_gen + g; }
  int washout(int l) const { return 2 * n_gen + 2 * l; }
  int leadlag(int l) const { return 2 * n_gen + 2 * l + 1; }
  std::vector<std::string> labels() const;
};

/// Reduced network prepared for repeated IBR fixed-point solves.
struct PreparedNetwork {
  ReducedNetwork reduced;
  ComplexMatrix y_gg, y_gi;
  ComplexMatrix y_ii_inv;      // inverse of the IBR block
  ComplexMatrix y_ii_inv_y_ig;

  explicit PreparedNetwork(ReducedNetwork red);
};

/// Classical-model machine data plus the initial operating point, derived
/// from a converged power flow.
struct DynamicModel {
  SystemCase system;
  PowerFlowSolution power_flow;
  StateLayout layout;
  Eigen::VectorXd emf;       // |E'| per generator
  Eigen::VectorXd pm;        // mechanical power per generator
  Eigen::VectorXd equilibrium;
  ComplexVector ibr_voltage0;
  PreparedNetwork prefault;

  PreparedNetwork network(const NetworkStage& stage) const;
};

DynamicModel build_dynamic_model(const SystemCase& c, const PowerFlowSolution& pf);

/// Working storage carried between evaluations (warm start for the IBR
/// voltages).
struct NetworkWorkspace {
  ComplexVector ibr_voltage;
};

struct RateEvaluation {
  Eigen::VectorXd rates;
  Eigen::VectorXd pe;
  Eigen::VectorXd ibr_p;      // injected active power
  ComplexVector ibr_voltage;
  int iterations = 0;
};

struct NetworkSolveOptions {
  int max_iterations = 10;
  double tolerance = 1e-8;
  double ibr_low_voltage = 0.5;
};

/// Swing equations, DC filter states and the IBR constant-power network
/// solve. `q` holds the (possibly relaxed) switch status per DC.
RateEvaluation derivatives(const DynamicModel& model, const PreparedNetwork& net,
                           const Eigen::VectorXd& x, std::span<const double> q,
                           NetworkWorkspace& ws, const NetworkSolveOptions& opts = {});

struct EventMarkers {
  double t_fault = 0.0;
  double t_clear = 0.0;
  double t_activate = 0.0;
  double t_end = 0.0;
  std::optional<int> fault_bus;
  std::vector<int> gamma;
};

struct Trajectory {
  double step = 0.0;
  std::vector<double> time;
  Eigen::MatrixXd delta;    // samples x generators
  Eigen::MatrixXd omega;
  Eigen::MatrixXd dc_state; // samples x (2 * n_dc)
  Eigen::MatrixXd ibr_p;    // samples x n_dc
  Eigen::MatrixXd ibr_v;    // samples x n_dc, magnitude
  EventMarkers events;

  std::size_t samples() const { return time.size(); }
  /// Sample index of time t; throws InputError outside the record.
  std::size_t index_of(double t) const;
  Eigen::VectorXd state(std::size_t k) const;
};

/// Fixed-step RK4 with events snapped to the step grid.
Trajectory simulate(const DynamicModel& model, const EventSchedule& events,
                    const SimulationOptions& opts = {});

/// Generator speed deviations relative to the reference generator at t.
std::vector<double> snapshot_features(const Trajectory& traj, const SystemCase& c, double t);

std::string trajectory_csv(const Trajectory& traj);
std::string trajectory_events_json(const Trajectory& traj);

}  // namespace tacoord
