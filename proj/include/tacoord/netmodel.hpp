#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tacoord/damping.hpp"

namespace tacoord {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

enum class BusType { Slack, PV, PQ };

struct Bus {
  int id = 0;
  BusType type = BusType::PQ;
  double v_set = 1.0;  // voltage magnitude setpoint (slack/PV) or start value
};

struct Line {
  int id = 0;
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;  // total line charging
};

struct Generator {
  int bus = 0;
  double h = 0.0;         // inertia constant on system base, s
  double d = 0.0;         // damping coefficient, pu
  double xd_prime = 0.0;  // transient reactance, pu
  double pm = 0.0;        // scheduled active power (ignored at the slack bus)
  double emf = 1.0;       // informational; recomputed from the power flow
};

/// Constant-impedance load, specified by its consumption at nominal voltage
/// of the operating point.
struct Load {
  int bus = 0;
  double p = 0.0;
  double q = 0.0;
};

struct Ibr {
  int bus = 0;
  double p_ref = 0.0;  // quasi-stationary reference
  DcConfig dc;
};

struct SystemCase {
  std::string name;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Ibr> ibrs;
  std::vector<int> feature_lines;  // line ids
  int reference_generator = 0;
  double base_mva = 100.0;
  double nominal_hz = 60.0;

  /// Throws InputError describing the first violated invariant.
  void validate() const;

  /// Position of bus `id` in `buses`; throws InputError if absent.
  int bus_index(int id) const;
  std::optional<int> find_bus(int id) const;
  int line_index(int id) const;

  int slack_index() const;
  int n_dc() const { return static_cast<int>(ibrs.size()); }
  int n_gen() const { return static_cast<int>(generators.size()); }
  double synchronous_speed() const;  // rad/s
};

enum class StageKind { Prefault, FaultOn, Postfault };

struct NetworkStage {
  StageKind kind = StageKind::Prefault;
  int fault_bus = -1;  // bus id, used only for FaultOn

  static NetworkStage prefault() { return {StageKind::Prefault, -1}; }
  static NetworkStage fault_on(int bus) { return {StageKind::FaultOn, bus}; }
  static NetworkStage postfault() { return {StageKind::Postfault, -1}; }
};

/// Shunt admittance representing a bolted fault.
inline constexpr double kFaultAdmittance = 1e6;

struct LineFlow {
  double p_from = 0.0;
  double q_from = 0.0;
  double p_to = 0.0;
  double q_to = 0.0;
};

struct PowerFlowSolution {
  ComplexVector voltage;            // per bus, ordered as SystemCase::buses
  std::vector<LineFlow> flows;      // ordered as SystemCase::lines
  std::vector<Complex> gen_power;   // per generator, P + jQ at terminal
  int iterations = 0;
  double max_mismatch = 0.0;
};

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 50;
};

/// Branch-only admittance (lines and their charging), no loads.
ComplexMatrix network_ybus(const SystemCase& c);

/// Bus admittance including constant-impedance loads converted at the
/// power-flow voltages and, for the fault-on stage, the fault shunt.
/// Without a power-flow solution the loads are converted at 1 pu.
ComplexMatrix build_ybus(const SystemCase& c, const NetworkStage& stage,
                         const PowerFlowSolution* pf = nullptr);

/// Newton-Raphson in polar coordinates from a flat start.
PowerFlowSolution solve_power_flow(const SystemCase& c, const PowerFlowOptions& opts = {});

/// Retained nodes: generator internal nodes (behind x'd) first, then IBR buses.
struct ReducedNetwork {
  ComplexMatrix y;
  NetworkStage stage;
  int n_gen = 0;
  int n_ibr = 0;
  std::vector<std::string> labels;
};

/// Augmented admittance: buses followed by generator internal nodes.
ComplexMatrix augmented_ybus(const SystemCase& c, const PowerFlowSolution& pf,
                             const NetworkStage& stage);

/// Kron reduction of the augmented network onto the retained nodes.
ReducedNetwork reduce_network(const SystemCase& c, const PowerFlowSolution& pf,
                              const NetworkStage& stage);

/// Indices (into the augmented matrix) of the retained nodes, in order.
std::vector<int> retained_nodes(const SystemCase& c);

/// Sending-end active power over the feature lines (y01).
std::vector<double> line_flows(const SystemCase& c, const PowerFlowSolution& pf);

}  // namespace tacoord
