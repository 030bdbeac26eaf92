#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tacoord/approximator.hpp"
#include "tacoord/dataset.hpp"
#include "tacoord/mbc.hpp"

namespace tacoord {

struct CoordinationResult {
  std::vector<int> gamma;
  std::uint32_t encoding = 0;
  std::vector<double> predictions;  // indexed by combination encoding
  double wall_ms = 0.0;
  std::string note;

  nlohmann::json to_json() const;
  /// One row per combination: k, label, predicted total action, selected flag.
  std::string predictions_csv() const;
};

/// Argmin over a prediction vector of length 2^n_dc. Exact ties go to the
/// combination with the fewest active DCs, then the lowest encoding.
CoordinationResult select_minimum(std::span<const double> predictions, int n_dc);

/// Exhaustive data-informed selection for measured y0 = [y01, y02].
CoordinationResult dic_select(const MlpModel& model, std::span<const double> y0);

enum class Policy { NC, FC, DIC, MBC };

std::string policy_name(Policy p);
Policy parse_policy(const std::string& name);
std::vector<Policy> parse_policies(const std::string& comma_list);

/// One operating condition and one disturbance.
struct Scenario {
  std::string name;
  OperatingCondition condition;
  Disturbance disturbance;
};

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

struct EvaluationOptions {
  TimingTemplate timing;
  std::vector<Policy> policies{Policy::NC, Policy::FC, Policy::DIC, Policy::MBC};
  std::vector<int> fixed_combo;     // FC; empty means all DCs on
  const MlpModel* model = nullptr;  // required for DIC
  SimulationOptions simulation;
  TotalActionOptions total_action;
  TasOptions tas;
  int jobs = 1;
  std::optional<std::filesystem::path> export_dir;  // trajectory CSVs
};

struct PolicyOutcome {
  std::string name;
  std::vector<int> gamma;
  double t_activate = 0.0;
  double s_inf = 0.0;
  double reduction = 0.0;  // percent vs NC
  bool converged = false;
  std::string error;  // empty on success
  std::string trajectory_path;
};

struct PolicyReport {
  Scenario scenario;
  double nc_s_inf = 0.0;
  std::vector<double> y0;
  std::vector<PolicyOutcome> rows;

  bool ok() const;
  const PolicyOutcome* find(const std::string& name) const;
  std::string csv() const;
  nlohmann::json to_json() const;
};

/// Measurement-side context of a scenario: the condition's dynamic model,
/// the uncontrolled trajectory and the features at fault clearing.
struct ScenarioContext {
  SystemCase system;
  DynamicModel model;
  ScenarioRun nc;
  std::vector<double> y0;
  double t_clear = 0.0;
};

ScenarioContext prepare_scenario(const SystemCase& base, const Scenario& sc, const TimingTemplate& timing,
                                 const SimulationOptions& sim = {}, const TotalActionOptions& ta = {});

/// DCs switched on by the sensitivity rule evaluated at relaxed gains 0 from
/// the clearing-time state.
std::vector<int> mbc_select(const ScenarioContext& ctx, const TasOptions& opts = {});

PolicyReport evaluate_policies(const SystemCase& base, const Scenario& sc, const EvaluationOptions& opts);

struct DelayRow {
  double delay = 0.0;  // infinity: never activated
  double s_inf = 0.0;
  double reduction = 0.0;
  bool converged = false;
  std::string error;
};

struct DelayReport {
  Scenario scenario;
  std::vector<int> gamma;
  double nc_s_inf = 0.0;
  std::vector<DelayRow> rows;

  bool ok() const;
  std::string csv() const;
  nlohmann::json to_json() const;
};

/// DIC activated at t_cl + delay for each delay; an infinite delay is
/// appended when absent.
DelayReport delay_sweep(const SystemCase& base, const Scenario& sc, const MlpModel& model,
                        std::span<const double> delays, const EvaluationOptions& opts);

/// Simulated total action of every combination (NaN on failure), by encoding.
std::vector<double> exhaustive_total_action(const ScenarioContext& ctx, const Disturbance& d,
                                            const TimingTemplate& timing, const SimulationOptions& sim = {},
                                            const TotalActionOptions& ta = {}, int jobs = 1);

/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> predicted, std::span<const double> actual);

/// Mean absolute percentage error.
double mape(std::span<const double> predicted, std::span<const double> actual);

}  // namespace tacoord
