#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tacoord/dynamics.hpp"
#include "tacoord/metrics.hpp"

namespace tacoord {

inline constexpr const char* kDatasetSchema = "tacoord.dataset/1";

/// Switching vector for combination index k; DC 1 is the most significant
/// bit, so k = 0b001 switches on only the last DC.
std::vector<int> combination(std::uint32_t k, int n_dc);
std::uint32_t encode_combination(std::span<const int> gamma);
std::string combination_label(std::span<const int> gamma);

/// Operating condition: scale factors applied to the base case.
struct OperatingCondition {
  double load_scale = 1.0;  // all load P and Q
  double gen_scale = 1.0;   // scheduled power of non-slack generators
  double ibr_scale = 1.0;   // IBR quasi-stationary references
};

struct Disturbance {
  int fault_bus = 0;
  double duration = 0.05;  // s
};

struct ScenarioGrid {
  std::vector<OperatingCondition> conditions;
  std::vector<Disturbance> disturbances;

  std::size_t n_samples(int n_dc) const { return conditions.size() * disturbances.size() * (std::size_t{1} << n_dc); }
};

nlohmann::json grid_to_json(const ScenarioGrid& g);
ScenarioGrid grid_from_json(const nlohmann::json& j);

/// Fault instant, activation delay after clearing, and horizon shared by
/// every scenario. The clearing time is t_fault + disturbance duration.
struct TimingTemplate {
  double t_fault = 2.0;
  double activation_delay = 0.5;  // t_a - t_cl
  double t_end = 30.0;

  EventSchedule schedule(const Disturbance& d, std::span<const int> gamma) const;
};

nlohmann::json timing_to_json(const TimingTemplate& t);
TimingTemplate timing_from_json(const nlohmann::json& j);

SystemCase apply_condition(const SystemCase& base, const OperatingCondition& mu);

struct Sample {
  int i = 0;
  int j = 0;
  int k = 0;
  double s_inf = 0.0;  // NaN when the simulation failed
  std::vector<double> y01;
  std::vector<double> y02;
  std::vector<int> gamma;
  bool converged = true;
  bool stable = true;
};

nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j);

struct Dataset {
  nlohmann::json header;
  std::vector<Sample> samples;
  std::vector<std::string> warnings;

  /// Samples with a stable, converged total action.
  std::vector<Sample> usable() const;
  std::string to_jsonl() const;
  static Dataset from_jsonl(const std::string& text);
};

struct CollectOptions {
  int jobs = 1;
  std::uint64_t seed = 0;
  SimulationOptions simulation;
  TotalActionOptions total_action;
  std::function<void(const std::string&)> log;  // progress and warnings
};

/// Result of one scenario simulation with the features measured at t_cl.
struct ScenarioRun {
  Trajectory trajectory;
  TotalAction ta;
  std::vector<double> y02;
};

ScenarioRun run_scenario(const DynamicModel& model, const Disturbance& d, const TimingTemplate& timing,
                         std::span<const int> gamma, const SimulationOptions& sim = {},
                         const TotalActionOptions& ta_opts = {});

/// Enumerates conditions x disturbances x combinations in canonical order.
Dataset collect(const SystemCase& c, const ScenarioGrid& grid, const TimingTemplate& timing,
                const CollectOptions& opts = {});

/// Per-column z-score for [y01, y02]; switching columns are not included.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::string> names;

  /// Population convention. Columns listed in `passthrough` are stored with
  /// mean 0 and std 1; any other constant column is an error.
  static Standardizer fit(const Eigen::MatrixXd& features, std::span<const std::string> names,
                          std::span<const int> passthrough = {});

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd inverse(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

/// [y01, y02] per sample.
Eigen::MatrixXd feature_matrix(std::span<const Sample> samples);
std::vector<std::string> feature_names(std::size_t n_y01, std::size_t n_y02);
/// Standardizer for samples of `c`; the reference generator's self-deviation
/// column is identically zero and passes through.
Standardizer fit_standardizer(std::span<const Sample> samples, const SystemCase& c);
Standardizer fit_standardizer(std::span<const Sample> samples, int reference_generator);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle, N contiguous folds, validation = folds rotation .. rotation+P-1 (cyclic).
FoldSplit make_folds(std::size_t n_samples, int n_folds, int n_validation, int rotation, std::uint64_t seed);

}  // namespace tacoord
