#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tacoord/approximator.hpp"
#include "tacoord/coordinator.hpp"

namespace tacoord {

inline constexpr const char* kExperimentSchema = "tacoord.experiment/1";

/// File-driven experiment description. Relative paths resolve against the
/// directory of the config file.
struct ExperimentConfig {
  std::filesystem::path case_path;
  std::filesystem::path grid_path;
  std::filesystem::path dataset_path;
  std::filesystem::path weights_path;
  std::filesystem::path out_dir = "out";
  TimingTemplate timing;
  nlohmann::json mlp = nlohmann::json::object();  // MlpConfig fields; "hidden" or "layers"
  std::vector<nlohmann::json> cv_candidates;       // extra MlpConfig variants for cross validation
  int folds = 10;
  int validation_folds = 2;
  std::vector<Policy> policies{Policy::NC, Policy::FC, Policy::DIC, Policy::MBC};
  std::vector<int> fixed_combo;
  std::vector<double> delays{0.149, 2.0};
  std::vector<Scenario> scenarios;
  std::uint64_t seed = 1;
  int jobs = 1;

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// FNV-1a of the canonical JSON form without output locations and with
  /// input files reduced to their names; embedded in every output.
  std::string hash() const;

  /// MlpConfig for the given input width, with the global seed.
  MlpConfig mlp_config(int n_inputs) const;
  std::vector<MlpConfig> cv_configs(int n_inputs) const;
};

std::vector<double> parse_number_list(const std::string& comma_list);
std::vector<int> parse_combo(const std::string& bits);

/// Trains with early stopping on a seeded validation split (rotation 0 of
/// the configured folds). Candidates are cross-validated first when given.
struct TrainingOutcome {
  MlpModel model;
  std::optional<CrossValidationResult> cv;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
};

TrainingOutcome train_from_dataset(const ExperimentConfig& cfg, const Dataset& ds);

std::string loss_curve_csv(const TrainingMetadata& meta);

}  // namespace tacoord
