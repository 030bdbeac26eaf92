#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tacoord/dataset.hpp"

namespace tacoord {

inline constexpr const char* kWeightsSchema = "tacoord.weights/1";

/// How the regression target is presented to the network. The model always
/// reports predictions in total-action units.
enum class TargetTransform {
  None,         // network output is S directly
  Standardize,  // (S - mean) / std
  Log           // (log S - mean) / std
};

struct MlpConfig {
  std::vector<int> layers;  // [inputs, hidden..., 1]
  double learning_rate = 1e-3;
  int epochs = 2000;
  int batch_size = 32;
  std::uint64_t seed = 1;
  int patience = 50;
  double momentum = 0.0;
  TargetTransform target = TargetTransform::Log;

  void validate() const;
  nlohmann::json to_json() const;
  /// Accepts either "layers" or "hidden" (input/output sizes filled from n_inputs).
  static MlpConfig from_json(const nlohmann::json& j, int n_inputs);
  std::string hash() const;
};

struct DenseLayer {
  Eigen::MatrixXd w;  // outputs x inputs
  Eigen::VectorXd b;
};

struct TargetScaling {
  TargetTransform transform = TargetTransform::None;
  double mean = 0.0;
  double stddev = 1.0;

  double to_network(double s) const;
  double from_network(double t) const;
};

struct TrainingMetadata {
  int epochs_run = 0;
  int best_epoch = 0;
  double train_loss = 0.0;       // network units
  double validation_loss = 0.0;  // network units, NaN without validation data
  std::vector<double> train_curve;
  std::vector<double> validation_curve;
};

struct MlpModel {
  MlpConfig config;
  std::vector<DenseLayer> layers;
  Standardizer standardizer;
  TargetScaling target;
  int n_y01 = 0;
  int n_y02 = 0;
  int n_dc = 0;
  TrainingMetadata meta;

  int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols()); }

  /// Weights ~ N(0, 2 / fan_in), zero biases.
  static MlpModel initialize(const MlpConfig& cfg);

  nlohmann::json to_json() const;
  static MlpModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);
};

/// Nested composition with rectifier hidden layers and a linear output, in
/// network units.
double network_output(const MlpModel& m, const Eigen::VectorXd& r);

/// Predicted total action for an already-assembled input r = [z(y01, y02), gamma].
double forward(const MlpModel& m, const Eigen::VectorXd& r);

/// Standardizes y0 = [y01, y02] and appends gamma.
Eigen::VectorXd model_input(const MlpModel& m, std::span<const double> y0, std::span<const int> gamma);

/// Mean squared error of the predicted total action, in TA units.
double loss(const MlpModel& m, std::span<const Sample> samples);

struct Gradients {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

/// Mean squared error of network outputs against network-unit targets.
/// Rows of `inputs` are samples.
double batch_loss(const MlpModel& m, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets);

/// Backpropagated gradient of batch_loss.
Gradients gradient(const MlpModel& m, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets);

/// Assembled inputs (rows) and network-unit targets for samples.
Eigen::MatrixXd input_matrix(const MlpModel& m, std::span<const Sample> samples);
Eigen::VectorXd target_vector(const MlpModel& m, std::span<const Sample> samples);

/// Mini-batch SGD. The standardizer and target scaling are fitted on the
/// training samples only; early stopping watches the validation loss (the
/// training loss when no validation samples are given).
MlpModel train(const MlpConfig& cfg, std::span<const Sample> train_set, std::span<const Sample> validation_set,
               int reference_generator);

struct CrossValidationResult {
  std::size_t best = 0;
  std::vector<double> scores;  // mean validation MSE (TA units); +inf when disqualified
  std::vector<std::vector<double>> rotation_scores;
};

CrossValidationResult cross_validate(std::span<const MlpConfig> configs, std::span<const Sample> samples,
                                     int n_folds, int n_validation, std::uint64_t seed, int reference_generator,
                                     int jobs = 1);

/// Predictions for every combination, ordered by binary encoding.
std::vector<double> predict_batch(const MlpModel& m, std::span<const double> y0);

}  // namespace tacoord
