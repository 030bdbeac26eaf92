#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tacoord/dynamics.hpp"

namespace tacoord {

/// Small-signal model in deviation coordinates:
/// [delta_j - delta_ref (j != ref), omega_1..omega_n, DC states].
/// Angles are taken relative to the reference generator, which removes the
/// rotational zero eigenvalue.
struct LinearModel {
  Eigen::MatrixXd a;
  Eigen::MatrixXd q;            // energy form: E = x^T Q x
  Eigen::VectorXd equilibrium;  // full nonlinear state at the operating point
  std::vector<double> qhat;
  std::vector<std::string> labels;
  int reference = 0;

  nlohmann::json to_json() const;
};

struct LinearizeOptions {
  double perturbation = 1e-6;
  double equilibrium_tolerance = 1e-6;
};

LinearModel linearize(const DynamicModel& model, std::span<const double> qhat,
                      const LinearizeOptions& opts = {});

/// Full nonlinear rate function expressed in the linear model's coordinates.
Eigen::VectorXd reduced_rates(const DynamicModel& model, std::span<const double> qhat,
                              const Eigen::VectorXd& deviation, int reference);

/// Maps a full nonlinear state to the linear model's deviation coordinates.
Eigen::VectorXd to_deviation(const DynamicModel& model, const Eigen::VectorXd& state, int reference);

/// Oscillation-energy quadratic form on the deviation coordinates.
Eigen::MatrixXd energy_form(const SystemCase& c, int reference);

struct EigenDecomp {
  Eigen::VectorXcd lambda;
  Eigen::MatrixXcd m;   // right eigenvectors
  Eigen::VectorXcd z0;  // M^{-1} x0
  Eigen::MatrixXcd g;   // M^T Q M
};

EigenDecomp eigen_decompose(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q, const Eigen::VectorXd& x0);

struct EigenTaResult {
  double value = 0.0;
  double imag_residue = 0.0;
  EigenDecomp decomp;
};

/// Closed-form total action of x' = A x from x0:
/// S = -sum_ij z0_i z0_j g_ij / (lambda_i + lambda_j) with g = M^T Q M.
EigenTaResult eigen_ta_detail(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q, const Eigen::VectorXd& x0);
double eigen_ta(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q, const Eigen::VectorXd& x0);
double eigen_ta(const LinearModel& lm, const Eigen::VectorXd& x0);

/// Solves A^T P + P A = -Q through the Kronecker-vectorized system.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& q);

struct TasOptions {
  double step = 1e-3;
  LinearizeOptions linearize;
};

/// dS/dq_l by central differences of the closed form, clamped to [0, 1].
std::vector<double> tas(const DynamicModel& model, std::span<const double> qhat0, const Eigen::VectorXd& x0,
                        const TasOptions& opts = {});

/// On where TAS < 0, off where TAS > 0, unchanged where TAS == 0.
std::vector<int> mbc_switching(std::span<const double> sensitivities, std::span<const int> current);

}  // namespace tacoord
