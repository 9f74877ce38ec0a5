#pragma once

// Instance mapping: one nu-SVR per concept-embedding coordinate, all sharing
// a single precomputed kernel matrix over the training instances.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cezsl/common.hpp"

namespace cezsl {

enum class KernelType { linear, polynomial, rbf };

struct KernelConfig {
  KernelType type = KernelType::rbf;
  double gamma = 1.0;
  double coef0 = 0.0;
  int degree = 3;

  double operator()(std::span<const double> a, std::span<const double> b) const;
};

std::string to_string(KernelType type);
KernelType kernel_type_from_string(const std::string& name);

/// Symmetric Gram matrix of `inputs` under `kernel`.
Matrix kernel_matrix(std::span<const Vector> inputs, const KernelConfig& kernel);

/// Number of kernel_matrix() calls made by this process (instrumentation).
std::size_t kernel_matrix_builds();

struct SvrConfig {
  double nu = 0.2;
  double C = 1.0;
  KernelConfig kernel;
  double tolerance = 1e-8;  ///< maximal KKT violation at exit
  std::size_t max_iterations = 1'000'000;

  void validate() const;
};

/// Dual solution of
///   min 1/2 (a - a*)' K (a - a*) + y' (a - a*)
///   s.t. 1'(a - a*) = 0,  1'(a + a*) <= C nu,  0 <= a, a* <= C / N
/// found by SMO over maximal violating pairs.
struct NuSvrSolution {
  Vector alpha;
  Vector alpha_star;
  double bias = 0.0;
  double tube = 0.0;  ///< the epsilon of the insensitive tube
  double objective = 0.0;
  double max_violation = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  ///< filled when requested

  /// Prediction coefficients alpha* - alpha.
  Vector coefficients() const;
};

NuSvrSolution solve_nu_svr(const Matrix& gram, std::span<const double> targets, const SvrConfig& config,
                           bool record_objective = false);

double nu_svr_dual_objective(const Matrix& gram, std::span<const double> targets, std::span<const double> alpha,
                             std::span<const double> alpha_star);

struct SvrModel {
  KernelConfig kernel;
  std::vector<Vector> support;
  Vector coefficients;  ///< alpha* - alpha per support vector
  double bias = 0.0;
  double tube = 0.0;
  bool converged = true;
};

SvrModel train_nu_svr(std::span<const Vector> inputs, std::span<const double> targets, const SvrConfig& config);
double predict_svr(const SvrModel& model, std::span<const double> x);

struct ImModel {
  KernelConfig kernel;
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
  std::vector<Vector> support;  ///< training inputs with a nonzero coefficient in any coordinate
  Matrix coefficients;          ///< target_dim x support.size()
  Vector bias;                  ///< target_dim
  Vector tube;                  ///< target_dim
  std::vector<bool> converged;  ///< target_dim
};

/// Fit target_dim independent nu-SVRs. `configs` holds one shared config or
/// one per coordinate; all must use the same kernel.
ImModel train_im(std::span<const Vector> inputs, const Matrix& targets, std::span<const SvrConfig> configs,
                 std::size_t threads = 1);
ImModel train_im(std::span<const Vector> inputs, const Matrix& targets, const SvrConfig& config, std::size_t threads = 1);

Vector predict_im(const ImModel& model, std::span<const double> x);

struct RegressionStats {
  double mean_error = 0.0;   ///< mean Euclidean error over test instances
  double scattering = 0.0;
  double relative_error = 0.0;
};

/// Mean error of predictions against ground-truth targets, relative to the
/// concept-space scattering. A zero scattering raises Errc::domain.
RegressionStats regression_error(const ImModel& model, std::span<const Vector> inputs, std::span<const Vector> targets,
                                 double scattering);
RegressionStats regression_error(std::span<const Vector> predictions, std::span<const Vector> targets, double scattering);

nlohmann::json to_json(const KernelConfig& kernel);
KernelConfig kernel_config_from_json(const nlohmann::json& j, KernelConfig defaults = {});
nlohmann::json to_json(const SvrConfig& config);
SvrConfig svr_config_from_json(const nlohmann::json& j, SvrConfig defaults = {});
nlohmann::json to_json(const ImModel& model);
ImModel im_model_from_json(const nlohmann::json& j);

}  // namespace cezsl
