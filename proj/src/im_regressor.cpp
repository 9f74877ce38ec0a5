#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include <spdlog/spdlog.h>

#include "cezsl/im_regressor.hpp"
#include "cezsl/simd/kernels.hpp"

namespace cezsl {

using nlohmann::json;

ImModel train_im(std::span<const Vector> inputs, const Matrix& targets, std::span<const SvrConfig> configs,
                 std::size_t threads) {
  const std::size_t n = inputs.size();
  const std::size_t dims = targets.cols();
  if (targets.rows() != n) throw Error(Errc::dimension, "targets have " + std::to_string(targets.rows()) +
                                                            " rows for " + std::to_string(n) + " inputs");
  if (n < 2) throw Error(Errc::domain, "instance mapping needs at least two training instances");
  if (configs.empty() || (configs.size() != 1 && configs.size() != dims))
    throw Error(Errc::config, "need one shared SVR config or one per target coordinate");
  for (const auto& c : configs) {
    c.validate();
    if (to_json(c.kernel) != to_json(configs.front().kernel))
      throw Error(Errc::config, "all coordinates must share one kernel");
  }
  auto config_for = [&](std::size_t d) -> const SvrConfig& { return configs.size() == 1 ? configs[0] : configs[d]; };

  const Matrix gram = kernel_matrix(inputs, configs.front().kernel);
  std::vector<NuSvrSolution> solutions(dims);
  std::vector<std::exception_ptr> failures(dims);
  auto fit = [&](std::size_t d) {
    try {
      Vector y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = targets(i, d);
      solutions[d] = solve_nu_svr(gram, y, config_for(d));
    } catch (...) {
      failures[d] = std::current_exception();
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, dims));
  if (threads == 1) {
    for (std::size_t d = 0; d < dims; ++d) fit(d);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t d = t; d < dims; d += threads) fit(d);
      });
  }
  std::string failed;
  for (std::size_t d = 0; d < dims; ++d) {
    if (!failures[d]) continue;
    try {
      std::rethrow_exception(failures[d]);
    } catch (const std::exception& e) {
      failed += "coordinate " + std::to_string(d) + ": " + e.what() + "; ";
    }
  }
  if (!failed.empty()) throw Error(Errc::numeric, "instance mapping failed: " + failed);

  ImModel model;
  model.kernel = configs.front().kernel;
  model.input_dim = inputs.front().size();
  model.target_dim = dims;
  std::vector<std::size_t> support_ids;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dims; ++d) {
      if (solutions[d].alpha_star[i] - solutions[d].alpha[i] != 0.0) {
        support_ids.push_back(i);
        break;
      }
    }
  }
  model.coefficients = Matrix(dims, support_ids.size());
  for (std::size_t k = 0; k < support_ids.size(); ++k) {
    const std::size_t i = support_ids[k];
    model.support.push_back(inputs[i]);
    for (std::size_t d = 0; d < dims; ++d) model.coefficients(d, k) = solutions[d].alpha_star[i] - solutions[d].alpha[i];
  }
  for (std::size_t d = 0; d < dims; ++d) {
    model.bias.push_back(solutions[d].bias);
    model.tube.push_back(solutions[d].tube);
    model.converged.push_back(solutions[d].converged);
  }
  return model;
}

ImModel train_im(std::span<const Vector> inputs, const Matrix& targets, const SvrConfig& config, std::size_t threads) {
  return train_im(inputs, targets, std::span<const SvrConfig>(&config, 1), threads);
}

Vector predict_im(const ImModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim)
    throw Error(Errc::dimension, "instance has " + std::to_string(x.size()) + " features, model expects " +
                                     std::to_string(model.input_dim));
  Vector k(model.support.size());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = model.kernel(model.support[i], x);
  Vector out(model.target_dim);
  for (std::size_t d = 0; d < model.target_dim; ++d) out[d] = simd::dot(model.coefficients.row(d), k) + model.bias[d];
  return out;
}

RegressionStats regression_error(std::span<const Vector> predictions, std::span<const Vector> targets, double scattering) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw Error(Errc::dimension, "regression error needs matching, non-empty prediction and target sets");
  RegressionStats stats;
  for (std::size_t i = 0; i < predictions.size(); ++i) stats.mean_error += simd::distance(predictions[i], targets[i]);
  stats.mean_error /= static_cast<double>(predictions.size());
  stats.scattering = scattering;
  if (!(scattering > 0.0)) throw Error(Errc::domain, "scattering is zero; relative regression error is undefined");
  stats.relative_error = stats.mean_error / scattering;
  return stats;
}

RegressionStats regression_error(const ImModel& model, std::span<const Vector> inputs, std::span<const Vector> targets,
                                 double scattering) {
  std::vector<Vector> predictions;
  predictions.reserve(inputs.size());
  for (const auto& x : inputs) predictions.push_back(predict_im(model, x));
  return regression_error(predictions, targets, scattering);
}

json to_json(const SvrConfig& c) {
  return json{{"nu", c.nu}, {"C", c.C}, {"kernel", to_json(c.kernel)}, {"tolerance", c.tolerance}, {"max_iterations", c.max_iterations}};
}

SvrConfig svr_config_from_json(const json& j, SvrConfig c) {
  c.nu = j.value("nu", c.nu);
  c.C = j.value("C", c.C);
  if (j.contains("kernel")) c.kernel = kernel_config_from_json(j.at("kernel"), c.kernel);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  return c;
}

json to_json(const ImModel& m) {
  json support = json::array();
  for (const auto& s : m.support) support.push_back(s);
  json coef = json::array();
  for (std::size_t d = 0; d < m.target_dim; ++d) {
    auto row = m.coefficients.row(d);
    coef.push_back(Vector(row.begin(), row.end()));
  }
  return json{{"kernel", to_json(m.kernel)}, {"input_dim", m.input_dim}, {"target_dim", m.target_dim},
              {"support", support},          {"coefficients", coef},      {"bias", m.bias},
              {"tube", m.tube},              {"converged", m.converged}};
}

ImModel im_model_from_json(const json& j) {
  ImModel m;
  m.kernel = kernel_config_from_json(j.at("kernel"));
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.target_dim = j.at("target_dim").get<std::size_t>();
  for (const auto& s : j.at("support")) m.support.push_back(s.get<Vector>());
  m.coefficients = Matrix(m.target_dim, m.support.size());
  const auto& coef = j.at("coefficients");
  for (std::size_t d = 0; d < m.target_dim; ++d) {
    const auto row = coef.at(d).get<Vector>();
    if (row.size() != m.support.size()) throw Error(Errc::parse, "coefficient row length mismatch");
    std::copy(row.begin(), row.end(), m.coefficients.row(d).begin());
  }
  m.bias = j.at("bias").get<Vector>();
  m.tube = j.value("tube", Vector(m.target_dim, 0.0));
  m.converged = j.value("converged", std::vector<bool>(m.target_dim, true));
  return m;
}

}  // namespace cezsl
