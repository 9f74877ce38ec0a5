#include <atomic>
#include <cmath>

#include "cezsl/im_regressor.hpp"
#include "cezsl/simd/kernels.hpp"

namespace cezsl {

namespace {
std::atomic<std::size_t> g_kernel_builds{0};
}

double KernelConfig::operator()(std::span<const double> a, std::span<const double> b) const {
  switch (type) {
    case KernelType::linear: return simd::dot(a, b);
    case KernelType::polynomial: return std::pow(gamma * simd::dot(a, b) + coef0, degree);
    case KernelType::rbf: return std::exp(-gamma * simd::squared_distance(a, b));
  }
  return 0.0;
}

std::string to_string(KernelType type) {
  switch (type) {
    case KernelType::linear: return "linear";
    case KernelType::polynomial: return "polynomial";
    case KernelType::rbf: return "rbf";
  }
  return "?";
}

KernelType kernel_type_from_string(const std::string& name) {
  if (name == "linear") return KernelType::linear;
  if (name == "polynomial" || name == "poly") return KernelType::polynomial;
  if (name == "rbf") return KernelType::rbf;
  throw Error(Errc::config, "unknown kernel '" + name + "'");
}

Matrix kernel_matrix(std::span<const Vector> inputs, const KernelConfig& kernel) {
  g_kernel_builds.fetch_add(1, std::memory_order_relaxed);
  const std::size_t n = inputs.size();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (inputs[i].size() != inputs[0].size()) throw Error(Errc::dimension, "kernel inputs differ in dimension");
    for (std::size_t j = i; j < n; ++j) {
      const double v = kernel(inputs[i], inputs[j]);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

std::size_t kernel_matrix_builds() { return g_kernel_builds.load(); }

nlohmann::json to_json(const KernelConfig& kernel) {
  return nlohmann::json{{"type", to_string(kernel.type)}, {"gamma", kernel.gamma}, {"coef0", kernel.coef0}, {"degree", kernel.degree}};
}

KernelConfig kernel_config_from_json(const nlohmann::json& j, KernelConfig k) {
  if (j.contains("type")) k.type = kernel_type_from_string(j.at("type").get<std::string>());
  k.gamma = j.value("gamma", k.gamma);
  k.coef0 = j.value("coef0", k.coef0);
  k.degree = j.value("degree", k.degree);
  return k;
}

}  // namespace cezsl
