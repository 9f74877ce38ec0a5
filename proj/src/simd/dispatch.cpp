#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cezsl/simd/kernels.hpp"

namespace cezsl::simd {

namespace {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*squared_distance)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

constexpr KernelTable kScalar{&scalar::dot, &scalar::squared_distance, &scalar::axpy};
#ifdef CEZSL_HAVE_AVX2
constexpr KernelTable kAvx2{&avx2::dot, &avx2::squared_distance, &avx2::axpy};
#endif

bool cpu_has_avx2() {
#if defined(CEZSL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend backend) {
#ifdef CEZSL_HAVE_AVX2
  if (backend == Backend::avx2) return &kAvx2;
#endif
  (void)backend;
  return &kScalar;
}

Backend initial_backend() {
  if (const char* env = std::getenv("CEZSL_SIMD")) {
    const std::string choice(env);
    if (choice == "scalar") return Backend::scalar;
    if (choice == "avx2" && cpu_has_avx2()) return Backend::avx2;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_state() {
  static std::atomic<Backend> state{initial_backend()};
  return state;
}

std::atomic<const KernelTable*>& table_state() {
  static std::atomic<const KernelTable*> state{table_for(backend_state().load())};
  return state;
}

inline const KernelTable& kernels() { return *table_state().load(std::memory_order_relaxed); }

}  // namespace

std::string_view to_string(Backend backend) { return backend == Backend::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
  static const bool available = cpu_has_avx2();
  return available;
}

Backend active_backend() { return backend_state().load(); }

void set_backend(Backend backend) {
  if (backend == Backend::avx2 && !avx2_available())
    throw std::runtime_error("avx2 kernels are not available on this machine");
  backend_state().store(backend);
  table_state().store(table_for(backend));
}

double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  return kernels().squared_distance(a.data(), b.data(), a.size());
}

double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace cezsl::simd
