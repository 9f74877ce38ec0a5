#pragma once

// Data-parallel inner loops shared by the network, the kernel matrix and the
// concept-store scans. Each kernel has a scalar reference implementation and,
// on x86-64, an AVX2+FMA variant. The active variant is picked once at startup
// from CPU features and can be overridden with CEZSL_SIMD=scalar|avx2 or
// set_backend().

#include <cstddef>
#include <span>
#include <string_view>

namespace cezsl::simd {

enum class Backend { scalar, avx2 };

std::string_view to_string(Backend backend);

/// True when the AVX2 variants were compiled in and the CPU supports them.
bool avx2_available();

Backend active_backend();

/// Switch kernels for the whole process. Requesting avx2 on a machine
/// without it throws std::runtime_error.
void set_backend(Backend backend);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

/// RAII override of the active backend, restoring the previous one on exit.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : previous_(active_backend()) { set_backend(backend); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

}  // namespace cezsl::simd
