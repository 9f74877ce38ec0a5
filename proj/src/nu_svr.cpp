#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "cezsl/im_regressor.hpp"

namespace cezsl {

void SvrConfig::validate() const {
  if (!(nu > 0.0) || nu > 1.0) throw Error(Errc::config, "nu must lie in (0, 1]");
  if (!(C > 0.0)) throw Error(Errc::config, "C must be positive");
  if (!(tolerance > 0.0)) throw Error(Errc::config, "solver tolerance must be positive");
  if (kernel.type == KernelType::rbf && !(kernel.gamma > 0.0)) throw Error(Errc::config, "rbf gamma must be positive");
}

Vector NuSvrSolution::coefficients() const {
  Vector c(alpha.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = alpha_star[i] - alpha[i];
  return c;
}

double nu_svr_dual_objective(const Matrix& gram, std::span<const double> targets, std::span<const double> alpha,
                             std::span<const double> alpha_star) {
  const std::size_t n = targets.size();
  Vector diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = alpha[i] - alpha_star[i];
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += gram(i, j) * diff[j];
    quad += diff[i] * row;
    lin += targets[i] * diff[i];
  }
  return 0.5 * quad + lin;
}

namespace {

// Variables 0..N-1 are alpha* (sign +1, linear term -y), N..2N-1 are alpha
// (sign -1, linear term +y). In this form the dual reads
//   min 1/2 sum_st sign_s sign_t K a_s a_t + sum_s p_s a_s
// with sum of each sign group fixed at C nu / 2 and 0 <= a <= C / N.
class NuSmo {
 public:
  NuSmo(const Matrix& gram, std::span<const double> y, const SvrConfig& config)
      : K_(gram), n_(y.size()), upper_(config.C / static_cast<double>(y.size())), a_(2 * y.size(), 0.0),
        p_(2 * y.size()), G_(2 * y.size()) {
    for (std::size_t i = 0; i < n_; ++i) {
      p_[i] = -y[i];
      p_[i + n_] = y[i];
    }
    double remaining = config.C * config.nu / 2.0;
    for (std::size_t i = 0; i < n_ && remaining > 0.0; ++i) {
      const double v = std::min(upper_, remaining);
      a_[i] = v;
      a_[i + n_] = v;
      remaining -= v;
    }
    // alpha* - alpha = 0 initially, so the quadratic part of the gradient vanishes.
    G_ = p_;
  }

  double sign(std::size_t s) const { return s < n_ ? 1.0 : -1.0; }
  double k(std::size_t s, std::size_t t) const { return K_(s % n_, t % n_); }
  double q(std::size_t s, std::size_t t) const { return sign(s) * sign(t) * k(s, t); }

  double objective() const {
    double f = 0.0;
    for (std::size_t s = 0; s < 2 * n_; ++s) f += a_[s] * (G_[s] + p_[s]);
    return 0.5 * f;
  }

  // Maximal violating pair within one sign group; returns the violation.
  double select(std::size_t& out_i, std::size_t& out_j) const {
    double best = -std::numeric_limits<double>::infinity();
    for (int group = 0; group < 2; ++group) {
      const std::size_t begin = group == 0 ? 0 : n_;
      const double y = group == 0 ? 1.0 : -1.0;
      double up = -std::numeric_limits<double>::infinity();
      double low = std::numeric_limits<double>::infinity();
      std::size_t i = 0, j = 0;
      for (std::size_t s = begin; s < begin + n_; ++s) {
        const double v = -y * G_[s];
        const bool can_up = y > 0 ? a_[s] < upper_ : a_[s] > 0.0;
        const bool can_low = y > 0 ? a_[s] > 0.0 : a_[s] < upper_;
        if (can_up && v > up) {
          up = v;
          i = s;
        }
        if (can_low && v < low) {
          low = v;
          j = s;
        }
      }
      if (up - low > best) {
        best = up - low;
        // For y = -1 moving "up" means decreasing a; swap so that a_i always decreases
        // and a_j increases in the update below.
        if (y > 0) {
          out_i = j;
          out_j = i;
        } else {
          out_i = i;
          out_j = j;
        }
      }
    }
    return best;
  }

  // a_i -= delta, a_j += delta along the group's equality constraint.
  void update(std::size_t i, std::size_t j) {
    const double quad = std::max(k(i, i) + k(j, j) - 2.0 * k(i, j), 1e-12);
    double delta = (G_[i] - G_[j]) / quad;
    const double lo = std::max(a_[i] - upper_, -a_[j]);
    const double hi = std::min(a_[i], upper_ - a_[j]);
    delta = std::clamp(delta, lo, hi);
    const double old_i = a_[i];
    const double old_j = a_[j];
    double new_i = old_i - delta;
    double new_j = old_j + delta;
    if (delta == hi) {
      if (hi == old_i) new_i = 0.0;
      else new_j = upper_;
    } else if (delta == lo) {
      if (lo == old_i - upper_) new_i = upper_;
      else new_j = 0.0;
    }
    new_i = std::clamp(new_i, 0.0, upper_);
    new_j = std::clamp(new_j, 0.0, upper_);
    const double di = new_i - old_i;
    const double dj = new_j - old_j;
    a_[i] = new_i;
    a_[j] = new_j;
    for (std::size_t s = 0; s < 2 * n_; ++s) G_[s] += q(s, i) * di + q(s, j) * dj;
  }

  // Bias and tube from group-wise averages of the gradient over free variables.
  void bias_and_tube(double& bias, double& tube) const {
    double r[2];
    for (int group = 0; group < 2; ++group) {
      const std::size_t begin = group == 0 ? 0 : n_;
      double ub = std::numeric_limits<double>::infinity();
      double lb = -std::numeric_limits<double>::infinity();
      double sum = 0.0;
      std::size_t free = 0;
      for (std::size_t s = begin; s < begin + n_; ++s) {
        if (a_[s] >= upper_) lb = std::max(lb, G_[s]);
        else if (a_[s] <= 0.0) ub = std::min(ub, G_[s]);
        else {
          sum += G_[s];
          ++free;
        }
      }
      r[group] = free > 0 ? sum / static_cast<double>(free) : (ub + lb) / 2.0;
    }
    bias = (r[1] - r[0]) / 2.0;
    tube = -(r[0] + r[1]) / 2.0;
  }

  std::span<const double> a() const { return a_; }
  std::size_t n() const { return n_; }

 private:
  const Matrix& K_;
  std::size_t n_;
  double upper_;
  Vector a_, p_, G_;
};

}  // namespace

NuSvrSolution solve_nu_svr(const Matrix& gram, std::span<const double> targets, const SvrConfig& config,
                           bool record_objective) {
  config.validate();
  const std::size_t n = targets.size();
  if (n < 2) throw Error(Errc::domain, "nu-SVR needs at least two training examples");
  if (gram.rows() != n || gram.cols() != n) throw Error(Errc::dimension, "kernel matrix does not match the targets");
  if (!all_finite(targets)) throw Error(Errc::numeric, "non-finite regression target");

  NuSmo smo(gram, targets, config);
  NuSvrSolution sol;
  if (record_objective) sol.objective_trace.push_back(smo.objective());
  std::size_t i = 0, j = 0;
  for (;;) {
    sol.max_violation = smo.select(i, j);
    if (sol.max_violation <= config.tolerance) {
      sol.converged = true;
      break;
    }
    if (sol.iterations >= config.max_iterations) {
      spdlog::warn("nu-SVR stopped after {} iterations with KKT violation {:.3g}", sol.iterations, sol.max_violation);
      break;
    }
    smo.update(i, j);
    ++sol.iterations;
    if (record_objective) sol.objective_trace.push_back(smo.objective());
  }
  const auto a = smo.a();
  sol.alpha_star.assign(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(n));
  sol.alpha.assign(a.begin() + static_cast<std::ptrdiff_t>(n), a.end());
  smo.bias_and_tube(sol.bias, sol.tube);
  sol.objective = nu_svr_dual_objective(gram, targets, sol.alpha, sol.alpha_star);
  return sol;
}

SvrModel train_nu_svr(std::span<const Vector> inputs, std::span<const double> targets, const SvrConfig& config) {
  if (inputs.size() != targets.size()) throw Error(Errc::dimension, "inputs and targets differ in count");
  if (inputs.size() < 2) throw Error(Errc::domain, "nu-SVR needs at least two training examples");
  const Matrix gram = kernel_matrix(inputs, config.kernel);
  const auto sol = solve_nu_svr(gram, targets, config);
  SvrModel model;
  model.kernel = config.kernel;
  model.bias = sol.bias;
  model.tube = sol.tube;
  model.converged = sol.converged;
  const Vector coef = sol.coefficients();
  for (std::size_t i = 0; i < coef.size(); ++i) {
    if (coef[i] == 0.0) continue;
    model.support.push_back(inputs[i]);
    model.coefficients.push_back(coef[i]);
  }
  return model;
}

double predict_svr(const SvrModel& model, std::span<const double> x) {
  double sum = model.bias;
  for (std::size_t i = 0; i < model.support.size(); ++i) {
    if (model.support[i].size() != x.size()) throw Error(Errc::dimension, "query dimension does not match the model");
    sum += model.coefficients[i] * model.kernel(model.support[i], x);
  }
  return sum;
}

}  // namespace cezsl
