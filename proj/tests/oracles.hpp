#pragma once

// Reference implementations used only by the tests. They favour directness
// over speed and share no code paths with the library under test.

#include <functional>
#include <string>
#include <vector>

#include "cezsl/common.hpp"
#include "cezsl/im_regressor.hpp"
#include "cezsl/siamese.hpp"

namespace oracle {

using cezsl::Matrix;
using cezsl::Vector;

double dot(const Vector& a, const Vector& b);
double dist(const Vector& a, const Vector& b);

/// Central-difference gradient of `f` with respect to every parameter, in
/// layer order (weights row-major, then bias).
std::vector<double> numeric_gradient(const cezsl::SubNetworkParams& params,
                                     const std::function<double(const cezsl::SubNetworkParams&)>& f, double h);
std::vector<double> flatten(const cezsl::SubNetworkParams& params);

/// Random pair of network inputs with ±1 targets; similarity in (0, 1].
cezsl::ConceptPair random_pair(cezsl::Rng& rng, std::size_t input, std::size_t output, cezsl::PairCase kind);

/// Largest per-parameter relative difference between an analytic and a
/// numeric gradient; entries where both are below `floor` count as absolute.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double floor);

/// Euclidean projection onto {0 <= x <= cap, sum x = total} by bisection on the shift.
Vector project_capped_simplex(const Vector& v, double cap, double total);

struct DualSolve {
  Vector alpha, alpha_star;
  double objective = 0.0;
  double bias = 0.0;
};

/// Dense accelerated projected gradient on
///   min 1/2 (a - a*)' K (a - a*) + y' (a - a*)
///   s.t. 1'(a - a*) = 0, 1'(a + a*) <= C nu, 0 <= a, a* <= C/N
/// with the bias recovered from the primal by a direct 1-D search.
DualSolve projected_gradient_nu_svr(const Matrix& K, const Vector& y, double C, double nu, int iterations = 40000);

/// Primal-optimal bias for fixed expansion coefficients (midpoint of the optimal interval).
double primal_bias(const Matrix& K, const Vector& y, const Vector& coefficients, double nu);

/// Direct evaluation of the ν-SVR dual objective.
double dual_objective(const Matrix& K, const Vector& y, const Vector& alpha, const Vector& alpha_star);

/// 11-point interpolated AP computed directly from the P@k / R@k curve.
/// `ranked_positive[k]` says whether the (k+1)-th ranked item is relevant.
double interpolated_ap(const std::vector<bool>& ranked_positive);

/// Example-based AP: mean of P@i for i = 1..|truth| over a ranked list.
double example_ap(const std::vector<std::string>& truth, const std::vector<std::string>& ranked);

/// Minimum Euclidean distance to any of `records`, summed left to right in double.
double brute_force_min_distance(const Vector& point, const std::vector<Vector>& records);

/// Inverse-distance relatedness over labels, brute force. Returns scores in
/// the order of `label_records`.
std::vector<double> priming_scores(const Vector& point, const std::vector<std::vector<Vector>>& label_records);

}  // namespace oracle
