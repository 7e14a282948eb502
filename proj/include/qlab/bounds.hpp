#pragma once

// Finite-time bound calculators for on-policy Q-learning with constant
// stepsize, and comparison against empirical ensemble curves.

#include "qlab/chain.hpp"
#include "qlab/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace qlab {

/// Absolute constants of the explicit mean-square bound.
inline constexpr double kVarianceConstantLinear = 10080.0;
inline constexpr double kVarianceConstantQuadratic = 38400.0;

struct Theorem1Constants {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  double lambda = 0.0;
  // Inputs, echoed for reporting.
  ExplorationConstants exploration;
  double gamma = 0.0;
  double tau = 0.0;
  long sa_count = 0;
};

inline Theorem1Constants theorem1_constants(const ExplorationConstants& ec, double lambda,
                                            double gamma, double tau, long sa_count) {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw PreconditionError("theorem1_constants: lambda must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw PreconditionError("theorem1_constants: gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0 / (1.0 - gamma)))
    throw PreconditionError("theorem1_constants: tau must lie in (0, 1/(1-gamma)]");
  if (sa_count < 1) throw PreconditionError("theorem1_constants: |S||A| must be positive");
  if (ec.r < 1 || !(ec.delta > 0.0 && ec.delta <= 1.0) || !(ec.mu_min > 0.0 && ec.mu_min <= 1.0) ||
      !(ec.pi_b_min > 0.0 && ec.pi_b_min <= 1.0))
    throw PreconditionError(
        "theorem1_constants: exploration constants need r >= 1 and delta, mu_min, pi_b_min in "
        "(0, 1]");

  const double r = ec.r;
  const double mu = ec.mu_min;
  const double delta = ec.delta;
  const double pib = ec.pi_b_min;
  const double one_minus_gamma = 1.0 - gamma;

  Theorem1Constants out;
  out.lambda = lambda;
  out.exploration = ec;
  out.gamma = gamma;
  out.tau = tau;
  out.sa_count = sa_count;
  out.c1 = 0.5 * std::pow(lambda, r) * mu * delta * one_minus_gamma;
  out.c2 = kVarianceConstantLinear * (r + 1.0) * std::log(static_cast<double>(sa_count)) /
           (std::pow(lambda, 3.0 * r + 1.0) * pib * std::pow(mu, 3) * std::pow(delta, 3) *
            std::pow(one_minus_gamma, 4));
  out.c3 = kVarianceConstantQuadratic * std::pow(r + 1.0, 4) /
           (tau * tau * std::pow(lambda, 6.0 * r + 4.0) * std::pow(mu, 6) * std::pow(pib, 4) *
            std::pow(delta, 6) * std::pow(one_minus_gamma, 6));
  out.c4 = 4.0 * (r + 1.0) / (delta * std::pow(lambda, r + 1.0) * mu * pib);
  return out;
}

struct Theorem1Curve {
  std::vector<double> values;
  double variance_floor = 0.0;
  /// True when c4/alpha <= 1 and the log^4 factor was clamped to 0.
  bool log_clamped = false;
};

/// 3 q0_gap^2 (1 - alpha c1)^k + c2 alpha + c3 alpha^2 log^4(c4/alpha).
inline Theorem1Curve theorem1_curve(const Theorem1Constants& consts, double alpha, double q0_gap,
                                    const std::vector<std::int64_t>& k_list) {
  if (!(alpha > 0.0)) throw PreconditionError("theorem1_curve: alpha must be positive");
  if (!(alpha < 1.0 / consts.c1))
    throw PreconditionError("theorem1_curve: the stepsize alpha must satisfy alpha < 1/c1 (alpha=" +
                            std::to_string(alpha) + ", 1/c1=" + std::to_string(1.0 / consts.c1) +
                            ")");
  Theorem1Curve out;
  const double ratio = consts.c4 / alpha;
  double log_term = 0.0;
  if (ratio > 1.0) {
    log_term = std::pow(std::log(ratio), 4);
  } else {
    out.log_clamped = true;
  }
  out.variance_floor = consts.c2 * alpha + consts.c3 * alpha * alpha * log_term;
  const double decay = 1.0 - alpha * consts.c1;
  for (std::int64_t k : k_list) {
    if (k < 0) throw PreconditionError("theorem1_curve: iterations must be nonnegative");
    out.values.push_back(3.0 * q0_gap * q0_gap * std::pow(decay, static_cast<double>(k)) +
                         out.variance_floor);
  }
  return out;
}

/// Iterations sufficient for E||Q_k - Q*||_inf <= xi, following the corollary's
/// derivation with alpha = min(xi^2/(3 c2), xi/sqrt(3 c3)). Returned as a
/// double holding an integer value (the counts overflow 64-bit integers for
/// realistic constants). With `include_log`, c3 is inflated by log^4(c4/alpha)
/// evaluated at that alpha.
inline double corollary1_complexity(const Theorem1Constants& consts, double xi, double q0_gap,
                                    bool include_log = false) {
  if (!(xi > 0.0)) throw PreconditionError("corollary1_complexity: xi must be positive");
  const double log_factor = std::log(3.0 * q0_gap / xi);
  if (!(log_factor > 0.0)) return 0.0;
  double c3 = consts.c3;
  if (include_log) {
    const double alpha =
        std::min(xi * xi / (3.0 * consts.c2), xi / std::sqrt(3.0 * consts.c3));
    const double ratio = consts.c4 / alpha;
    if (ratio > 1.0) c3 *= std::pow(std::log(ratio), 4);
  }
  const double inv_alpha = std::max(3.0 * consts.c2 / (xi * xi), std::sqrt(3.0 * c3) / xi);
  return std::ceil(2.0 * log_factor / consts.c1 * inv_alpha);
}

struct Theorem2Decomposition {
  double t1_coeff = 0.0;  // multiplies E||Q_k - Q*||_inf^2
  double t2 = 0.0;
};

inline Theorem2Decomposition theorem2_decomposition(double gamma, double epsilon, double tau,
                                                    int n_actions) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw PreconditionError("theorem2: gamma must lie in (0, 1)");
  if (epsilon < 0.0 || tau < 0.0) throw PreconditionError("theorem2: epsilon, tau must be >= 0");
  if (n_actions < 1) throw PreconditionError("theorem2: n_actions must be positive");
  const double omg = 1.0 - gamma;
  const double log_a = std::log(static_cast<double>(n_actions));
  Theorem2Decomposition out;
  out.t1_coeff = 12.0 * gamma * gamma / (omg * omg);
  out.t2 = 12.0 * epsilon * epsilon / std::pow(omg, 4) + 3.0 * tau * tau * log_a * log_a / (omg * omg);
  return out;
}

inline double theorem2_bound(double gamma, double epsilon, double tau, int n_actions,
                             double q_gap_sq) {
  const Theorem2Decomposition d = theorem2_decomposition(gamma, epsilon, tau, n_actions);
  return d.t1_coeff * q_gap_sq + d.t2;
}

struct DominanceReport {
  double fraction = 0.0;       // share of indices with bound >= empirical
  double worst_margin = 0.0;   // max(empirical - bound); <= 0 when dominated
  std::size_t worst_index = 0;
  std::size_t count = 0;
};

inline DominanceReport bound_vs_empirical(const std::vector<double>& bound,
                                          const std::vector<double>& empirical) {
  if (bound.size() != empirical.size())
    throw DimensionError("bound_vs_empirical: curves have different lengths");
  if (bound.empty()) throw PreconditionError("bound_vs_empirical: no overlapping points");
  DominanceReport out;
  out.count = bound.size();
  out.worst_margin = -std::numeric_limits<double>::infinity();
  std::size_t dominated = 0;
  for (std::size_t i = 0; i < bound.size(); ++i) {
    const double margin = empirical[i] - bound[i];
    if (bound[i] >= empirical[i]) ++dominated;
    if (margin > out.worst_margin) {
      out.worst_margin = margin;
      out.worst_index = i;
    }
  }
  out.fraction = static_cast<double>(dominated) / static_cast<double>(out.count);
  return out;
}

}  // namespace qlab
