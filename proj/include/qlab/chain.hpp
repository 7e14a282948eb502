#pragma once

// Finite Markov chain toolkit: induced chains, lazy chains, irreducibility,
// stationary distributions, exploration constants, mixing certificates and
// Poisson-equation solvers, plus the averaged Q-learning operators defined on
// the joint state-action chain.

#include "qlab/mdp.hpp"
#include "qlab/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace qlab {

/// Row-stochastic matrix over a finite index set (states, or pairs s*|A|+a).
struct StochasticMatrix {
  Matrix entries;

  int size() const noexcept { return static_cast<int>(entries.rows()); }
};

struct StationaryDistribution {
  Vector weights;
  double min_weight = 0.0;
};

/// Exploration constants of a reference policy pi_b: the smallest power r at
/// which the lazy state chain is entrywise positive, the minimum entry delta at
/// that power, min_s mu_{pi_b}(s) and min_{s,a} pi_b(a|s).
struct ExplorationConstants {
  int r = 1;
  double delta = 0.0;
  double mu_min = 0.0;
  double pi_b_min = 0.0;
};

enum class CertificateKind { empirical, certified };

inline const char* to_string(CertificateKind k) {
  return k == CertificateKind::empirical ? "empirical" : "certified";
}

/// (c, rho) with max_i TV(P^k(i,.), mu) <= c * rho^k.
struct MixingCertificate {
  double c = 1.0;
  double rho = 0.5;
  CertificateKind kind = CertificateKind::empirical;
};

struct PoissonSolution {
  Vector x;
  double residual_norm = 0.0;
  Vector centered_rhs;
  long terms = 0;
};

/// Below this a TV distance is treated as numerically zero.
inline constexpr double kTvFloor = 1e-13;
/// Only d(k) above this enter the rate fit; smaller values carry too much
/// relative round-off.
inline constexpr double kFitFloor = 1e-10;
/// Absolute slack used when re-validating c * rho^k >= d(k).
inline constexpr double kCertificateSlack = 1e-12;

inline void check_stochastic(const StochasticMatrix& p, const char* who) {
  const Matrix& m = p.entries;
  if (m.rows() != m.cols() || m.rows() == 0)
    throw DimensionError(std::string(who) + ": transition matrix must be square and nonempty");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.row(i).minCoeff() < 0.0 || std::abs(m.row(i).sum() - 1.0) > 1e-10)
      throw PreconditionError(std::string(who) + ": row " + std::to_string(i) +
                              " is not a probability distribution");
  }
}

/// P_pi(s, s') = sum_a pi(a|s) p(s'|s,a).
inline StochasticMatrix state_chain(const TabularMdp& mdp, const Policy& policy) {
  require_same_shape(mdp, policy, "state_chain");
  Matrix out = Matrix::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      out.row(s) += policy.probs(s, a) * mdp.transition.row(mdp.pair_index(s, a));
  return {out};
}

/// Pbar_pi((s,a),(s',a')) = p(s'|s,a) pi(a'|s').
inline StochasticMatrix joint_chain(const TabularMdp& mdp, const Policy& policy) {
  return {joint_transition(mdp, policy)};
}

inline StochasticMatrix lazy(const StochasticMatrix& p) {
  const int n = p.size();
  return {0.5 * (p.entries + Matrix::Identity(n, n))};
}

/// Strong connectivity of the graph of positive entries.
inline bool is_irreducible(const StochasticMatrix& p) {
  const int n = p.size();
  if (n == 0) return false;
  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j) {
        const double w = transpose ? p.entries(j, i) : p.entries(i, j);
        if (w > 0.0 && !seen[j]) {
          seen[j] = 1;
          ++count;
          stack.push_back(j);
        }
      }
    }
    return count == n;
  };
  return reaches_all(false) && reaches_all(true);
}

/// Unique stationary distribution of an irreducible chain, by power iteration
/// on the (aperiodic) lazy chain started from the uniform distribution, then
/// refined by a direct solve when that has the smaller residual.
inline StationaryDistribution stationary(const StochasticMatrix& p, double tol = 1e-13,
                                         long max_iter = 10'000'000) {
  check_stochastic(p, "stationary");
  if (!is_irreducible(p)) throw ReducibleChainError("stationary: chain is not irreducible");
  const int n = p.size();
  const Matrix lazy_t = lazy(p).entries.transpose();
  Vector mu = Vector::Constant(n, 1.0 / n);
  Vector next(n);
  double change = std::numeric_limits<double>::infinity();
  long it = 0;
  for (; it < max_iter; ++it) {
    next.noalias() = lazy_t * mu;
    next /= next.sum();
    change = (next - mu).lpNorm<1>();
    mu.swap(next);
    if (change < tol) break;
  }
  // Polish with a direct solve of mu^T (I - P) = 0, sum(mu) = 1.
  Matrix a = Matrix::Identity(n, n) - p.entries.transpose();
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector direct = a.fullPivLu().solve(rhs).cwiseMax(0.0);
  direct /= direct.sum();
  double residual = (p.entries.transpose() * mu - mu).lpNorm<1>();
  const double direct_residual = (p.entries.transpose() * direct - direct).lpNorm<1>();
  if (direct.allFinite() && direct_residual < residual) {
    mu = direct;
    residual = direct_residual;
  }
  if (it == max_iter || residual > 1e-9) {
    std::ostringstream os;
    os << "stationary: power iteration did not converge (last change " << change
       << ", residual " << residual << ")";
    throw ConvergenceError(os.str(), residual);
  }
  return {mu, mu.minCoeff()};
}

inline ExplorationConstants exploration_constants(const TabularMdp& mdp, const Policy& pi_b) {
  const StochasticMatrix chain = state_chain(mdp, pi_b);
  if (!is_irreducible(chain))
    throw ReducibleChainError("exploration_constants: pi_b does not induce an irreducible chain");
  const Matrix step = lazy(chain).entries;
  Matrix power = step;
  int r = 1;
  // Irreducible lazy chains on n states are entrywise positive by power n - 1.
  while (!(power.minCoeff() > 0.0)) {
    if (r > mdp.n_states)
      throw ReducibleChainError("exploration_constants: lazy chain never becomes positive");
    power = power * step;
    ++r;
  }
  ExplorationConstants ec;
  ec.r = r;
  ec.delta = power.minCoeff();
  ec.mu_min = stationary(chain).min_weight;
  ec.pi_b_min = pi_b.probs.minCoeff();
  return ec;
}

/// d(k) = max_i TV(P^k(i, .), mu) for k = 0..k_max, TV being half the l1 norm.
inline std::vector<double> tv_profile(const StochasticMatrix& p, const StationaryDistribution& mu,
                                      int k_max) {
  const int n = p.size();
  if (mu.weights.size() != n) throw DimensionError("tv_profile: mu does not match the chain");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(k_max) + 1);
  Matrix power = Matrix::Identity(n, n);
  const Eigen::RowVectorXd mu_row = mu.weights.transpose();
  for (int k = 0; k <= k_max; ++k) {
    if (k > 0) power = power * p.entries;
    d.push_back(0.5 * (power.rowwise() - mu_row).cwiseAbs().rowwise().sum().maxCoeff());
  }
  return d;
}

struct CertificateCheck {
  std::vector<double> distance;  // d(k), k = 0..k_max
  std::vector<double> bound;     // c * rho^k
  std::vector<bool> holds;
  bool all_hold = true;
  int first_violation = -1;
};

/// Re-validates c * rho^k >= d(k) for every k <= k_max by explicit matrix powers.
inline CertificateCheck check_certificate(const StochasticMatrix& p_lazy,
                                          const StationaryDistribution& mu,
                                          const MixingCertificate& cert, int k_max) {
  CertificateCheck out;
  out.distance = tv_profile(p_lazy, mu, k_max);
  for (int k = 0; k <= k_max; ++k) {
    const double bound = cert.c * std::pow(cert.rho, k);
    const bool ok = out.distance[k] <= bound + kCertificateSlack;
    out.bound.push_back(bound);
    out.holds.push_back(ok);
    if (!ok && out.all_hold) {
      out.all_hold = false;
      out.first_violation = k;
    }
  }
  return out;
}

/// Empirical mixing certificate for a lazy chain. rho comes from a
/// least-squares fit of log d(k) over the tail half of the k with
/// d(k) > kFitFloor; c is then the smallest constant (at least 1) making
/// c * rho^k >= d(k) at every k with d(k) > kTvFloor, and rho is raised if
/// needed so the bound also covers the remaining k <= k_max.
inline MixingCertificate empirical_mixing(const StochasticMatrix& p_lazy,
                                          const StationaryDistribution& mu, int k_max) {
  if (k_max < 1) throw PreconditionError("empirical_mixing: k_max must be positive");
  const std::vector<double> d = tv_profile(p_lazy, mu, k_max);
  std::vector<int> live;
  for (int k = 1; k <= k_max; ++k)
    if (d[k] > kTvFloor) live.push_back(k);
  if (live.empty()) return {1.0, 0.5, CertificateKind::empirical};
  if (live.size() == 1) {
    // Nothing to regress on; fall back to the conventional rate.
    const double c = std::max(1.0, d[live[0]] / std::pow(0.5, live[0]));
    return {c * (1.0 + 1e-12), 0.5, CertificateKind::empirical};
  }

  std::vector<int> fit;
  for (int k : live)
    if (d[k] > kFitFloor) fit.push_back(k);
  if (fit.size() < 2) fit = live;
  const std::size_t tail = std::max<std::size_t>(2, (fit.size() + 1) / 2);
  const std::size_t first = fit.size() - tail;
  double sk = 0, sy = 0, skk = 0, sky = 0;
  const double m = static_cast<double>(fit.size() - first);
  for (std::size_t i = first; i < fit.size(); ++i) {
    const double k = fit[i];
    const double y = std::log(d[fit[i]]);
    sk += k;
    sy += y;
    skk += k * k;
    sky += k * y;
  }
  const double denom = m * skk - sk * sk;
  if (!(denom > 0.0)) throw FitError("empirical_mixing: degenerate regression design");
  const double slope = (m * sky - sk * sy) / denom;
  const double rho = std::exp(slope);
  if (!(rho > 0.0 && rho < 1.0))
    throw FitError("empirical_mixing: fitted decay rate is not in (0, 1)");

  double log_c = 0.0;
  for (int k : live) log_c = std::max(log_c, std::log(d[k]) - k * std::log(rho));
  log_c = std::max(log_c, std::log(std::max(d[0], kTvFloor)));
  // Points at round-off level were left out of the fit; widen rho until
  // they are covered as well.
  double log_rho = std::log(rho);
  for (int k = 1; k <= k_max; ++k)
    if (d[k] > 0.0) log_rho = std::max(log_rho, (std::log(d[k]) - log_c) / k);
  if (!(log_rho < 0.0)) throw FitError("empirical_mixing: tail of d(k) does not decay");
  // Nudge upwards so that rounding in c * rho^k never undercuts d(k).
  return {std::exp(log_c) * (1.0 + 1e-12), std::exp(log_rho) * (1.0 + 1e-15),
          CertificateKind::empirical};
}

/// Mixing parameters of the joint lazy chain of any policy whose smallest
/// action probability is `pi_min`, from the exploration constants of pi_b.
inline MixingCertificate certified_mixing(double pi_min, const ExplorationConstants& ec) {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(pi_min)) throw PreconditionError("certified_mixing: pi_min must lie in (0, 1]");
  if (!in_unit(ec.delta) || !in_unit(ec.mu_min) || !in_unit(ec.pi_b_min) || ec.r < 1)
    throw PreconditionError(
        "certified_mixing: exploration constants need r >= 1 and delta, mu_min, pi_b_min in "
        "(0, 1]");
  const double inner = 0.5 * ec.delta * std::pow(pi_min, ec.r + 1) * ec.mu_min * ec.pi_b_min;
  const double base = 1.0 - inner;
  return {1.0 / base, std::pow(base, 1.0 / (ec.r + 1)), CertificateKind::certified};
}

inline Vector center(const StationaryDistribution& mu, const Vector& y) {
  return (y.array() - mu.weights.dot(y)).matrix();
}

/// x = (1/2) sum_k Pl^k y~ with Pl = lazy(p) and y~ = y - (mu^T y) 1, stopped
/// once a term falls below `tol` in sup norm or after k_max terms.
inline PoissonSolution poisson_series(const StochasticMatrix& p, const StationaryDistribution& mu,
                                      const Vector& y, double tol = 1e-12,
                                      long k_max = 1'000'000) {
  check_stochastic(p, "poisson_series");
  if (y.size() != p.size() || mu.weights.size() != p.size())
    throw DimensionError("poisson_series: sizes of P, mu and y disagree");
  const Matrix step = lazy(p).entries;
  PoissonSolution sol;
  sol.centered_rhs = center(mu, y);
  Vector term = 0.5 * sol.centered_rhs;
  sol.x = Vector::Zero(p.size());
  long k = 0;
  for (; k <= k_max; ++k) {
    sol.x += term;
    if (sup_norm(term) < tol) break;
    term = step * term;
  }
  sol.terms = std::min(k, k_max) + 1;
  const Vector lhs = sol.x - p.entries * sol.x;
  sol.residual_norm = sup_norm(lhs - sol.centered_rhs);
  if (k > k_max && sol.residual_norm > 100.0 * tol) {
    std::ostringstream os;
    os << "poisson_series: " << k_max << " terms exhausted with residual " << sol.residual_norm;
    throw ConvergenceError(os.str(), sol.residual_norm);
  }
  return sol;
}

/// Direct solve of {(I - P) x = y~, mu^T x = 0}: the last (redundant) row of
/// I - P is replaced by the normalisation constraint.
inline PoissonSolution poisson_direct(const StochasticMatrix& p, const StationaryDistribution& mu,
                                      const Vector& y) {
  check_stochastic(p, "poisson_direct");
  const int n = p.size();
  if (y.size() != n || mu.weights.size() != n)
    throw DimensionError("poisson_direct: sizes of P, mu and y disagree");
  PoissonSolution sol;
  sol.centered_rhs = center(mu, y);
  Matrix system = Matrix::Identity(n, n) - p.entries;
  Vector rhs = sol.centered_rhs;
  system.row(n - 1) = mu.weights.transpose();
  rhs(n - 1) = 0.0;
  const Eigen::FullPivLU<Matrix> lu(system);
  if (!lu.isInvertible()) throw SingularSystemError("poisson_direct: system is singular");
  sol.x = lu.solve(rhs);
  if (!sol.x.allFinite()) throw SingularSystemError("poisson_direct: non-finite solution");
  sol.residual_norm = sup_norm(sol.x - p.entries * sol.x - sol.centered_rhs);
  return sol;
}

/// ||x||_inf <= c / (1 - rho) * ||y~||_inf (with 1e-9 slack).
inline bool poisson_bound_check(const PoissonSolution& sol, const MixingCertificate& cert) {
  const double scale = cert.rho < 1.0 ? cert.c / (1.0 - cert.rho)
                                      : std::numeric_limits<double>::infinity();
  const double y_norm = sup_norm(sol.centered_rhs);
  const double rhs = y_norm == 0.0 ? 0.0 : scale * y_norm;
  return sup_norm(sol.x) <= rhs + 1e-9;
}

/// Fbar(Q, pi) = Q + D (H(Q) - Q) with D = diag(mu_bar) over state-action pairs.
inline QFunction fbar(const TabularMdp& mdp, const Policy& policy, const QFunction& q,
                      const StationaryDistribution& mu_bar) {
  require_same_shape(mdp, q, "fbar");
  require_same_shape(mdp, policy, "fbar");
  if (mu_bar.weights.size() != mdp.n_pairs())
    throw DimensionError("fbar: mu_bar must live on state-action pairs");
  const Matrix d = unflatten(mu_bar.weights, mdp.n_states, mdp.n_actions);
  const QFunction h = bellman_optimality(mdp, q);
  return QFunction(q.values + d.cwiseProduct(h.values - q.values));
}

inline void require_pair(const TabularMdp& mdp, StateAction y, const char* who) {
  if (y.state < 0 || y.state >= mdp.n_states || y.action < 0 || y.action >= mdp.n_actions)
    throw DimensionError(std::string(who) + ": state-action index out of range");
}

/// F(Q, y): applies the expected Bellman update to the single entry y.
inline QFunction f_sample(const TabularMdp& mdp, const QFunction& q, StateAction y) {
  require_same_shape(mdp, q, "f_sample");
  require_pair(mdp, y, "f_sample");
  const Vector vmax = state_max(q);
  QFunction out = q;
  const double target =
      mdp.reward(y.state, y.action) +
      mdp.discount * mdp.transition.row(mdp.pair_index(y.state, y.action)).dot(vmax);
  out(y.state, y.action) = target;
  return out;
}

/// Realized noise M(Q) when y is visited and `next_state` is drawn.
inline QFunction noise_sample(const TabularMdp& mdp, const QFunction& q, StateAction y,
                              int next_state) {
  require_same_shape(mdp, q, "noise_sample");
  require_pair(mdp, y, "noise_sample");
  const Vector vmax = state_max(q);
  QFunction out = QFunction::zeros(mdp.n_states, mdp.n_actions);
  const double expected = mdp.transition.row(mdp.pair_index(y.state, y.action)).dot(vmax);
  out(y.state, y.action) = mdp.discount * (vmax(next_state) - expected);
  return out;
}

/// E[M(Q) | (S, A) = y], summed exactly over next states.
inline QFunction noise_conditional_mean(const TabularMdp& mdp, const QFunction& q, StateAction y) {
  require_same_shape(mdp, q, "noise_conditional_mean");
  require_pair(mdp, y, "noise_conditional_mean");
  QFunction mean = QFunction::zeros(mdp.n_states, mdp.n_actions);
  const auto row = mdp.transition.row(mdp.pair_index(y.state, y.action));
  for (int s2 = 0; s2 < mdp.n_states; ++s2) {
    if (row(s2) == 0.0) continue;
    mean.values += row(s2) * noise_sample(mdp, q, y, s2).values;
  }
  return mean;
}

/// Induced infinity norm of the policy difference: max_s sum_a |pi1 - pi2|.
inline double policy_distance(const Policy& p1, const Policy& p2) {
  if (p1.probs.rows() != p2.probs.rows() || p1.probs.cols() != p2.probs.cols())
    throw DimensionError("policy_distance: policies differ in shape");
  return (p1.probs - p2.probs).cwiseAbs().rowwise().sum().maxCoeff();
}

/// Combines two certificates into one valid for both chains.
inline MixingCertificate max_certificate(const MixingCertificate& a, const MixingCertificate& b) {
  return {std::max(a.c, b.c), std::max(a.rho, b.rho), a.kind};
}

struct SensitivityComparison {
  double lhs = 0.0;  // ||mu_bar_1 - mu_bar_2||_1
  double rhs = 0.0;  // Lipschitz-type bound
  double policy_gap = 0.0;
};

/// Compares the l1 distance between joint stationary distributions of two
/// policies with 2 (log(d / (4c)) / log(rho)) d, d = ||pi1 - pi2||_inf.
inline SensitivityComparison stationary_sensitivity(const TabularMdp& mdp, const Policy& p1,
                                                    const Policy& p2,
                                                    const MixingCertificate& cert) {
  const StochasticMatrix j1 = joint_chain(mdp, p1);
  const StochasticMatrix j2 = joint_chain(mdp, p2);
  if (!is_irreducible(j1) || !is_irreducible(j2))
    throw ReducibleChainError("stationary_sensitivity: a joint chain is reducible");
  SensitivityComparison out;
  out.policy_gap = policy_distance(p1, p2);
  if (out.policy_gap == 0.0) {
    out.lhs = 0.0;
    out.rhs = std::numeric_limits<double>::infinity();
    return out;
  }
  out.lhs = (stationary(j1).weights - stationary(j2).weights).lpNorm<1>();
  if (!(cert.rho < 1.0) || !(cert.rho > 0.0)) {
    out.rhs = std::numeric_limits<double>::infinity();
    return out;
  }
  const double k = std::log(out.policy_gap / (4.0 * cert.c)) / std::log(cert.rho);
  out.rhs = 2.0 * std::max(k, 0.0) * out.policy_gap;
  return out;
}

}  // namespace qlab
