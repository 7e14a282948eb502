#pragma once

// Exact solution machinery for finite discounted MDPs: Bellman operators,
// value iteration, exact policy evaluation and the mixture-softmax learning
// policy map.

#include "qlab/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace qlab {

inline constexpr double kRowSumTolerance = 1e-12;

/// Lists every violated MDP invariant. An empty report means the MDP is valid.
inline std::vector<std::string> validate_mdp(const TabularMdp& mdp) {
  std::vector<std::string> report;
  if (mdp.n_states <= 0) report.push_back("n_states must be positive");
  if (mdp.n_actions <= 0) report.push_back("n_actions must be positive");
  if (!report.empty()) return report;

  if (mdp.transition.rows() != mdp.n_pairs() || mdp.transition.cols() != mdp.n_states) {
    std::ostringstream os;
    os << "transition must be " << mdp.n_pairs() << "x" << mdp.n_states << ", got "
       << mdp.transition.rows() << "x" << mdp.transition.cols();
    report.push_back(os.str());
  }
  if (mdp.reward.rows() != mdp.n_states || mdp.reward.cols() != mdp.n_actions) {
    std::ostringstream os;
    os << "reward must be " << mdp.n_states << "x" << mdp.n_actions << ", got "
       << mdp.reward.rows() << "x" << mdp.reward.cols();
    report.push_back(os.str());
  }
  if (!(mdp.discount > 0.0 && mdp.discount < 1.0)) {
    std::ostringstream os;
    os << "discount must lie in (0, 1), got " << mdp.discount;
    report.push_back(os.str());
  }
  if (!report.empty()) return report;

  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto row = mdp.transition.row(mdp.pair_index(s, a));
      if (!row.allFinite() || row.minCoeff() < 0.0) {
        std::ostringstream os;
        os << "transition row (s=" << s << ", a=" << a << ") has a negative or non-finite entry";
        report.push_back(os.str());
      } else if (std::abs(row.sum() - 1.0) > kRowSumTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "transition row (s=" << s << ", a=" << a << ") sums to " << row.sum()
           << ", not 1";
        report.push_back(os.str());
      }
      const double r = mdp.reward(s, a);
      if (!std::isfinite(r) || std::abs(r) > 1.0) {
        std::ostringstream os;
        os.precision(17);
        os << "reward bound |R(s,a)| <= 1 violated at (s=" << s << ", a=" << a << "): " << r;
        report.push_back(os.str());
      }
    }
  }
  return report;
}

/// Throws InvalidMdpError naming the first violated invariant.
inline void require_valid(const TabularMdp& mdp) {
  const auto report = validate_mdp(mdp);
  if (!report.empty()) throw InvalidMdpError(report.front());
}

/// max_a Q(s, a) for every state.
inline Vector state_max(const QFunction& q) { return q.values.rowwise().maxCoeff(); }

/// [H(Q)](s,a) = R(s,a) + gamma * sum_s' p(s'|s,a) max_a' Q(s',a').
inline QFunction bellman_optimality(const TabularMdp& mdp, const QFunction& q) {
  require_same_shape(mdp, q, "bellman_optimality");
  const Vector continuation = mdp.transition * state_max(q);
  return QFunction(mdp.reward +
                   mdp.discount * unflatten(continuation, mdp.n_states, mdp.n_actions));
}

/// [H_pi(Q)](s,a) = R(s,a) + gamma * sum_{s',a'} p(s'|s,a) pi(a'|s') Q(s',a').
inline QFunction bellman_policy(const TabularMdp& mdp, const Policy& policy, const QFunction& q) {
  require_same_shape(mdp, q, "bellman_policy");
  require_same_shape(mdp, policy, "bellman_policy");
  const Vector expected = policy.probs.cwiseProduct(q.values).rowwise().sum();
  const Vector continuation = mdp.transition * expected;
  return QFunction(mdp.reward +
                   mdp.discount * unflatten(continuation, mdp.n_states, mdp.n_actions));
}

/// Iteration budget that suffices for a gamma-contraction started anywhere in
/// the ball of radius 1/(1-gamma).
inline int default_value_iteration_budget(double discount, double tol) {
  const double horizon = 1.0 / (1.0 - discount);
  return static_cast<int>(std::ceil(std::log(2.0 * horizon / tol) * horizon)) + 1;
}

/// Q-value iteration from Q = 0. Returns the first iterate whose Bellman
/// residual ||H(Q) - Q||_inf is at most `tol`.
inline QFunction value_iteration(const TabularMdp& mdp, double tol = 1e-10, int max_iter = 0) {
  if (!(tol > 0.0)) throw PreconditionError("value_iteration: tol must be positive");
  if (max_iter <= 0) max_iter = default_value_iteration_budget(mdp.discount, tol);
  QFunction q = QFunction::zeros(mdp.n_states, mdp.n_actions);
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= max_iter; ++it) {
    QFunction next = bellman_optimality(mdp, q);
    residual = sup_distance(next, q);
    if (residual <= tol) return q;
    q = std::move(next);
  }
  std::ostringstream os;
  os.precision(6);
  os << "value_iteration: " << max_iter << " iterations exhausted with residual " << residual;
  throw ConvergenceError(os.str(), residual);
}

/// Joint transition matrix over state-action pairs:
/// Pbar((s,a),(s',a')) = p(s'|s,a) pi(a'|s'). Rows indexed by `pair_index`.
inline Matrix joint_transition(const TabularMdp& mdp, const Policy& policy) {
  require_same_shape(mdp, policy, "joint_transition");
  const int n = mdp.n_pairs();
  Matrix out(n, n);
  for (int y = 0; y < n; ++y)
    for (int s2 = 0; s2 < mdp.n_states; ++s2)
      for (int a2 = 0; a2 < mdp.n_actions; ++a2)
        out(y, mdp.pair_index(s2, a2)) = mdp.transition(y, s2) * policy.probs(s2, a2);
  return out;
}

/// Exact Q^pi via a dense LU solve of (I - gamma Pbar_pi) Q = R.
inline QFunction policy_q(const TabularMdp& mdp, const Policy& policy) {
  require_same_shape(mdp, policy, "policy_q");
  const int n = mdp.n_pairs();
  const Matrix system = Matrix::Identity(n, n) - mdp.discount * joint_transition(mdp, policy);
  const Vector rhs = flatten(mdp.reward);
  const Eigen::PartialPivLU<Matrix> lu(system);
  const Vector x = lu.solve(rhs);
  if (!x.allFinite() || (system * x - rhs).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + sup_norm(x)))
    throw SingularSystemError("policy_q: linear system (I - gamma Pbar) is numerically singular");
  return QFunction(unflatten(x, mdp.n_states, mdp.n_actions));
}

/// Deterministic greedy policy; ties go to the lowest action index.
inline Policy greedy_policy(const QFunction& q) {
  Policy pi{Matrix::Zero(q.n_states(), q.n_actions())};
  for (int s = 0; s < q.n_states(); ++s) {
    int best = 0;
    for (int a = 1; a < q.n_actions(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    pi.probs(s, best) = 1.0;
  }
  return pi;
}

/// Writes one row of the mixture-softmax policy into `out`.
/// out(a) = eps/|A| + (1 - eps) * softmax(q_row / tau)(a).
template <typename RowIn, typename RowOut>
void mixture_softmax_row(const RowIn& q_row, const ExplorationParams& params, RowOut&& out) {
  const Eigen::Index m = q_row.size();
  const double top = q_row.maxCoeff();
  double total = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    const double w = std::exp((q_row(a) - top) / params.tau);
    out(a) = w;
    total += w;
  }
  const double floor = params.epsilon / static_cast<double>(m);
  const double greedy_mass = 1.0 - params.epsilon;
  for (Eigen::Index a = 0; a < m; ++a) out(a) = floor + greedy_mass * (out(a) / total);
}

inline Policy mixture_softmax(const QFunction& q, const ExplorationParams& params) {
  Policy pi{Matrix(q.n_states(), q.n_actions())};
  for (int s = 0; s < q.n_states(); ++s) mixture_softmax_row(q.values.row(s), params, pi.probs.row(s));
  return pi;
}

inline Policy uniform_policy(int n_states, int n_actions) {
  return Policy{Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
}

/// Ring of `n_states` states. The last action moves s_i to s_{(i+1) mod n} with
/// reward 1; every other action stays put with reward 0.
inline TabularMdp build_cyclic_mdp(int n_states, int n_actions, double discount) {
  if (n_states < 2 || n_actions < 2)
    throw PreconditionError("build_cyclic_mdp: need n_states >= 2 and n_actions >= 2");
  if (!(discount > 0.0 && discount < 1.0))
    throw PreconditionError("build_cyclic_mdp: discount must lie in (0, 1)");
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.discount = discount;
  mdp.transition = Matrix::Zero(mdp.n_pairs(), n_states);
  mdp.reward = Matrix::Zero(n_states, n_actions);
  const int move = n_actions - 1;
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < move; ++a) mdp.transition(mdp.pair_index(s, a), s) = 1.0;
    mdp.transition(mdp.pair_index(s, move), (s + 1) % n_states) = 1.0;
    mdp.reward(s, move) = 1.0;
  }
  return mdp;
}

/// max_i x_i - sum_i x_i w_i e^{beta x_i} / sum_j w_j e^{beta x_j}.
/// Bounded above by log(1 / w_{argmax}) / beta.
inline double softmax_gap(const Vector& x, const Vector& weights, double beta) {
  if (x.size() != weights.size() || x.size() == 0)
    throw DimensionError("softmax_gap: x and weights must be nonempty and of equal length");
  if (!(beta > 0.0)) throw PreconditionError("softmax_gap: beta must be positive");
  const double top = x.maxCoeff();
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double w = weights(i) * std::exp(beta * (x(i) - top));
    num += (x(i) - top) * w;
    den += w;
  }
  // Shifting by `top` keeps the exponentials bounded; the gap is shift invariant.
  return std::max(0.0, -num / den);
}

}  // namespace qlab
