#pragma once

// Random instance generators and slow reference implementations used as
// independent oracles. Oracles use plain loops rather than the library's
// vectorised code paths.

#include "qlab/qlab.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace qtest {

using qlab::Matrix;
using qlab::Vector;

inline double unif(std::mt19937_64& g, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

/// Random row-stochastic rows with some zeros; `density` is the chance an
/// entry is nonzero (at least one per row is kept).
inline Matrix random_stochastic_rows(std::mt19937_64& g, int rows, int cols, double density = 0.6) {
  Matrix m = Matrix::Zero(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j)
      if (unif(g) < density) m(i, j) = unif(g, 0.05, 1.0);
    if (m.row(i).sum() == 0.0) m(i, std::uniform_int_distribution<int>(0, cols - 1)(g)) = 1.0;
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

inline qlab::TabularMdp random_mdp(std::mt19937_64& g, int n, int m, double gamma, double density = 0.6) {
  qlab::TabularMdp mdp;
  mdp.n_states = n;
  mdp.n_actions = m;
  mdp.discount = gamma;
  mdp.transition = random_stochastic_rows(g, n * m, n, density);
  mdp.reward = Matrix(n, m);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < m; ++a) mdp.reward(s, a) = unif(g, -1.0, 1.0);
  return mdp;
}

/// Irreducible chain: a random cycle through all states plus random extra mass.
inline qlab::StochasticMatrix random_irreducible_chain(std::mt19937_64& g, int n) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), g);
  Matrix m = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    m(perm[i], perm[(i + 1) % n]) = unif(g, 0.2, 1.0);
    for (int j = 0; j < n; ++j)
      if (unif(g) < 0.3) m(perm[i], j) += unif(g, 0.0, 1.0);
    m.row(perm[i]) /= m.row(perm[i]).sum();
  }
  return {m};
}

/// Random MDP whose state chain under the uniform policy is irreducible.
inline qlab::TabularMdp irreducible_mdp(std::mt19937_64& g, int n, int m, double gamma) {
  for (;;) {
    qlab::TabularMdp mdp = random_mdp(g, n, m, gamma, 0.5);
    if (qlab::is_irreducible(qlab::state_chain(mdp, qlab::uniform_policy(n, m)))) return mdp;
  }
}

inline qlab::QFunction random_q(std::mt19937_64& g, int n, int m, double radius) {
  Matrix v(n, m);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < m; ++a) v(s, a) = unif(g, -radius, radius);
  return qlab::QFunction(v);
}

inline qlab::Policy random_policy(std::mt19937_64& g, int n, int m, double floor = 0.0) {
  Matrix p(n, m);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < m; ++a) p(s, a) = floor + unif(g, 0.0, 1.0);
    p.row(s) /= p.row(s).sum();
  }
  return {p};
}

/// Bellman optimality operator by explicit loops.
inline Matrix bellman_loops(const qlab::TabularMdp& mdp, const Matrix& q) {
  Matrix out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        double best = q(s2, 0);
        for (int a2 = 1; a2 < mdp.n_actions; ++a2) best = std::max(best, q(s2, a2));
        acc += mdp.p(s, a, s2) * best;
      }
      out(s, a) = mdp.reward(s, a) + mdp.discount * acc;
    }
  return out;
}

/// Policy Bellman operator by direct summation.
inline Matrix bellman_policy_loops(const qlab::TabularMdp& mdp, const qlab::Policy& pi, const Matrix& q) {
  Matrix out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) acc += mdp.p(s, a, s2) * pi(s2, a2) * q(s2, a2);
      out(s, a) = mdp.reward(s, a) + mdp.discount * acc;
    }
  return out;
}

/// Value iteration run for 10 log(1/tol) / (1 - gamma) sweeps from zero.
inline Matrix long_value_iteration(const qlab::TabularMdp& mdp, double tol) {
  const int sweeps = static_cast<int>(std::ceil(10.0 * std::log(1.0 / tol) / (1.0 - mdp.discount)));
  Matrix q = Matrix::Zero(mdp.n_states, mdp.n_actions);
  for (int i = 0; i < sweeps; ++i) q = bellman_loops(mdp, q);
  return q;
}

/// Q^pi through the state-value system V = (I - gamma P_pi)^{-1} r_pi.
inline Matrix policy_q_via_v(const qlab::TabularMdp& mdp, const qlab::Policy& pi) {
  const int n = mdp.n_states;
  Matrix p_pi = Matrix::Zero(n, n);
  Vector r_pi = Vector::Zero(n);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      r_pi(s) += pi(s, a) * mdp.reward(s, a);
      for (int s2 = 0; s2 < n; ++s2) p_pi(s, s2) += pi(s, a) * mdp.p(s, a, s2);
    }
  const Vector v = (Matrix::Identity(n, n) - mdp.discount * p_pi).householderQr().solve(r_pi);
  Matrix q(n, mdp.n_actions);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (int s2 = 0; s2 < n; ++s2) acc += mdp.p(s, a, s2) * v(s2);
      q(s, a) = mdp.reward(s, a) + mdp.discount * acc;
    }
  return q;
}

/// Stationary distribution from the null space of (P^T - I), normalised.
inline Vector stationary_nullspace(const Matrix& p) {
  const int n = static_cast<int>(p.rows());
  const Matrix a = p.transpose() - Matrix::Identity(n, n);
  Eigen::FullPivLU<Matrix> lu(a);
  lu.setThreshold(1e-10);
  Vector v = lu.kernel().col(0);
  return v / v.sum();
}

/// max_i TV(P^k(i, .), mu) for k = 0..k_max by repeated dense products.
inline std::vector<double> tv_by_powers(const Matrix& p, const Vector& mu, int k_max) {
  const int n = static_cast<int>(p.rows());
  std::vector<double> out;
  Matrix power = Matrix::Identity(n, n);
  for (int k = 0; k <= k_max; ++k) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double l1 = 0.0;
      for (int j = 0; j < n; ++j) l1 += std::abs(power(i, j) - mu(j));
      worst = std::max(worst, 0.5 * l1);
    }
    out.push_back(worst);
    power = power * p;
  }
  return out;
}

}  // namespace qtest
