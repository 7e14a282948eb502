#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qlab;
using qtest::Matrix;
using qtest::Vector;

namespace {

StochasticMatrix two_state(double a, double b) {
  Matrix m(2, 2);
  m << 1 - a, a, b, 1 - b;
  return {m};
}

Policy always(int n, int m, int action) {
  Matrix p = Matrix::Zero(n, m);
  p.col(action).setOnes();
  return {p};
}

}  // namespace

TEST(StateChain, UniformOnCyclic) {
  const StochasticMatrix p = state_chain(build_cyclic_mdp(5, 10, 0.9), uniform_policy(5, 10));
  for (int s = 0; s < 5; ++s) {
    EXPECT_NEAR(p.entries(s, s), 0.9, 1e-15);
    EXPECT_NEAR(p.entries(s, (s + 1) % 5), 0.1, 1e-15);
  }
}

TEST(StateChain, AlwaysMoveIsShift) {
  const StochasticMatrix p = state_chain(build_cyclic_mdp(4, 2, 0.9), always(4, 2, 1));
  for (int s = 0; s < 4; ++s) EXPECT_EQ(p.entries(s, (s + 1) % 4), 1.0);
  EXPECT_EQ(p.entries.sum(), 4.0);
}

TEST(JointChain, ProductStructureOnCyclic) {
  const TabularMdp mdp = build_cyclic_mdp(3, 4, 0.9);
  const StochasticMatrix j = joint_chain(mdp, uniform_policy(3, 4));
  ASSERT_EQ(j.size(), 12);
  for (int r = 0; r < 12; ++r) {
    int nonzero = 0;
    for (int c = 0; c < 12; ++c)
      if (j.entries(r, c) != 0.0) {
        ++nonzero;
        EXPECT_DOUBLE_EQ(j.entries(r, c), 0.25);
      }
    EXPECT_EQ(nonzero, 4);
  }
}

TEST(JointChain, StationaryFactorises) {
  std::mt19937_64 g(21);
  const TabularMdp mdp = qtest::irreducible_mdp(g, 4, 3, 0.9);
  const Policy pi = qtest::random_policy(g, 4, 3, 0.1);
  const Vector mu = stationary(state_chain(mdp, pi)).weights;
  const Vector mu_bar = stationary(joint_chain(mdp, pi)).weights;
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(mu_bar(mdp.pair_index(s, a)), mu(s) * pi(s, a), 1e-10);
}

TEST(Lazy, PreservesStationary) {
  std::mt19937_64 g(22);
  for (int t = 0; t < 20; ++t) {
    const StochasticMatrix p = qtest::random_irreducible_chain(g, 7);
    const Vector mu = stationary(p).weights;
    EXPECT_LE((lazy(p).entries.transpose() * mu - mu).lpNorm<1>(), 1e-10);
  }
}

TEST(Irreducible, Verdicts) {
  EXPECT_TRUE(is_irreducible(state_chain(build_cyclic_mdp(6, 3, 0.9), uniform_policy(6, 3))));
  EXPECT_FALSE(is_irreducible({Matrix::Identity(3, 3)}));
  EXPECT_FALSE(is_irreducible(state_chain(build_cyclic_mdp(4, 2, 0.9), always(4, 2, 0))));
  Matrix m(2, 2);
  m << 1, 0, 0.5, 0.5;  // 0 cannot reach 1
  EXPECT_FALSE(is_irreducible({m}));
}

TEST(Stationary, DoublyStochasticIsUniform) {
  Matrix m(3, 3);
  m << 0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2;
  const auto mu = stationary({m});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mu.weights(i), 1.0 / 3, 1e-12);
}

TEST(Stationary, DeterministicCycleIsUniform) {
  const auto mu = stationary(state_chain(build_cyclic_mdp(20, 2, 0.9), always(20, 2, 1)));
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(mu.weights(i), 0.05, 1e-12);
  EXPECT_NEAR(mu.min_weight, 0.05, 1e-12);
}

TEST(Stationary, MatchesNullSpaceOracle) {
  std::mt19937_64 g(23);
  for (int t = 0; t < 20; ++t) {
    const StochasticMatrix p = qtest::random_irreducible_chain(g, 5);
    EXPECT_LT((stationary(p).weights - qtest::stationary_nullspace(p.entries)).lpNorm<Eigen::Infinity>(),
              1e-10);
  }
}

TEST(Stationary, ReducibleThrows) {
  EXPECT_THROW(stationary({Matrix::Identity(2, 2)}), ReducibleChainError);
}

TEST(ExplorationConstants, TwoStateSwap) {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.discount = 0.5;
  mdp.transition = Matrix(2, 2);
  mdp.transition << 0, 1, 1, 0;
  mdp.reward = Matrix::Zero(2, 1);
  const auto ec = exploration_constants(mdp, uniform_policy(2, 1));
  EXPECT_EQ(ec.r, 1);
  EXPECT_DOUBLE_EQ(ec.delta, 0.5);
  EXPECT_DOUBLE_EQ(ec.mu_min, 0.5);
  EXPECT_DOUBLE_EQ(ec.pi_b_min, 1.0);
}

TEST(ExplorationConstants, ReducibleThrows) {
  EXPECT_THROW(exploration_constants(build_cyclic_mdp(3, 2, 0.9), always(3, 2, 0)), ReducibleChainError);
}

TEST(ExplorationConstants, AlwaysMoveMatchesMatrixPowers) {
  const TabularMdp mdp = build_cyclic_mdp(4, 2, 0.9);
  const Policy move = always(4, 2, 1);
  const auto ec = exploration_constants(mdp, move);
  const Matrix step = lazy(state_chain(mdp, move)).entries;
  Matrix power = Matrix::Identity(4, 4);
  int r = 0;
  do {
    power = power * step;
    ++r;
  } while (power.minCoeff() <= 0.0);
  EXPECT_EQ(ec.r, r);
  EXPECT_EQ(ec.r, 3);
  EXPECT_DOUBLE_EQ(ec.delta, power.minCoeff());
  EXPECT_DOUBLE_EQ(ec.delta, 0.125);
  EXPECT_NEAR(ec.mu_min, 0.25, 1e-12);
  EXPECT_EQ(ec.pi_b_min, 0.0);
}

TEST(TvProfile, MatchesMatrixPowerOracle) {
  std::mt19937_64 g(24);
  const StochasticMatrix p = lazy(qtest::random_irreducible_chain(g, 6));
  const auto mu = stationary(p);
  const auto d = tv_profile(p, mu, 40);
  const auto oracle = qtest::tv_by_powers(p.entries, mu.weights, 40);
  for (int k = 0; k <= 40; ++k) EXPECT_NEAR(d[k], oracle[k], 1e-13);
}

TEST(EmpiricalMixing, AlreadyMixedConvention) {
  const StochasticMatrix p{Matrix::Constant(2, 2, 0.5)};
  const auto cert = empirical_mixing(p, stationary(p), 20);
  EXPECT_EQ(cert.c, 1.0);
  EXPECT_EQ(cert.rho, 0.5);
  EXPECT_TRUE(check_certificate(p, stationary(p), cert, 20).all_hold);
}

TEST(EmpiricalMixing, TwoStateRate) {
  const StochasticMatrix p = lazy(two_state(0.1, 0.2));
  const auto mu = stationary(p);
  const auto cert = empirical_mixing(p, mu, 200);
  // Second eigenvalue of the lazy chain is (1 + 0.7) / 2.
  EXPECT_NEAR(cert.rho, 0.85, 1e-6);
  const auto oracle = qtest::tv_by_powers(p.entries, mu.weights, 200);
  for (int k = 0; k <= 200; ++k) EXPECT_LE(oracle[k], cert.c * std::pow(cert.rho, k) + 1e-12);
}

TEST(EmpiricalMixing, CheckerPassesOnRandomChains) {
  std::mt19937_64 g(25);
  for (int t = 0; t < 20; ++t) {
    const StochasticMatrix p = lazy(qtest::random_irreducible_chain(g, 2 + t % 9));
    const auto mu = stationary(p);
    const auto cert = empirical_mixing(p, mu, 300);
    EXPECT_TRUE(check_certificate(p, mu, cert, 300).all_hold);
    EXPECT_GE(cert.c, 1.0);
    EXPECT_GT(cert.rho, 0.0);
    EXPECT_LT(cert.rho, 1.0);
  }
}

TEST(EmpiricalMixing, DominatesWholeProfileWithoutSlack) {
  std::mt19937_64 g(26);
  for (int t = 0; t < 20; ++t) {
    const StochasticMatrix p = lazy(qtest::random_irreducible_chain(g, 2 + t % 9));
    const auto mu = stationary(p);
    const auto cert = empirical_mixing(p, mu, 400);
    const auto oracle = qtest::tv_by_powers(p.entries, mu.weights, 400);
    for (int k = 0; k <= 400; ++k) EXPECT_LE(oracle[k], cert.c * std::pow(cert.rho, k)) << k;
  }
}

TEST(CertifiedMixing, FormulaExample) {
  ExplorationConstants ec{1, 0.5, 0.5, 0.5};
  const auto cert = certified_mixing(0.5, ec);
  EXPECT_NEAR(cert.c, 1.0 / 0.984375, 1e-15);
  EXPECT_NEAR(cert.rho, std::sqrt(0.984375), 1e-15);
  EXPECT_NEAR(cert.c, 1.015873, 1e-6);
  EXPECT_NEAR(cert.rho, 0.992157, 1e-6);
}

TEST(CertifiedMixing, VacuousLimit) {
  ExplorationConstants ec{2, 1e-12, 0.5, 0.5};
  const auto cert = certified_mixing(0.5, ec);
  EXPECT_NEAR(cert.c, 1.0, 1e-12);
  EXPECT_NEAR(cert.rho, 1.0, 1e-12);
}

TEST(CertifiedMixing, RejectsOutOfRange) {
  ExplorationConstants ec{1, 0.5, 0.5, 0.5};
  EXPECT_THROW(certified_mixing(0.0, ec), PreconditionError);
  ec.pi_b_min = 0.0;
  EXPECT_THROW(certified_mixing(0.5, ec), PreconditionError);
}

TEST(CertifiedMixing, HoldsOnCyclicUniform) {
  const TabularMdp mdp = build_cyclic_mdp(4, 2, 0.9);
  const Policy pi = uniform_policy(4, 2);
  const auto ec = exploration_constants(mdp, pi);
  const StochasticMatrix pl = lazy(joint_chain(mdp, pi));
  const auto mu = stationary(pl);
  const auto cert = certified_mixing(pi.probs.minCoeff(), ec);
  const auto oracle = qtest::tv_by_powers(pl.entries, mu.weights, 500);
  for (int k = 0; k <= 500; ++k) EXPECT_LE(oracle[k], cert.c * std::pow(cert.rho, k) + 1e-12);
}

TEST(Poisson, SwapExample) {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  const StochasticMatrix p{m};
  const auto mu = stationary(p);
  Vector y(2);
  y << 1, -1;
  for (const auto& sol : {poisson_series(p, mu, y), poisson_direct(p, mu, y)}) {
    EXPECT_NEAR(sol.x(0), 0.5, 1e-12);
    EXPECT_NEAR(sol.x(1), -0.5, 1e-12);
    EXPECT_LE(sol.residual_norm, 1e-12);
  }
  const auto sol = poisson_series(p, mu, y);
  EXPECT_TRUE(poisson_bound_check(sol, empirical_mixing(lazy(p), mu, 50)));
}

TEST(Poisson, ConstantRhsGivesZero) {
  std::mt19937_64 g(26);
  const StochasticMatrix p = qtest::random_irreducible_chain(g, 5);
  const auto mu = stationary(p);
  const Vector y = Vector::Constant(5, 3.0);
  EXPECT_LT(sup_norm(poisson_series(p, mu, y).x), 1e-12);
  EXPECT_LT(sup_norm(poisson_direct(p, mu, y).x), 1e-12);
  EXPECT_TRUE(poisson_bound_check(poisson_direct(p, mu, y), {1.0, 0.5, CertificateKind::empirical}));
}

TEST(Poisson, SeriesMatchesDirect) {
  std::mt19937_64 g(27);
  for (int t = 0; t < 10; ++t) {
    const StochasticMatrix p = qtest::random_irreducible_chain(g, 6);
    const auto mu = stationary(p);
    Vector y(6);
    for (int i = 0; i < 6; ++i) y(i) = qtest::unif(g, -1, 1);
    const auto a = poisson_series(p, mu, y);
    const auto b = poisson_direct(p, mu, y);
    EXPECT_LT(sup_norm(a.x - b.x), 1e-7);
    EXPECT_NEAR(mu.weights.dot(b.x), 0.0, 1e-12);
  }
}

TEST(Poisson, DirectResidualOnEightStates) {
  std::mt19937_64 g(28);
  for (int t = 0; t < 10; ++t) {
    const StochasticMatrix p = qtest::random_irreducible_chain(g, 8);
    Vector y(8);
    for (int i = 0; i < 8; ++i) y(i) = qtest::unif(g, -1, 1);
    EXPECT_LE(poisson_direct(p, stationary(p), y).residual_norm, 1e-10);
  }
}

TEST(Poisson, VacuousCertificatePasses) {
  std::mt19937_64 g(29);
  const StochasticMatrix p = qtest::random_irreducible_chain(g, 4);
  Vector y(4);
  y << 1, 0, -1, 0.5;
  EXPECT_TRUE(poisson_bound_check(poisson_direct(p, stationary(p), y), {1.0, 1.0 - 1e-12, CertificateKind::certified}));
}

TEST(Fbar, FixedPointAtOptimum) {
  std::mt19937_64 g(30);
  const TabularMdp mdp = qtest::irreducible_mdp(g, 4, 3, 0.9);
  const Policy pi = qtest::random_policy(g, 4, 3, 0.1);
  const auto mu_bar = stationary(joint_chain(mdp, pi));
  const QFunction star = value_iteration(mdp, 1e-12);
  EXPECT_LT(sup_distance(fbar(mdp, pi, star, mu_bar), star), 1e-8);
}

TEST(Fbar, ScalarBlend) {
  const TabularMdp mdp = build_cyclic_mdp(3, 2, 0.9);
  std::mt19937_64 g(31);
  const QFunction q = qtest::random_q(g, 3, 2, 5.0);
  StationaryDistribution mu{Vector::Constant(6, 0.25), 0.25};
  const QFunction expect(0.75 * q.values + 0.25 * bellman_optimality(mdp, q).values);
  EXPECT_LT(sup_distance(fbar(mdp, uniform_policy(3, 2), q, mu), expect), 1e-14);
  EXPECT_THROW(fbar(mdp, uniform_policy(3, 2), q, StationaryDistribution{Vector::Ones(3), 1.0}),
               DimensionError);
}

TEST(Fbar, LipschitzInPolicyAndQ) {
  std::mt19937_64 g(32);
  for (int t = 0; t < 30; ++t) {
    const TabularMdp mdp = qtest::irreducible_mdp(g, 4, 2, 0.8);
    const double radius = 1.0 / (1.0 - mdp.discount);
    const Policy p1 = qtest::random_policy(g, 4, 2, 0.2);
    const Policy p2 = qtest::random_policy(g, 4, 2, 0.2);
    const auto m1 = stationary(joint_chain(mdp, p1));
    const auto m2 = stationary(joint_chain(mdp, p2));
    const QFunction q1 = qtest::random_q(g, 4, 2, radius);
    const QFunction q2 = qtest::random_q(g, 4, 2, radius);
    const double lhs = sup_distance(fbar(mdp, p1, q1, m1), fbar(mdp, p2, q2, m2));
    const double rhs = 3.0 * sup_distance(q1, q2) +
                       2.0 / (1.0 - mdp.discount) * sup_norm(m1.weights - m2.weights);
    EXPECT_LE(lhs, rhs + 1e-10);
  }
}

TEST(GammaPi, BoundChain) {
  std::mt19937_64 g(33);
  for (int t = 0; t < 20; ++t) {
    const TabularMdp mdp = qtest::irreducible_mdp(g, 3 + t % 3, 2, 0.9);
    const Policy pi_b = uniform_policy(mdp.n_states, 2);
    const auto ec = exploration_constants(mdp, pi_b);
    const Policy pi = qtest::random_policy(g, mdp.n_states, 2, 0.2);
    const double d_min = stationary(joint_chain(mdp, pi)).min_weight;
    const double pi_min = pi.probs.minCoeff();
    EXPECT_GE(d_min, std::pow(pi_min, ec.r) * ec.delta * ec.mu_min - 1e-12);
  }
}

TEST(FSample, HitAndMiss) {
  std::mt19937_64 g(34);
  const TabularMdp mdp = qtest::random_mdp(g, 4, 3, 0.9);
  const QFunction star = value_iteration(mdp, 1e-12);
  const QFunction out = f_sample(mdp, star, {2, 1});
  EXPECT_NEAR(out(2, 1), star(2, 1), 1e-10);
  const QFunction q = qtest::random_q(g, 4, 3, 10.0);
  const QFunction out2 = f_sample(mdp, q, {0, 0});
  EXPECT_EQ(out2(3, 2), q(3, 2));
  EXPECT_NEAR(out2(0, 0), qtest::bellman_loops(mdp, q.values)(0, 0), 1e-12);
  EXPECT_THROW(f_sample(mdp, q, {4, 0}), DimensionError);
}

TEST(Noise, ConditionalMeanIsZero) {
  std::mt19937_64 g(35);
  const TabularMdp mdp = qtest::random_mdp(g, 5, 3, 0.9);
  const QFunction q = qtest::random_q(g, 5, 3, 10.0);
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 3; ++a) EXPECT_LE(sup_norm(noise_conditional_mean(mdp, q, {s, a}).values), 1e-12);
  const TabularMdp cyc = build_cyclic_mdp(4, 2, 0.9);
  EXPECT_EQ(sup_norm(noise_conditional_mean(cyc, qtest::random_q(g, 4, 2, 5.0), {1, 1}).values), 0.0);
}

TEST(Sensitivity, IdenticalPolicies) {
  const TabularMdp mdp = build_cyclic_mdp(4, 2, 0.9);
  const Policy pi = uniform_policy(4, 2);
  const auto cmp = stationary_sensitivity(mdp, pi, pi, {2.0, 0.9, CertificateKind::empirical});
  EXPECT_EQ(cmp.lhs, 0.0);
  EXPECT_TRUE(std::isinf(cmp.rhs));
}

TEST(Sensitivity, SmallPerturbationOfUniform) {
  const TabularMdp mdp = build_cyclic_mdp(4, 2, 0.9);
  const Policy p1 = uniform_policy(4, 2);
  Policy p2 = p1;
  p2.probs(1, 0) += 0.02;
  p2.probs(1, 1) -= 0.02;
  p2.probs(3, 0) -= 0.01;
  p2.probs(3, 1) += 0.01;
  const StochasticMatrix pl = lazy(joint_chain(mdp, p1));
  const auto cert = empirical_mixing(pl, stationary(pl), 500);
  const auto cmp = stationary_sensitivity(mdp, p1, p2, cert);
  EXPECT_NEAR(cmp.policy_gap, 0.04, 1e-15);
  EXPECT_GT(cmp.lhs, 0.0);
  EXPECT_LE(cmp.lhs, cmp.rhs);
}

TEST(PolicyDistance, InducedInfinityNorm) {
  Matrix a(2, 2), b(2, 2);
  a << 0.5, 0.5, 1.0, 0.0;
  b << 0.4, 0.6, 0.0, 1.0;
  EXPECT_DOUBLE_EQ(policy_distance({a}, {b}), 2.0);
}
