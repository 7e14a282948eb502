#pragma once

// Seeded simulation of tabular Q-learning with a time-varying mixture-softmax
// learning policy (on-policy) or a fixed behaviour policy (off-policy).

#include "qlab/mdp.hpp"
#include "qlab/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace qlab {

/// mt19937_64 seeded through std::seed_seq from the two 32-bit halves of the
/// run seed; each ensemble member uses its own seed (base_seed + i).
/// `uniform()` keeps the top 53 bits, so draws are identical on every platform.
class Rng {
 public:
  static constexpr const char* kName = "mt19937_64/seed_seq(lo32,hi32)/53-bit-uniform";

  explicit Rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Inverse-CDF sampling over `probs` in stored order, given u in [0, 1).
template <typename Row>
int sample_index(const Row& probs, double u) {
  double cum = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    cum += probs(i);
    last_positive = static_cast<int>(i);
    if (u < cum) return last_positive;
  }
  return last_positive;
}

/// k -> value, with a label recorded in result metadata.
struct Schedule {
  std::function<double(std::int64_t)> fn;
  std::string label;
  bool is_constant = false;

  double operator()(std::int64_t k) const { return fn(k); }

  static Schedule constant(double v) {
    return {[v](std::int64_t) { return v; }, "constant(" + std::to_string(v) + ")", true};
  }
};

struct LearnerConfig {
  Schedule step_size = Schedule::constant(0.1);
  Schedule epsilon = Schedule::constant(0.15);
  Schedule tau = Schedule::constant(0.15);
  std::int64_t horizon = 500'000;
  /// Off-policy when set: samples actions from this fixed policy.
  std::optional<Policy> behavior;
  QFunction initial_q;
  int initial_state = 0;
  std::uint64_t seed = 0;
  std::int64_t log_stride = 1000;
  /// Checks the boundedness and policy-floor invariants on every step.
  bool check_invariants = true;

  bool on_policy() const noexcept { return !behavior.has_value(); }
};

struct RunTrace {
  std::vector<std::int64_t> logged_iterations;
  std::vector<double> q_gap;         // ||Q_k - Q*||_inf
  std::vector<double> policy_q_gap;  // ||Q^{pi_k} - Q*||_inf
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> visit_counts;
  QFunction final_q;
  std::uint64_t seed = 0;
  /// min over the trajectory of min_{s,a} pi_k(a|s).
  double realized_lambda = 1.0;
  /// max over the trajectory of ||Q_k||_inf.
  double max_abs_q = 0.0;
  std::string rng = Rng::kName;
};

struct StepOutcome {
  int action = 0;
  int next_state = 0;
};

/// One Q-learning update at `state`, in place. Draws the action first, then the
/// next state, consuming exactly two uniforms.
template <typename PolicyRow>
StepOutcome qlearning_step_row(const TabularMdp& mdp, QFunction& q, int state,
                               const PolicyRow& action_probs, double alpha, Rng& rng) {
  StepOutcome out;
  out.action = sample_index(action_probs, rng.uniform());
  const int y = mdp.pair_index(state, out.action);
  out.next_state = sample_index(mdp.transition.row(y), rng.uniform());
  const double target =
      mdp.reward(state, out.action) + mdp.discount * q.values.row(out.next_state).maxCoeff();
  q(state, out.action) += alpha * (target - q(state, out.action));
  return out;
}

inline StepOutcome qlearning_step(const TabularMdp& mdp, QFunction& q, int state,
                                  const Policy& policy, double alpha, Rng& rng) {
  require_same_shape(mdp, q, "qlearning_step");
  require_same_shape(mdp, policy, "qlearning_step");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw PreconditionError("qlearning_step: alpha must lie in (0, 1]");
  if (state < 0 || state >= mdp.n_states) throw DimensionError("qlearning_step: bad state");
  return qlearning_step_row(mdp, q, state, policy.probs.row(state), alpha, rng);
}

namespace detail {

inline void check_schedule_value(const char* name, double v, bool upper_one, std::int64_t k) {
  const bool ok = upper_one ? (v > 0.0 && v <= 1.0) : (v > 0.0);
  if (!ok)
    throw PreconditionError(std::string(name) + " out of range at k=" + std::to_string(k) + ": " +
                            std::to_string(v));
}

}  // namespace detail

inline void validate_config(const TabularMdp& mdp, const LearnerConfig& config) {
  if (config.horizon <= 0) throw PreconditionError("run: horizon must be positive");
  if (config.log_stride <= 0) throw PreconditionError("run: log_stride must be positive");
  if (config.initial_state < 0 || config.initial_state >= mdp.n_states)
    throw PreconditionError("run: initial_state out of range");
  require_same_shape(mdp, config.initial_q, "run");
  const double radius = 1.0 / (1.0 - mdp.discount);
  if (sup_norm(config.initial_q.values) > radius * (1.0 + 1e-12))
    throw PreconditionError("run: ||Q0||_inf must not exceed 1/(1-gamma)");
  if (config.behavior) {
    require_same_shape(mdp, *config.behavior, "run");
    for (int s = 0; s < mdp.n_states; ++s) {
      const auto row = config.behavior->probs.row(s);
      if (row.minCoeff() < 0.0 || std::abs(row.sum() - 1.0) > kRowSumTolerance)
        throw PreconditionError("run: behaviour policy row " + std::to_string(s) +
                                " is not a distribution");
    }
  }
  if (config.step_size.is_constant) detail::check_schedule_value("alpha", config.step_size(0), true, 0);
  if (config.epsilon.is_constant) detail::check_schedule_value("epsilon", config.epsilon(0), true, 0);
  if (config.tau.is_constant) detail::check_schedule_value("tau", config.tau(0), false, 0);
}

/// Runs K steps of Q-learning and logs ||Q_k - Q*||_inf and ||Q^{pi_k} - Q*||_inf
/// at every k divisible by `log_stride` and at k = K. Deterministic in the seed.
inline RunTrace run(const TabularMdp& mdp, const LearnerConfig& config, const QFunction& q_star) {
  require_valid(mdp);
  validate_config(mdp, config);
  require_same_shape(mdp, q_star, "run");

  const int n_actions = mdp.n_actions;
  const double radius = 1.0 / (1.0 - mdp.discount);
  const double bound_slack = radius * 1e-12;
  const bool on_policy = config.on_policy();
  const bool constant_policy_map = config.epsilon.is_constant && config.tau.is_constant;

  RunTrace trace;
  trace.seed = config.seed;
  trace.visit_counts.setZero(mdp.n_states, n_actions);
  QFunction q = config.initial_q;
  trace.max_abs_q = sup_norm(q.values);
  Rng rng(config.seed);

  // Current learning policy, kept for all states so logging and lambda
  // tracking see the full pi_k.
  Policy policy;
  ExplorationParams params;
  auto refresh_params = [&](std::int64_t k) {
    const double eps = config.epsilon(k);
    const double tau = config.tau(k);
    detail::check_schedule_value("epsilon", eps, true, k);
    detail::check_schedule_value("tau", tau, false, k);
    params = {eps, tau};
  };
  Vector row_min;
  if (on_policy) {
    refresh_params(0);
    policy = mixture_softmax(q, params);
    row_min = policy.probs.rowwise().minCoeff();
  } else {
    policy = *config.behavior;
  }
  trace.realized_lambda = policy.probs.minCoeff();

  std::optional<double> fixed_policy_gap;
  if (!on_policy) fixed_policy_gap = sup_distance(policy_q(mdp, policy), q_star);

  auto log_point = [&](std::int64_t k) {
    trace.logged_iterations.push_back(k);
    trace.q_gap.push_back(sup_distance(q, q_star));
    trace.policy_q_gap.push_back(fixed_policy_gap ? *fixed_policy_gap
                                                  : sup_distance(policy_q(mdp, policy), q_star));
  };

  int state = config.initial_state;
  for (std::int64_t k = 0; k < config.horizon; ++k) {
    if (k % config.log_stride == 0) log_point(k);

    const double alpha = config.step_size(k);
    if (!config.step_size.is_constant) detail::check_schedule_value("alpha", alpha, true, k);
    if (on_policy && config.check_invariants) {
      const double floor = params.epsilon / n_actions - 1e-12;
      if (row_min(state) < floor)
        throw InvariantViolation("policy floor eps/|A| violated at k=" + std::to_string(k));
    }

    const StepOutcome step = qlearning_step_row(mdp, q, state, policy.probs.row(state), alpha, rng);
    ++trace.visit_counts(state, step.action);
    const double updated = std::abs(q(state, step.action));
    trace.max_abs_q = std::max(trace.max_abs_q, updated);
    if (config.check_invariants && updated > radius + bound_slack)
      throw InvariantViolation("||Q_k||_inf exceeded 1/(1-gamma) at k=" + std::to_string(k + 1));

    if (on_policy) {
      if (constant_policy_map) {
        // Only row `state` of Q changed, so only that row of pi changes.
        mixture_softmax_row(q.values.row(state), params, policy.probs.row(state));
        row_min(state) = policy.probs.row(state).minCoeff();
        trace.realized_lambda = std::min(trace.realized_lambda, row_min(state));
      } else {
        refresh_params(k + 1);
        policy = mixture_softmax(q, params);
        row_min = policy.probs.rowwise().minCoeff();
        trace.realized_lambda = std::min(trace.realized_lambda, row_min.minCoeff());
      }
    }
    state = step.next_state;
  }
  log_point(config.horizon);
  trace.final_q = q;
  return trace;
}

/// Mean and (sample) standard deviation per logged iteration across seeds.
struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct EnsembleResult {
  std::vector<std::int64_t> logged_iterations;
  std::vector<std::uint64_t> seeds;
  SeriesStats q_gap;
  SeriesStats q_gap_sq;
  SeriesStats policy_q_gap;
  SeriesStats policy_q_gap_sq;
  double realized_lambda = 1.0;  // minimum over all runs
  double max_abs_q = 0.0;
  std::vector<RunTrace> traces;
};

inline SeriesStats aggregate(const std::vector<std::vector<double>>& series) {
  SeriesStats out;
  if (series.empty()) return out;
  const std::size_t len = series.front().size();
  const double n = static_cast<double>(series.size());
  out.mean.assign(len, 0.0);
  out.std.assign(len, 0.0);
  for (const auto& s : series) {
    if (s.size() != len) throw DimensionError("aggregate: series lengths differ");
    for (std::size_t i = 0; i < len; ++i) out.mean[i] += s[i];
  }
  for (double& m : out.mean) m /= n;
  if (series.size() > 1) {
    for (const auto& s : series)
      for (std::size_t i = 0; i < len; ++i) out.std[i] += (s[i] - out.mean[i]) * (s[i] - out.mean[i]);
    for (double& v : out.std) v = std::sqrt(v / (n - 1.0));
  }
  return out;
}

/// Runs seeds config.seed, config.seed + 1, ..., config.seed + n_seeds - 1 on
/// up to `threads` worker threads (0 = hardware concurrency) and aggregates.
inline EnsembleResult ensemble_run(const TabularMdp& mdp, const LearnerConfig& config,
                                   const QFunction& q_star, int n_seeds, unsigned threads = 0,
                                   bool keep_traces = false) {
  if (n_seeds < 1) throw PreconditionError("ensemble_run: n_seeds must be >= 1");
  std::vector<RunTrace> traces(static_cast<std::size_t>(n_seeds));
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n_seeds));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n_seeds; i = next++) {
      try {
        LearnerConfig member = config;
        member.seed = config.seed + static_cast<std::uint64_t>(i);
        traces[static_cast<std::size_t>(i)] = run(mdp, member, q_star);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EnsembleResult out;
  out.logged_iterations = traces.front().logged_iterations;
  std::vector<std::vector<double>> gap, gap_sq, pgap, pgap_sq;
  for (const auto& t : traces) {
    out.seeds.push_back(t.seed);
    gap.push_back(t.q_gap);
    pgap.push_back(t.policy_q_gap);
    auto squares = [](const std::vector<double>& v) {
      std::vector<double> sq(v.size());
      std::transform(v.begin(), v.end(), sq.begin(), [](double x) { return x * x; });
      return sq;
    };
    gap_sq.push_back(squares(t.q_gap));
    pgap_sq.push_back(squares(t.policy_q_gap));
    out.realized_lambda = std::min(out.realized_lambda, t.realized_lambda);
    out.max_abs_q = std::max(out.max_abs_q, t.max_abs_q);
  }
  out.q_gap = aggregate(gap);
  out.q_gap_sq = aggregate(gap_sq);
  out.policy_q_gap = aggregate(pgap);
  out.policy_q_gap_sq = aggregate(pgap_sq);
  if (keep_traces) out.traces = std::move(traces);
  return out;
}

}  // namespace qlab
