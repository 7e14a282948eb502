#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the library. `code()` is a short
/// machine-readable tag used by the command-line tool.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error("dimension_mismatch", what) {}
};

struct PreconditionError : Error {
  explicit PreconditionError(const std::string& what) : Error("precondition", what) {}
};

struct InvalidMdpError : Error {
  explicit InvalidMdpError(const std::string& what) : Error("invalid_mdp", what) {}
};

struct ReducibleChainError : Error {
  explicit ReducibleChainError(const std::string& what) : Error("reducible_chain", what) {}
};

struct SingularSystemError : Error {
  explicit SingularSystemError(const std::string& what) : Error("singular_system", what) {}
};

struct FitError : Error {
  explicit FitError(const std::string& what) : Error("fit_degenerate", what) {}
};

struct InvariantViolation : Error {
  explicit InvariantViolation(const std::string& what) : Error("invariant_violation", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

/// Raised when an iterative method runs out of budget. Carries the residual
/// reached at the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error("not_converged", what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Finite discounted MDP.
///
/// `transition` has one row per state-action pair, indexed `s * n_actions + a`,
/// and one column per next state. `reward` is `n_states x n_actions`.
/// Construction does not validate; see `validate_mdp`.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  Matrix transition;
  Matrix reward;
  double discount = 0.0;

  int pair_index(int s, int a) const noexcept { return s * n_actions + a; }
  int n_pairs() const noexcept { return n_states * n_actions; }
  double p(int s, int a, int next) const { return transition(pair_index(s, a), next); }
};

/// Row-stochastic table of action probabilities, `n_states x n_actions`.
struct Policy {
  Matrix probs;

  int n_states() const noexcept { return static_cast<int>(probs.rows()); }
  int n_actions() const noexcept { return static_cast<int>(probs.cols()); }
  double operator()(int s, int a) const { return probs(s, a); }
};

/// Real table Q(s, a), `n_states x n_actions`.
struct QFunction {
  Matrix values;

  QFunction() = default;
  explicit QFunction(Matrix v) : values(std::move(v)) {}
  static QFunction zeros(int n_states, int n_actions) {
    return QFunction(Matrix::Zero(n_states, n_actions));
  }

  int n_states() const noexcept { return static_cast<int>(values.rows()); }
  int n_actions() const noexcept { return static_cast<int>(values.cols()); }
  double operator()(int s, int a) const { return values(s, a); }
  double& operator()(int s, int a) { return values(s, a); }
};

/// A state-action pair (an element of the joint index set S x A).
struct StateAction {
  int state = 0;
  int action = 0;
};

/// Parameters of the mixture-softmax learning policy.
struct ExplorationParams {
  double epsilon = 1.0;
  double tau = 1.0;

  static ExplorationParams make(double epsilon, double tau) {
    if (!(epsilon > 0.0 && epsilon <= 1.0))
      throw PreconditionError("epsilon must lie in (0, 1], got " + std::to_string(epsilon));
    if (!(tau > 0.0)) throw PreconditionError("tau must be positive, got " + std::to_string(tau));
    return {epsilon, tau};
  }
};

// ---------------------------------------------------------------------------
// Small helpers shared by the modules
// ---------------------------------------------------------------------------

inline double sup_norm(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double sup_distance(const QFunction& a, const QFunction& b) {
  return sup_norm(a.values - b.values);
}

/// Row-major flattening, matching `TabularMdp::pair_index`.
inline Vector flatten(const Matrix& table) {
  Vector out(table.size());
  const Eigen::Index cols = table.cols();
  for (Eigen::Index s = 0; s < table.rows(); ++s)
    for (Eigen::Index a = 0; a < cols; ++a) out(s * cols + a) = table(s, a);
  return out;
}

inline Matrix unflatten(const Vector& flat, int rows, int cols) {
  Matrix out(rows, cols);
  for (int s = 0; s < rows; ++s)
    for (int a = 0; a < cols; ++a) out(s, a) = flat(s * cols + a);
  return out;
}

inline void require_same_shape(const TabularMdp& mdp, const QFunction& q, const char* who) {
  if (q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions)
    throw DimensionError(std::string(who) + ": Q-function is " + std::to_string(q.n_states()) +
                         "x" + std::to_string(q.n_actions()) + " but the MDP is " +
                         std::to_string(mdp.n_states) + "x" + std::to_string(mdp.n_actions));
}

inline void require_same_shape(const TabularMdp& mdp, const Policy& pi, const char* who) {
  if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions)
    throw DimensionError(std::string(who) + ": policy is " + std::to_string(pi.n_states()) + "x" +
                         std::to_string(pi.n_actions()) + " but the MDP is " +
                         std::to_string(mdp.n_states) + "x" + std::to_string(mdp.n_actions));
}

}  // namespace qlab
