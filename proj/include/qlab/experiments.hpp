#pragma once

// Experiment drivers shared by the command-line tool and the acceptance
// suite: configuration, MDP resolution, figure ensembles, chain diagnostics
// and bound reports, each rendered as a versioned CSV table.

#include "qlab/bounds.hpp"
#include "qlab/chain.hpp"
#include "qlab/io.hpp"
#include "qlab/mdp.hpp"
#include "qlab/qlearn.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qlab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCsvSchema = "qlab-csv/1";

struct ExperimentConfig {
  // MDP source: a file when `mdp_path` is set, otherwise the builtin ring.
  std::optional<std::string> mdp_path;
  int cyclic_states = 20;
  int cyclic_actions = 10;
  double cyclic_discount = 0.99;

  double alpha = 0.1;
  double epsilon = 0.15;
  double tau = 0.15;
  std::int64_t horizon = 500'000;
  int n_seeds = 20;
  std::uint64_t base_seed = 0;
  std::int64_t log_stride = 1000;
  int initial_state = 0;
  /// Initial Q-function. On the ring, "stay" actions start at `q0_stay` and the
  /// move action at `q0_move`; unset means 1/(1-gamma) and 0.9/(1-gamma). File
  /// MDPs start from the constant `q0_const`.
  std::optional<double> q0_stay;
  std::optional<double> q0_move;
  double q0_const = 0.0;

  /// Policy analysed by `analyze`, and the reference policy pi_b used for the
  /// exploration constants: uniform | move | stay.
  std::string policy = "uniform";
  std::string pi_b = "uniform";
  bool off_policy = false;  // `run` only

  std::vector<double> xi = {0.5, 0.25};
  std::vector<double> fig4_settings = {0.15, 0.10, 0.05};
  int mixing_k_max = 500;
  std::string out_dir = ".";
  unsigned threads = 0;
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.mdp_path) j["mdp"] = *c.mdp_path;
  j["cyclic"] = {c.cyclic_states, c.cyclic_actions, c.cyclic_discount};
  j["alpha"] = c.alpha;
  j["epsilon"] = c.epsilon;
  j["tau"] = c.tau;
  j["horizon"] = c.horizon;
  j["seeds"] = c.n_seeds;
  j["base_seed"] = c.base_seed;
  j["log_stride"] = c.log_stride;
  j["initial_state"] = c.initial_state;
  if (c.q0_stay) j["q0_stay"] = *c.q0_stay;
  if (c.q0_move) j["q0_move"] = *c.q0_move;
  j["q0_const"] = c.q0_const;
  j["policy"] = c.policy;
  j["pi_b"] = c.pi_b;
  j["off_policy"] = c.off_policy;
  j["xi"] = c.xi;
  j["fig4_settings"] = c.fig4_settings;
  j["mixing_k_max"] = c.mixing_k_max;
  j["out"] = c.out_dir;
  return j;
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void apply_config_json(ExperimentConfig& c, const nlohmann::json& j) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "mdp") c.mdp_path = v.get<std::string>();
      else if (key == "cyclic") {
        c.cyclic_states = v.at(0).get<int>();
        c.cyclic_actions = v.at(1).get<int>();
        c.cyclic_discount = v.at(2).get<double>();
      } else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "horizon") c.horizon = v.get<std::int64_t>();
      else if (key == "seeds") c.n_seeds = v.get<int>();
      else if (key == "base_seed") c.base_seed = v.get<std::uint64_t>();
      else if (key == "log_stride") c.log_stride = v.get<std::int64_t>();
      else if (key == "initial_state") c.initial_state = v.get<int>();
      else if (key == "q0_stay") c.q0_stay = v.get<double>();
      else if (key == "q0_move") c.q0_move = v.get<double>();
      else if (key == "q0_const") c.q0_const = v.get<double>();
      else if (key == "policy") c.policy = v.get<std::string>();
      else if (key == "pi_b") c.pi_b = v.get<std::string>();
      else if (key == "off_policy") c.off_policy = v.get<bool>();
      else if (key == "xi") c.xi = v.get<std::vector<double>>();
      else if (key == "fig4_settings") c.fig4_settings = v.get<std::vector<double>>();
      else if (key == "mixing_k_max") c.mixing_k_max = v.get<int>();
      else if (key == "out") c.out_dir = v.get<std::string>();
      else throw IoError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("config: ") + e.what());
  }
}

/// Reads a JSON config file, or the `config` metadata line of a result CSV.
inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    if (!text.empty() && text[0] == '#') {
      j = nlohmann::json::parse(parse_csv(text).meta("config"));
    } else {
      j = nlohmann::json::parse(text);
    }
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("config '" + path + "' is not valid JSON: " + e.what());
  }
  apply_config_json(c, j);
}

inline bool uses_ring(const ExperimentConfig& c) { return !c.mdp_path.has_value(); }

inline TabularMdp resolve_mdp(const ExperimentConfig& c) {
  TabularMdp mdp = c.mdp_path ? load_mdp(*c.mdp_path)
                              : build_cyclic_mdp(c.cyclic_states, c.cyclic_actions, c.cyclic_discount);
  require_valid(mdp);
  return mdp;
}

inline double round12(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  const double scale = std::pow(10.0, 11 - static_cast<int>(std::floor(std::log10(std::abs(v)))));
  return std::round(v * scale) / scale;
}

inline QFunction initial_q(const ExperimentConfig& c, const TabularMdp& mdp) {
  if (!uses_ring(c)) return QFunction(Matrix::Constant(mdp.n_states, mdp.n_actions, c.q0_const));
  const double radius = 1.0 / (1.0 - mdp.discount);
  const double stay = c.q0_stay.value_or(round12(radius));
  const double move = c.q0_move.value_or(round12(0.9 * radius));
  QFunction q(Matrix::Constant(mdp.n_states, mdp.n_actions, stay));
  q.values.col(mdp.n_actions - 1).setConstant(move);
  return q;
}

/// Named policies: uniform, move (last action), stay (first action).
inline Policy named_policy(const std::string& name, const TabularMdp& mdp) {
  if (name == "uniform") return uniform_policy(mdp.n_states, mdp.n_actions);
  Policy pi{Matrix::Zero(mdp.n_states, mdp.n_actions)};
  if (name == "move") pi.probs.col(mdp.n_actions - 1).setOnes();
  else if (name == "stay") pi.probs.col(0).setOnes();
  else throw PreconditionError("unknown policy '" + name + "' (expected uniform|move|stay)");
  return pi;
}

inline LearnerConfig learner_config(const ExperimentConfig& c, const TabularMdp& mdp, double epsilon,
                                    double tau, std::optional<Policy> behavior) {
  LearnerConfig lc;
  lc.step_size = Schedule::constant(c.alpha);
  lc.epsilon = Schedule::constant(epsilon);
  lc.tau = Schedule::constant(tau);
  lc.horizon = c.horizon;
  lc.behavior = std::move(behavior);
  lc.initial_q = initial_q(c, mdp);
  lc.initial_state = c.initial_state;
  lc.seed = c.base_seed;
  lc.log_stride = c.log_stride;
  return lc;
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(seeds[i]);
  }
  return out;
}

/// Metadata common to every result file.
inline void stamp(CsvTable& table, const std::string& command, const ExperimentConfig& c) {
  table.add_metadata("schema", kCsvSchema);
  table.add_metadata("software", std::string("qlab ") + kVersion);
  table.add_metadata("command", command);
  table.add_metadata("config", config_to_json(c).dump());
  table.add_metadata("rng", Rng::kName);
}

inline std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  return format_double(dt.count());
}

/// Fraction of logged indices past `burn_in_fraction` of the horizon at which
/// `lower[i] <= upper[i]`.
inline double ordering_fraction(const std::vector<std::int64_t>& iterations,
                                const std::vector<double>& lower, const std::vector<double>& upper,
                                double burn_in_fraction) {
  if (iterations.empty()) return 0.0;
  const double cutoff = burn_in_fraction * static_cast<double>(iterations.back());
  std::size_t total = 0, ok = 0;
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    if (static_cast<double>(iterations[i]) <= cutoff) continue;
    ++total;
    if (lower[i] <= upper[i]) ++ok;
  }
  return total == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(total);
}

/// Mean of the last `fraction` of the logged points of a curve.
inline double tail_mean(const std::vector<double>& curve, double fraction) {
  if (curve.empty()) return 0.0;
  const std::size_t n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(curve.size()))));
  double sum = 0.0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) sum += curve[i];
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveResult {
  TabularMdp mdp;
  QFunction q_star;
  Policy greedy;
  QFunction q_pi;  // value of the analysed policy
  double bellman_residual = 0.0;
};

inline SolveResult solve(const ExperimentConfig& c) {
  SolveResult out;
  out.mdp = resolve_mdp(c);
  out.q_star = value_iteration(out.mdp);
  out.bellman_residual = sup_distance(bellman_optimality(out.mdp, out.q_star), out.q_star);
  out.greedy = greedy_policy(out.q_star);
  out.q_pi = policy_q(out.mdp, named_policy(c.policy, out.mdp));
  return out;
}

/// Columns: state, action, q_star, q_policy, greedy.
inline CsvTable solve_table(const ExperimentConfig& c, const SolveResult& r) {
  CsvTable t({"state", "action", "q_star", "q_policy", "greedy"});
  stamp(t, "solve", c);
  t.add_metadata("policy", c.policy);
  t.add_metadata("bellman_residual", format_double(r.bellman_residual));
  for (int s = 0; s < r.mdp.n_states; ++s)
    for (int a = 0; a < r.mdp.n_actions; ++a)
      t.add_row({double(s), double(a), r.q_star(s, a), r.q_pi(s, a), r.greedy(s, a)});
  return t;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunResult {
  EnsembleResult ensemble;
  double wall_seconds = 0.0;
};

/// Columns: iteration, q_gap_mean, q_gap_std, q_gap_sq_mean, q_gap_sq_std,
/// policy_gap_mean, policy_gap_std, policy_gap_sq_mean, policy_gap_sq_std.
inline CsvTable ensemble_table(const std::string& command, const ExperimentConfig& c,
                               const EnsembleResult& e) {
  CsvTable t({"iteration", "q_gap_mean", "q_gap_std", "q_gap_sq_mean", "q_gap_sq_std",
              "policy_gap_mean", "policy_gap_std", "policy_gap_sq_mean", "policy_gap_sq_std"});
  stamp(t, command, c);
  t.add_metadata("seeds", join_seeds(e.seeds));
  t.add_metadata("realized_lambda", format_double(e.realized_lambda));
  t.add_metadata("max_abs_q", format_double(e.max_abs_q));
  for (std::size_t i = 0; i < e.logged_iterations.size(); ++i)
    t.add_row({double(e.logged_iterations[i]), e.q_gap.mean[i], e.q_gap.std[i], e.q_gap_sq.mean[i],
               e.q_gap_sq.std[i], e.policy_q_gap.mean[i], e.policy_q_gap.std[i],
               e.policy_q_gap_sq.mean[i], e.policy_q_gap_sq.std[i]});
  return t;
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

struct FigureRuns {
  TabularMdp mdp;
  QFunction q_star;
  EnsembleResult on_policy;
  EnsembleResult off_policy;
  double off_policy_gap = 0.0;  // ||Q^{uniform} - Q*||_inf
  double wall_seconds = 0.0;
};

/// On-policy ensemble at (epsilon, tau) and the uniform off-policy baseline
/// from the same initialisation and seeds.
inline FigureRuns figure_runs(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  FigureRuns out;
  out.mdp = resolve_mdp(c);
  out.q_star = value_iteration(out.mdp);
  const Policy uniform = uniform_policy(out.mdp.n_states, out.mdp.n_actions);
  out.on_policy = ensemble_run(out.mdp, learner_config(c, out.mdp, c.epsilon, c.tau, std::nullopt),
                               out.q_star, c.n_seeds, c.threads);
  out.off_policy = ensemble_run(out.mdp, learner_config(c, out.mdp, c.epsilon, c.tau, uniform),
                                out.q_star, c.n_seeds, c.threads);
  out.off_policy_gap = sup_distance(policy_q(out.mdp, uniform), out.q_star);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  out.wall_seconds = dt.count();
  return out;
}

/// Columns: iteration, onpolicy_mean, onpolicy_std, offpolicy_mean, offpolicy_std
/// (statistics of ||Q_k - Q*||_inf over seeds).
inline CsvTable fig2_table(const ExperimentConfig& c, const FigureRuns& r) {
  CsvTable t({"iteration", "onpolicy_mean", "onpolicy_std", "offpolicy_mean", "offpolicy_std"});
  stamp(t, "reproduce fig2", c);
  t.add_metadata("seeds", join_seeds(r.on_policy.seeds));
  t.add_metadata("realized_lambda", format_double(r.on_policy.realized_lambda));
  t.add_metadata("wall_seconds", format_double(r.wall_seconds));
  for (std::size_t i = 0; i < r.on_policy.logged_iterations.size(); ++i)
    t.add_row({double(r.on_policy.logged_iterations[i]), r.on_policy.q_gap.mean[i],
               r.on_policy.q_gap.std[i], r.off_policy.q_gap.mean[i], r.off_policy.q_gap.std[i]});
  return t;
}

/// Columns: iteration, onpolicy_policy_gap_mean, onpolicy_policy_gap_std,
/// offpolicy_policy_gap (||Q^{pi_k} - Q*||_inf; the off-policy column is the
/// constant gap of the fixed uniform policy).
inline CsvTable fig3_table(const ExperimentConfig& c, const FigureRuns& r) {
  CsvTable t({"iteration", "onpolicy_policy_gap_mean", "onpolicy_policy_gap_std",
              "offpolicy_policy_gap"});
  stamp(t, "reproduce fig3", c);
  t.add_metadata("seeds", join_seeds(r.on_policy.seeds));
  t.add_metadata("realized_lambda", format_double(r.on_policy.realized_lambda));
  t.add_metadata("wall_seconds", format_double(r.wall_seconds));
  for (std::size_t i = 0; i < r.on_policy.logged_iterations.size(); ++i)
    t.add_row({double(r.on_policy.logged_iterations[i]), r.on_policy.policy_q_gap.mean[i],
               r.on_policy.policy_q_gap.std[i], r.off_policy_gap});
  return t;
}

struct Fig4Runs {
  TabularMdp mdp;
  QFunction q_star;
  std::vector<double> settings;  // epsilon = tau
  std::vector<EnsembleResult> runs;
  double wall_seconds = 0.0;
};

inline Fig4Runs fig4_runs(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Fig4Runs out;
  out.mdp = resolve_mdp(c);
  out.q_star = value_iteration(out.mdp);
  out.settings = c.fig4_settings;
  for (double v : out.settings)
    out.runs.push_back(ensemble_run(out.mdp, learner_config(c, out.mdp, v, v, std::nullopt),
                                    out.q_star, c.n_seeds, c.threads));
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  out.wall_seconds = dt.count();
  return out;
}

inline std::string setting_label(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// Columns: iteration, then policy_gap_mean_eps_<v>, policy_gap_std_eps_<v>
/// for each setting epsilon = tau = v.
inline CsvTable fig4_table(const ExperimentConfig& c, const Fig4Runs& r) {
  std::vector<std::string> cols{"iteration"};
  for (double v : r.settings) {
    cols.push_back("policy_gap_mean_eps_" + setting_label(v));
    cols.push_back("policy_gap_std_eps_" + setting_label(v));
  }
  CsvTable t(cols);
  stamp(t, "reproduce fig4", c);
  if (!r.runs.empty()) t.add_metadata("seeds", join_seeds(r.runs.front().seeds));
  std::string lambdas;
  for (const auto& e : r.runs) lambdas += (lambdas.empty() ? "" : " ") + format_double(e.realized_lambda);
  t.add_metadata("realized_lambda", lambdas);
  t.add_metadata("wall_seconds", format_double(r.wall_seconds));
  if (r.runs.empty()) return t;
  for (std::size_t i = 0; i < r.runs.front().logged_iterations.size(); ++i) {
    std::vector<double> row{double(r.runs.front().logged_iterations[i])};
    for (const auto& e : r.runs) {
      row.push_back(e.policy_q_gap.mean[i]);
      row.push_back(e.policy_q_gap.std[i]);
    }
    t.add_row(row);
  }
  return t;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalysisReport {
  bool state_irreducible = false;
  bool joint_irreducible = false;
  std::optional<StationaryDistribution> state_mu;
  std::optional<StationaryDistribution> joint_mu;
  std::optional<ExplorationConstants> exploration;
  std::string exploration_note;
  std::optional<MixingCertificate> empirical;
  std::optional<MixingCertificate> certified;
  std::string certified_note;
  std::optional<CertificateCheck> empirical_check;
  std::optional<CertificateCheck> certified_check;
  // Poisson cross-check on the joint chain with y = R (flattened).
  double poisson_series_residual = 0.0;
  double poisson_direct_residual = 0.0;
  double poisson_agreement = 0.0;
  bool poisson_bound_ok = false;
};

/// Chain diagnostics for the configured policy. Reducible chains are reported
/// as a verdict; everything downstream is skipped.
inline AnalysisReport analyze(const ExperimentConfig& c) {
  const TabularMdp mdp = resolve_mdp(c);
  const Policy policy = named_policy(c.policy, mdp);
  AnalysisReport rep;
  const StochasticMatrix chain = state_chain(mdp, policy);
  const StochasticMatrix joint = joint_chain(mdp, policy);
  rep.state_irreducible = is_irreducible(chain);
  rep.joint_irreducible = is_irreducible(joint);
  if (rep.state_irreducible) rep.state_mu = stationary(chain);

  const Policy pi_b = named_policy(c.pi_b, mdp);
  try {
    rep.exploration = exploration_constants(mdp, pi_b);
  } catch (const ReducibleChainError& e) {
    rep.exploration_note = e.what();
  }
  if (!rep.joint_irreducible) return rep;

  rep.joint_mu = stationary(joint);
  const StochasticMatrix joint_lazy = lazy(joint);
  rep.empirical = empirical_mixing(joint_lazy, *rep.joint_mu, c.mixing_k_max);
  rep.empirical_check = check_certificate(joint_lazy, *rep.joint_mu, *rep.empirical, c.mixing_k_max);
  if (rep.exploration && rep.exploration->pi_b_min > 0.0) {
    rep.certified = certified_mixing(policy.probs.minCoeff(), *rep.exploration);
    rep.certified_check =
        check_certificate(joint_lazy, *rep.joint_mu, *rep.certified, c.mixing_k_max);
  } else {
    rep.certified_note = "certified certificate needs pi_b with min_{s,a} pi_b(a|s) > 0";
  }

  const Vector y = flatten(mdp.reward);
  const PoissonSolution series = poisson_series(joint, *rep.joint_mu, y);
  const PoissonSolution direct = poisson_direct(joint, *rep.joint_mu, y);
  rep.poisson_series_residual = series.residual_norm;
  rep.poisson_direct_residual = direct.residual_norm;
  rep.poisson_agreement = sup_norm(series.x - direct.x);
  rep.poisson_bound_ok = poisson_bound_check(series, *rep.empirical);
  return rep;
}

/// Columns: k, tv_distance, empirical_bound, empirical_ok, certified_bound,
/// certified_ok (certified columns are NaN when no certificate exists).
/// Scalar verdicts are carried in the metadata lines.
inline CsvTable analysis_table(const ExperimentConfig& c, const AnalysisReport& r) {
  CsvTable t({"k", "tv_distance", "empirical_bound", "empirical_ok", "certified_bound",
              "certified_ok"});
  stamp(t, "analyze", c);
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  t.add_metadata("policy", c.policy);
  t.add_metadata("state_irreducible", b(r.state_irreducible));
  t.add_metadata("joint_irreducible", b(r.joint_irreducible));
  auto vec = [](const Vector& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v(i));
    return s;
  };
  if (r.state_mu) t.add_metadata("state_stationary", vec(r.state_mu->weights));
  if (r.joint_mu) t.add_metadata("joint_stationary", vec(r.joint_mu->weights));
  if (r.exploration) {
    t.add_metadata("pi_b", c.pi_b);
    t.add_metadata("r_b", std::to_string(r.exploration->r));
    t.add_metadata("delta_b", format_double(r.exploration->delta));
    t.add_metadata("mu_pi_b_min", format_double(r.exploration->mu_min));
    t.add_metadata("pi_b_min", format_double(r.exploration->pi_b_min));
  } else if (!r.exploration_note.empty()) {
    t.add_metadata("exploration_constants", r.exploration_note);
  }
  if (r.empirical) {
    t.add_metadata("empirical_c", format_double(r.empirical->c));
    t.add_metadata("empirical_rho", format_double(r.empirical->rho));
    t.add_metadata("empirical_valid", b(r.empirical_check->all_hold));
  }
  if (r.certified) {
    t.add_metadata("certified_c", format_double(r.certified->c));
    t.add_metadata("certified_rho", format_double(r.certified->rho));
    t.add_metadata("certified_valid", b(r.certified_check->all_hold));
  } else if (!r.certified_note.empty()) {
    t.add_metadata("certified", r.certified_note);
  }
  if (r.joint_mu) {
    t.add_metadata("poisson_series_residual", format_double(r.poisson_series_residual));
    t.add_metadata("poisson_direct_residual", format_double(r.poisson_direct_residual));
    t.add_metadata("poisson_agreement", format_double(r.poisson_agreement));
    t.add_metadata("poisson_bound_ok", b(r.poisson_bound_ok));
  }
  if (!r.empirical_check) return t;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < r.empirical_check->distance.size(); ++k) {
    const bool has_cert = r.certified_check.has_value();
    t.add_row({double(k), r.empirical_check->distance[k], r.empirical_check->bound[k],
               r.empirical_check->holds[k] ? 1.0 : 0.0,
               has_cert ? r.certified_check->bound[k] : nan,
               has_cert ? (r.certified_check->holds[k] ? 1.0 : 0.0) : nan});
  }
  return t;
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

struct BoundsReport {
  ExplorationConstants exploration;
  Theorem1Constants constants;
  Theorem2Decomposition theorem2;
  double q0_gap = 0.0;
  EnsembleResult ensemble;
  Theorem1Curve curve;
  std::vector<double> theorem2_bound;  // T1 * mean q_gap^2 + T2
  std::vector<double> theorem2_rhs;    // theorem2_bound + 3 std(policy_gap^2)
  DominanceReport theorem1_dominance;
  DominanceReport theorem2_dominance;
  std::vector<std::pair<double, double>> complexity;  // (xi, k)
};

/// Evaluates the mean-square bound, its sample complexity and the policy-gap
/// bound, and checks them against an on-policy ensemble on the same MDP.
/// Uses the surrogate lambda = epsilon / |A|.
inline BoundsReport bounds(const ExperimentConfig& c) {
  const TabularMdp mdp = resolve_mdp(c);
  BoundsReport rep;
  rep.exploration = exploration_constants(mdp, named_policy(c.pi_b, mdp));
  const double lambda = c.epsilon / mdp.n_actions;
  rep.constants = theorem1_constants(rep.exploration, lambda, mdp.discount, c.tau, mdp.n_pairs());
  if (!(c.alpha < 1.0 / rep.constants.c1))
    throw PreconditionError("bounds: the stepsize alpha must satisfy alpha < 1/c1 (alpha=" +
                            format_double(c.alpha) +
                            ", 1/c1=" + format_double(1.0 / rep.constants.c1) + ")");
  rep.theorem2 = theorem2_decomposition(mdp.discount, c.epsilon, c.tau, mdp.n_actions);

  const QFunction q_star = value_iteration(mdp);
  const LearnerConfig lc = learner_config(c, mdp, c.epsilon, c.tau, std::nullopt);
  rep.q0_gap = sup_distance(lc.initial_q, q_star);
  rep.ensemble = ensemble_run(mdp, lc, q_star, c.n_seeds, c.threads);
  rep.curve = theorem1_curve(rep.constants, c.alpha, rep.q0_gap, rep.ensemble.logged_iterations);
  rep.theorem1_dominance = bound_vs_empirical(rep.curve.values, rep.ensemble.q_gap_sq.mean);
  for (std::size_t i = 0; i < rep.ensemble.logged_iterations.size(); ++i) {
    rep.theorem2_bound.push_back(rep.theorem2.t1_coeff * rep.ensemble.q_gap_sq.mean[i] +
                                 rep.theorem2.t2);
    rep.theorem2_rhs.push_back(rep.theorem2_bound.back() +
                               3.0 * rep.ensemble.policy_q_gap_sq.std[i]);
  }
  rep.theorem2_dominance = bound_vs_empirical(rep.theorem2_rhs, rep.ensemble.policy_q_gap_sq.mean);
  for (double xi : c.xi)
    rep.complexity.emplace_back(xi, corollary1_complexity(rep.constants, xi, rep.q0_gap));
  return rep;
}

/// Columns: iteration, empirical_q_gap_sq_mean, theorem1_bound,
/// empirical_policy_gap_sq_mean, empirical_policy_gap_sq_std, theorem2_bound.
inline CsvTable bounds_table(const ExperimentConfig& c, const BoundsReport& r) {
  CsvTable t({"iteration", "empirical_q_gap_sq_mean", "theorem1_bound",
              "empirical_policy_gap_sq_mean", "empirical_policy_gap_sq_std", "theorem2_bound"});
  stamp(t, "bounds", c);
  t.add_metadata("seeds", join_seeds(r.ensemble.seeds));
  t.add_metadata("pi_b", c.pi_b);
  t.add_metadata("r_b", std::to_string(r.exploration.r));
  t.add_metadata("delta_b", format_double(r.exploration.delta));
  t.add_metadata("mu_pi_b_min", format_double(r.exploration.mu_min));
  t.add_metadata("pi_b_min", format_double(r.exploration.pi_b_min));
  t.add_metadata("lambda_surrogate", format_double(r.constants.lambda));
  t.add_metadata("realized_lambda", format_double(r.ensemble.realized_lambda));
  t.add_metadata("c1", format_double(r.constants.c1));
  t.add_metadata("c2", format_double(r.constants.c2));
  t.add_metadata("c3", format_double(r.constants.c3));
  t.add_metadata("c4", format_double(r.constants.c4));
  t.add_metadata("log_clamped", r.curve.log_clamped ? "true" : "false");
  t.add_metadata("t1_coeff", format_double(r.theorem2.t1_coeff));
  t.add_metadata("t2", format_double(r.theorem2.t2));
  t.add_metadata("theorem1_dominance_fraction", format_double(r.theorem1_dominance.fraction));
  t.add_metadata("theorem2_dominance_fraction", format_double(r.theorem2_dominance.fraction));
  std::string cx;
  for (const auto& [xi, k] : r.complexity)
    cx += (cx.empty() ? "" : " ") + format_double(xi) + "=" + format_double(k);
  t.add_metadata("corollary1_complexity", cx);
  for (std::size_t i = 0; i < r.ensemble.logged_iterations.size(); ++i)
    t.add_row({double(r.ensemble.logged_iterations[i]), r.ensemble.q_gap_sq.mean[i],
               r.curve.values[i], r.ensemble.policy_q_gap_sq.mean[i],
               r.ensemble.policy_q_gap_sq.std[i], r.theorem2_bound[i]});
  return t;
}

}  // namespace qlab
