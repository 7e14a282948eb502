// qlab: command-line driver for the solvers, learners, chain diagnostics,
// bound calculators and figure reproductions.
//
//   qlab solve     [--cyclic N M GAMMA | --mdp PATH] [--policy NAME]
//   qlab run       [...] [--offpolicy]
//   qlab analyze   [...] [--policy NAME] [--pi-b NAME]
//   qlab bounds    [...] [--xi LIST]
//   qlab reproduce {fig2|fig3|fig4} [...]
//
// Every subcommand accepts --config FILE (JSON, or a result CSV whose
// metadata carries the config); explicit flags override the file. Results go
// to --out DIR as CSV. Errors print one line "error: <code>: <message>" to
// stderr and exit nonzero.

#include "qlab/qlab.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Flags {
  std::optional<std::string> config;
  std::vector<double> cyclic;
  std::optional<std::string> mdp;
  std::optional<double> alpha, epsilon, tau;
  std::optional<std::int64_t> horizon, log_stride;
  std::optional<int> seeds;
  std::optional<std::uint64_t> base_seed;
  std::optional<double> q0_stay, q0_move, q0_const;
  std::optional<std::string> policy, pi_b;
  std::vector<double> xi;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  std::optional<int> mixing_k_max;
  bool off_policy = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file or result CSV to re-run");
  cmd->add_option("--cyclic", f.cyclic, "Builtin ring MDP: N M GAMMA")->expected(3);
  cmd->add_option("--mdp", f.mdp, "MDP file (JSON interchange format)");
  cmd->add_option("--alpha", f.alpha, "Constant stepsize");
  cmd->add_option("--epsilon", f.epsilon, "Uniform-mixture weight epsilon");
  cmd->add_option("--tau", f.tau, "Softmax temperature tau");
  cmd->add_option("--horizon", f.horizon, "Iterations K per run");
  cmd->add_option("--seeds", f.seeds, "Number of seeds in the ensemble");
  cmd->add_option("--base-seed", f.base_seed, "First seed of the ensemble");
  cmd->add_option("--log-stride", f.log_stride, "Log every this many iterations");
  cmd->add_option("--q0-stay", f.q0_stay, "Initial Q of the stay actions (ring MDP)");
  cmd->add_option("--q0-move", f.q0_move, "Initial Q of the move action (ring MDP)");
  cmd->add_option("--q0-const", f.q0_const, "Constant initial Q (file MDPs)");
  cmd->add_option("--policy", f.policy, "Policy: uniform|move|stay");
  cmd->add_option("--pi-b", f.pi_b, "Reference policy for exploration constants");
  cmd->add_option("--xi", f.xi, "Accuracy targets for the sample complexity")->delimiter(',');
  cmd->add_option("--mixing-kmax", f.mixing_k_max, "Largest power checked by certificates");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--threads", f.threads, "Worker threads for ensembles (0 = all cores)");
}

qlab::ExperimentConfig resolve_config(const Flags& f) {
  qlab::ExperimentConfig c;
  if (f.config) qlab::load_config_file(c, *f.config);
  if (!f.cyclic.empty()) {
    c.mdp_path.reset();
    c.cyclic_states = static_cast<int>(f.cyclic[0]);
    c.cyclic_actions = static_cast<int>(f.cyclic[1]);
    c.cyclic_discount = f.cyclic[2];
    if (c.cyclic_states != f.cyclic[0] || c.cyclic_actions != f.cyclic[1])
      throw qlab::PreconditionError("--cyclic: N and M must be integers");
  }
  if (f.mdp) c.mdp_path = *f.mdp;
  if (f.alpha) c.alpha = *f.alpha;
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.tau) c.tau = *f.tau;
  if (f.horizon) c.horizon = *f.horizon;
  if (f.log_stride) c.log_stride = *f.log_stride;
  if (f.seeds) c.n_seeds = *f.seeds;
  if (f.base_seed) c.base_seed = *f.base_seed;
  if (f.q0_stay) c.q0_stay = *f.q0_stay;
  if (f.q0_move) c.q0_move = *f.q0_move;
  if (f.q0_const) c.q0_const = *f.q0_const;
  if (f.policy) c.policy = *f.policy;
  if (f.pi_b) c.pi_b = *f.pi_b;
  if (!f.xi.empty()) c.xi = f.xi;
  if (f.out) c.out_dir = *f.out;
  if (f.threads) c.threads = *f.threads;
  if (f.mixing_k_max) c.mixing_k_max = *f.mixing_k_max;
  if (f.off_policy) c.off_policy = true;
  return c;
}

std::string out_path(const qlab::ExperimentConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir);
  return (std::filesystem::path(c.out_dir) / name).string();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

void save(const qlab::CsvTable& t, const qlab::ExperimentConfig& c, const std::string& name) {
  const std::string path = out_path(c, name);
  t.save(path);
  std::cout << "wrote " << path << "\n";
}

int cmd_solve(const qlab::ExperimentConfig& c) {
  const qlab::SolveResult r = qlab::solve(c);
  std::cout << "bellman_residual: " << num(r.bellman_residual) << "\n";
  for (int s = 0; s < r.mdp.n_states; ++s) {
    std::cout << "q_star[" << s << "]:";
    for (int a = 0; a < r.mdp.n_actions; ++a) std::cout << ' ' << num(r.q_star(s, a));
    std::cout << "\n";
  }
  for (int s = 0; s < r.mdp.n_states; ++s) {
    std::cout << "q_" << c.policy << "[" << s << "]:";
    for (int a = 0; a < r.mdp.n_actions; ++a) std::cout << ' ' << num(r.q_pi(s, a));
    std::cout << "\n";
  }
  std::cout << "greedy:";
  for (int s = 0; s < r.mdp.n_states; ++s) {
    for (int a = 0; a < r.mdp.n_actions; ++a)
      if (r.greedy(s, a) == 1.0) std::cout << ' ' << a;
  }
  std::cout << "\n";
  save(qlab::solve_table(c, r), c, "solve.csv");
  return 0;
}

int cmd_run(const qlab::ExperimentConfig& c) {
  const qlab::TabularMdp mdp = qlab::resolve_mdp(c);
  const qlab::QFunction q_star = qlab::value_iteration(mdp);
  std::optional<qlab::Policy> behavior;
  if (c.off_policy) behavior = qlab::named_policy(c.policy, mdp);
  const auto lc = qlab::learner_config(c, mdp, c.epsilon, c.tau, behavior);
  const qlab::EnsembleResult e = qlab::ensemble_run(mdp, lc, q_star, c.n_seeds, c.threads);
  std::cout << "mode: " << (c.off_policy ? "off_policy(" + c.policy + ")" : "on_policy") << "\n";
  std::cout << "final_q_gap_mean: " << num(e.q_gap.mean.back()) << "\n";
  std::cout << "final_policy_gap_mean: " << num(e.policy_q_gap.mean.back()) << "\n";
  std::cout << "realized_lambda: " << num(e.realized_lambda) << "\n";
  save(qlab::ensemble_table(c.off_policy ? "run --offpolicy" : "run", c, e), c, "run.csv");
  return 0;
}

int cmd_analyze(const qlab::ExperimentConfig& c) {
  const qlab::AnalysisReport r = qlab::analyze(c);
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::cout << "state_irreducible: " << b(r.state_irreducible) << "\n";
  std::cout << "joint_irreducible: " << b(r.joint_irreducible) << "\n";
  if (r.exploration)
    std::cout << "exploration_constants: r_b=" << r.exploration->r
              << " delta_b=" << num(r.exploration->delta)
              << " mu_min=" << num(r.exploration->mu_min)
              << " pi_b_min=" << num(r.exploration->pi_b_min) << "\n";
  if (r.empirical)
    std::cout << "empirical_certificate: c=" << num(r.empirical->c) << " rho=" << num(r.empirical->rho)
              << " valid=" << b(r.empirical_check->all_hold) << "\n";
  if (r.certified)
    std::cout << "certified_certificate: c=" << num(r.certified->c) << " rho=" << num(r.certified->rho)
              << " valid=" << b(r.certified_check->all_hold) << "\n";
  if (r.joint_mu)
    std::cout << "poisson: series_residual=" << num(r.poisson_series_residual)
              << " direct_residual=" << num(r.poisson_direct_residual)
              << " agreement=" << num(r.poisson_agreement)
              << " bound_ok=" << b(r.poisson_bound_ok) << "\n";
  save(qlab::analysis_table(c, r), c, "analyze.csv");
  return 0;
}

int cmd_bounds(const qlab::ExperimentConfig& c) {
  const qlab::BoundsReport r = qlab::bounds(c);
  std::cout << "c1: " << num(r.constants.c1) << "\nc2: " << num(r.constants.c2)
            << "\nc3: " << num(r.constants.c3) << "\nc4: " << num(r.constants.c4) << "\n";
  std::cout << "theorem1_dominance_fraction: " << num(r.theorem1_dominance.fraction) << "\n";
  std::cout << "theorem2_dominance_fraction: " << num(r.theorem2_dominance.fraction) << "\n";
  for (const auto& [xi, k] : r.complexity)
    std::cout << "corollary1_complexity[xi=" << num(xi) << "]: " << num(k) << "\n";
  save(qlab::bounds_table(c, r), c, "bounds.csv");
  return 0;
}

int cmd_reproduce(const std::string& target, const qlab::ExperimentConfig& c) {
  if (target == "fig2" || target == "fig3") {
    const qlab::FigureRuns r = qlab::figure_runs(c);
    if (target == "fig2") {
      std::cout << "offpolicy_le_onpolicy_fraction_after_burnin: "
                << num(qlab::ordering_fraction(r.on_policy.logged_iterations,
                                               r.off_policy.q_gap.mean, r.on_policy.q_gap.mean,
                                               0.1))
                << "\n";
      save(qlab::fig2_table(c, r), c, "fig2.csv");
    } else {
      std::cout << "offpolicy_policy_gap: " << num(r.off_policy_gap) << "\n";
      std::cout << "onpolicy_final_policy_gap_mean: " << num(r.on_policy.policy_q_gap.mean.back())
                << "\n";
      save(qlab::fig3_table(c, r), c, "fig3.csv");
    }
    return 0;
  }
  if (target == "fig4") {
    const qlab::Fig4Runs r = qlab::fig4_runs(c);
    for (std::size_t i = 0; i < r.settings.size(); ++i)
      std::cout << "final_window_policy_gap[eps=tau=" << num(r.settings[i])
                << "]: " << num(qlab::tail_mean(r.runs[i].policy_q_gap.mean, 0.1)) << "\n";
    save(qlab::fig4_table(c, r), c, "fig4.csv");
    return 0;
  }
  throw qlab::PreconditionError("reproduce: unknown target '" + target + "' (fig2|fig3|fig4)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qlab: tabular Q-learning laboratory"};
  app.require_subcommand(1);
  Flags f;
  std::string target;

  auto* solve = app.add_subcommand("solve", "Exact Q*, Q^pi and greedy policy");
  auto* run = app.add_subcommand("run", "Seeded Q-learning ensemble");
  auto* analyze = app.add_subcommand("analyze", "Markov chain diagnostics");
  auto* bounds = app.add_subcommand("bounds", "Finite-time bounds vs an empirical ensemble");
  auto* reproduce = app.add_subcommand("reproduce", "Reproduce a figure as CSV");
  for (auto* cmd : {solve, run, analyze, bounds, reproduce}) add_common(cmd, f);
  run->add_flag("--offpolicy", f.off_policy, "Sample actions from the fixed --policy");
  reproduce->add_option("target", target, "fig2 | fig3 | fig4")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 64;
  }

  try {
    const qlab::ExperimentConfig c = resolve_config(f);
    if (solve->parsed()) return cmd_solve(c);
    if (run->parsed()) return cmd_run(c);
    if (analyze->parsed()) return cmd_analyze(c);
    if (bounds->parsed()) return cmd_bounds(c);
    if (reproduce->parsed()) return cmd_reproduce(target, c);
  } catch (const qlab::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
