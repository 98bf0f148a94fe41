// Command-line front end: forward solving, identification, trajectory
// evaluation and the full benchmark reproduction.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "idg/estimators.hpp"
#include "idg/evaluation.hpp"
#include "idg/experiment.hpp"
#include "idg/io.hpp"
#include "idg/solvers.hpp"

namespace {

using namespace idg;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitAcceptance = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

Vector parse_vector(const std::string& csv) {
  Vector out;
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) values.push_back(std::stod(tok));
  out.resize(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i];
  return out;
}

std::vector<double> parse_snr_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "inf" || tok == "infinity")
      out.push_back(kInfinity);
    else
      out.push_back(std::stod(tok));
  }
  return out;
}

// --fix-weight player=1,index=5,value=2.0 (player and index are 1-based).
FixedWeight parse_fixed_weight(const std::string& spec) {
  FixedWeight fw;
  std::stringstream ss(spec);
  std::string tok;
  bool have_player = false, have_index = false, have_value = false;
  while (std::getline(ss, tok, ',')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--fix-weight", "expected key=value items");
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "player") {
      fw.player = std::stoi(value) - 1;
      have_player = true;
    } else if (key == "index") {
      fw.index = std::stoi(value) - 1;
      have_index = true;
    } else if (key == "value") {
      fw.value = std::stod(value);
      have_value = true;
    } else {
      throw CLI::ValidationError("--fix-weight", "unknown key '" + key + "'");
    }
  }
  if (!have_player || !have_index || !have_value)
    throw CLI::ValidationError("--fix-weight",
                               "need player=<i>,index=<q>,value=<w>");
  return fw;
}

struct SystemSetup {
  GameDefinition game;
  std::vector<Vector> theta;
  Vector x1;
  bool linear_quadratic = false;
};

SystemSetup load_system(const std::string& name, int horizon, double dt) {
  SystemSetup setup;
  if (name == "ball-on-beam") {
    setup.game = make_ball_on_beam_game(horizon, dt);
    setup.theta = ball_on_beam_true_parameters().theta;
    setup.x1 = ball_on_beam_initial_state();
    setup.linear_quadratic = false;
    return setup;
  }
  if (name == "ball-on-beam-lq") {
    setup.game = make_ball_on_beam_lq_game(horizon, dt);
    setup.theta = ball_on_beam_true_parameters().theta;
    setup.x1 = ball_on_beam_initial_state();
    setup.linear_quadratic = true;
    return setup;
  }
  // Custom LQ game from a JSON document with fields A, B (per player),
  // theta (per player), dt, horizon. Features are the standard quadratic
  // set: one negated square per state channel, then per own control channel.
  if (!fs::exists(name))
    throw CLI::ValidationError(
        "--system",
        "unknown system '" + name +
            "' (expected ball-on-beam, ball-on-beam-lq or a JSON file)");
  std::ifstream in(name);
  nlohmann::json doc;
  in >> doc;
  LinearGameMatrices lin;
  const auto a_rows = doc.at("A").get<std::vector<std::vector<double>>>();
  const int n = static_cast<int>(a_rows.size());
  lin.a.resize(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) lin.a(r, c) = a_rows[r].at(c);
  for (const auto& b_player :
       doc.at("B").get<std::vector<std::vector<std::vector<double>>>>()) {
    Matrix b(n, static_cast<Eigen::Index>(b_player.at(0).size()));
    for (int r = 0; r < n; ++r)
      for (std::size_t c = 0; c < b_player[r].size(); ++c)
        b(r, static_cast<Eigen::Index>(c)) = b_player[r][c];
    lin.b.push_back(std::move(b));
  }
  const double file_dt = doc.value("dt", dt);
  const int file_horizon = doc.value("horizon", horizon);
  lin = discretize_exact(std::move(lin), file_dt);
  setup.game = make_linear_quadratic_game(lin, file_horizon);
  for (const auto& t :
       doc.at("theta").get<std::vector<std::vector<double>>>()) {
    Vector theta(static_cast<Eigen::Index>(t.size()));
    for (std::size_t q = 0; q < t.size(); ++q)
      theta[static_cast<Eigen::Index>(q)] = t[q];
    setup.theta.push_back(std::move(theta));
  }
  setup.x1 = Vector::Zero(n);
  if (doc.contains("x1")) {
    const auto x1 = doc.at("x1").get<std::vector<double>>();
    for (int c = 0; c < n && c < static_cast<int>(x1.size()); ++c)
      setup.x1[c] = x1[c];
  }
  setup.linear_quadratic = true;
  return setup;
}

JacobianVariant parse_variant(const std::string& name) {
  if (name == "plain") return JacobianVariant::kPlain;
  if (name == "trapezoid") return JacobianVariant::kTrapezoid;
  throw CLI::ValidationError("--d-variant", "expected 'plain' or 'trapezoid'");
}

int cmd_forward(const std::string& system, const std::string& concept_name,
                int horizon, double dt, const std::string& x1_csv,
                const std::vector<std::string>& theta_csv,
                const std::string& out_dir) {
  SystemSetup setup = load_system(system, horizon, dt);
  if (!x1_csv.empty()) setup.x1 = parse_vector(x1_csv);
  if (!theta_csv.empty()) {
    if (static_cast<int>(theta_csv.size()) != setup.game.player_count())
      throw CLI::ValidationError("--theta",
                                 "one comma list per player required");
    for (std::size_t i = 0; i < theta_csv.size(); ++i)
      setup.theta[i] = parse_vector(theta_csv[i]);
  }

  Trajectory traj;
  SolverReport report;
  if (concept_name == "cg") {
    std::tie(traj, report) =
        solve_cooperative(setup.game, setup.theta, setup.x1);
  } else if (concept_name == "ol-nash") {
    if (setup.linear_quadratic)
      std::tie(traj, report) =
          solve_open_loop_nash_lq(setup.game, setup.theta, setup.x1);
    else
      std::tie(traj, report) =
          solve_open_loop_nash(setup.game, setup.theta, setup.x1);
  } else if (concept_name == "fb-nash") {
    if (!setup.linear_quadratic)
      throw CLI::ValidationError(
          "--concept",
          "feedback Nash synthesis is only available for linear-quadratic "
          "systems (use ball-on-beam-lq or a custom LQ game)");
    auto result = solve_feedback_nash_lq(setup.game, setup.theta, setup.x1,
                                         FeedbackHorizon::kStationary);
    traj = std::move(result.trajectory);
    report = result.report;
  } else {
    throw CLI::ValidationError("--concept", "expected cg, ol-nash or fb-nash");
  }

  const fs::path dir = out_dir;
  fs::create_directories(dir);
  write_trajectory_csv(dir / "trajectory.csv", traj, setup.game.dt);
  write_text_atomic(dir / "report.json", solver_report_json(report));
  if (!report.converged) {
    std::cerr << "forward solve did not converge: " << report.message << "\n";
    return kExitNumerical;
  }
  std::cout << "wrote " << (dir / "trajectory.csv").string() << " ("
            << traj.horizon() << " rows)\n";
  return kExitOk;
}

int cmd_identify(const std::string& system, const std::string& concept_name,
                 int horizon, double dt,
                 const std::vector<std::string>& demo_paths,
                 const std::vector<std::string>& fix_specs,
                 const std::string& variant_name,
                 const std::string& objective_name, bool allow_nonconverged,
                 const std::string& out_dir) {
  SystemSetup setup = load_system(system, horizon, dt);

  std::vector<Trajectory> trajectories;
  for (const auto& path : demo_paths) {
    TrajectoryFile file = read_trajectory_csv(path);
    if (file.state_dim != setup.game.state_dim())
      throw std::runtime_error(path + ": state dimension " +
                               std::to_string(file.state_dim) +
                               " does not match the system");
    trajectories.push_back(std::move(file.trajectory));
  }
  const int demo_horizon = trajectories.front().horizon();
  for (const auto& t : trajectories)
    if (t.horizon() != demo_horizon)
      throw std::runtime_error("demonstrations have mixed horizons");
  if (demo_horizon != setup.game.horizon)
    setup = load_system(system, demo_horizon, dt);

  const DemonstrationSet demos =
      make_demonstration_set(setup.game, std::move(trajectories));

  MleConfig config;
  config.variant = parse_variant(variant_name);
  if (objective_name == "likelihood")
    config.objective = MleObjective::kLikelihood;
  else if (objective_name == "residual")
    config.objective = MleObjective::kOptimalityResidual;
  else
    throw CLI::ValidationError("--objective",
                               "expected 'likelihood' or 'residual'");
  if (fix_specs.empty()) {
    // Default: pin each player's own-control weight at 1.
    for (int i = 0; i < setup.game.player_count(); ++i)
      config.fixed.push_back({i, setup.game.feature_dim(i) - 1, 1.0});
  } else {
    for (const auto& spec : fix_specs)
      config.fixed.push_back(parse_fixed_weight(spec));
  }

  const fs::path dir = out_dir;
  fs::create_directories(dir);

  std::vector<IdentificationResult> results;
  if (concept_name == "cg") {
    results.push_back(identify_cooperative(demos, setup.game, config));
  } else if (concept_name == "ol-nash") {
    for (int i = 0; i < setup.game.player_count(); ++i)
      results.push_back(identify_open_loop(demos, setup.game, i, config));
  } else if (concept_name == "fb-nash") {
    const auto gains = estimate_feedback_gains(demos, setup.game);
    std::vector<FeedbackLawPtr> laws;
    for (const auto& k : gains)
      laws.push_back(std::make_shared<LinearStateFeedback>(k));
    for (int i = 0; i < setup.game.player_count(); ++i)
      results.push_back(identify_feedback(demos, setup.game, i, laws, config));
  } else {
    throw CLI::ValidationError("--concept", "expected cg, ol-nash or fb-nash");
  }

  bool all_converged = true;
  for (const auto& result : results) {
    const std::string tag =
        result.scope_tag == "CG"
            ? "cg"
            : "player" + std::to_string(result.players.front() + 1);
    write_text_atomic(dir / ("identification_" + tag + ".json"),
                      identification_result_json(result));
    std::cout << "identification (" << result.scope_tag << ", " << tag
              << "): converged=" << result.converged
              << " iterations=" << result.iterations
              << " grad=" << result.grad_norm << "\n";
    all_converged &= result.converged;
  }
  if (!all_converged && !allow_nonconverged) {
    std::cerr << "estimator did not converge (rerun with "
                 "--allow-nonconverged to keep the result)\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_evaluate(const std::string& estimated_path,
                 const std::string& reference_path,
                 const std::string& out_dir) {
  const TrajectoryFile estimated = read_trajectory_csv(estimated_path);
  const TrajectoryFile reference = read_trajectory_csv(reference_path);
  const ErrorReport report = nmae(estimated.trajectory, reference.trajectory);
  const std::string json = error_report_json(report);
  std::cout << json;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_atomic(fs::path(out_dir) / "nmae.json", json);
  }
  return kExitOk;
}

int cmd_reproduce(const std::vector<std::string>& only,
                  const std::string& snr_csv, int trials, std::uint64_t seed,
                  const std::string& variant_name, int threads,
                  const std::string& out_dir) {
  ExperimentConfig config;
  if (!only.empty()) config.concepts = only;
  if (!snr_csv.empty()) config.snr_db = parse_snr_list(snr_csv);
  config.trials = trials;
  config.master_seed = seed;
  config.variant = parse_variant(variant_name);
  config.threads = threads;

  std::cout << "running " << config.concepts.size() << " concept(s) x "
            << config.snr_db.size() << " SNR level(s), " << config.trials
            << " trial(s) per noisy cell\n";
  const ExperimentResults results = run_experiment(config);
  write_results_bundle(results, out_dir);

  const auto checks = check_grid_against_reference(results);
  bool all_passed = true;
  for (const auto& check : checks) {
    std::cout << (check.passed ? "[PASS] " : "[FAIL] ") << check.name << ": "
              << check.detail << "\n";
    all_passed &= check.passed;
  }
  std::cout << "results bundle written to " << out_dir << "\n";
  return all_passed ? kExitOk : kExitAcceptance;
}

// Values from --config files fill options the command line left untouched
// (precedence: flags > file > defaults).
class ConfigFile {
 public:
  ConfigFile(const CLI::App& sub, const std::string& path) : sub_(&sub) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    in >> doc_;
  }

  template <typename T>
  void apply(const std::string& key, T& target) const {
    if (doc_.is_null() || !doc_.contains(key)) return;
    const CLI::Option* opt = sub_->get_option_no_throw("--" + key);
    if (opt && opt->count() > 0) return;  // explicit flags win
    target = doc_.at(key).get<T>();
  }

 private:
  const CLI::App* sub_;
  nlohmann::json doc_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Forward and inverse solvers for N-player dynamic games: synthesizes "
      "cooperative, open-loop Nash and feedback Nash demonstrations and "
      "identifies cost-function parameters from observed trajectories."};
  app.require_subcommand(1);

  std::string config_path;

  // forward
  auto* forward = app.add_subcommand("forward", "solve a forward game");
  std::string fw_system = "ball-on-beam", fw_concept = "cg", fw_x1,
              fw_out = ".";
  int fw_horizon = 251;
  double fw_dt = 0.02;
  std::vector<std::string> fw_theta;
  forward->add_option("--config", config_path, "JSON config file");
  forward->add_option("--system", fw_system,
                      "ball-on-beam | ball-on-beam-lq | <custom LQ json>");
  forward->add_option("--concept", fw_concept, "cg | ol-nash | fb-nash");
  forward->add_option("--horizon", fw_horizon, "number of samples k_E");
  forward->add_option("--dt", fw_dt, "sampling time [s]");
  forward->add_option("--x1", fw_x1, "initial state, comma separated");
  forward->add_option("--theta", fw_theta,
                      "per-player weights, one comma list per player");
  forward->add_option("--out", fw_out, "output directory");

  // identify
  auto* identify = app.add_subcommand(
      "identify", "identify cost parameters from demonstrations");
  std::string id_system = "ball-on-beam", id_concept = "cg", id_out = ".";
  std::string id_variant = "plain", id_objective = "residual";
  int id_horizon = 251;
  double id_dt = 0.02;
  std::vector<std::string> id_demos, id_fix;
  bool id_allow_nonconverged = false;
  identify->add_option("--config", config_path, "JSON config file");
  identify->add_option("--system", id_system,
                       "ball-on-beam | ball-on-beam-lq | <custom LQ json>");
  identify->add_option("--concept", id_concept, "cg | ol-nash | fb-nash");
  identify->add_option("--horizon", id_horizon, "number of samples k_E");
  identify->add_option("--dt", id_dt, "sampling time [s]");
  identify->add_option("--demos", id_demos, "demonstration CSV files")
      ->required();
  identify->add_option("--fix-weight", id_fix,
                       "player=<i>,index=<q>,value=<w> (1-based)");
  identify->add_option("--d-variant", id_variant, "plain | trapezoid");
  identify->add_option("--objective", id_objective, "likelihood | residual");
  identify->add_flag("--allow-nonconverged", id_allow_nonconverged,
                     "exit 0 even if the estimator did not converge");
  identify->add_option("--out", id_out, "output directory");

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "NMAE between an estimated and a reference trajectory");
  std::string ev_estimated, ev_reference, ev_out;
  evaluate->add_option("--estimated", ev_estimated, "estimated CSV")
      ->required();
  evaluate->add_option("--reference", ev_reference, "reference CSV")
      ->required();
  evaluate->add_option("--out", ev_out, "output directory (optional)");

  // reproduce-paper
  auto* reproduce = app.add_subcommand(
      "reproduce-paper",
      "run the benchmark study across concepts and SNR levels");
  std::vector<std::string> rp_only;
  std::string rp_snr, rp_variant = "plain", rp_out = "results";
  int rp_trials = 1, rp_threads = 0;
  std::uint64_t rp_seed = 20240007;
  reproduce->add_option("--config", config_path, "JSON config file");
  reproduce->add_option("--only", rp_only,
                        "subset of concepts (cg, noln, loln, fb)");
  reproduce->add_option("--snr", rp_snr, "SNR list in dB, e.g. 15,20,inf");
  reproduce->add_option("--trials", rp_trials,
                        "noise realizations per noisy cell (medians)");
  reproduce->add_option("--seed", rp_seed, "master seed");
  reproduce->add_option("--d-variant", rp_variant, "plain | trapezoid");
  reproduce->add_option("--threads", rp_threads, "worker threads (0: auto)");
  reproduce->add_option("--out", rp_out, "results directory");

  try {
    app.parse(argc, argv);

    if (forward->parsed()) {
      const ConfigFile file(*forward, config_path);
      file.apply("system", fw_system);
      file.apply("concept", fw_concept);
      file.apply("horizon", fw_horizon);
      file.apply("dt", fw_dt);
      file.apply("x1", fw_x1);
      file.apply("theta", fw_theta);
      file.apply("out", fw_out);
      return cmd_forward(fw_system, fw_concept, fw_horizon, fw_dt, fw_x1,
                         fw_theta, fw_out);
    }
    if (identify->parsed()) {
      const ConfigFile file(*identify, config_path);
      file.apply("system", id_system);
      file.apply("concept", id_concept);
      file.apply("horizon", id_horizon);
      file.apply("dt", id_dt);
      file.apply("demos", id_demos);
      file.apply("fix-weight", id_fix);
      file.apply("d-variant", id_variant);
      file.apply("objective", id_objective);
      file.apply("out", id_out);
      return cmd_identify(id_system, id_concept, id_horizon, id_dt, id_demos,
                          id_fix, id_variant, id_objective,
                          id_allow_nonconverged, id_out);
    }
    if (evaluate->parsed())
      return cmd_evaluate(ev_estimated, ev_reference, ev_out);
    if (reproduce->parsed()) {
      const ConfigFile file(*reproduce, config_path);
      file.apply("only", rp_only);
      file.apply("snr", rp_snr);
      file.apply("trials", rp_trials);
      file.apply("seed", rp_seed);
      file.apply("d-variant", rp_variant);
      file.apply("threads", rp_threads);
      file.apply("out", rp_out);
      return cmd_reproduce(rp_only, rp_snr, rp_trials, rp_seed, rp_variant,
                           rp_threads, rp_out);
    }
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
