#include "idg/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "idg/io.hpp"

namespace idg {

namespace {

ExperimentConfig with_defaults(ExperimentConfig config) {
  if (config.theta_star.empty())
    config.theta_star = ball_on_beam_true_parameters().theta;
  if (config.x1.size() == 0) config.x1 = ball_on_beam_initial_state();
  if (config.fixed.empty()) config.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
  if (config.threads <= 0)
    config.threads = std::max(1u, std::thread::hardware_concurrency());
  return config;
}

int concept_index(const std::string& name) {
  if (name == "cg") return 0;
  if (name == "noln") return 1;
  if (name == "loln") return 2;
  if (name == "fb") return 3;
  throw std::invalid_argument("unknown concept '" + name +
                              "' (expected cg, noln, loln or fb)");
}

ConceptData make_concept_data(const std::string& name,
                              const ExperimentConfig& config) {
  ConceptData data;
  data.name = name;
  switch (concept_index(name)) {
    case 0: {  // cooperative, nonlinear model
      data.game = make_ball_on_beam_game(config.horizon, config.dt,
                                         config.params);
      auto [traj, report] =
          solve_cooperative(data.game, config.theta_star, config.x1);
      data.demonstration = std::move(traj);
      data.forward_report = report;
      break;
    }
    case 1: {  // open-loop Nash, nonlinear model
      data.game = make_ball_on_beam_game(config.horizon, config.dt,
                                         config.params);
      auto [traj, report] =
          solve_open_loop_nash(data.game, config.theta_star, config.x1);
      data.demonstration = std::move(traj);
      data.forward_report = report;
      break;
    }
    case 2: {  // open-loop Nash, linearized model
      data.game = make_ball_on_beam_lq_game(config.horizon, config.dt,
                                            config.params);
      auto [traj, report] =
          solve_open_loop_nash_lq(data.game, config.theta_star, config.x1);
      data.demonstration = std::move(traj);
      data.forward_report = report;
      break;
    }
    case 3: {  // feedback Nash, linearized model, stationary law
      data.game = make_ball_on_beam_lq_game(config.fb_horizon, config.dt,
                                            config.params);
      auto result = solve_feedback_nash_lq(data.game, config.theta_star,
                                           config.x1,
                                           FeedbackHorizon::kStationary);
      data.demonstration = std::move(result.trajectory);
      data.forward_report = result.report;
      data.true_gains = std::move(result.stationary_gains);
      break;
    }
  }
  if (!data.forward_report.converged)
    throw std::runtime_error("forward solve for concept '" + name +
                             "' did not converge: " +
                             data.forward_report.message);
  return data;
}

CellResult run_cell(const ConceptData& row, double snr,
                    std::uint64_t seed, int trial,
                    const ExperimentConfig& config) {
  CellResult cell;
  cell.concept_name = row.name;
  cell.snr_db = snr;
  cell.seed = seed;
  cell.trial = trial;
  try {
    const Trajectory noisy = add_noise(row.demonstration, {snr, seed});
    const DemonstrationSet demos =
        make_demonstration_set(row.game, {noisy});

    MleConfig mle;
    mle.fixed = config.fixed;
    mle.tol = config.mle_tol;
    mle.max_iterations = config.mle_max_iterations;
    mle.variant = config.variant;
    mle.objective = config.objective;
    mle.positive_weights =
        std::isfinite(snr) && config.positive_weights_under_noise;

    std::vector<Vector> theta_hat(row.game.player_count());
    switch (concept_index(row.name)) {
      case 0: {
        const auto result = identify_cooperative(demos, row.game, mle);
        theta_hat = result.theta;
        cell.identifications.push_back(result);
        break;
      }
      case 1:
      case 2: {
        for (int i = 0; i < row.game.player_count(); ++i) {
          const auto result = identify_open_loop(demos, row.game, i, mle);
          theta_hat[i] = result.theta[0];
          cell.identifications.push_back(result);
        }
        break;
      }
      case 3: {
        cell.estimated_gains = estimate_feedback_gains(demos, row.game);
        std::vector<FeedbackLawPtr> laws;
        for (const auto& k : cell.estimated_gains)
          laws.push_back(std::make_shared<LinearStateFeedback>(k));
        for (int i = 0; i < row.game.player_count(); ++i) {
          const auto result =
              identify_feedback(demos, row.game, i, laws, mle);
          theta_hat[i] = result.theta[0];
          cell.identifications.push_back(result);
        }
        break;
      }
    }

    // Forward solve at the estimate, warm-started from the noiseless
    // demonstration where iterative solvers are involved.
    switch (concept_index(row.name)) {
      case 0: {
        auto [traj, report] =
            solve_cooperative(row.game, theta_hat, config.x1,
                              SolverOptions{}, &row.demonstration.controls);
        if (!report.converged)
          throw std::runtime_error("forward solve at the estimate failed: " +
                                   report.message);
        cell.estimated = std::move(traj);
        break;
      }
      case 1: {
        auto [traj, report] = solve_open_loop_nash(
            row.game, theta_hat, config.x1, SolverOptions{},
            &row.demonstration.controls);
        if (!report.converged)
          throw std::runtime_error("forward solve at the estimate failed: " +
                                   report.message);
        cell.estimated = std::move(traj);
        break;
      }
      case 2: {
        auto [traj, report] =
            solve_open_loop_nash_lq(row.game, theta_hat, config.x1);
        if (!report.converged)
          throw std::runtime_error("forward solve at the estimate failed: " +
                                   report.message);
        cell.estimated = std::move(traj);
        break;
      }
      case 3: {
        auto result = solve_feedback_nash_lq(row.game, theta_hat,
                                             config.x1,
                                             FeedbackHorizon::kStationary);
        cell.estimated = std::move(result.trajectory);
        break;
      }
    }

    cell.errors = nmae(cell.estimated, row.demonstration);
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return kInfinity;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return (n % 2 == 1) ? values[n / 2]
                      : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

const ExperimentCell* ExperimentResults::cell(
    const std::string& concept_name, double snr) const {
  for (std::size_t c = 0; c < concepts.size(); ++c) {
    if (concepts[c].name != concept_name) continue;
    for (std::size_t s = 0; s < config.snr_db.size(); ++s)
      if (config.snr_db[s] == snr) return &grid[c][s];
  }
  return nullptr;
}

ExperimentResults run_experiment(const ExperimentConfig& raw_config) {
  ExperimentResults results;
  results.config = with_defaults(raw_config);
  const ExperimentConfig& config = results.config;

  for (const auto& name : config.concepts)
    results.concepts.push_back(make_concept_data(name, config));

  struct Job {
    int concept_index;
    int snr_index;
    int trial;
  };
  std::vector<Job> jobs;
  results.grid.resize(results.concepts.size());
  for (std::size_t c = 0; c < results.concepts.size(); ++c) {
    results.grid[c].resize(config.snr_db.size());
    for (std::size_t s = 0; s < config.snr_db.size(); ++s) {
      // Noise-free cells are deterministic; one trial suffices.
      const int trials =
          std::isfinite(config.snr_db[s]) ? config.trials : 1;
      results.grid[c][s].trials.resize(trials);
      for (int t = 0; t < trials; ++t)
        jobs.push_back({static_cast<int>(c), static_cast<int>(s), t});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) break;
      const Job& job = jobs[j];
      const double snr = config.snr_db[job.snr_index];
      const std::uint64_t seed = combine_seed(
          config.master_seed,
          combine_seed(static_cast<std::uint64_t>(job.concept_index * 1000 +
                                                  job.snr_index),
                       static_cast<std::uint64_t>(job.trial)));
      results.grid[job.concept_index][job.snr_index].trials[job.trial] =
          run_cell(results.concepts[job.concept_index], snr, seed, job.trial,
                   config);
    }
  };
  std::vector<std::thread> pool;
  const int thread_count =
      std::min<int>(config.threads, static_cast<int>(jobs.size()));
  for (int t = 1; t < thread_count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (auto& row : results.grid) {
    for (auto& cell : row) {
      std::vector<double> ex, eu;
      for (const auto& trial : cell.trials) {
        if (!trial.ok) continue;
        ex.push_back(trial.errors.e_x);
        eu.push_back(trial.errors.e_u);
      }
      cell.median_e_x = median_of(ex);
      cell.median_e_u = median_of(eu);
    }
  }
  return results;
}

const PublishedReference& published_reference() {
  static const PublishedReference ref = [] {
    PublishedReference r;
    r.snr_db = {15.0, 20.0, 25.0, 30.0, kInfinity};
    r.concepts = {"cg", "noln", "loln", "fb"};
    r.e_x = {{0.017, 0.015, 0.009, 0.010, 0.010},
             {0.041, 0.019, 0.009, 0.005, 0.003},
             {0.055, 0.036, 0.022, 0.017, 0.012},
             {0.359, 0.301, 0.071, 0.025, 0.013}};
    r.e_u = {{0.016, 0.017, 0.005, 0.006, 0.003},
             {0.614, 0.288, 0.089, 0.050, 0.014},
             {1.046, 0.375, 0.319, 0.016, 0.004},
             {0.998, 0.382, 0.144, 0.032, 0.032}};
    auto vec = [](std::initializer_list<double> v) {
      Vector out(static_cast<Eigen::Index>(v.size()));
      Eigen::Index i = 0;
      for (double x : v) out[i++] = x;
      return out;
    };
    r.theta1_truth = vec({20.0, 1.0, 1.0, 1.0, 2.0});
    r.theta2_truth = vec({1.0, 1.0, 10.0, 1.0, 1.0});
    r.theta1_noln = vec({19.697, 0.915, 2.350, 0.643, 2.000});
    r.theta2_noln = vec({1.027, 1.010, 9.965, 1.026, 1.000});
    r.theta1_cg = vec({10.116, 1.207, 0.601, 1.317, 2.000});
    r.theta2_cg = vec({10.117, 1.203, 0.601, 1.311, 1.000});
    r.theta1_loln = vec({19.360, 0.950, 1.379, 0.903, 2.000});
    r.theta2_loln = vec({0.640, 0.928, 9.531, 0.962, 1.000});
    r.theta1_fb = vec({19.421, 1.002, -0.375, 1.017, 2.000});
    r.theta2_fb = vec({0.531, 0.885, 9.113, 0.988, 1.000});
    return r;
  }();
  return ref;
}

std::vector<PrimaryCheck> check_grid_against_reference(
    const ExperimentResults& results) {
  std::vector<PrimaryCheck> checks;
  const auto& ref = published_reference();
  const bool has_infinite =
      std::count(results.config.snr_db.begin(), results.config.snr_db.end(),
                 kInfinity) > 0;
  const auto has_concept = [&](const std::string& name) {
    for (const auto& c : results.concepts)
      if (c.name == name) return true;
    return false;
  };

  // Noiseless trajectory recovery per concept.
  for (std::size_t c = 0; has_infinite && c < results.concepts.size(); ++c) {
    const auto* cell = results.cell(results.concepts[c].name, kInfinity);
    PrimaryCheck check;
    check.name = "noiseless recovery (" + results.concepts[c].name + ")";
    if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
      check.passed = false;
      check.detail = cell && !cell->trials.empty()
                         ? cell->trials.front().error
                         : "cell missing";
    } else {
      const auto& e = cell->trials.front().errors;
      check.passed = e.e_x <= 0.03 && e.e_u <= 0.06;
      std::ostringstream ss;
      ss << "e_x = " << e.e_x << " (<= 0.03), e_u = " << e.e_u
         << " (<= 0.06)";
      check.detail = ss.str();
    }
    checks.push_back(std::move(check));
  }

  // Noiseless NOLN parameter recovery for player 2.
  if (has_infinite && has_concept("noln")) {
    PrimaryCheck check;
    check.name = "noln player-2 parameter recovery";
    const auto* cell = results.cell("noln", kInfinity);
    if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
      check.passed = false;
      check.detail = "noln cell missing";
    } else {
      const auto& ids = cell->trials.front().identifications;
      check.passed = !ids.empty();
      std::ostringstream ss;
      for (const auto& id : ids) {
        if (id.players != std::vector<int>{1}) continue;
        double worst = 0.0;
        for (int q = 0; q < 4; ++q)
          worst = std::max(worst, std::abs(id.theta[0][q] -
                                           ref.theta2_truth[q]) /
                                      ref.theta2_truth[q]);
        check.passed = worst <= 0.10;
        ss << "max relative deviation " << worst << " (<= 0.10)";
      }
      check.detail = ss.str();
    }
    checks.push_back(std::move(check));
  }

  // Cooperative shared-weight agreement between the players.
  if (has_infinite && has_concept("cg")) {
    PrimaryCheck check;
    check.name = "cg shared-weight agreement";
    const auto* cell = results.cell("cg", kInfinity);
    if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
      check.passed = false;
      check.detail = "cg cell missing";
    } else {
      const auto& ids = cell->trials.front().identifications;
      if (ids.size() != 1 || ids.front().theta.size() != 2) {
        check.passed = false;
        check.detail = "unexpected identification layout";
      } else {
        double worst = 0.0;
        for (int q = 0; q < 4; ++q) {
          const double a = ids.front().theta[0][q];
          const double b = ids.front().theta[1][q];
          worst = std::max(worst, std::abs(a - b) /
                                      std::max(std::abs(a), std::abs(b)));
        }
        check.passed = worst <= 0.01;
        std::ostringstream ss;
        ss << "max shared-feature disagreement " << worst << " (<= 0.01)";
        check.detail = ss.str();
      }
    }
    checks.push_back(std::move(check));
  }

  // Median NMAE non-increasing in SNR, and 30 dB within 5x of the
  // published values (noisy cells are checked for trend and order of
  // magnitude only).
  const bool has_noise_sweep =
      results.config.snr_db.size() >= 2 &&
      std::count_if(results.config.snr_db.begin(), results.config.snr_db.end(),
                    [](double s) { return std::isfinite(s); }) >= 1;
  if (has_noise_sweep) {
    for (std::size_t c = 0; c < results.concepts.size(); ++c) {
      PrimaryCheck check;
      check.name = "noise trend (" + results.concepts[c].name + ")";
      bool monotone = true;
      std::ostringstream ss;
      ss << "median e_x:";
      double prev_x = kInfinity, prev_u = kInfinity;
      for (std::size_t s = 0; s < results.config.snr_db.size(); ++s) {
        const auto& cell = results.grid[c][s];
        ss << " " << cell.median_e_x;
        // Allow a small slack for medians that are equal up to noise.
        if (cell.median_e_x > prev_x * 1.0000001 ||
            cell.median_e_u > prev_u * 1.0000001)
          monotone = false;
        prev_x = cell.median_e_x;
        prev_u = cell.median_e_u;
      }
      ss << "; median e_u:";
      for (std::size_t s = 0; s < results.config.snr_db.size(); ++s)
        ss << " " << results.grid[c][s].median_e_u;
      check.passed = monotone;
      check.detail = ss.str();

      // Order-of-magnitude agreement at 30 dB where present.
      const int concept_ref =
          static_cast<int>(std::find(ref.concepts.begin(), ref.concepts.end(),
                                     results.concepts[c].name) -
                           ref.concepts.begin());
      for (std::size_t s = 0; s < results.config.snr_db.size(); ++s) {
        if (results.config.snr_db[s] != 30.0) continue;
        const auto& cell = results.grid[c][s];
        const double ref_x = ref.e_x[concept_ref][3];
        const double ref_u = ref.e_u[concept_ref][3];
        const bool in_range = cell.median_e_x <= 5.0 * ref_x &&
                              cell.median_e_x >= ref_x / 5.0 &&
                              cell.median_e_u <= 5.0 * ref_u &&
                              cell.median_e_u >= ref_u / 5.0;
        check.passed = check.passed && in_range;
        std::ostringstream ss30;
        ss30 << check.detail << "; 30 dB e_x " << cell.median_e_x << " vs "
             << ref_x << ", e_u " << cell.median_e_u << " vs " << ref_u
             << " (within 5x)";
        check.detail = ss30.str();
      }
      checks.push_back(std::move(check));
    }
  }
  return checks;
}

namespace {

// Resolved-configuration echo, enough to re-run any cell identically.
nlohmann::json config_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["dt"] = config.dt;
  j["horizon"] = config.horizon;
  j["fb_horizon"] = config.fb_horizon;
  j["master_seed"] = config.master_seed;
  j["trials"] = config.trials;
  j["d_variant"] =
      config.variant == JacobianVariant::kPlain ? "plain" : "trapezoid";
  j["objective"] = config.objective == MleObjective::kLikelihood
                       ? "likelihood"
                       : "optimality-residual";
  j["positive_weights_under_noise"] = config.positive_weights_under_noise;
  j["mle_tol"] = config.mle_tol;
  j["mle_max_iterations"] = config.mle_max_iterations;
  j["x1"] = std::vector<double>(config.x1.data(),
                                config.x1.data() + config.x1.size());
  for (const auto& t : config.theta_star)
    j["theta_star"].push_back(
        std::vector<double>(t.data(), t.data() + t.size()));
  for (const auto& fw : config.fixed)
    j["fixed_weights"].push_back({{"player", fw.player + 1},
                                  {"index", fw.index + 1},
                                  {"value", fw.value}});
  std::vector<nlohmann::json> snr;
  for (double s : config.snr_db)
    snr.push_back(std::isfinite(s) ? nlohmann::json(s)
                                   : nlohmann::json("inf"));
  j["snr_db"] = snr;
  return j;
}

}  // namespace

void write_results_bundle(const ExperimentResults& results,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& config = results.config;

  // NMAE grid: rows per concept, columns per SNR, e_x/e_u pairs.
  {
    std::ostringstream out;
    out << "concept";
    for (double snr : config.snr_db) {
      if (std::isfinite(snr))
        out << "," << snr << "dB_e_x," << snr << "dB_e_u";
      else
        out << ",inf_e_x,inf_e_u";
    }
    out << "\n";
    for (std::size_t c = 0; c < results.concepts.size(); ++c) {
      out << results.concepts[c].name;
      for (std::size_t s = 0; s < config.snr_db.size(); ++s)
        out << "," << results.grid[c][s].median_e_x << ","
            << results.grid[c][s].median_e_u;
      out << "\n";
    }
    write_text_atomic(dir / "nmae_grid.csv", out.str());
  }

  // Demonstrations, estimates and identified parameters per concept.
  for (std::size_t c = 0; c < results.concepts.size(); ++c) {
    const auto& row = results.concepts[c];
    write_trajectory_csv(dir / ("demo_" + row.name + ".csv"),
                         row.demonstration, config.dt);
    nlohmann::json params;
    params["concept"] = row.name;
    params["config"] = config_json(config);
    params["forward_report"] =
        nlohmann::json::parse(solver_report_json(row.forward_report));
    for (std::size_t s = 0; s < config.snr_db.size(); ++s) {
      const auto& cell = results.grid[c][s];
      if (cell.trials.empty()) continue;
      const auto& first = cell.trials.front();
      nlohmann::json entry;
      entry["snr_db"] = std::isfinite(cell.trials.front().snr_db)
                            ? nlohmann::json(first.snr_db)
                            : nlohmann::json("inf");
      entry["seed"] = first.seed;
      entry["ok"] = first.ok;
      if (!first.ok) entry["error"] = first.error;
      if (first.ok) {
        entry["e_x"] = first.errors.e_x;
        entry["e_u"] = first.errors.e_u;
        entry["median_e_x"] = cell.median_e_x;
        entry["median_e_u"] = cell.median_e_u;
        entry["trials"] = cell.trials.size();
        for (const auto& id : first.identifications)
          entry["identifications"].push_back(
              nlohmann::json::parse(identification_result_json(id)));
        const std::string tag =
            std::isfinite(first.snr_db)
                ? std::to_string(static_cast<int>(first.snr_db)) + "dB"
                : "inf";
        write_trajectory_csv(
            dir / ("estimate_" + row.name + "_" + tag + ".csv"),
            first.estimated, config.dt);
      }
      params["cells"].push_back(entry);
    }
    write_text_atomic(dir / ("params_" + row.name + ".json"),
                      params.dump(2) + "\n");
  }

  // Summary with the published reference values and pass/fail checks.
  {
    const auto checks = check_grid_against_reference(results);
    const auto& ref = published_reference();
    nlohmann::json summary;
    summary["config"] = config_json(config);
    for (std::size_t c = 0; c < ref.concepts.size(); ++c) {
      nlohmann::json row;
      row["concept"] = ref.concepts[c];
      row["published_e_x"] = ref.e_x[c];
      row["published_e_u"] = ref.e_u[c];
      summary["published_nmae"].push_back(row);
    }
    for (const auto& check : checks)
      summary["checks"].push_back({{"name", check.name},
                                   {"passed", check.passed},
                                   {"detail", check.detail}});
    summary["all_passed"] =
        std::all_of(checks.begin(), checks.end(),
                    [](const PrimaryCheck& c) { return c.passed; });
    write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  }
}

}  // namespace idg
