// Acceptance suite: runs every primary criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exits nonzero when any fails.
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "idg/estimators.hpp"
#include "idg/evaluation.hpp"
#include "idg/experiment.hpp"
#include "idg/solvers.hpp"

using namespace idg;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4g", v);
  return buffer;
}

GameDefinition scalar_lq_game(double a, double b, int horizon) {
  LinearGameMatrices lin;
  lin.a = Matrix::Constant(1, 1, 0.0);
  lin.a_d = Matrix::Constant(1, 1, a);
  lin.dt = 0.1;
  lin.b.push_back(Matrix::Constant(1, 1, b));
  lin.b_d.push_back(Matrix::Constant(1, 1, b));
  return make_linear_quadratic_game(lin, 2);
  (void)horizon;
}

// Criteria 1-3 and the noise criteria share one experiment run.
ExperimentResults shared_run() {
  ExperimentConfig config;
  config.snr_db = {15.0, 20.0, 25.0, 30.0, kInfinity};
  config.trials = 20;
  if (const char* env = std::getenv("IDG_ACCEPTANCE_TRIALS"))
    config.trials = std::max(1, std::atoi(env));
  config.threads = 0;
  std::printf("running the benchmark grid (4 concepts x 5 SNR levels, %d "
              "trial(s) per noisy cell)...\n", config.trials);
  std::fflush(stdout);
  return run_experiment(config);
}

void criterion_1_noiseless_recovery(const ExperimentResults& results) {
  bool pass = true;
  std::ostringstream detail;
  for (const auto& concept_data : results.concepts) {
    const auto* cell = results.cell(concept_data.name, kInfinity);
    if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
      pass = false;
      detail << concept_data.name << ": failed; ";
      continue;
    }
    const auto& e = cell->trials.front().errors;
    const bool ok = e.e_x <= 0.03 && e.e_u <= 0.06;
    pass &= ok;
    detail << concept_data.name << ": e_x=" << fmt(e.e_x)
           << " e_u=" << fmt(e.e_u) << "; ";
  }
  report(1, "noiseless trajectory recovery, e_x <= 0.03, e_u <= 0.06", pass,
         detail.str());
}

void criterion_2_noln_parameters(const ExperimentResults& results) {
  const auto* cell = results.cell("noln", kInfinity);
  if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
    report(2, "NOLN player-2 parameter recovery", false, "cell missing");
    return;
  }
  Vector truth(4);
  truth << 1.0, 1.0, 10.0, 1.0;
  double worst = -1.0;
  for (const auto& id : cell->trials.front().identifications) {
    if (id.players != std::vector<int>{1}) continue;
    worst = 0.0;
    for (int q = 0; q < 4; ++q)
      worst = std::max(worst,
                       std::abs(id.theta[0][q] - truth[q]) / truth[q]);
  }
  report(2, "NOLN player-2 free weights within 10% of [1 1 10 1]",
         worst >= 0.0 && worst <= 0.10,
         "max relative deviation " + fmt(worst));
}

void criterion_3_cg_pareto(const ExperimentResults& results) {
  const auto* cell = results.cell("cg", kInfinity);
  if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
    report(3, "CG Pareto-frontier behavior", false, "cell missing");
    return;
  }
  const auto& trial = cell->trials.front();
  const bool traj_ok =
      trial.errors.e_x <= 0.03 && trial.errors.e_u <= 0.06;
  double worst = kInfinity;
  if (trial.identifications.size() == 1 &&
      trial.identifications.front().theta.size() == 2) {
    worst = 0.0;
    const auto& id = trial.identifications.front();
    for (int q = 0; q < 4; ++q) {
      const double a = id.theta[0][q];
      const double b = id.theta[1][q];
      worst = std::max(worst,
                       std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
    }
  }
  report(3, "CG trajectory reproduction + shared weights within 1%",
         traj_ok && worst <= 0.01,
         "e_x=" + fmt(trial.errors.e_x) + ", max shared-weight gap " +
             fmt(worst));
}

void criterion_4_gradient_hessian() {
  const Vector x1 = ball_on_beam_initial_state();
  std::mt19937_64 rng(404);
  std::normal_distribution<double> dist(0.0, 0.25);
  std::uniform_real_distribution<double> weight(0.2, 3.0);

  double worst_lq = 0.0, worst_nl = 0.0, worst_model = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    for (const bool linear : {true, false}) {
      const auto game = linear ? make_ball_on_beam_lq_game(12, 0.02)
                               : make_ball_on_beam_game(12, 0.02);
      std::vector<Matrix> controls;
      for (int i = 0; i < 2; ++i) {
        Matrix c(1, 12);
        for (int k = 0; k < 12; ++k) c(0, k) = dist(rng);
        controls.push_back(std::move(c));
      }
      const Trajectory traj = rollout(game, controls, x1);
      std::vector<Vector> theta(2);
      for (int i = 0; i < 2; ++i) {
        theta[i].resize(5);
        for (int q = 0; q < 5; ++q) theta[i][q] = weight(rng);
      }
      const CostScope scope = CostScope::single(draw % 2);
      const QuadraticCostExpansion expansion(game, traj, scope,
                                             JacobianVariant::kPlain);
      ControlProblem problem(game, theta, scope, x1, traj.controls);
      const Vector u0 = problem.pack(traj.controls);
      const Vector g = expansion.gradient(theta[draw % 2]);
      Vector fd(g.size());
      for (Eigen::Index j = 0; j < u0.size(); ++j) {
        Vector up = u0, um = u0;
        const double h = 1e-6 * (1.0 + std::abs(u0[j]));
        up[j] += h;
        um[j] -= h;
        fd[j] = (problem.value(up) - problem.value(um)) / (2.0 * h);
      }
      const double err = (g - fd).cwiseAbs().maxCoeff() /
                         (1.0 + fd.cwiseAbs().maxCoeff());
      (linear ? worst_lq : worst_nl) =
          std::max(linear ? worst_lq : worst_nl, err);

      if (linear) {
        // Quadratic model reproduces the exact cost for LQ games.
        Vector delta(u0.size());
        for (Eigen::Index j = 0; j < delta.size(); ++j) delta[j] = dist(rng);
        const double exact = problem.value(u0 + delta);
        const double model =
            expansion.model_value(theta[draw % 2], delta);
        worst_model = std::max(
            worst_model, std::abs(exact - model) / (1.0 + std::abs(exact)));
      }
    }
  }
  report(4, "analytic g vs finite differences; exact quadratic model on LQ",
         worst_lq <= 1e-6 && worst_nl <= 1e-4 && worst_model <= 1e-9,
         "LQ " + fmt(worst_lq) + " (<=1e-6), nonlinear " + fmt(worst_nl) +
             " (<=1e-4), model remainder " + fmt(worst_model) + " (<=1e-9)");
}

void criterion_5_normalization() {
  // Two-dimensional control space (k_E = 2, one channel); the Gaussian
  // surrogate is exact for the LQ game, so its density integrates to one.
  const double a = 0.85, b = 0.4;
  const auto game = scalar_lq_game(a, b, 2);
  Vector theta(2);
  theta << 1.2, 0.9;
  const double x1 = 1.0;
  const double u_star = -theta[0] * a * b * x1 / (theta[0] * b * b + theta[1]);
  Trajectory traj;
  traj.states.resize(1, 2);
  traj.states(0, 0) = x1;
  traj.states(0, 1) = a * x1 + b * u_star;
  Matrix u(1, 2);
  u << u_star, 0.0;
  traj.controls = {u};

  const QuadraticCostExpansion expansion(game, traj, CostScope::single(0),
                                         JacobianVariant::kPlain);
  const Vector g = expansion.gradient(theta);
  const Matrix big_g = expansion.hessian(theta);
  const auto base = gaussian_log_density(g, big_g);
  const Vector mean = expansion.stacked_controls() - big_g.ldlt().solve(g);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(big_g);
  const double half_width = 5.0 / std::sqrt(eig.eigenvalues().minCoeff());

  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> box(-half_width, half_width);
  double sum = 0.0;
  const int samples = 100000;
  for (int s = 0; s < samples / 2; ++s) {
    // Antithetic pair around the mean.
    Vector offset(2);
    offset << box(rng), box(rng);
    for (const double sign : {1.0, -1.0}) {
      const Vector delta = mean + sign * offset - expansion.stacked_controls();
      sum += std::exp(base.value - g.dot(delta) -
                      0.5 * delta.dot(big_g * delta));
    }
  }
  const double integral =
      sum / samples * (2.0 * half_width) * (2.0 * half_width);
  report(5, "Monte-Carlo normalization of the approximate density",
         std::abs(integral - 1.0) <= 0.02,
         "integral " + fmt(integral) + " (within 2% of 1)");
}

void criterion_6_feature_matching() {
  // Full-likelihood estimate on the LQ feedback case; matching of the free
  // features is the estimator's stationarity condition. The pinned weight
  // is the scale gauge and is excluded. A 5 s window is used: over longer
  // windows the player-2 likelihood becomes so flat near its maximizer that
  // line-search progress underflows below the 1e-8 gradient tolerance.
  const auto game = make_ball_on_beam_lq_game(251, 0.02);
  const auto theta_star = ball_on_beam_true_parameters().theta;
  const auto fb = solve_feedback_nash_lq(game, theta_star,
                                         ball_on_beam_initial_state(),
                                         FeedbackHorizon::kStationary);
  const auto demos = make_demonstration_set(game, {fb.trajectory});
  const auto laws = fb.laws();

  bool pass = true;
  std::ostringstream detail;
  for (int player = 0; player < 2; ++player) {
    MleConfig config;
    config.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
    config.objective = MleObjective::kLikelihood;
    const auto estimate = identify_feedback(demos, game, player, laws, config);
    if (!estimate.converged) {
      pass = false;
      detail << "p" << player + 1 << ": MLE not converged; ";
      continue;
    }
    const auto reduced = make_closed_loop_game(game, laws, player);
    const auto reduced_demos = make_demonstration_set(
        reduced, {restrict_to_player(fb.trajectory, player)});
    FeatureMatchingOptions options;
    options.samples = 10000;
    options.seed = 606 + player;
    options.fixed_scope_indices = {4};
    const auto matching =
        feature_matching_report(reduced, reduced_demos, estimate.theta[0],
                                CostScope::single(0), options);
    const double worst = matching.relative_mismatch.head(4).maxCoeff();
    pass &= worst <= 0.05;
    detail << "p" << player + 1 << " worst free-feature mismatch "
           << fmt(worst) << "; ";
  }
  report(6, "feature-expectation matching (LQ FB, free components <= 5%)",
         pass, detail.str());
}

void criterion_7_nash_certification(const ExperimentResults& results) {
  bool pass = true;
  std::ostringstream detail;
  const std::vector<Vector> theta = ball_on_beam_true_parameters().theta;
  for (const auto& concept_data : results.concepts) {
    if (concept_data.name == "cg") {
      const auto check = check_nash(concept_data.game,
                                    concept_data.demonstration, theta,
                                    EquilibriumConcept::kOpenLoop, 1e-6);
      double best_gain = 0.0;
      for (const auto& dev : check.players)
        best_gain = std::max(best_gain, dev.improvement);
      const bool ok = !check.certified && best_gain > 1e-4;
      pass &= ok;
      detail << "cg not an equilibrium (best deviation gain "
             << fmt(best_gain) << "); ";
      continue;
    }
    NashCheckReport check;
    if (concept_data.name == "fb") {
      std::vector<FeedbackLawPtr> laws;
      for (const auto& k : concept_data.true_gains)
        laws.push_back(std::make_shared<LinearStateFeedback>(k));
      check = check_nash(concept_data.game, concept_data.demonstration,
                         theta, EquilibriumConcept::kFeedback, 1e-6, &laws);
    } else {
      check = check_nash(concept_data.game, concept_data.demonstration,
                         theta, EquilibriumConcept::kOpenLoop, 1e-6);
    }
    double worst = 0.0;
    for (const auto& dev : check.players)
      worst = std::max(worst, dev.improvement /
                                  (1.0 + std::abs(dev.cost_observed)));
    pass &= check.certified;
    detail << concept_data.name << " certified (max relative gain "
           << fmt(worst) << "); ";
  }
  report(7, "Nash certification at 1e-6, cooperative solution rejected",
         pass, detail.str());
}

void criterion_8_gain_estimation(const ExperimentResults& results) {
  const ConceptData* fb = nullptr;
  for (const auto& c : results.concepts)
    if (c.name == "fb") fb = &c;
  if (!fb) {
    report(8, "feedback-gain estimation", false, "fb concept missing");
    return;
  }
  const auto demos = make_demonstration_set(fb->game, {fb->demonstration});
  const auto gains = estimate_feedback_gains(demos, fb->game);
  double worst = 0.0;
  for (int i = 0; i < 2; ++i)
    worst = std::max(worst, (gains[i] - fb->true_gains[i]).norm() /
                                fb->true_gains[i].norm());
  report(8, "noiseless gain estimation within 1e-6 of the Riccati gains",
         worst <= 1e-6, "max relative error " + fmt(worst));
}

void criterion_9_scale_degeneracy(const ExperimentResults& results) {
  // Released scale: the log-likelihood of an exact demonstration grows
  // strictly along theta -> c theta.
  const ConceptData* loln = nullptr;
  for (const auto& c : results.concepts)
    if (c.name == "loln") loln = &c;
  bool increasing = loln != nullptr;
  std::ostringstream detail;
  if (loln) {
    const auto demos =
        make_demonstration_set(loln->game, {loln->demonstration});
    const auto theta = ball_on_beam_true_parameters().theta;
    double previous = -kInfinity;
    for (const double c : {1.0, 2.0, 4.0, 8.0}) {
      const double value =
          log_likelihood(loln->game, demos, c * theta[0],
                         CostScope::single(0), JacobianVariant::kPlain)
              .value;
      increasing &= value > previous;
      previous = value;
    }
    detail << (increasing ? "lnL strictly increasing along c in {2,4,8}"
                          : "lnL not increasing");
  } else {
    detail << "loln concept missing";
  }

  // Pinned scale: every noiseless-cell estimator run converged to the
  // 1e-8 projected-gradient tolerance.
  bool converged = true;
  double worst_grad = 0.0;
  for (const auto& concept_data : results.concepts) {
    const auto* cell = results.cell(concept_data.name, kInfinity);
    if (!cell || cell->trials.empty() || !cell->trials.front().ok) {
      converged = false;
      continue;
    }
    for (const auto& id : cell->trials.front().identifications) {
      converged &= id.converged;
      worst_grad = std::max(worst_grad, id.grad_norm);
    }
  }
  detail << "; with pinned weights all optimizers converged, worst gradient "
         << fmt(worst_grad);
  report(9, "scale degeneracy released/pinned", increasing && converged,
         detail.str());
}

void criterion_10_noise_trend(const ExperimentResults& results) {
  bool pass = true;
  bool any = false;
  const auto checks = check_grid_against_reference(results);
  for (const auto& check : checks) {
    if (check.name.rfind("noise trend", 0) != 0) continue;
    any = true;
    pass &= check.passed;
    std::printf("    %s [%s]: %s\n", check.name.c_str(),
                check.passed ? "ok" : "FAILED", check.detail.c_str());
  }
  if (!any) pass = false;
  report(10, "median NMAE non-increasing in SNR, 30 dB within 5x", pass,
         any ? "per-concept details above" : "no noise cells in the run");
}

}  // namespace

int main() {
  const ExperimentResults results = shared_run();

  criterion_1_noiseless_recovery(results);
  criterion_2_noln_parameters(results);
  criterion_3_cg_pareto(results);
  criterion_4_gradient_hessian();
  criterion_5_normalization();
  criterion_6_feature_matching();
  criterion_7_nash_certification(results);
  criterion_8_gain_estimation(results);
  criterion_9_scale_degeneracy(results);
  criterion_10_noise_trend(results);

  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria failed\n", failures);
  return 1;
}
