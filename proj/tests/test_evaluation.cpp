#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "idg/evaluation.hpp"
#include "idg/experiment.hpp"
#include "idg/solvers.hpp"
#include "oracles.hpp"

using namespace idg;

TEST_CASE("infinite SNR leaves the trajectory untouched") {
  const auto game = make_ball_on_beam_game(20, 0.02);
  const auto traj =
      oracles::random_trajectory(game, ball_on_beam_initial_state(), 5);
  const auto noisy = add_noise(traj, {kInfinity, 7});
  CHECK((noisy.states - traj.states).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 2; ++i)
    CHECK((noisy.controls[i] - traj.controls[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the injected noise realizes the requested SNR") {
  // One long sinusoid channel, 1e5 samples, 20 dB.
  const int n = 100000;
  Trajectory traj;
  traj.states.resize(1, n);
  for (int k = 0; k < n; ++k) traj.states(0, k) = std::sin(0.01 * k);
  traj.controls = {Matrix::Ones(1, n)};
  const auto noisy = add_noise(traj, {20.0, 99});
  const double signal = traj.states.row(0).squaredNorm();
  const double noise = (noisy.states.row(0) - traj.states.row(0)).squaredNorm();
  const double snr_db = 10.0 * std::log10(signal / noise);
  CHECK(snr_db == doctest::Approx(20.0).epsilon(0.05));  // within ~1 dB

  SUBCASE("fixed seed reproduces the realization") {
    const auto again = add_noise(traj, {20.0, 99});
    CHECK((again.states - noisy.states).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("NMAE definition") {
  Trajectory ref, est;
  ref.states.resize(1, 2);
  ref.states << 2.0, 4.0;
  ref.controls = {Matrix::Ones(1, 2)};
  est.states.resize(1, 2);
  est.states << 1.0, 2.0;
  est.controls = {Matrix::Ones(1, 2)};
  const auto report = nmae(est, ref);
  CHECK(report.e_x == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(report.e_u == 0.0);

  SUBCASE("identical trajectories give zero everywhere") {
    const auto zero = nmae(ref, ref);
    CHECK(zero.e_x == 0.0);
    CHECK(zero.e_u == 0.0);
  }

  SUBCASE("scaling both trajectories leaves the error unchanged") {
    Trajectory ref_scaled = ref, est_scaled = est;
    ref_scaled.states *= -3.7;
    est_scaled.states *= -3.7;
    CHECK(nmae(est_scaled, ref_scaled).e_x ==
          doctest::Approx(report.e_x).epsilon(1e-14));
  }

  SUBCASE("zero reference channels are rejected by name") {
    Trajectory zero_ref = ref;
    zero_ref.controls[0].setZero();
    CHECK_THROWS_WITH_AS(nmae(est, zero_ref), doctest::Contains("u1_1"),
                         std::invalid_argument);
  }
}

TEST_CASE("feature matching at the feedback MLE") {
  // LQ feedback pipeline: the full-likelihood estimate satisfies the
  // matching condition for every free feature by stationarity; the pinned
  // weight's feature is the gauge and is not expected to match.
  const auto game = make_ball_on_beam_lq_game(251, 0.02);
  const auto theta_star = ball_on_beam_true_parameters().theta;
  const auto fb = solve_feedback_nash_lq(game, theta_star,
                                         ball_on_beam_initial_state(),
                                         FeedbackHorizon::kStationary);
  const auto demos = make_demonstration_set(game, {fb.trajectory});
  const auto laws = fb.laws();

  SUBCASE("closed-loop log-likelihood at the true weights, frozen") {
    const double expected[2] = {-52.5828444907, -136.246721231};
    for (int i = 0; i < 2; ++i) {
      const auto reduced_i = make_closed_loop_game(game, laws, i);
      const auto demos_i = make_demonstration_set(
          reduced_i, {restrict_to_player(fb.trajectory, i)});
      const auto value =
          log_likelihood(reduced_i, demos_i, theta_star[i],
                         CostScope::single(0), JacobianVariant::kPlain);
      REQUIRE(value.positive_definite);
      CHECK(value.value == doctest::Approx(expected[i]).epsilon(1e-8));
    }
  }

  const int player = 1;
  MleConfig config;
  config.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
  config.objective = MleObjective::kLikelihood;
  const auto estimate = identify_feedback(demos, game, player, laws, config);
  REQUIRE(estimate.converged);

  const auto reduced = make_closed_loop_game(game, laws, player);
  const auto reduced_demos = make_demonstration_set(
      reduced, {restrict_to_player(fb.trajectory, player)});
  FeatureMatchingOptions options;
  options.samples = 10000;
  options.seed = 31;
  options.fixed_scope_indices = {4};
  const auto report =
      feature_matching_report(reduced, reduced_demos, estimate.theta[0],
                              CostScope::single(0), options);
  for (int q = 0; q < 4; ++q) {
    INFO("feature ", q + 1, ": sampled ", report.sampled_mean[q],
         " reference ", report.reference[q]);
    CHECK(report.relative_mismatch[q] <= 0.05);
  }
  CHECK(report.fixed_component[4]);

  SUBCASE("mismatch shrinks with the sample count") {
    FeatureMatchingOptions small = options;
    small.samples = 1000;
    const auto coarse =
        feature_matching_report(reduced, reduced_demos, estimate.theta[0],
                                CostScope::single(0), small);
    double coarse_worst = 0.0, fine_worst = 0.0;
    for (int q = 0; q < 4; ++q) {
      coarse_worst = std::max(coarse_worst, coarse.relative_mismatch[q]);
      fine_worst = std::max(fine_worst, report.relative_mismatch[q]);
    }
    CHECK(fine_worst < coarse_worst);
  }

  SUBCASE("swapped players are visibly mismatched") {
    const auto wrong =
        feature_matching_report(reduced, reduced_demos, theta_star[0],
                                CostScope::single(0), options);
    CHECK(wrong.relative_mismatch.head(4).maxCoeff() > 0.05);
  }
}

TEST_CASE("experiment cells are deterministic and compose transparently") {
  ExperimentConfig config;
  config.concepts = {"loln"};
  config.horizon = 101;
  config.snr_db = {30.0, kInfinity};
  config.trials = 2;
  config.threads = 2;

  const auto first = run_experiment(config);
  const auto second = run_experiment(config);
  for (std::size_t s = 0; s < config.snr_db.size(); ++s) {
    REQUIRE(first.grid[0][s].trials.size() ==
            second.grid[0][s].trials.size());
    for (std::size_t t = 0; t < first.grid[0][s].trials.size(); ++t) {
      const auto& a = first.grid[0][s].trials[t];
      const auto& b = second.grid[0][s].trials[t];
      REQUIRE(a.ok);
      REQUIRE(b.ok);
      CHECK(a.errors.e_x == b.errors.e_x);  // bit-identical across runs
      CHECK(a.errors.e_u == b.errors.e_u);
      CHECK(a.seed == b.seed);
    }
  }

  SUBCASE("a single noise-free cell matches the standalone pipeline calls") {
    const auto& cell = first.grid[0].back().trials.front();
    REQUIRE(cell.ok);
    const auto game = make_ball_on_beam_lq_game(101, 0.02);
    const auto theta = ball_on_beam_true_parameters().theta;
    const auto [demo, r1] =
        solve_open_loop_nash_lq(game, theta, ball_on_beam_initial_state());
    const auto demos = make_demonstration_set(game, {demo});
    MleConfig mle;
    mle.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
    mle.variant = JacobianVariant::kPlain;
    mle.objective = MleObjective::kOptimalityResidual;
    std::vector<Vector> theta_hat(2);
    for (int i = 0; i < 2; ++i)
      theta_hat[i] = identify_open_loop(demos, game, i, mle).theta[0];
    const auto [reproduced, r2] =
        solve_open_loop_nash_lq(game, theta_hat, ball_on_beam_initial_state());
    const auto errors = nmae(reproduced, demo);
    CHECK(errors.e_x == doctest::Approx(cell.errors.e_x).epsilon(1e-12));
    CHECK(errors.e_u == doctest::Approx(cell.errors.e_u).epsilon(1e-12));
  }
}
