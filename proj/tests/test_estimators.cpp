#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "idg/estimators.hpp"
#include "idg/evaluation.hpp"
#include "idg/solvers.hpp"
#include "oracles.hpp"

using namespace idg;

namespace {

Trajectory add_noise_for_gain_test(const Trajectory& traj) {
  return add_noise(traj, {30.0, 1});
}

GameDefinition scalar_lq_game(double a, double b, int horizon,
                              int players = 1) {
  LinearGameMatrices lin;
  lin.a = Matrix::Constant(1, 1, 0.0);
  lin.a_d = Matrix::Constant(1, 1, a);
  lin.dt = 0.1;
  for (int i = 0; i < players; ++i) {
    lin.b.push_back(Matrix::Constant(1, 1, b));
    lin.b_d.push_back(Matrix::Constant(1, 1, b));
  }
  return make_linear_quadratic_game(lin, horizon);
}

Trajectory scalar_optimal_demo(double a, double b, double q, double r,
                               double x1) {
  const double u_star = -q * a * b * x1 / (q * b * b + r);
  Trajectory traj;
  traj.states.resize(1, 2);
  traj.states(0, 0) = x1;
  traj.states(0, 1) = a * x1 + b * u_star;
  Matrix u(1, 2);
  u << u_star, 0.0;
  traj.controls = {u};
  return traj;
}

}  // namespace

TEST_CASE("split inverts stack") {
  const auto game = make_ball_on_beam_game(5, 0.02);
  const auto theta = oracles::random_parameters(game, 3);
  const auto stacked = stack_global(theta);
  REQUIRE(stacked.theta.size() == 10);
  const auto split = split_parameters(stacked.theta, game);
  REQUIRE(split.size() == 2);
  for (int i = 0; i < 2; ++i) CHECK((split[i] - theta[i]).norm() == 0.0);
  CHECK_THROWS_AS(split_parameters(Vector::Zero(7), game),
                  std::invalid_argument);
}

TEST_CASE("scalar game MLE matches a closed-form grid oracle") {
  // One dynamic step, features {-x^2, -u^2}, control weight fixed at the
  // truth. The likelihood of the exact-optimum demonstration reduces to a
  // scalar function of the state weight, maximized here by grid refinement.
  const double a = 0.9, b = 0.25, q_true = 2.0, r_true = 0.5, x1 = 1.3;
  const auto game = scalar_lq_game(a, b, 2);
  const auto demo = scalar_optimal_demo(a, b, q_true, r_true, x1);
  const auto demos = make_demonstration_set(game, {demo});

  const double u_e = demo.controls[0](0, 0);
  auto log_density = [&](double q) {
    const double g1 = 2.0 * b * (a * x1 + b * u_e) * q + 2.0 * r_true * u_e;
    const double g11 = 2.0 * r_true + 2.0 * b * b * q;
    return -0.5 * g1 * g1 / g11 + 0.5 * std::log(g11) +
           0.5 * std::log(2.0 * r_true) - std::log(2.0 * M_PI);
  };
  double best_q = 0.0, best_value = -kInfinity;
  for (double q = 1e-3; q < 60.0; q += 1e-3) {
    const double v = log_density(q);
    if (v > best_value) {
      best_value = v;
      best_q = q;
    }
  }
  // Golden-section refinement around the best grid point.
  double lo = best_q - 2e-3, hi = best_q + 2e-3;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 80; ++it) {
    const double m1 = hi - phi * (hi - lo);
    const double m2 = lo + phi * (hi - lo);
    (log_density(m1) < log_density(m2) ? lo : hi) = (log_density(m1) <
                                                     log_density(m2))
                                                        ? m1
                                                        : m2;
  }
  const double q_oracle = 0.5 * (lo + hi);

  MleConfig config;
  config.fixed = {{0, 1, r_true}};
  config.variant = JacobianVariant::kPlain;
  const auto result = identify_open_loop(demos, game, 0, config);
  CHECK(result.converged);
  CHECK(result.grad_norm <= 1e-8);
  CHECK(result.theta[0][1] == r_true);
  CHECK(result.theta[0][0] == doctest::Approx(q_oracle).epsilon(1e-5));
  CHECK(result.log_likelihood ==
        doctest::Approx(log_density(q_oracle)).epsilon(1e-9));
}

TEST_CASE("likelihood is unbounded in scale only when nothing is pinned") {
  const double a = 0.9, b = 0.25, q_true = 2.0, r_true = 0.5, x1 = 1.3;
  const auto game = scalar_lq_game(a, b, 2);
  const auto demo = scalar_optimal_demo(a, b, q_true, r_true, x1);
  const auto demos = make_demonstration_set(game, {demo});
  Vector theta(2);
  theta << q_true, r_true;

  double previous = -kInfinity;
  for (const double c : {1.0, 2.0, 4.0, 8.0}) {
    const double value = log_likelihood(game, demos, c * theta,
                                        CostScope::single(0),
                                        JacobianVariant::kPlain)
                             .value;
    CHECK(value > previous);
    previous = value;
  }

  MleConfig config;
  config.fixed = {{0, 1, r_true}};
  config.variant = JacobianVariant::kPlain;
  const auto result = identify_open_loop(demos, game, 0, config);
  CHECK(result.converged);
  CHECK(result.grad_norm <= 1e-8);
}

TEST_CASE("identification is deterministic") {
  const auto game = make_ball_on_beam_lq_game(61, 0.02);
  const auto theta = ball_on_beam_true_parameters().theta;
  const auto [demo, report] =
      solve_open_loop_nash_lq(game, theta, ball_on_beam_initial_state());
  REQUIRE(report.converged);
  const auto demos = make_demonstration_set(game, {demo});
  MleConfig config;
  config.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
  const auto a = identify_open_loop(demos, game, 0, config);
  const auto b = identify_open_loop(demos, game, 0, config);
  REQUIRE(a.theta.size() == 1);
  CHECK((a.theta[0] - b.theta[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.log_likelihood == b.log_likelihood);
}

TEST_CASE("cooperative identification on a short LQ game") {
  const auto game = make_ball_on_beam_lq_game(81, 0.02);
  const auto theta = ball_on_beam_true_parameters().theta;
  const auto [demo, report] =
      solve_cooperative(game, theta, ball_on_beam_initial_state());
  REQUIRE(report.converged);
  const auto demos = make_demonstration_set(game, {demo});

  SUBCASE("demonstration mean feature counts, frozen") {
    Vector mu1(5), mu2(5);
    mu1 << -10.8327026796, -10.9416007441, -0.324082205896, -2.71988090618,
        -3.12141141094;
    mu2 << -10.8327026796, -10.9416007441, -0.324082205896, -2.71988090618,
        -12.4856456438;
    CHECK((demos.mean_feature_counts[0] - mu1).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((demos.mean_feature_counts[1] - mu2).cwiseAbs().maxCoeff() <= 1e-9);
  }

  MleConfig config;
  config.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
  config.variant = JacobianVariant::kPlain;
  config.objective = MleObjective::kOptimalityResidual;
  const auto result = identify_cooperative(demos, game, config);
  CHECK(result.converged);
  CHECK(result.grad_norm <= 1e-8);
  REQUIRE(result.theta.size() == 2);
  CHECK(result.theta[0][4] == 2.0);
  CHECK(result.theta[1][4] == 1.0);

  // The two players' weights on the shared state features stay equal: the
  // likelihood depends only on their sums and the optimizer starts from and
  // preserves the symmetric subspace.
  for (int c = 0; c < 4; ++c)
    CHECK(std::abs(result.theta[0][c] - result.theta[1][c]) <=
          0.01 * std::max(std::abs(result.theta[0][c]), 1e-6));

  // Trajectory-level recovery: re-solving at theta_hat reproduces the
  // demonstration closely.
  std::vector<Vector> theta_hat = {result.theta[0], result.theta[1]};
  const auto [reproduced, rep2] =
      solve_cooperative(game, theta_hat, ball_on_beam_initial_state());
  REQUIRE(rep2.converged);
  const double state_err =
      (reproduced.states - demo.states).cwiseAbs().maxCoeff() /
      demo.states.cwiseAbs().maxCoeff();
  CHECK(state_err <= 0.02);
}

TEST_CASE("feedback gain estimation") {
  const auto game = make_ball_on_beam_lq_game(251, 0.02);
  const auto theta = ball_on_beam_true_parameters().theta;
  const auto fb = solve_feedback_nash_lq(game, theta,
                                         ball_on_beam_initial_state(),
                                         FeedbackHorizon::kStationary);
  REQUIRE(fb.report.converged);
  const auto demos = make_demonstration_set(game, {fb.trajectory});

  SUBCASE("noiseless recovery is exact") {
    const auto gains = estimate_feedback_gains(demos, game);
    for (int i = 0; i < 2; ++i)
      CHECK((gains[i] - fb.stationary_gains[i]).norm() <=
            1e-6 * fb.stationary_gains[i].norm());
  }

  SUBCASE("estimation under 30 dB control and state noise stays close") {
    const auto noisy = add_noise_for_gain_test(fb.trajectory);
    const auto noisy_demos = make_demonstration_set(game, {noisy});
    const auto gains = estimate_feedback_gains(noisy_demos, game);
    for (int i = 0; i < 2; ++i)
      CHECK((gains[i] - fb.stationary_gains[i]).norm() <=
            0.08 * fb.stationary_gains[i].norm());
  }

  SUBCASE("zero controls give zero gains") {
    // Free-fall trajectory: states move, controls are zero.
    Trajectory free_fall = rollout(
        game, {Matrix::Zero(1, 251), Matrix::Zero(1, 251)},
        ball_on_beam_initial_state());
    const auto demos0 = make_demonstration_set(game, {free_fall});
    const auto gains = estimate_feedback_gains(demos0, game);
    for (int i = 0; i < 2; ++i) CHECK(gains[i].cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("rank-deficient states raise an error naming the deficiency") {
    LinearGameMatrices lin;
    lin.a_d = Matrix::Identity(4, 4);
    lin.b_d = {Matrix::Zero(4, 1), Matrix::Zero(4, 1)};
    lin.a = lin.a_d;
    lin.b = lin.b_d;
    lin.dt = 0.02;
    const auto frozen_game = make_linear_quadratic_game(lin, 20);
    const Trajectory frozen = rollout(
        frozen_game, {Matrix::Zero(1, 20), Matrix::Zero(1, 20)},
        ball_on_beam_initial_state());
    const auto demos1 = make_demonstration_set(frozen_game, {frozen});
    CHECK_THROWS_WITH_AS(estimate_feedback_gains(demos1, frozen_game),
                         doctest::Contains("deficient subspace dimension 3"),
                         std::runtime_error);
  }

  SUBCASE("identification with true and estimated gains agrees") {
    const auto estimated = estimate_feedback_gains(demos, game);
    std::vector<FeedbackLawPtr> laws_true = fb.laws();
    std::vector<FeedbackLawPtr> laws_est;
    for (const auto& k : estimated)
      laws_est.push_back(std::make_shared<LinearStateFeedback>(k));
    MleConfig config;
    config.fixed = {{0, 4, 2.0}, {1, 4, 1.0}};
    const auto with_true = identify_feedback(demos, game, 1, laws_true, config);
    const auto with_est = identify_feedback(demos, game, 1, laws_est, config);
    REQUIRE(with_true.converged);
    REQUIRE(with_est.converged);
    CHECK((with_true.theta[0] - with_est.theta[0]).cwiseAbs().maxCoeff() <=
          1e-5);
    CHECK(with_true.scope_tag == "FB-Nash");
    CHECK(with_true.fixed[0].player == 1);
  }
}

TEST_CASE("missing or duplicate fixed weights are rejected") {
  const auto game = make_ball_on_beam_lq_game(20, 0.02);
  const auto theta = ball_on_beam_true_parameters().theta;
  const auto [demo, report] =
      solve_open_loop_nash_lq(game, theta, ball_on_beam_initial_state());
  const auto demos = make_demonstration_set(game, {demo});
  MleConfig none;
  CHECK_THROWS_AS(identify_open_loop(demos, game, 0, none),
                  std::invalid_argument);
  MleConfig twice;
  twice.fixed = {{0, 4, 2.0}, {0, 3, 1.0}};
  CHECK_THROWS_AS(identify_open_loop(demos, game, 0, twice),
                  std::invalid_argument);
}

TEST_CASE("finite-difference gradient path agrees with the analytic one") {
  // Long enough that every weight is well conditioned; at very short
  // horizons the x3 direction is nearly unidentified and the two optimizers
  // may stop at different points of an almost-flat valley.
  const auto game = make_ball_on_beam_lq_game(121, 0.02);
  const auto theta = ball_on_beam_true_parameters().theta;
  const auto [demo, report] =
      solve_open_loop_nash_lq(game, theta, ball_on_beam_initial_state());
  REQUIRE(report.converged);
  const auto demos = make_demonstration_set(game, {demo});
  MleConfig config;
  config.fixed = {{1, 4, 1.0}};
  config.objective = MleObjective::kOptimalityResidual;
  const auto analytic = identify_open_loop(demos, game, 1, config);
  MleConfig fd = config;
  fd.finite_difference_gradient = true;
  fd.tol = 1e-6;  // the FD noise floor sits above the analytic tolerance
  const auto numeric = identify_open_loop(demos, game, 1, fd);
  REQUIRE(analytic.converged);
  REQUIRE(numeric.converged);
  CHECK((analytic.theta[0] - numeric.theta[0]).cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(std::abs(analytic.log_likelihood - numeric.log_likelihood) <= 1e-4);
}
