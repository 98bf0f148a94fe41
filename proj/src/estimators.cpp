#include "idg/estimators.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace idg {

namespace {

// Dense BFGS over the free coordinates of a scope parameter vector;
// maximizes the log-likelihood. Non-positive-definite iterates evaluate to
// -infinity and are rejected by the backtracking line search.
struct MleRun {
  Vector theta;
  bool converged = false;
  int iterations = 0;
  double grad_norm = kInfinity;
  double log_likelihood = -kInfinity;
};

MleRun maximize_likelihood(const ScopeLikelihood& likelihood,
                           const Vector& theta_init,
                           const std::vector<int>& free_indices,
                           const MleConfig& config) {
  const int nf = static_cast<int>(free_indices.size());
  const bool log_scale = config.positive_weights;

  Vector theta = theta_init;
  auto to_theta = [&](const Vector& z) {
    Vector full = theta;
    for (int j = 0; j < nf; ++j)
      full[free_indices[j]] = log_scale ? std::exp(z[j]) : z[j];
    return full;
  };
  const bool residual_only = config.objective == MleObjective::kOptimalityResidual;
  // Objective: -lnL (or the negated data-fit term) in the optimization
  // coordinates (log-weights when the positive-weights model class is
  // enforced). Non-positive-definite iterates evaluate to +infinity and are
  // backtracked over.
  auto value_only = [&](const Vector& z) -> double {
    const Vector full = to_theta(z);
    const LogDensityResult r =
        residual_only ? likelihood.residual(full) : likelihood.value(full);
    return r.positive_definite ? -r.value : kInfinity;
  };
  auto value_and_grad = [&](const Vector& z, Vector& grad_z) -> double {
    const Vector full = to_theta(z);
    grad_z.resize(nf);
    if (config.finite_difference_gradient) {
      const double f0 = value_only(z);
      if (!std::isfinite(f0)) return kInfinity;
      for (int j = 0; j < nf; ++j) {
        const double h = config.fd_step * (1.0 + std::abs(z[j]));
        Vector zp = z, zm = z;
        zp[j] += h;
        zm[j] -= h;
        const double fp = value_only(zp);
        const double fm = value_only(zm);
        if (!std::isfinite(fp) || !std::isfinite(fm)) return kInfinity;
        grad_z[j] = (fp - fm) / (2.0 * h);
      }
      return f0;
    }
    Vector grad_theta;
    const LogDensityResult r =
        residual_only ? likelihood.residual_and_gradient(full, grad_theta)
                      : likelihood.value_and_gradient(full, grad_theta);
    if (!r.positive_definite) return kInfinity;
    for (int j = 0; j < nf; ++j) {
      const double chain = log_scale ? full[free_indices[j]] : 1.0;
      grad_z[j] = -grad_theta[free_indices[j]] * chain;
    }
    return -r.value;
  };

  Vector z(nf);
  for (int j = 0; j < nf; ++j) {
    const double t0 = theta_init[free_indices[j]];
    if (log_scale && !(t0 > 0.0))
      throw std::invalid_argument(
          "positive-weights identification needs positive initial weights");
    z[j] = log_scale ? std::log(t0) : t0;
  }

  MleRun run;
  if (nf == 0) {
    run.theta = theta;
    run.converged = true;
    run.grad_norm = 0.0;
    run.log_likelihood = -value_only(z);
    return run;
  }

  Vector grad(nf);
  double f = value_and_grad(z, grad);
  if (!std::isfinite(f))
    throw std::runtime_error(
        "likelihood is not defined at the initial parameters (Hessian not "
        "positive definite)");

  Matrix h_inv = Matrix::Identity(nf, nf);
  Vector z_new(nf), grad_new(nf);
  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    run.grad_norm = grad.norm();
    if (run.grad_norm <= config.tol) {
      run.converged = true;
      break;
    }
    Vector direction = -(h_inv * grad);
    double gd = grad.dot(direction);
    if (!(gd < 0.0)) {
      h_inv.setIdentity();
      direction = -grad;
      gd = grad.dot(direction);
    }

    // Armijo backtracking on values only; the gradient is evaluated once at
    // the accepted point.
    double alpha = 1.0;
    double f_new = kInfinity;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      z_new = z + alpha * direction;
      f_new = value_only(z_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * gd) {
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
    f_new = value_and_grad(z_new, grad_new);

    const Vector s = z_new - z;
    const Vector y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (iter == 0) h_inv *= sy / y.squaredNorm();
      const Matrix eye = Matrix::Identity(nf, nf);
      const double rho = 1.0 / sy;
      h_inv = (eye - rho * s * y.transpose()) * h_inv *
                  (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    z = z_new;
    grad = grad_new;
    f = f_new;
  }

  run.iterations = iter;
  run.grad_norm = grad.norm();
  run.converged = run.grad_norm <= config.tol;
  run.theta = to_theta(z);
  // Always report the full log-likelihood at the estimate, whichever
  // objective drove the optimization.
  run.log_likelihood = likelihood.value(run.theta).value;
  return run;
}

FixedWeight fixed_weight_for(const MleConfig& config, int player,
                             const GameDefinition& game) {
  const FixedWeight* found = nullptr;
  for (const auto& fw : config.fixed) {
    if (fw.player != player) continue;
    if (found)
      throw std::invalid_argument("multiple fixed weights for player " +
                                  std::to_string(player + 1));
    found = &fw;
  }
  if (!found)
    throw std::invalid_argument("a fixed weight for player " +
                                std::to_string(player + 1) + " is required");
  if (found->index < 0 || found->index >= game.feature_dim(player))
    throw std::invalid_argument("fixed weight index out of range for player " +
                                std::to_string(player + 1));
  return *found;
}

}  // namespace

IdentificationResult identify_cooperative(const DemonstrationSet& demos,
                                          const GameDefinition& game,
                                          const MleConfig& config) {
  game.validate();
  const CostScope scope = CostScope::joint(game.player_count());
  const ScopeLikelihood likelihood(game, demos, scope, config.variant);

  const int total = game.stacked_parameter_dim();
  Vector theta0 = Vector::Constant(total, config.initial_weight);
  std::vector<bool> is_fixed(total, false);
  std::vector<FixedWeight> fixed_used;
  int offset = 0;
  for (int i = 0; i < game.player_count(); ++i) {
    const FixedWeight fw = fixed_weight_for(config, i, game);
    theta0[offset + fw.index] = fw.value;
    is_fixed[offset + fw.index] = true;
    fixed_used.push_back(fw);
    offset += game.feature_dim(i);
  }
  std::vector<int> free_indices;
  for (int j = 0; j < total; ++j)
    if (!is_fixed[j]) free_indices.push_back(j);

  const MleRun run = maximize_likelihood(likelihood, theta0, free_indices,
                                         config);

  IdentificationResult result;
  result.theta = split_parameters(run.theta, game);
  result.players.resize(game.player_count());
  for (int i = 0; i < game.player_count(); ++i) result.players[i] = i;
  result.fixed = fixed_used;
  result.scope_tag = "CG";
  result.converged = run.converged;
  result.iterations = run.iterations;
  result.grad_norm = run.grad_norm;
  result.log_likelihood = run.log_likelihood;
  result.variant = config.variant;
  return result;
}

namespace {

IdentificationResult identify_single_scope(const DemonstrationSet& demos,
                                           const GameDefinition& game,
                                           int player, const MleConfig& config,
                                           const FixedWeight& fw,
                                           const std::string& tag,
                                           int reported_player) {
  const CostScope scope = CostScope::single(player);
  const ScopeLikelihood likelihood(game, demos, scope, config.variant);

  Vector theta0 =
      Vector::Constant(game.feature_dim(player), config.initial_weight);
  theta0[fw.index] = fw.value;
  std::vector<int> free_indices;
  for (int j = 0; j < game.feature_dim(player); ++j)
    if (j != fw.index) free_indices.push_back(j);

  const MleRun run = maximize_likelihood(likelihood, theta0, free_indices,
                                         config);

  IdentificationResult result;
  result.theta = {run.theta};
  result.players = {reported_player};
  result.fixed = {fw};
  result.scope_tag = tag;
  result.converged = run.converged;
  result.iterations = run.iterations;
  result.grad_norm = run.grad_norm;
  result.log_likelihood = run.log_likelihood;
  result.variant = config.variant;
  return result;
}

}  // namespace

IdentificationResult identify_open_loop(const DemonstrationSet& demos,
                                        const GameDefinition& game, int player,
                                        const MleConfig& config) {
  game.validate();
  const FixedWeight fw = fixed_weight_for(config, player, game);
  return identify_single_scope(demos, game, player, config, fw, "OL-Nash",
                               player);
}

IdentificationResult identify_feedback(const DemonstrationSet& demos,
                                       const GameDefinition& game, int player,
                                       const std::vector<FeedbackLawPtr>& laws,
                                       const MleConfig& config) {
  game.validate();
  const FixedWeight fw = fixed_weight_for(config, player, game);

  const GameDefinition reduced = make_closed_loop_game(game, laws, player);
  std::vector<Trajectory> projected;
  projected.reserve(demos.trajectories.size());
  for (const auto& traj : demos.trajectories)
    projected.push_back(restrict_to_player(traj, player));
  const DemonstrationSet reduced_demos =
      make_demonstration_set(reduced, std::move(projected));

  MleConfig reduced_config = config;
  const FixedWeight reduced_fw{0, fw.index, fw.value};
  reduced_config.fixed = {reduced_fw};
  IdentificationResult result = identify_single_scope(
      reduced_demos, reduced, 0, reduced_config, reduced_fw, "FB-Nash", player);
  result.fixed = {fw};
  return result;
}

std::vector<Vector> split_parameters(const Vector& theta_sigma,
                                     const GameDefinition& game) {
  if (theta_sigma.size() != game.stacked_parameter_dim())
    throw std::invalid_argument(
        "stacked parameter vector has length " +
        std::to_string(theta_sigma.size()) + ", expected " +
        std::to_string(game.stacked_parameter_dim()));
  std::vector<Vector> theta;
  int offset = 0;
  for (int i = 0; i < game.player_count(); ++i) {
    theta.push_back(theta_sigma.segment(offset, game.feature_dim(i)));
    offset += game.feature_dim(i);
  }
  return theta;
}

std::vector<Matrix> estimate_feedback_gains(const DemonstrationSet& demos,
                                            const GameDefinition& game) {
  game.validate();
  if (demos.trajectories.empty())
    throw std::invalid_argument("demonstration set must not be empty");
  const int n = game.state_dim();
  int rows = 0;
  for (const auto& traj : demos.trajectories) {
    traj.validate_dims(game);
    rows += traj.horizon();
  }

  Matrix x(rows, n);
  int r = 0;
  for (const auto& traj : demos.trajectories)
    for (int k = 0; k < traj.horizon(); ++k)
      x.row(r++) = traj.states.col(k).transpose();

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < n)
    throw std::runtime_error(
        "feedback gain estimation: observed states span only " +
        std::to_string(qr.rank()) + " of " + std::to_string(n) +
        " state dimensions (deficient subspace dimension " +
        std::to_string(n - qr.rank()) + ")");

  std::vector<Matrix> gains;
  for (int i = 0; i < game.player_count(); ++i) {
    Matrix u(rows, game.control_dims[i]);
    r = 0;
    for (const auto& traj : demos.trajectories)
      for (int k = 0; k < traj.horizon(); ++k)
        u.row(r++) = traj.controls[i].col(k).transpose();
    gains.push_back(qr.solve(u).transpose());
  }
  return gains;
}

}  // namespace idg
