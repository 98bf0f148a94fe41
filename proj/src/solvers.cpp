#include "idg/solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>

namespace idg {

namespace {

// Limited-memory BFGS with a strong-Wolfe line search. `eval` returns the
// objective and fills the gradient.
struct LbfgsResult {
  bool converged = false;
  int iterations = 0;
  double value = 0.0;
  double grad_norm = kInfinity;
};

LbfgsResult lbfgs_minimize(
    Vector& x, const std::function<double(const Vector&, Vector&)>& eval,
    double tol, int max_iterations, int memory) {
  const double c1 = 1e-4, c2 = 0.4;
  LbfgsResult result;

  Vector g(x.size());
  double f = eval(x, g);
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  Vector d(x.size()), g_new(x.size()), x_new(x.size());
  for (int iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter;
    result.value = f;
    result.grad_norm = g.norm();
    if (result.grad_norm <= tol) {
      result.converged = true;
      return result;
    }

    // Two-loop recursion.
    d = -g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      d *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }

    double g0d = g.dot(d);
    if (!(g0d < 0.0)) {  // not a descent direction; reset
      d = -g;
      g0d = g.dot(d);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Strong-Wolfe search (bracket + zoom).
    double step = 1.0;
    double step_lo = 0.0, f_lo = f, glo_d = g0d;
    double step_hi = -1.0, f_hi = 0.0;
    double f_prev = f, step_prev = 0.0;
    bool accepted = false;
    double f_trial = f;
    for (int ls = 0; ls < 30 && !accepted; ++ls) {
      x_new = x + step * d;
      f_trial = eval(x_new, g_new);
      const double gd = g_new.dot(d);
      if (f_trial > f + c1 * step * g0d || (ls > 0 && f_trial >= f_prev)) {
        step_lo = step_prev;
        f_lo = f_prev;
        step_hi = step;
        f_hi = f_trial;
        break;
      }
      if (std::abs(gd) <= -c2 * g0d) {
        accepted = true;
        break;
      }
      if (gd >= 0.0) {
        step_lo = step;
        f_lo = f_trial;
        step_hi = step_prev;
        f_hi = f_prev;
        break;
      }
      step_prev = step;
      f_prev = f_trial;
      step *= 2.5;
    }
    if (!accepted && step_hi >= 0.0) {
      (void)glo_d;
      (void)f_hi;
      for (int z = 0; z < 40 && !accepted; ++z) {
        step = 0.5 * (step_lo + step_hi);
        x_new = x + step * d;
        f_trial = eval(x_new, g_new);
        const double gd = g_new.dot(d);
        if (f_trial > f + c1 * step * g0d || f_trial >= f_lo) {
          step_hi = step;
        } else {
          if (std::abs(gd) <= -c2 * g0d) {
            accepted = true;
            break;
          }
          if (gd * (step_hi - step_lo) >= 0.0) step_hi = step_lo;
          step_lo = step;
          f_lo = f_trial;
        }
        if (std::abs(step_hi - step_lo) < 1e-16 * (1.0 + step_lo)) break;
      }
    }
    if (!accepted) {
      // Line search failed to satisfy Wolfe; take the best point found if it
      // still decreases, otherwise give up.
      if (!(f_trial < f)) return result;
    }

    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    f = f_trial;
    g = g_new;
  }
  result.value = f;
  result.grad_norm = g.norm();
  result.converged = result.grad_norm <= tol;
  return result;
}

}  // namespace

ControlProblem::ControlProblem(const GameDefinition& game,
                               std::vector<Vector> theta, CostScope scope,
                               Vector x1, std::vector<Matrix> fixed_controls)
    : game_(&game),
      theta_(std::move(theta)),
      scope_(std::move(scope)),
      x1_(std::move(x1)),
      fixed_controls_(std::move(fixed_controls)) {
  if (static_cast<int>(fixed_controls_.size()) != game.player_count())
    throw std::invalid_argument("fixed controls: one block per player");
  scope_offset_.resize(scope_.control_players.size());
  dim_ = 0;
  for (std::size_t sp = 0; sp < scope_.control_players.size(); ++sp) {
    scope_offset_[sp] = dim_;
    dim_ += game.control_dims[scope_.control_players[sp]] * game.horizon;
  }
  theta_scope_ = scope_parameters(scope_, theta_);
}

Vector ControlProblem::pack(const std::vector<Matrix>& controls) const {
  Vector u(dim_);
  for (std::size_t sp = 0; sp < scope_.control_players.size(); ++sp) {
    const int p = scope_.control_players[sp];
    const int m_p = game_->control_dims[p];
    for (int k = 0; k < game_->horizon; ++k)
      u.segment(scope_offset_[sp] + k * m_p, m_p) = controls[p].col(k);
  }
  return u;
}

std::vector<Matrix> ControlProblem::unpack(const Vector& u_scope) const {
  std::vector<Matrix> controls = fixed_controls_;
  for (std::size_t sp = 0; sp < scope_.control_players.size(); ++sp) {
    const int p = scope_.control_players[sp];
    const int m_p = game_->control_dims[p];
    for (int k = 0; k < game_->horizon; ++k)
      controls[p].col(k) = u_scope.segment(scope_offset_[sp] + k * m_p, m_p);
  }
  return controls;
}

Trajectory ControlProblem::rollout_controls(const Vector& u_scope) const {
  return rollout(*game_, unpack(u_scope), x1_);
}

void ControlProblem::stage_cost(int, const Vector& x, const Vector& u,
                                double& value, Vector* cx, Vector* cu) const {
  FeatureDerivatives d;
  if (cx) cx->setZero(game_->state_dim());
  if (cu) cu->setZero(game_->joint_control_dim());
  for (int i : scope_.cost_players) {
    const auto& feats = game_->features[i];
    for (std::size_t q = 0; q < feats.size(); ++q) {
      const double w = theta_[i][q];
      value -= w * feats[q]->value(x, u);
      if (cx || cu) {
        feats[q]->derivatives(x, u, d);
        if (cx) *cx -= w * d.dx;
        if (cu) *cu -= w * d.du;
      }
    }
  }
}

double ControlProblem::value(const Vector& u_scope) const {
  Trajectory traj;
  try {
    traj = rollout_controls(u_scope);
  } catch (const std::runtime_error&) {
    return kInfinity;  // diverged rollout: reject the candidate controls
  }
  double total = 0.0;
  for (int k = 0; k < game_->horizon; ++k)
    stage_cost(k, traj.states.col(k), traj.joint_controls(k), total, nullptr,
               nullptr);
  return std::isfinite(total) ? total : kInfinity;
}

double ControlProblem::value_and_gradient(const Vector& u_scope,
                                          Vector& grad) const {
  Trajectory traj;
  try {
    traj = rollout_controls(u_scope);
  } catch (const std::runtime_error&) {
    grad.setZero(dim_);
    return kInfinity;
  }
  const int k_e = game_->horizon;
  const int n = game_->state_dim();

  double total = 0.0;
  std::vector<Vector> cx(k_e), cu(k_e);
  for (int k = 0; k < k_e; ++k)
    stage_cost(k, traj.states.col(k), traj.joint_controls(k), total, &cx[k],
               &cu[k]);

  grad.setZero(dim_);
  auto scatter_control_grad = [&](int k, const Vector& cu_full) {
    for (std::size_t sp = 0; sp < scope_.control_players.size(); ++sp) {
      const int p = scope_.control_players[sp];
      const int m_p = game_->control_dims[p];
      grad.segment(scope_offset_[sp] + k * m_p, m_p) +=
          cu_full.segment(game_->control_offset(p), m_p);
    }
  };

  // Backward adjoint sweep: lambda_k = cx_k + A_k' lambda_{k+1}.
  Vector lambda = cx[k_e - 1];
  scatter_control_grad(k_e - 1, cu[k_e - 1]);
  Matrix a(n, n), b(n, game_->joint_control_dim());
  for (int k = k_e - 2; k >= 0; --k) {
    game_->dynamics->step_jacobians(k, traj.states.col(k),
                                    traj.joint_controls(k), a, b);
    Vector cu_total = cu[k];
    cu_total.noalias() += b.transpose() * lambda;
    scatter_control_grad(k, cu_total);
    lambda = cx[k] + a.transpose() * lambda;
  }
  if (!std::isfinite(total) || !grad.allFinite()) {
    grad.setZero(dim_);
    return kInfinity;
  }
  return total;
}

namespace {

// Gauss-Newton polish on the stationarity system of a scoped control
// problem. Returns the final gradient norm.
double gauss_newton_polish(const ControlProblem& problem, Vector& u,
                           double tol, int max_steps) {
  Vector grad(problem.dim());
  double f = problem.value_and_gradient(u, grad);
  for (int it = 0; it < max_steps; ++it) {
    if (grad.norm() <= tol) break;
    const Trajectory traj = problem.rollout_controls(u);
    QuadraticCostExpansion expansion(problem.game(), traj, problem.scope(),
                                     JacobianVariant::kPlain);
    const Matrix h = expansion.hessian(problem.theta_scope());
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) break;
    const Vector step = -llt.solve(grad);
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vector u_try = u + alpha * step;
      Vector g_try(problem.dim());
      const double f_try = problem.value_and_gradient(u_try, g_try);
      if (f_try <= f + 1e-4 * alpha * grad.dot(step) ||
          g_try.norm() < grad.norm()) {
        u = std::move(u_try);
        f = f_try;
        grad = std::move(g_try);
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
  }
  return grad.norm();
}

std::vector<Matrix> zero_controls(const GameDefinition& game) {
  std::vector<Matrix> controls;
  for (int i = 0; i < game.player_count(); ++i)
    controls.push_back(Matrix::Zero(game.control_dims[i], game.horizon));
  return controls;
}

void check_theta(const GameDefinition& game, const std::vector<Vector>& theta) {
  if (static_cast<int>(theta.size()) != game.player_count())
    throw std::invalid_argument("one parameter vector per player required");
  for (int i = 0; i < game.player_count(); ++i)
    if (theta[i].size() != game.feature_dim(i))
      throw std::invalid_argument("parameter length mismatch for player " +
                                  std::to_string(i + 1));
}

}  // namespace

std::pair<Trajectory, SolverReport> solve_cooperative(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1, const SolverOptions& opts,
    const std::vector<Matrix>* warm_start) {
  game.validate();
  check_theta(game, theta);
  ControlProblem problem(game, theta, CostScope::joint(game.player_count()), x1,
                         zero_controls(game));
  Vector u = warm_start ? problem.pack(*warm_start)
                        : Vector::Zero(problem.dim());

  auto eval = [&](const Vector& v, Vector& g) {
    return problem.value_and_gradient(v, g);
  };
  const LbfgsResult lb = lbfgs_minimize(u, eval, 1e2 * opts.tol_opt,
                                        opts.max_iterations, opts.lbfgs_memory);
  const double res = gauss_newton_polish(problem, u, opts.tol_opt, 20);

  SolverReport report;
  report.iterations = lb.iterations;
  report.residual = res;
  report.objective = problem.value(u);
  report.converged = res <= opts.tol_opt;
  if (!report.converged)
    report.message = "gradient norm " + std::to_string(res) +
                     " above tolerance after quasi-Newton and polish";
  return {problem.rollout_controls(u), report};
}

std::pair<Trajectory, SolverReport> solve_open_loop_nash(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1, const SolverOptions& opts,
    const std::vector<Matrix>* warm_start) {
  game.validate();
  check_theta(game, theta);
  const int n_players = game.player_count();

  std::vector<Matrix> controls;
  if (warm_start) {
    controls = *warm_start;
  } else {
    controls = solve_cooperative(game, theta, x1, opts).first.controls;
  }

  // Per-player best-response problems (own cost over own controls, others
  // fixed per sweep) are rebuilt each sweep because the fixed blocks change.
  SolverReport report;
  Vector residual;
  const int joint_dim = [&] {
    int d = 0;
    for (int i = 0; i < n_players; ++i)
      d += game.control_dims[i] * game.horizon;
    return d;
  }();

  auto stacked_residual = [&](const std::vector<Matrix>& ctrl, Vector& out) {
    out.resize(joint_dim);
    int off = 0;
    for (int i = 0; i < n_players; ++i) {
      ControlProblem own(game, theta, CostScope::single(i), x1, ctrl);
      Vector gi(own.dim());
      own.value_and_gradient(own.pack(ctrl), gi);
      out.segment(off, own.dim()) = gi;
      off += own.dim();
    }
  };

  stacked_residual(controls, residual);
  double res_norm = residual.norm();
  int iter = 0;
  for (; iter < opts.max_outer && res_norm > opts.tol_opt; ++iter) {
    // One block Gauss-Seidel sweep of best responses.
    for (int i = 0; i < n_players; ++i) {
      ControlProblem own(game, theta, CostScope::single(i), x1, controls);
      Vector ui = own.pack(controls);
      auto eval = [&](const Vector& v, Vector& g) {
        return own.value_and_gradient(v, g);
      };
      lbfgs_minimize(ui, eval, 1e2 * opts.tol_opt, opts.max_iterations,
                     opts.lbfgs_memory);
      gauss_newton_polish(own, ui, opts.tol_opt, 8);
      controls = own.unpack(ui);
    }
    stacked_residual(controls, residual);
    res_norm = residual.norm();
    if (res_norm <= opts.tol_opt) break;

    // Newton step on the stacked stationarity system. Row block i is the
    // Gauss-Newton Jacobian of player i's gradient with respect to all
    // players' controls.
    const Trajectory traj = rollout(game, controls, x1);
    Matrix newton(joint_dim, joint_dim);
    int row = 0;
    std::vector<int> block_offset(n_players), block_size(n_players);
    {
      int off = 0;
      for (int i = 0; i < n_players; ++i) {
        block_offset[i] = off;
        block_size[i] = game.control_dims[i] * game.horizon;
        off += block_size[i];
      }
    }
    for (int i = 0; i < n_players; ++i) {
      QuadraticCostExpansion expansion(
          game, traj, CostScope::cost_of_over_all(i, n_players),
          JacobianVariant::kPlain);
      const Matrix hi = expansion.hessian(theta[i]);
      newton.middleRows(row, block_size[i]) =
          hi.middleRows(block_offset[i], block_size[i]);
      row += block_size[i];
    }
    Eigen::PartialPivLU<Matrix> lu(newton);
    const Vector step = lu.solve(-residual);
    if (!step.allFinite()) continue;

    // Backtrack on the residual norm.
    ControlProblem layout(game, theta, CostScope::joint(n_players), x1,
                          zero_controls(game));
    const Vector u0 = layout.pack(controls);
    double alpha = 1.0;
    for (int ls = 0; ls < 25; ++ls) {
      std::vector<Matrix> trial = layout.unpack(u0 + alpha * step);
      Vector r_try;
      stacked_residual(trial, r_try);
      if (r_try.norm() < (1.0 - 1e-4 * alpha) * res_norm) {
        controls = std::move(trial);
        residual = std::move(r_try);
        res_norm = residual.norm();
        break;
      }
      alpha *= 0.5;
    }
  }

  report.iterations = iter;
  report.residual = res_norm;
  report.converged = res_norm <= opts.tol_opt;
  if (!report.converged)
    report.message = "stacked stationarity norm " + std::to_string(res_norm) +
                     " above tolerance";
  Trajectory traj = rollout(game, controls, x1);
  StackedParameters stacked = stack_global(theta);
  report.objective = global_cost(game, traj, stacked);
  return {traj, report};
}

LqCosts quadratic_costs_from_features(const GameDefinition& game,
                                      const std::vector<Vector>& theta) {
  check_theta(game, theta);
  const int n = game.state_dim();
  LqCosts costs;
  for (int i = 0; i < game.player_count(); ++i) {
    Matrix q = Matrix::Zero(n, n);
    Matrix r = Matrix::Zero(game.control_dims[i], game.control_dims[i]);
    const int own_offset = game.control_offset(i);
    for (int j = 0; j < game.feature_dim(i); ++j) {
      const Feature* f = game.features[i][j].get();
      if (const auto* fs = dynamic_cast<const NegatedSquaredState*>(f)) {
        q(fs->channel(), fs->channel()) += theta[i][j];
      } else if (const auto* fc =
                     dynamic_cast<const NegatedSquaredControl*>(f)) {
        const int idx = fc->joint_index() - own_offset;
        if (idx < 0 || idx >= game.control_dims[i])
          throw std::invalid_argument(
              "LQ solvers require own-control quadratic features (player " +
              std::to_string(i + 1) + ", feature " + std::to_string(j + 1) +
              ")");
        r(idx, idx) += theta[i][j];
      } else {
        throw std::invalid_argument(
            "LQ solvers require negated-square features (player " +
            std::to_string(i + 1) + ", feature " + std::to_string(j + 1) +
            ")");
      }
    }
    costs.q.push_back(std::move(q));
    costs.r.push_back(std::move(r));
  }
  return costs;
}

const LinearDiscreteDynamics& linear_dynamics_of(const GameDefinition& game) {
  const auto* lin =
      dynamic_cast<const LinearDiscreteDynamics*>(game.dynamics.get());
  if (!lin)
    throw std::invalid_argument(
        "this operation requires linear discrete dynamics");
  return *lin;
}

std::pair<Trajectory, SolverReport> solve_open_loop_nash_lq(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1) {
  game.validate();
  const auto& lin = linear_dynamics_of(game);
  const LqCosts costs = quadratic_costs_from_features(game, theta);
  const int n = game.state_dim();
  const int n_players = game.player_count();
  const int k_e = game.horizon;
  const Matrix& a = lin.a_d();

  std::vector<Matrix> b(n_players), s(n_players), r_inv_bt(n_players);
  for (int i = 0; i < n_players; ++i) {
    b[i] = lin.b_d().middleCols(game.control_offset(i), game.control_dims[i]);
    Eigen::LLT<Matrix> llt_r(costs.r[i]);
    if (llt_r.info() != Eigen::Success)
      throw std::runtime_error("own-control weight of player " +
                               std::to_string(i + 1) +
                               " must be positive definite");
    r_inv_bt[i] = llt_r.solve(b[i].transpose());
    s[i] = b[i] * r_inv_bt[i];
  }

  // Backward coupled recursion; m[i] holds M_i^(k+1) entering step k.
  std::vector<Matrix> m(n_players);
  for (int i = 0; i < n_players; ++i) m[i] = costs.q[i];
  std::vector<Matrix> phi(k_e - 1);           // x^(k+1) = phi_k x^(k)
  std::vector<std::vector<Matrix>> gain(k_e - 1,
                                        std::vector<Matrix>(n_players));
  for (int k = k_e - 2; k >= 0; --k) {
    Matrix lambda = Matrix::Identity(n, n);
    for (int i = 0; i < n_players; ++i) lambda += s[i] * m[i];
    Eigen::PartialPivLU<Matrix> lu(lambda);
    const Matrix lambda_inv_a = lu.solve(a);
    if (!lambda_inv_a.allFinite() ||
        std::abs(lu.determinant()) < 1e-300)
      throw std::runtime_error(
          "singular open-loop Nash recursion at step k=" +
          std::to_string(k + 1));
    phi[k] = lambda_inv_a;
    for (int i = 0; i < n_players; ++i)
      gain[k][i] = -r_inv_bt[i] * m[i] * phi[k];
    for (int i = 0; i < n_players; ++i)
      m[i] = costs.q[i] + a.transpose() * m[i] * phi[k];
  }

  Trajectory traj;
  traj.states.resize(n, k_e);
  traj.states.col(0) = x1;
  for (int i = 0; i < n_players; ++i)
    traj.controls.push_back(Matrix::Zero(game.control_dims[i], k_e));
  for (int k = 0; k + 1 < k_e; ++k) {
    for (int i = 0; i < n_players; ++i)
      traj.controls[i].col(k) = gain[k][i] * traj.states.col(k);
    traj.states.col(k + 1) =
        game.dynamics->step(k, traj.states.col(k), traj.joint_controls(k));
  }

  SolverReport report;
  report.converged = true;
  report.iterations = k_e - 1;
  report.residual = 0.0;
  report.objective = global_cost(game, traj, stack_global(theta));
  return {traj, report};
}

std::vector<FeedbackLawPtr> FeedbackNashResult::laws() const {
  std::vector<FeedbackLawPtr> out;
  for (const auto& k : stationary_gains)
    out.push_back(std::make_shared<LinearStateFeedback>(k));
  return out;
}

FeedbackNashResult solve_feedback_nash_lq(const GameDefinition& game,
                                          const std::vector<Vector>& theta,
                                          const Vector& x1,
                                          FeedbackHorizon mode) {
  game.validate();
  const auto& lin = linear_dynamics_of(game);
  const LqCosts costs = quadratic_costs_from_features(game, theta);
  const int n = game.state_dim();
  const int n_players = game.player_count();
  const int k_e = game.horizon;
  const Matrix& a = lin.a_d();
  const int m_total = game.joint_control_dim();

  std::vector<Matrix> b(n_players);
  for (int i = 0; i < n_players; ++i)
    b[i] = lin.b_d().middleCols(game.control_offset(i), game.control_dims[i]);

  std::vector<Matrix> p(n_players);
  for (int i = 0; i < n_players; ++i) p[i] = costs.q[i];

  // One backward Riccati step: solves the stacked first-order conditions
  // for the per-player gains, then propagates the value matrices.
  auto backward_step = [&](std::vector<Matrix>& value,
                           std::vector<Matrix>& gains) {
    Matrix system = Matrix::Zero(m_total, m_total);
    Matrix rhs = Matrix::Zero(m_total, n);
    for (int i = 0; i < n_players; ++i) {
      const int oi = game.control_offset(i);
      const int mi = game.control_dims[i];
      const Matrix bt_p = b[i].transpose() * value[i];
      for (int j = 0; j < n_players; ++j) {
        const int oj = game.control_offset(j);
        const int mj = game.control_dims[j];
        system.block(oi, oj, mi, mj) = bt_p * b[j];
        if (i == j) system.block(oi, oj, mi, mj) += costs.r[i];
      }
      rhs.middleRows(oi, mi) = -bt_p * a;
    }
    const Matrix stacked_gain = system.partialPivLu().solve(rhs);
    if (!stacked_gain.allFinite())
      throw std::runtime_error("singular coupled Riccati gain system");
    gains.resize(n_players);
    Matrix a_cl = a;
    for (int i = 0; i < n_players; ++i) {
      gains[i] =
          stacked_gain.middleRows(game.control_offset(i), game.control_dims[i]);
      a_cl += b[i] * gains[i];
    }
    for (int i = 0; i < n_players; ++i) {
      value[i] = costs.q[i] + gains[i].transpose() * costs.r[i] * gains[i] +
                 a_cl.transpose() * value[i] * a_cl;
      value[i] = 0.5 * (value[i] + value[i].transpose()).eval();
    }
  };

  FeedbackNashResult result;
  if (mode == FeedbackHorizon::kStationary) {
    std::vector<Matrix> gains, prev_gains;
    double change = kInfinity;
    int sweep = 0;
    std::string history;
    for (; sweep < 10000; ++sweep) {
      backward_step(p, gains);
      if (!prev_gains.empty()) {
        change = 0.0;
        for (int i = 0; i < n_players; ++i)
          change = std::max(change,
                            (gains[i] - prev_gains[i]).cwiseAbs().maxCoeff());
        if (change <= 1e-10) break;
      }
      prev_gains = gains;
      if (sweep % 1000 == 999)
        history += " " + std::to_string(change);
    }
    if (change > 1e-10)
      throw std::runtime_error(
          "stationary coupled Riccati iteration did not converge; gain "
          "change per 1000 sweeps:" + history);
    result.stationary_gains = gains;
    result.report.iterations = sweep + 1;
    result.report.residual = change;
    result.report.converged = true;

    Matrix a_cl = a;
    for (int i = 0; i < n_players; ++i) a_cl += b[i] * gains[i];
    result.closed_loop_spectral_radius =
        a_cl.eigenvalues().cwiseAbs().maxCoeff();
    if (result.closed_loop_spectral_radius >= 1.0)
      throw std::runtime_error("stationary feedback Nash solution is not "
                               "stabilizing (spectral radius " +
                               std::to_string(
                                   result.closed_loop_spectral_radius) + ")");

    // The stationary law u_i = K_i x is applied at every observed step.
    Trajectory traj;
    traj.states.resize(n, k_e);
    traj.states.col(0) = x1;
    for (int i = 0; i < n_players; ++i)
      traj.controls.push_back(Matrix::Zero(game.control_dims[i], k_e));
    for (int k = 0; k < k_e; ++k) {
      for (int i = 0; i < n_players; ++i)
        traj.controls[i].col(k) = gains[i] * traj.states.col(k);
      if (k + 1 < k_e)
        traj.states.col(k + 1) =
            game.dynamics->step(k, traj.states.col(k), traj.joint_controls(k));
    }
    result.trajectory = std::move(traj);
  } else {
    result.per_step_gains.resize(k_e - 1);
    for (int k = k_e - 2; k >= 0; --k)
      backward_step(p, result.per_step_gains[k]);
    result.report.converged = true;
    result.report.iterations = k_e - 1;
    result.report.residual = 0.0;

    Trajectory traj;
    traj.states.resize(n, k_e);
    traj.states.col(0) = x1;
    for (int i = 0; i < n_players; ++i)
      traj.controls.push_back(Matrix::Zero(game.control_dims[i], k_e));
    for (int k = 0; k + 1 < k_e; ++k) {
      for (int i = 0; i < n_players; ++i)
        traj.controls[i].col(k) =
            result.per_step_gains[k][i] * traj.states.col(k);
      traj.states.col(k + 1) =
          game.dynamics->step(k, traj.states.col(k), traj.joint_controls(k));
    }
    result.trajectory = std::move(traj);
  }
  result.report.objective = global_cost(game, result.trajectory,
                                        stack_global(theta));
  return result;
}

NashCheckReport check_nash(const GameDefinition& game, const Trajectory& traj,
                           const std::vector<Vector>& theta,
                           EquilibriumConcept pattern, double tol,
                           const std::vector<FeedbackLawPtr>* laws,
                           const SolverOptions& opts) {
  game.validate();
  check_theta(game, theta);
  traj.validate_dims(game);

  NashCheckReport report;
  report.tol = tol;
  report.certified = true;

  for (int i = 0; i < game.player_count(); ++i) {
    PlayerDeviation dev;
    if (pattern == EquilibriumConcept::kOpenLoop) {
      ControlProblem own(game, theta, CostScope::single(i),
                         traj.initial_state(), traj.controls);
      Vector ui = own.pack(traj.controls);
      dev.cost_observed = own.value(ui);
      auto eval = [&](const Vector& v, Vector& g) {
        return own.value_and_gradient(v, g);
      };
      const LbfgsResult lb = lbfgs_minimize(ui, eval, 1e2 * opts.tol_opt,
                                            opts.max_iterations,
                                            opts.lbfgs_memory);
      const double res = gauss_newton_polish(own, ui, opts.tol_opt, 10);
      dev.inner_converged = lb.converged || res <= opts.tol_opt;
      dev.cost_best_response = own.value(ui);
    } else {
      if (!laws)
        throw std::invalid_argument(
            "feedback Nash check requires the players' feedback laws");
      const GameDefinition reduced = make_closed_loop_game(game, *laws, i);
      const Trajectory own_traj = restrict_to_player(traj, i);
      ControlProblem own(reduced, {theta[i]}, CostScope::single(0),
                         traj.initial_state(), own_traj.controls);
      Vector ui = own.pack(own_traj.controls);
      dev.cost_observed = own.value(ui);
      auto eval = [&](const Vector& v, Vector& g) {
        return own.value_and_gradient(v, g);
      };
      const LbfgsResult lb = lbfgs_minimize(ui, eval, 1e2 * opts.tol_opt,
                                            opts.max_iterations,
                                            opts.lbfgs_memory);
      const double res = gauss_newton_polish(own, ui, opts.tol_opt, 10);
      dev.inner_converged = lb.converged || res <= opts.tol_opt;
      dev.cost_best_response = own.value(ui);
    }
    dev.improvement = dev.cost_observed - dev.cost_best_response;
    if (dev.improvement > tol * (1.0 + std::abs(dev.cost_observed)))
      report.certified = false;
    report.players.push_back(dev);
  }
  return report;
}

}  // namespace idg
