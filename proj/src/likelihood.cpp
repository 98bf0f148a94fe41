#include "idg/likelihood.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace idg {

CostScope CostScope::joint(int player_count) {
  CostScope scope;
  scope.cost_players.resize(player_count);
  std::iota(scope.cost_players.begin(), scope.cost_players.end(), 0);
  scope.control_players = scope.cost_players;
  return scope;
}

CostScope CostScope::cost_of_over_all(int player, int player_count) {
  CostScope scope;
  scope.cost_players = {player};
  scope.control_players.resize(player_count);
  std::iota(scope.control_players.begin(), scope.control_players.end(), 0);
  return scope;
}

int ControlJacobian::row_offset(int p, int k1) const {
  int off = 0;
  for (int q = 0; q < p; ++q) off += control_dims[q] * horizon;
  return off + k1 * control_dims[p];
}

Eigen::Block<const Matrix> ControlJacobian::block(int p, int k1,
                                                  int k2) const {
  return blocks.block(row_offset(p, k1), k2 * state_dim, control_dims[p],
                      state_dim);
}

namespace {

struct StepSensitivities {
  std::vector<Matrix> dfdx;  // k_E - 1 entries
  std::vector<Matrix> dfdu;
};

StepSensitivities evaluate_sensitivities(const GameDefinition& game,
                                         const Trajectory& traj) {
  StepSensitivities sens;
  const int steps = game.horizon - 1;
  sens.dfdx.resize(steps);
  sens.dfdu.resize(steps);
  for (int k = 0; k < steps; ++k) {
    game.dynamics->step_jacobians(k, traj.states.col(k),
                                  traj.joint_controls(k), sens.dfdx[k],
                                  sens.dfdu[k]);
    if (!sens.dfdx[k].allFinite() || !sens.dfdu[k].allFinite())
      throw std::runtime_error("non-finite dynamics sensitivity at step k=" +
                               std::to_string(k + 1));
  }
  return sens;
}

// Plain influence blocks for one scope player: rows k1, columns k2, with
// P(k1, k1+1) = dfdu^T and P(k1, k2) = P(k1, k2-1) * dfdx^T.
void fill_plain_rows(const GameDefinition& game,
                     const StepSensitivities& sens, int player, Matrix& rows,
                     int row_offset, int m_p) {
  const int n = game.state_dim();
  const int k_e = game.horizon;
  const int off = game.control_offset(player);
  for (int k1 = 0; k1 + 1 < k_e; ++k1) {
    auto dest = [&](int k2) {
      return rows.block(row_offset + k1 * m_p, k2 * n, m_p, n);
    };
    dest(k1 + 1) = sens.dfdu[k1].middleCols(off, m_p).transpose();
    for (int k2 = k1 + 2; k2 < k_e; ++k2)
      dest(k2) = dest(k2 - 1) * sens.dfdx[k2 - 1].transpose();
  }
}

}  // namespace

ControlJacobian control_jacobian(const GameDefinition& game,
                                 const Trajectory& traj, const CostScope& scope,
                                 JacobianVariant variant) {
  traj.validate_dims(game);
  ControlJacobian jac;
  jac.variant = variant;
  jac.horizon = game.horizon;
  jac.state_dim = game.state_dim();
  int rows = 0;
  for (int p : scope.control_players) {
    jac.control_dims.push_back(game.control_dims[p]);
    rows += game.control_dims[p] * game.horizon;
  }
  jac.blocks.setZero(rows, game.state_dim() * game.horizon);

  const StepSensitivities sens = evaluate_sensitivities(game, traj);
  int row_offset = 0;
  for (std::size_t sp = 0; sp < scope.control_players.size(); ++sp) {
    const int player = scope.control_players[sp];
    const int m_p = jac.control_dims[sp];
    fill_plain_rows(game, sens, player, jac.blocks, row_offset, m_p);
    row_offset += m_p * game.horizon;
  }

  if (variant == JacobianVariant::kTrapezoid) {
    // D~(k1, k2) = (P(k1, k2) + P(k1, k2+1)) / 2, with the plain block kept
    // in the last column where x^(k2+1) does not exist.
    const int n = game.state_dim();
    const int k_e = game.horizon;
    Matrix trap(jac.blocks.rows(), jac.blocks.cols());
    for (int k2 = 0; k2 + 1 < k_e; ++k2)
      trap.middleCols(k2 * n, n) = 0.5 * (jac.blocks.middleCols(k2 * n, n) +
                                          jac.blocks.middleCols((k2 + 1) * n, n));
    trap.middleCols((k_e - 1) * n, n) = jac.blocks.middleCols((k_e - 1) * n, n);
    jac.blocks = std::move(trap);
  }
  return jac;
}

QuadraticCostExpansion::QuadraticCostExpansion(const GameDefinition& game,
                                               const Trajectory& traj,
                                               const CostScope& scope,
                                               JacobianVariant variant)
    : scope_(scope) {
  traj.validate_dims(game);
  const int n = game.state_dim();
  const int k_e = game.horizon;

  dim_ = 0;
  std::vector<int> scope_offset(scope.control_players.size());
  for (std::size_t sp = 0; sp < scope.control_players.size(); ++sp) {
    scope_offset[sp] = dim_;
    dim_ += game.control_dims[scope.control_players[sp]] * k_e;
  }

  u_demo_.resize(dim_);
  for (std::size_t sp = 0; sp < scope.control_players.size(); ++sp) {
    const int p = scope.control_players[sp];
    const int m_p = game.control_dims[p];
    for (int k = 0; k < k_e; ++k)
      u_demo_.segment(scope_offset[sp] + k * m_p, m_p) =
          traj.controls[p].col(k);
  }

  const ControlJacobian jac = control_jacobian(game, traj, scope, variant);

  int param_count = 0;
  for (int i : scope.cost_players) param_count += game.feature_dim(i);
  cost_terms_.assign(param_count, 0.0);
  g_terms_.assign(param_count, Vector::Zero(dim_));
  hessian_terms_.assign(param_count, Matrix::Zero(dim_, dim_));

  // State-gradient stacks per parameter; multiplied through D afterwards.
  std::vector<Matrix> state_grad(param_count, Matrix::Zero(n, k_e));

  FeatureDerivatives d;
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  for (int k = 0; k < k_e; ++k) {
    const Vector x = traj.states.col(k);
    const Vector u = traj.joint_controls(k);
    int j = 0;
    for (int i : scope.cost_players) {
      for (const auto& feature : game.features[i]) {
        // Cost piece c_j = -sum_k eta_j; all signs flipped here once.
        cost_terms_[j] -= feature->value(x, u);
        feature->derivatives(x, u, d);
        state_grad[j].col(k) -= d.dx;

        for (std::size_t sp = 0; sp < scope.control_players.size(); ++sp) {
          const int p = scope.control_players[sp];
          const int m_p = game.control_dims[p];
          const int off_p = game.control_offset(p);
          g_terms_[j].segment(scope_offset[sp] + k * m_p, m_p) -=
              d.du.segment(off_p, m_p);
          for (std::size_t sq = 0; sq < scope.control_players.size(); ++sq) {
            const int q = scope.control_players[sq];
            const int m_q = game.control_dims[q];
            const Matrix duu_block =
                d.duu.block(off_p, game.control_offset(q), m_p, m_q);
            if (duu_block.cwiseAbs().maxCoeff() > 0.0)
              hessian_terms_[j].block(scope_offset[sp] + k * m_p,
                                      scope_offset[sq] + k * m_q, m_p, m_q) -=
                  duu_block;
          }
        }

        // Gauss-Newton state curvature: D * (-dxx) * D^T, accumulated as
        // rank-one updates from the small per-step eigendecomposition.
        if (d.dxx.cwiseAbs().maxCoeff() > 0.0) {
          eig.compute(-d.dxx);
          for (int r = 0; r < n; ++r) {
            const double lambda = eig.eigenvalues()[r];
            if (std::abs(lambda) < 1e-300) continue;
            const Vector v =
                jac.blocks.middleCols(k * n, n) * eig.eigenvectors().col(r);
            hessian_terms_[j].selfadjointView<Eigen::Lower>().rankUpdate(
                v, lambda);
          }
        }
        ++j;
      }
    }
  }

  for (int j = 0; j < param_count; ++j) {
    hessian_terms_[j].triangularView<Eigen::StrictlyUpper>() =
        hessian_terms_[j].transpose();
    // g_j += D * dJ/dx, column-block by column-block.
    Vector s(n * k_e);
    for (int k = 0; k < k_e; ++k) s.segment(k * n, n) = state_grad[j].col(k);
    g_terms_[j].noalias() += jac.blocks * s;
  }
}

Vector QuadraticCostExpansion::gradient(const Vector& theta_scope) const {
  if (theta_scope.size() != parameter_count())
    throw std::invalid_argument("scope parameter length mismatch");
  Vector g = Vector::Zero(dim_);
  for (int j = 0; j < parameter_count(); ++j) g += theta_scope[j] * g_terms_[j];
  return g;
}

Matrix QuadraticCostExpansion::hessian(const Vector& theta_scope) const {
  if (theta_scope.size() != parameter_count())
    throw std::invalid_argument("scope parameter length mismatch");
  Matrix h = Matrix::Zero(dim_, dim_);
  for (int j = 0; j < parameter_count(); ++j)
    h += theta_scope[j] * hessian_terms_[j];
  return h;
}

double QuadraticCostExpansion::cost(const Vector& theta_scope) const {
  double c = 0.0;
  for (int j = 0; j < parameter_count(); ++j)
    c += theta_scope[j] * cost_terms_[j];
  return c;
}

double QuadraticCostExpansion::model_value(const Vector& theta_scope,
                                           const Vector& delta) const {
  const Vector g = gradient(theta_scope);
  const Matrix h = hessian(theta_scope);
  return cost(theta_scope) + g.dot(delta) + 0.5 * delta.dot(h * delta);
}

LogDensityResult gaussian_log_density(const Vector& g, const Matrix& G) {
  LogDensityResult out;
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) return out;
  const auto& l = llt.matrixLLT();
  double log_det_half = 0.0;
  double min_diag = kInfinity, max_diag = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double di = l(i, i);
    if (!(di > 0.0)) return out;
    log_det_half += std::log(di);
    min_diag = std::min(min_diag, di);
    max_diag = std::max(max_diag, di);
  }
  out.positive_definite = true;
  out.ill_conditioned =
      (max_diag / min_diag) * (max_diag / min_diag) > 1e12;
  const Vector v = llt.solve(g);
  const double d = static_cast<double>(g.size());
  out.value = -0.5 * g.dot(v) + log_det_half - 0.5 * d * std::log(2.0 * M_PI);
  return out;
}

LogDensityResult log_density_approx(const QuadraticCostExpansion& expansion,
                                    const Vector& theta_scope) {
  return gaussian_log_density(expansion.gradient(theta_scope),
                              expansion.hessian(theta_scope));
}

LogDensityResult log_density_approx(const GameDefinition& game,
                                    const Trajectory& traj,
                                    const Vector& theta_scope,
                                    const CostScope& scope,
                                    JacobianVariant variant) {
  return log_density_approx(QuadraticCostExpansion(game, traj, scope, variant),
                            theta_scope);
}

ScopeLikelihood::ScopeLikelihood(const GameDefinition& game,
                                 const DemonstrationSet& demos,
                                 const CostScope& scope,
                                 JacobianVariant variant) {
  if (demos.trajectories.empty())
    throw std::invalid_argument("demonstration set must not be empty");
  expansions_.reserve(demos.trajectories.size());
  for (const auto& traj : demos.trajectories)
    expansions_.emplace_back(game, traj, scope, variant);
}

int ScopeLikelihood::parameter_count() const {
  return expansions_.front().parameter_count();
}

LogDensityResult ScopeLikelihood::value(const Vector& theta_scope) const {
  LogDensityResult total;
  total.value = 0.0;
  total.positive_definite = true;
  for (const auto& e : expansions_) {
    const LogDensityResult r = log_density_approx(e, theta_scope);
    if (!r.positive_definite) return r;
    total.value += r.value;
    total.ill_conditioned |= r.ill_conditioned;
  }
  return total;
}

LogDensityResult ScopeLikelihood::value_and_gradient(const Vector& theta_scope,
                                                     Vector& grad) const {
  const int p = parameter_count();
  grad.setZero(p);
  LogDensityResult total;
  total.value = 0.0;
  total.positive_definite = true;
  for (const auto& e : expansions_) {
    const Vector g = e.gradient(theta_scope);
    const Matrix G = e.hessian(theta_scope);
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success) return LogDensityResult{};
    const auto& l = llt.matrixLLT();
    double log_det_half = 0.0;
    double min_diag = kInfinity, max_diag = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      const double di = l(i, i);
      if (!(di > 0.0)) return LogDensityResult{};
      log_det_half += std::log(di);
      min_diag = std::min(min_diag, di);
      max_diag = std::max(max_diag, di);
    }
    total.ill_conditioned |=
        (max_diag / min_diag) * (max_diag / min_diag) > 1e12;
    const Vector v = llt.solve(g);
    const double d = static_cast<double>(g.size());
    total.value +=
        -0.5 * g.dot(v) + log_det_half - 0.5 * d * std::log(2.0 * M_PI);
    const Matrix inv = llt.solve(Matrix::Identity(G.rows(), G.cols()));
    for (int j = 0; j < p; ++j) {
      const Vector& gj = e.gradient_term(j);
      const Matrix& hj = e.hessian_term(j);
      grad[j] += -gj.dot(v) + 0.5 * v.dot(hj * v) +
                 0.5 * inv.cwiseProduct(hj).sum();
    }
  }
  return total;
}

LogDensityResult ScopeLikelihood::residual(const Vector& theta_scope) const {
  LogDensityResult total;
  total.value = 0.0;
  total.positive_definite = true;
  for (const auto& e : expansions_) {
    const Vector g = e.gradient(theta_scope);
    const Matrix G = e.hessian(theta_scope);
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success) return LogDensityResult{};
    total.value -= 0.5 * g.dot(llt.solve(g));
  }
  return total;
}

LogDensityResult ScopeLikelihood::residual_and_gradient(
    const Vector& theta_scope, Vector& grad) const {
  const int p = parameter_count();
  grad.setZero(p);
  LogDensityResult total;
  total.value = 0.0;
  total.positive_definite = true;
  for (const auto& e : expansions_) {
    const Vector g = e.gradient(theta_scope);
    const Matrix G = e.hessian(theta_scope);
    Eigen::LLT<Matrix> llt(G);
    if (llt.info() != Eigen::Success) return LogDensityResult{};
    const Vector v = llt.solve(g);
    total.value -= 0.5 * g.dot(v);
    for (int j = 0; j < p; ++j)
      grad[j] += -e.gradient_term(j).dot(v) + 0.5 * v.dot(e.hessian_term(j) * v);
  }
  return total;
}

LogDensityResult log_likelihood(const GameDefinition& game,
                                const DemonstrationSet& demos,
                                const Vector& theta_scope,
                                const CostScope& scope,
                                JacobianVariant variant) {
  return ScopeLikelihood(game, demos, scope, variant).value(theta_scope);
}

Vector scope_parameters(const CostScope& scope,
                        const std::vector<Vector>& theta) {
  int total = 0;
  for (int i : scope.cost_players) total += static_cast<int>(theta[i].size());
  Vector out(total);
  int off = 0;
  for (int i : scope.cost_players) {
    out.segment(off, theta[i].size()) = theta[i];
    off += static_cast<int>(theta[i].size());
  }
  return out;
}

}  // namespace idg
