#pragma once

#include <optional>
#include <vector>

#include "idg/game.hpp"
#include "idg/types.hpp"

namespace idg {

enum class JacobianVariant { kPlain, kTrapezoid };

/// Which players' features form the objective and which players' controls
/// are the differentiation variables. The likelihood scopes are
///   cooperative: all players on both sides,
///   open-loop / feedback Nash: a single player on both sides.
/// Forward solvers also use asymmetric scopes (one player's cost,
/// all players' controls).
struct CostScope {
  std::vector<int> cost_players;
  std::vector<int> control_players;

  static CostScope single(int player) { return {{player}, {player}}; }
  static CostScope joint(int player_count);
  static CostScope cost_of_over_all(int player, int player_count);
};

/// Influence of the scope controls on the states: block matrix with
/// D_{k1,k2} = (d x^(k2) / d u^(k1))^T of size m x n per block. Rows are
/// ordered player-major (scope order), time within player; columns time-major.
struct ControlJacobian {
  JacobianVariant variant = JacobianVariant::kPlain;
  int horizon = 0;
  int state_dim = 0;
  std::vector<int> control_dims;  // per scope player
  Matrix blocks;                  // (sum m_p * k_E) x (n * k_E)

  /// Block for scope player position `p`, control step `k1`, state step `k2`
  /// (all zero-based).
  Eigen::Block<const Matrix> block(int p, int k1, int k2) const;
  int row_offset(int p, int k1) const;
};

ControlJacobian control_jacobian(const GameDefinition& game,
                                 const Trajectory& traj, const CostScope& scope,
                                 JacobianVariant variant);

/// Second-order expansion of the scope cost J(theta) around a demonstration,
/// as a function of the scope's stacked controls. Both the gradient g and the
/// Gauss-Newton Hessian G are linear in theta, so the expansion is stored as
/// per-parameter terms and assembled on demand.
class QuadraticCostExpansion {
 public:
  QuadraticCostExpansion(const GameDefinition& game, const Trajectory& traj,
                         const CostScope& scope, JacobianVariant variant);

  int control_dim() const { return dim_; }
  int parameter_count() const { return static_cast<int>(g_terms_.size()); }
  const CostScope& scope() const { return scope_; }

  /// Demonstration controls stacked in scope order.
  const Vector& stacked_controls() const { return u_demo_; }

  Vector gradient(const Vector& theta_scope) const;
  Matrix hessian(const Vector& theta_scope) const;
  double cost(const Vector& theta_scope) const;

  const Vector& gradient_term(int j) const { return g_terms_[j]; }
  const Matrix& hessian_term(int j) const { return hessian_terms_[j]; }
  double cost_term(int j) const { return cost_terms_[j]; }

  /// Value of the quadratic model at controls u_demo + delta.
  double model_value(const Vector& theta_scope, const Vector& delta) const;

 private:
  CostScope scope_;
  int dim_ = 0;
  Vector u_demo_;
  std::vector<double> cost_terms_;
  std::vector<Vector> g_terms_;
  std::vector<Matrix> hessian_terms_;
};

struct LogDensityResult {
  double value = -kInfinity;
  bool positive_definite = false;
  bool ill_conditioned = false;
};

/// ln of the Gaussian approximation of the MaxEnt density evaluated at the
/// expansion point: -1/2 g'G^-1 g + 1/2 ln det G - d/2 ln 2pi. Returns
/// -infinity when G is not positive definite; flags condition estimates
/// above 1e12.
LogDensityResult gaussian_log_density(const Vector& g, const Matrix& G);

LogDensityResult log_density_approx(const QuadraticCostExpansion& expansion,
                                    const Vector& theta_scope);

LogDensityResult log_density_approx(const GameDefinition& game,
                                    const Trajectory& traj,
                                    const Vector& theta_scope,
                                    const CostScope& scope,
                                    JacobianVariant variant);

/// Per-demonstration expansions for one scope, reusable across theta.
class ScopeLikelihood {
 public:
  ScopeLikelihood(const GameDefinition& game, const DemonstrationSet& demos,
                  const CostScope& scope, JacobianVariant variant);

  int parameter_count() const;
  int demonstration_count() const {
    return static_cast<int>(expansions_.size());
  }
  const QuadraticCostExpansion& expansion(int l) const {
    return expansions_[l];
  }

  LogDensityResult value(const Vector& theta_scope) const;
  /// Analytic d lnL / d theta; meaningful only when positive definite.
  LogDensityResult value_and_gradient(const Vector& theta_scope,
                                      Vector& grad) const;

  /// Data-fit term only: -1/2 sum_l g_l' G_l^-1 g_l (and its theta
  /// gradient), the G-metric stationarity residual of the demonstrations.
  LogDensityResult residual(const Vector& theta_scope) const;
  LogDensityResult residual_and_gradient(const Vector& theta_scope,
                                         Vector& grad) const;

 private:
  std::vector<QuadraticCostExpansion> expansions_;
};

/// Sum of per-demonstration log densities (the MLE objective).
LogDensityResult log_likelihood(const GameDefinition& game,
                                const DemonstrationSet& demos,
                                const Vector& theta_scope,
                                const CostScope& scope,
                                JacobianVariant variant);

/// Scope-stacked parameter vector: concat of theta_i over scope cost players.
Vector scope_parameters(const CostScope& scope,
                        const std::vector<Vector>& theta);

}  // namespace idg
