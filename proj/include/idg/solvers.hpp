#pragma once

#include <optional>
#include <string>
#include <vector>

#include "idg/game.hpp"
#include "idg/likelihood.hpp"
#include "idg/types.hpp"

namespace idg {

struct SolverReport {
  bool converged = false;
  int iterations = 0;
  double residual = kInfinity;  // stationarity norm at exit
  double objective = 0.0;
  std::string message;
};

struct SolverOptions {
  double tol_opt = 1e-8;   // gradient / stationarity tolerance
  int max_iterations = 4000;
  int max_outer = 80;      // best-response + Newton rounds
  int lbfgs_memory = 25;
};

/// Minimizes the summed cost of `scope.cost_players` over the controls of
/// `scope.control_players`; all other players' controls are held fixed.
/// Gradients are computed by a backward adjoint sweep.
class ControlProblem {
 public:
  ControlProblem(const GameDefinition& game, std::vector<Vector> theta,
                 CostScope scope, Vector x1,
                 std::vector<Matrix> fixed_controls);

  int dim() const { return dim_; }
  Vector pack(const std::vector<Matrix>& controls) const;
  std::vector<Matrix> unpack(const Vector& u_scope) const;
  Trajectory rollout_controls(const Vector& u_scope) const;
  double value(const Vector& u_scope) const;
  double value_and_gradient(const Vector& u_scope, Vector& grad) const;

  const GameDefinition& game() const { return *game_; }
  const CostScope& scope() const { return scope_; }
  const Vector& theta_scope() const { return theta_scope_; }

 private:
  void stage_cost(int k, const Vector& x, const Vector& u, double& value,
                  Vector* cx, Vector* cu) const;

  const GameDefinition* game_;
  std::vector<Vector> theta_;
  CostScope scope_;
  Vector theta_scope_;
  Vector x1_;
  std::vector<Matrix> fixed_controls_;
  std::vector<int> scope_offset_;
  int dim_ = 0;
};

/// Pareto-efficient (uniformly weighted) solution: minimizes J_sigma over all
/// players' controls by limited-memory quasi-Newton with a Gauss-Newton
/// polish on the stacked stationarity system.
std::pair<Trajectory, SolverReport> solve_cooperative(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1, const SolverOptions& opts = {},
    const std::vector<Matrix>* warm_start = nullptr);

/// Open-loop Nash equilibrium of the discretized game: block best-response
/// sweeps started from the cooperative solution, polished by Newton steps on
/// the stacked per-player stationarity conditions.
std::pair<Trajectory, SolverReport> solve_open_loop_nash(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1, const SolverOptions& opts = {},
    const std::vector<Matrix>* warm_start = nullptr);

/// Quadratic cost matrices extracted from a game with negated-square
/// features: J_i = sum_k x'Q_i x + u_i'R_i u_i.
struct LqCosts {
  std::vector<Matrix> q;
  std::vector<Matrix> r;
};

LqCosts quadratic_costs_from_features(const GameDefinition& game,
                                      const std::vector<Vector>& theta);

/// Discrete matrices of a game backed by LinearDiscreteDynamics.
const LinearDiscreteDynamics& linear_dynamics_of(const GameDefinition& game);

/// Open-loop Nash equilibrium of a finite-horizon LQ game via the coupled
/// backward recursion
///   M_i^(k) = Q_i + A' M_i^(k+1) Lambda_k^-1 A,
///   Lambda_k = I + sum_j B_j R_j^-1 B_j' M_j^(k+1).
/// Throws std::runtime_error naming the step when Lambda_k is singular.
std::pair<Trajectory, SolverReport> solve_open_loop_nash_lq(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1);

enum class FeedbackHorizon { kFinite, kStationary };

struct FeedbackNashResult {
  std::vector<Matrix> stationary_gains;            // per player
  std::vector<std::vector<Matrix>> per_step_gains; // [k][player], finite mode
  Trajectory trajectory;
  SolverReport report;
  double closed_loop_spectral_radius = 0.0;

  std::vector<FeedbackLawPtr> laws() const;
};

/// Feedback Nash equilibrium of an LQ game via the coupled Riccati
/// recursion. Stationary mode iterates the backward recursion until the gain
/// change is below 1e-10 (capped at 10000 sweeps) and asserts closed-loop
/// stability; the demonstration trajectory applies u_i = K_i x at every step.
FeedbackNashResult solve_feedback_nash_lq(
    const GameDefinition& game, const std::vector<Vector>& theta,
    const Vector& x1, FeedbackHorizon mode = FeedbackHorizon::kStationary);

enum class EquilibriumConcept { kOpenLoop, kFeedback };

struct PlayerDeviation {
  double cost_observed = 0.0;
  double cost_best_response = 0.0;
  double improvement = 0.0;  // cost_observed - cost_best_response
  bool inner_converged = false;
};

struct NashCheckReport {
  std::vector<PlayerDeviation> players;
  bool certified = false;
  double tol = 0.0;
};

/// Re-optimizes each player's cost over that player's controls, holding the
/// other players' observed controls (open loop) or feedback laws (feedback)
/// fixed. Nash-certified when no player can improve by more than
/// tol * (1 + |J_i|).
NashCheckReport check_nash(const GameDefinition& game, const Trajectory& traj,
                           const std::vector<Vector>& theta,
                           EquilibriumConcept pattern, double tol = 1e-6,
                           const std::vector<FeedbackLawPtr>* laws = nullptr,
                           const SolverOptions& opts = {});

}  // namespace idg
