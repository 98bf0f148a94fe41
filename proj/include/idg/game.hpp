#pragma once

#include <string>
#include <vector>

#include "idg/dynamics.hpp"
#include "idg/features.hpp"
#include "idg/types.hpp"

namespace idg {

/// An N-player discrete-time dynamic game: shared dynamics, per-player
/// control channels and per-player feature sets. Immutable after
/// construction; all operations on it are pure.
struct GameDefinition {
  DiscreteDynamicsPtr dynamics;
  std::vector<int> control_dims;                // m_i
  int horizon = 0;                              // k_E
  double dt = 0.0;
  std::vector<std::vector<FeaturePtr>> features; // per player

  int player_count() const { return static_cast<int>(control_dims.size()); }
  int state_dim() const { return dynamics->state_dim(); }
  int joint_control_dim() const;
  int control_offset(int player) const;
  int feature_dim(int player) const {
    return static_cast<int>(features[player].size());
  }
  int stacked_parameter_dim() const;

  /// Throws std::invalid_argument when any structural invariant is violated.
  void validate() const;
};

/// Index and pinned value of a weight held fixed during identification.
struct FixedWeight {
  int player = 0;
  int index = 0;
  double value = 1.0;
};

/// Per-player cost parameters theta_i; J_i = -theta_i' mu_i.
struct CostParameters {
  std::vector<Vector> theta;
  std::vector<FixedWeight> normalization;

  void validate(const GameDefinition& game) const;
};

/// State sequence and per-player control sequences over k = 1..k_E.
struct Trajectory {
  Matrix states;                 // n x k_E
  std::vector<Matrix> controls;  // m_i x k_E per player

  int horizon() const { return static_cast<int>(states.cols()); }
  Vector initial_state() const { return states.col(0); }
  Vector joint_controls(int k) const;

  void validate_dims(const GameDefinition& game) const;
};

/// Largest dynamics defect max_k |x^(k+1) - f^(k)(x^(k), u^(k))|_inf.
double max_dynamics_residual(const GameDefinition& game, const Trajectory& traj);

/// Feasibility with tolerance tau = 1e-9 * (1 + |x|_inf), admitting
/// round-tripped CSV data. Generated rollouts satisfy tau = 0.
bool is_feasible(const GameDefinition& game, const Trajectory& traj);

/// Iterates the dynamics from x1 under the given control sequences.
/// Throws std::runtime_error naming the step when a non-finite state occurs.
Trajectory rollout(const GameDefinition& game,
                   const std::vector<Matrix>& controls, const Vector& x1);

/// Feature count mu_i(zeta): features summed over time steps (time-major).
Vector feature_count(const GameDefinition& game, const Trajectory& traj,
                     int player);

/// J_i(zeta, theta_i) = -theta_i' mu_i(zeta).
double trajectory_cost(const GameDefinition& game, const Trajectory& traj,
                       const Vector& theta_i, int player);

/// Stacked parameters theta_sigma = [theta_1' ... theta_N']' with the
/// per-player block sizes recorded for splitting.
struct StackedParameters {
  Vector theta;
  std::vector<int> sizes;
};

StackedParameters stack_global(const std::vector<Vector>& theta);

/// Stacked feature count mu_sigma, matching stack_global's ordering.
Vector stacked_feature_count(const GameDefinition& game, const Trajectory& traj);

/// J_sigma = sum_i J_i, accumulated per player block so that the stacked and
/// per-player evaluations agree exactly.
double global_cost(const GameDefinition& game, const Trajectory& traj,
                   const StackedParameters& stacked);

/// Observed trajectories plus their mean feature counts per player.
struct DemonstrationSet {
  std::vector<Trajectory> trajectories;
  std::vector<Vector> mean_feature_counts;

  int count() const { return static_cast<int>(trajectories.size()); }
};

DemonstrationSet make_demonstration_set(const GameDefinition& game,
                                        std::vector<Trajectory> trajectories);

/// A claim that feature `index_a` of player `player_a` is the same function
/// as feature `index_b` of player `player_b`.
struct FeatureEquality {
  int player_a = 0;
  int index_a = 0;
  int player_b = 0;
  int index_b = 0;
};

/// Deduplicated list of all players' distinct features plus per-player index
/// embeddings into it.
struct ExtendedFeatureMap {
  std::vector<FeaturePtr> extended;
  std::vector<std::vector<int>> embedding;  // per player, length p_i

  int dim() const { return static_cast<int>(extended.size()); }
  /// theta_i scattered through the embedding, zeros elsewhere.
  Vector scatter(int player, const Vector& theta_i) const;
};

/// Builds the extended feature vector from an explicit equality table.
/// Claimed-equal features are probed at random points; a disagreement means
/// the table is inconsistent and raises std::invalid_argument.
ExtendedFeatureMap build_extended_features(
    const GameDefinition& game, const std::vector<FeatureEquality>& equalities);

Vector extended_feature_count(const GameDefinition& game,
                              const ExtendedFeatureMap& map,
                              const Trajectory& traj);

/// The single-player game seen by `player` when every other player follows a
/// known feedback law: closed-loop dynamics f_i(x, u_i) and features
/// rewritten as eta_i(x, u_i). `laws[j]` must be set for all j != player.
GameDefinition make_closed_loop_game(const GameDefinition& game,
                                     const std::vector<FeedbackLawPtr>& laws,
                                     int player);

/// Restriction of a trajectory to one player's controls (for use with the
/// closed-loop single-player game).
Trajectory restrict_to_player(const Trajectory& traj, int player);

// Benchmark games ------------------------------------------------------------

/// Two-player nonlinear ball-on-beam game with features
/// -[x1^2 x2^2 x3^2 x4^2 u_i^2] per player.
GameDefinition make_ball_on_beam_game(int horizon, double dt,
                                      const BallOnBeamParams& params = {});

/// The same game on the exact zero-order-hold discretization of the
/// linearized model.
GameDefinition make_ball_on_beam_lq_game(int horizon, double dt,
                                         const BallOnBeamParams& params = {});

/// A linear-quadratic game over the given discretized matrices with the
/// standard quadratic feature set: one negated square per state channel
/// followed by one per own control channel (p_i = n + m_i).
GameDefinition make_linear_quadratic_game(const LinearGameMatrices& lin,
                                          int horizon);

/// Ground-truth cost parameters of the two-player benchmark.
CostParameters ball_on_beam_true_parameters();

/// Initial state used by the benchmark experiments.
Vector ball_on_beam_initial_state();

/// Equality table for the benchmark feature sets: the four state features are
/// shared, own-control features are distinct.
std::vector<FeatureEquality> ball_on_beam_feature_equalities();

}  // namespace idg
