#pragma once

#include <string>
#include <vector>

#include "idg/game.hpp"
#include "idg/likelihood.hpp"
#include "idg/types.hpp"

namespace idg {

enum class MleObjective {
  /// The Gaussian-approximated log-likelihood (data-fit term plus the
  /// log-determinant normalization).
  kLikelihood,
  /// Only the data-fit term -1/2 g'G^-1 g: chooses the parameters that make
  /// the demonstration as close to stationary as possible in the surrogate
  /// density's own metric. For open-loop scopes on open-loop-unstable
  /// plants the normalization term grows without useful bound (the
  /// surrogate's predicted feature dispersion dwarfs any finite
  /// demonstration) and drags the full MLE to cost parameters whose forward
  /// solutions no longer resemble the data; this objective keeps the
  /// estimate at the data-consistent stationary set instead.
  kOptimalityResidual,
};

struct MleConfig {
  MleObjective objective = MleObjective::kLikelihood;
  /// One weight per involved player is pinned during optimization; the
  /// likelihood is otherwise unbounded in the parameter scale for exactly
  /// optimal demonstrations.
  std::vector<FixedWeight> fixed;
  double tol = 1e-8;            // projected gradient norm
  int max_iterations = 500;
  double initial_weight = 1.0;  // starting value of every free weight
  JacobianVariant variant = JacobianVariant::kTrapezoid;
  /// Optimize log-weights so that every weight stays positive, keeping the
  /// identified costs inside the convex model class (useful under heavy
  /// measurement noise, where free components can otherwise cross zero and
  /// break the forward solve at the estimate).
  bool positive_weights = false;
  /// Central finite differences over theta instead of the analytic
  /// likelihood gradient (validation path).
  bool finite_difference_gradient = false;
  double fd_step = 1e-5;
};

struct IdentificationResult {
  std::vector<Vector> theta;     // one entry per identified player
  std::vector<int> players;      // player index per theta entry
  std::vector<FixedWeight> fixed;
  std::string scope_tag;         // "CG" | "OL-Nash" | "FB-Nash"
  bool converged = false;
  int iterations = 0;
  double grad_norm = kInfinity;
  double log_likelihood = -kInfinity;
  JacobianVariant variant = JacobianVariant::kTrapezoid;
};

/// MLE of the stacked parameters theta_sigma under the joint (cooperative)
/// trajectory density; requires one fixed weight per player.
IdentificationResult identify_cooperative(const DemonstrationSet& demos,
                                          const GameDefinition& game,
                                          const MleConfig& config);

/// MLE of theta_i under the per-player density with the other players'
/// observed controls held fixed along each demonstration.
IdentificationResult identify_open_loop(const DemonstrationSet& demos,
                                        const GameDefinition& game, int player,
                                        const MleConfig& config);

/// MLE of theta_i under the closed-loop single-player rewrite: the other
/// players' feedback laws are substituted into the dynamics and features.
IdentificationResult identify_feedback(const DemonstrationSet& demos,
                                       const GameDefinition& game, int player,
                                       const std::vector<FeedbackLawPtr>& laws,
                                       const MleConfig& config);

/// Inverse of stack_global: splits a stacked vector into per-player blocks.
std::vector<Vector> split_parameters(const Vector& theta_sigma,
                                     const GameDefinition& game);

/// Least-squares fit of stationary gains K_i from u_i^(k) ~ K_i x^(k) over
/// all demonstrations. Throws when the states do not excite the full state
/// space, naming the deficient subspace dimension.
std::vector<Matrix> estimate_feedback_gains(const DemonstrationSet& demos,
                                            const GameDefinition& game);

}  // namespace idg
