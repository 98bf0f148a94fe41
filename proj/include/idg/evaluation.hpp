#pragma once

#include <cstdint>
#include <vector>

#include "idg/estimators.hpp"
#include "idg/game.hpp"
#include "idg/likelihood.hpp"
#include "idg/types.hpp"

namespace idg {

/// Measurement noise: i.i.d. zero-mean Gaussian per channel with standard
/// deviation sigma_j = RMS(channel_j) * 10^(-snr_db / 20). snr_db may be
/// +infinity (no noise). Deterministic under the seed.
struct NoiseSpec {
  double snr_db = kInfinity;
  std::uint64_t seed = 0;
};

/// Returns a noisy copy; the output is a measurement and in general not
/// feasible with respect to the dynamics.
Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec);

/// Normalized maximum absolute errors per channel,
///   e_j = max_k |a_hat_j(k) - a_ref_j(k)| / max_k |a_ref_j(k)|,
/// with e_x the maximum over state channels and e_u the maximum over all
/// players' control channels. Throws when a reference channel is
/// identically zero.
struct ErrorReport {
  double e_x = 0.0;
  double e_u = 0.0;
  Vector state_errors;                 // per state channel
  std::vector<Vector> control_errors;  // per player, per channel
};

ErrorReport nmae(const Trajectory& estimated, const Trajectory& reference);

/// Monte-Carlo check of the feature-expectation matching principle: draws
/// control samples from the Gaussian surrogate N(u_E - G^-1 g, G^-1) at
/// theta, rolls them out, and compares the mean feature count with the
/// demonstrated mean.
struct FeatureMatchingReport {
  Vector sampled_mean;
  Vector reference;
  Vector relative_mismatch;
  std::vector<bool> fixed_component;  // gauge components, unmatched by design
  int samples = 0;
};

struct FeatureMatchingOptions {
  int samples = 10000;
  std::uint64_t seed = 1;
  JacobianVariant variant = JacobianVariant::kPlain;
  std::vector<int> fixed_scope_indices;
};

/// Scope semantics mirror the estimators: for a single-player scope the
/// other players' observed controls stay fixed during the rollouts.
FeatureMatchingReport feature_matching_report(const GameDefinition& game,
                                              const DemonstrationSet& demos,
                                              const Vector& theta_scope,
                                              const CostScope& scope,
                                              const FeatureMatchingOptions& options);

}  // namespace idg
