#include "idg/evaluation.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <random>
#include <stdexcept>

namespace idg {

namespace {

double channel_rms(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return std::sqrt(row.squaredNorm() / row.size());
}

}  // namespace

Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec) {
  if (spec.snr_db == kInfinity) return traj;
  if (!std::isfinite(spec.snr_db))
    throw std::invalid_argument("SNR must be finite or +infinity");
  const double factor = std::pow(10.0, -spec.snr_db / 20.0);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Trajectory noisy = traj;
  for (Eigen::Index c = 0; c < noisy.states.rows(); ++c) {
    const double sigma = channel_rms(noisy.states.row(c)) * factor;
    for (Eigen::Index k = 0; k < noisy.states.cols(); ++k)
      noisy.states(c, k) += sigma * dist(rng);
  }
  for (auto& controls : noisy.controls) {
    for (Eigen::Index c = 0; c < controls.rows(); ++c) {
      const double sigma = channel_rms(controls.row(c)) * factor;
      for (Eigen::Index k = 0; k < controls.cols(); ++k)
        controls(c, k) += sigma * dist(rng);
    }
  }
  return noisy;
}

namespace {

double channel_nmae(const Eigen::Ref<const Eigen::RowVectorXd>& estimated,
                    const Eigen::Ref<const Eigen::RowVectorXd>& reference,
                    const std::string& label) {
  const double norm = reference.cwiseAbs().maxCoeff();
  if (norm == 0.0)
    throw std::invalid_argument("NMAE undefined: reference channel " + label +
                                " is identically zero");
  return (estimated - reference).cwiseAbs().maxCoeff() / norm;
}

}  // namespace

ErrorReport nmae(const Trajectory& estimated, const Trajectory& reference) {
  if (estimated.states.rows() != reference.states.rows() ||
      estimated.states.cols() != reference.states.cols() ||
      estimated.controls.size() != reference.controls.size())
    throw std::invalid_argument("NMAE requires matching trajectory shapes");

  ErrorReport report;
  report.state_errors.resize(reference.states.rows());
  for (Eigen::Index c = 0; c < reference.states.rows(); ++c) {
    report.state_errors[c] =
        channel_nmae(estimated.states.row(c), reference.states.row(c),
                     "x" + std::to_string(c + 1));
    report.e_x = std::max(report.e_x, report.state_errors[c]);
  }
  for (std::size_t i = 0; i < reference.controls.size(); ++i) {
    if (estimated.controls[i].rows() != reference.controls[i].rows() ||
        estimated.controls[i].cols() != reference.controls[i].cols())
      throw std::invalid_argument("NMAE requires matching control shapes");
    Vector errors(reference.controls[i].rows());
    for (Eigen::Index c = 0; c < reference.controls[i].rows(); ++c) {
      errors[c] = channel_nmae(
          estimated.controls[i].row(c), reference.controls[i].row(c),
          "u" + std::to_string(i + 1) + "_" + std::to_string(c + 1));
      report.e_u = std::max(report.e_u, errors[c]);
    }
    report.control_errors.push_back(std::move(errors));
  }
  return report;
}

FeatureMatchingReport feature_matching_report(
    const GameDefinition& game, const DemonstrationSet& demos,
    const Vector& theta_scope, const CostScope& scope,
    const FeatureMatchingOptions& options) {
  if (demos.trajectories.empty())
    throw std::invalid_argument("demonstration set must not be empty");
  if (options.samples < 1)
    throw std::invalid_argument("sample count must be positive");

  // Reference: demonstrated mean feature counts over the scope's features.
  Vector reference(theta_scope.size());
  {
    int off = 0;
    for (int i : scope.cost_players) {
      reference.segment(off, game.feature_dim(i)) =
          demos.mean_feature_counts[i];
      off += game.feature_dim(i);
    }
  }

  Vector accumulated = Vector::Zero(theta_scope.size());
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const int per_demo = options.samples / demos.count();
  int total_samples = 0;

  for (int l = 0; l < demos.count(); ++l) {
    const Trajectory& demo = demos.trajectories[l];
    const QuadraticCostExpansion expansion(game, demo, scope, options.variant);
    const Vector g = expansion.gradient(theta_scope);
    const Matrix big_g = expansion.hessian(theta_scope);
    Eigen::LLT<Matrix> llt(big_g);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error(
          "feature matching: surrogate Hessian is not positive definite");
    const Vector mean = expansion.stacked_controls() - llt.solve(g);
    const Matrix l_factor = llt.matrixL();

    const int count = (l + 1 == demos.count())
                          ? options.samples - per_demo * (demos.count() - 1)
                          : per_demo;
    Vector z(mean.size());
    for (int s = 0; s < count; ++s) {
      for (Eigen::Index q = 0; q < z.size(); ++q) z[q] = dist(rng);
      // u = mean + L^-T z has covariance (L L^T)^-1 = G^-1.
      const Vector u =
          mean +
          l_factor.transpose().triangularView<Eigen::Upper>().solve(z);

      // Scatter the scope controls over the demonstration's fixed ones.
      std::vector<Matrix> controls = demo.controls;
      int off = 0;
      for (int p : scope.control_players) {
        const int m_p = game.control_dims[p];
        for (int k = 0; k < game.horizon; ++k)
          controls[p].col(k) = u.segment(off + k * m_p, m_p);
        off += m_p * game.horizon;
      }
      const Trajectory rolled = rollout(game, controls, demo.initial_state());
      int foff = 0;
      for (int i : scope.cost_players) {
        accumulated.segment(foff, game.feature_dim(i)) +=
            feature_count(game, rolled, i);
        foff += game.feature_dim(i);
      }
      ++total_samples;
    }
  }

  FeatureMatchingReport report;
  report.samples = total_samples;
  report.sampled_mean = accumulated / static_cast<double>(total_samples);
  report.reference = reference;
  report.relative_mismatch.resize(reference.size());
  report.fixed_component.assign(reference.size(), false);
  for (int idx : options.fixed_scope_indices)
    if (idx >= 0 && idx < reference.size()) report.fixed_component[idx] = true;
  for (Eigen::Index j = 0; j < reference.size(); ++j) {
    const double denom = std::abs(reference[j]);
    report.relative_mismatch[j] =
        std::abs(report.sampled_mean[j] - reference[j]) /
        (denom > 1e-12 ? denom : 1.0);
  }
  return report;
}

}  // namespace idg
