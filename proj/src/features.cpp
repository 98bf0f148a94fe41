#include "idg/features.hpp"

#include <stdexcept>

namespace idg {

double NegatedSquaredState::value(const Vector& x, const Vector&) const {
  return -x[channel_] * x[channel_];
}

void NegatedSquaredState::derivatives(const Vector& x, const Vector& u,
                                      FeatureDerivatives& d) const {
  d.resize(static_cast<int>(x.size()), static_cast<int>(u.size()));
  d.dx[channel_] = -2.0 * x[channel_];
  d.dxx(channel_, channel_) = -2.0;
}

std::string NegatedSquaredState::name() const {
  return "-x" + std::to_string(channel_ + 1) + "^2";
}

double NegatedSquaredControl::value(const Vector&, const Vector& u) const {
  const double v = u[offset_ + channel_];
  return -v * v;
}

void NegatedSquaredControl::derivatives(const Vector& x, const Vector& u,
                                        FeatureDerivatives& d) const {
  d.resize(static_cast<int>(x.size()), static_cast<int>(u.size()));
  const int j = offset_ + channel_;
  d.du[j] = -2.0 * u[j];
  d.duu(j, j) = -2.0;
}

std::string NegatedSquaredControl::name() const {
  return "-u[" + std::to_string(offset_ + channel_) + "]^2";
}

ClosedLoopFeature::ClosedLoopFeature(FeaturePtr base,
                                     std::vector<FeedbackLawPtr> laws,
                                     std::vector<int> control_dims, int player,
                                     int state_dim)
    : base_(std::move(base)),
      laws_(std::move(laws)),
      dims_(std::move(control_dims)),
      player_(player),
      state_dim_(state_dim) {
  if (laws_.size() != dims_.size())
    throw std::invalid_argument("closed-loop feature: one law slot per player");
  offsets_.resize(dims_.size());
  total_dim_ = 0;
  for (std::size_t j = 0; j < dims_.size(); ++j) {
    offsets_[j] = total_dim_;
    total_dim_ += dims_[j];
  }
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) {
      if (laws_[j]) throw std::invalid_argument("retained player has no law");
    } else if (!laws_[j]) {
      throw std::invalid_argument("missing feedback law for player " +
                                  std::to_string(j + 1));
    } else if (laws_[j]->control_dim() != dims_[j]) {
      throw std::invalid_argument("feedback law width mismatch for player " +
                                  std::to_string(j + 1));
    }
  }
}

Vector ClosedLoopFeature::joint_controls(const Vector& x,
                                         const Vector& u_own) const {
  Vector u(total_dim_);
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) {
      u.segment(offsets_[j], dims_[j]) = u_own;
    } else {
      u.segment(offsets_[j], dims_[j]) = laws_[j]->value(x);
    }
  }
  return u;
}

double ClosedLoopFeature::value(const Vector& x, const Vector& u_own) const {
  return base_->value(x, joint_controls(x, u_own));
}

void ClosedLoopFeature::derivatives(const Vector& x, const Vector& u_own,
                                    FeatureDerivatives& d) const {
  const Vector u = joint_controls(x, u_own);
  FeatureDerivatives b;
  base_->derivatives(x, u, b);

  const int n = state_dim_;
  const int mi = static_cast<int>(u_own.size());
  const int pi_off = offsets_[player_];
  d.resize(n, mi);

  // dx through the laws: dx + sum_j K_j^T du_j, and the corresponding
  // quadratic composition for the Hessians.
  d.dx = b.dx;
  d.dxx = b.dxx;
  d.du = b.du.segment(pi_off, mi);
  d.duu = b.duu.block(pi_off, pi_off, mi, mi);
  d.dxu = b.dxu.middleCols(pi_off, mi);

  std::vector<Matrix> jac(laws_.size());
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) continue;
    jac[j] = laws_[j]->jacobian(x);
    const int mj = laws_[j]->control_dim();
    const int oj = offsets_[j];
    d.dx.noalias() += jac[j].transpose() * b.du.segment(oj, mj);
    d.dxx.noalias() += jac[j].transpose() * b.dxu.middleCols(oj, mj).transpose();
    d.dxx.noalias() += b.dxu.middleCols(oj, mj) * jac[j];
    d.dxu.noalias() += jac[j].transpose() * b.duu.block(oj, pi_off, mj, mi);
  }
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) continue;
    for (std::size_t l = 0; l < laws_.size(); ++l) {
      if (static_cast<int>(l) == player_) continue;
      d.dxx.noalias() += jac[j].transpose() *
                         b.duu.block(offsets_[j], offsets_[l],
                                     laws_[j]->control_dim(),
                                     laws_[l]->control_dim()) *
                         jac[l];
    }
  }
}

std::string ClosedLoopFeature::name() const {
  return base_->name() + "|closed-loop";
}

}  // namespace idg
