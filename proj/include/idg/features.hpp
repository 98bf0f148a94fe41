#pragma once

#include <memory>
#include <string>
#include <vector>

#include "idg/types.hpp"

namespace idg {

/// First and second derivatives of a feature at one time step, taken with
/// respect to the state and the joint control vector of all players.
struct FeatureDerivatives {
  Vector dx;   // n
  Vector du;   // m (all players)
  Matrix dxx;  // n x n
  Matrix duu;  // m x m
  Matrix dxu;  // n x m

  void resize(int n, int m) {
    dx.setZero(n);
    du.setZero(m);
    dxx.setZero(n, n);
    duu.setZero(m, m);
    dxu.setZero(n, m);
  }
};

/// A single cost feature eta(x, u_1, ..., u_N), continuously differentiable
/// in all arguments. Controls are passed as one joint vector.
class Feature {
 public:
  virtual ~Feature() = default;
  virtual double value(const Vector& x, const Vector& u) const = 0;
  virtual void derivatives(const Vector& x, const Vector& u,
                           FeatureDerivatives& d) const = 0;
  virtual std::string name() const = 0;
};

using FeaturePtr = std::shared_ptr<const Feature>;

/// eta = -x[channel]^2
class NegatedSquaredState final : public Feature {
 public:
  explicit NegatedSquaredState(int channel) : channel_(channel) {}
  double value(const Vector& x, const Vector& u) const override;
  void derivatives(const Vector& x, const Vector& u,
                   FeatureDerivatives& d) const override;
  std::string name() const override;
  int channel() const { return channel_; }

 private:
  int channel_;
};

/// eta = -u[offset + channel]^2, where offset is the position of the owning
/// player's control block in the joint control vector.
class NegatedSquaredControl final : public Feature {
 public:
  NegatedSquaredControl(int offset, int channel)
      : offset_(offset), channel_(channel) {}
  double value(const Vector& x, const Vector& u) const override;
  void derivatives(const Vector& x, const Vector& u,
                   FeatureDerivatives& d) const override;
  std::string name() const override;
  int joint_index() const { return offset_ + channel_; }

 private:
  int offset_;
  int channel_;
};

/// State-feedback control law u_j = gamma_j(x).
class FeedbackLaw {
 public:
  virtual ~FeedbackLaw() = default;
  virtual int control_dim() const = 0;
  virtual Vector value(const Vector& x) const = 0;
  virtual Matrix jacobian(const Vector& x) const = 0;  // m_j x n
};

using FeedbackLawPtr = std::shared_ptr<const FeedbackLaw>;

class LinearStateFeedback final : public FeedbackLaw {
 public:
  explicit LinearStateFeedback(Matrix gain) : gain_(std::move(gain)) {}
  int control_dim() const override { return static_cast<int>(gain_.rows()); }
  Vector value(const Vector& x) const override { return gain_ * x; }
  Matrix jacobian(const Vector&) const override { return gain_; }
  const Matrix& gain() const { return gain_; }

 private:
  Matrix gain_;
};

/// Substitution of the other players' feedback laws into a feature, turning
/// eta(x, u_1, ..., u_N) into a function of (x, u_i) only. Derivatives are
/// composed through the law Jacobians; law curvature is taken as zero, which
/// is exact for linear state feedback.
class ClosedLoopFeature final : public Feature {
 public:
  /// `laws[j]` is null for the retained player `player` and non-null for all
  /// others. `control_dims` are the per-player control widths of the base
  /// game's joint control vector.
  ClosedLoopFeature(FeaturePtr base, std::vector<FeedbackLawPtr> laws,
                    std::vector<int> control_dims, int player, int state_dim);

  double value(const Vector& x, const Vector& u_own) const override;
  void derivatives(const Vector& x, const Vector& u_own,
                   FeatureDerivatives& d) const override;
  std::string name() const override;

 private:
  Vector joint_controls(const Vector& x, const Vector& u_own) const;

  FeaturePtr base_;
  std::vector<FeedbackLawPtr> laws_;
  std::vector<int> dims_;
  std::vector<int> offsets_;
  int player_;
  int state_dim_;
  int total_dim_;
};

}  // namespace idg
