#pragma once

#include <memory>
#include <vector>

#include "idg/features.hpp"
#include "idg/types.hpp"

namespace idg {

/// Continuous-time control system xdot = f(x, u) with analytic Jacobians.
class ContinuousSystem {
 public:
  virtual ~ContinuousSystem() = default;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual Vector deriv(const Vector& x, const Vector& u) const = 0;
  virtual void jacobians(const Vector& x, const Vector& u, Matrix& dfdx,
                         Matrix& dfdu) const = 0;
};

using ContinuousSystemPtr = std::shared_ptr<const ContinuousSystem>;

struct BallOnBeamParams {
  double gravity = 9.81;       // m/s^2
  double ball_mass = 0.02;     // kg
  double ball_radius = 0.025;  // m
  double ball_inertia = 5e-6;  // kg m^2
  double beam_inertia = 0.667; // kg m^2

  void validate() const;
};

/// Ball-on-beam driven by two torques acting on the same rotational axis.
/// State: [ball position, ball velocity, beam angle, beam angular velocity].
class BallOnBeam final : public ContinuousSystem {
 public:
  explicit BallOnBeam(BallOnBeamParams params = {});
  int state_dim() const override { return 4; }
  int control_dim() const override { return 2; }
  Vector deriv(const Vector& x, const Vector& u) const override;
  void jacobians(const Vector& x, const Vector& u, Matrix& dfdx,
                 Matrix& dfdu) const override;
  const BallOnBeamParams& params() const { return params_; }

 private:
  BallOnBeamParams params_;
};

class LinearContinuousSystem final : public ContinuousSystem {
 public:
  LinearContinuousSystem(Matrix a, Matrix b);
  int state_dim() const override { return static_cast<int>(a_.rows()); }
  int control_dim() const override { return static_cast<int>(b_.cols()); }
  Vector deriv(const Vector& x, const Vector& u) const override;
  void jacobians(const Vector& x, const Vector& u, Matrix& dfdx,
                 Matrix& dfdu) const override;

 private:
  Matrix a_;
  Matrix b_;
};

/// Continuous- and discrete-time matrices of a linear game.
struct LinearGameMatrices {
  Matrix a;                // n x n
  std::vector<Matrix> b;   // n x m_i per player
  Matrix a_d;              // exp(A dt)
  std::vector<Matrix> b_d; // integral of exp(A tau) dtau * B_i
  double dt = 0.0;

  int state_dim() const { return static_cast<int>(a.rows()); }
  Matrix joint_b() const;
  Matrix joint_b_d() const;
};

/// Jacobian linearization of the ball-on-beam model at the origin. Both
/// players share the input matrix [0 0 0 1/theta_p]^T.
LinearGameMatrices linearize_ball_on_beam(const BallOnBeamParams& params);

/// Exact zero-order-hold discretization of xdot = A x + B u.
void discretize_exact(const Matrix& a, const Matrix& b, double dt, Matrix& a_d,
                      Matrix& b_d);
LinearGameMatrices discretize_exact(LinearGameMatrices lin, double dt);

/// One-step discrete-time map with first-order sensitivities.
class DiscreteDynamics {
 public:
  virtual ~DiscreteDynamics() = default;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  /// x^(k+1) = F^(k)(x, u); `k` is zero-based.
  virtual Vector step(int k, const Vector& x, const Vector& u) const = 0;
  /// dfdx = d x^(k+1) / d x^(k), dfdu = d x^(k+1) / d u^(k).
  virtual void step_jacobians(int k, const Vector& x, const Vector& u,
                              Matrix& dfdx, Matrix& dfdu) const = 0;
};

using DiscreteDynamicsPtr = std::shared_ptr<const DiscreteDynamics>;

/// Classical fourth-order one-step integrator with zero-order-hold controls.
/// Sensitivities are obtained by differentiating the integrator stages.
class Rk4Dynamics final : public DiscreteDynamics {
 public:
  Rk4Dynamics(ContinuousSystemPtr system, double dt);
  int state_dim() const override { return system_->state_dim(); }
  int control_dim() const override { return system_->control_dim(); }
  Vector step(int k, const Vector& x, const Vector& u) const override;
  void step_jacobians(int k, const Vector& x, const Vector& u, Matrix& dfdx,
                      Matrix& dfdu) const override;
  double dt() const { return dt_; }

 private:
  ContinuousSystemPtr system_;
  double dt_;
};

class LinearDiscreteDynamics final : public DiscreteDynamics {
 public:
  LinearDiscreteDynamics(Matrix a_d, Matrix b_d);
  int state_dim() const override { return static_cast<int>(a_d_.rows()); }
  int control_dim() const override { return static_cast<int>(b_d_.cols()); }
  Vector step(int k, const Vector& x, const Vector& u) const override;
  void step_jacobians(int k, const Vector& x, const Vector& u, Matrix& dfdx,
                      Matrix& dfdu) const override;
  const Matrix& a_d() const { return a_d_; }
  const Matrix& b_d() const { return b_d_; }

 private:
  Matrix a_d_;
  Matrix b_d_;
};

/// The joint dynamics with all players but one replaced by their feedback
/// laws: f_i(x, u_i) = f(x, gamma_1(x), ..., u_i, ..., gamma_N(x)).
/// Sensitivities follow by the chain rule through the law Jacobians.
class ClosedLoopDynamics final : public DiscreteDynamics {
 public:
  ClosedLoopDynamics(DiscreteDynamicsPtr base, std::vector<FeedbackLawPtr> laws,
                     std::vector<int> control_dims, int player);
  int state_dim() const override { return base_->state_dim(); }
  int control_dim() const override { return dims_[player_]; }
  Vector step(int k, const Vector& x, const Vector& u_own) const override;
  void step_jacobians(int k, const Vector& x, const Vector& u_own, Matrix& dfdx,
                      Matrix& dfdu) const override;

 private:
  Vector joint_controls(const Vector& x, const Vector& u_own) const;

  DiscreteDynamicsPtr base_;
  std::vector<FeedbackLawPtr> laws_;
  std::vector<int> dims_;
  std::vector<int> offsets_;
  int player_;
};

}  // namespace idg
