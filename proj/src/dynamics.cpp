#include "idg/dynamics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

namespace idg {

void BallOnBeamParams::validate() const {
  if (gravity <= 0 || ball_mass <= 0 || ball_radius <= 0 || ball_inertia <= 0 ||
      beam_inertia <= 0)
    throw std::invalid_argument("ball-on-beam parameters must be positive");
}

BallOnBeam::BallOnBeam(BallOnBeamParams params) : params_(params) {
  params_.validate();
}

Vector BallOnBeam::deriv(const Vector& x, const Vector& u) const {
  const auto& p = params_;
  const double ball_term = p.ball_mass * p.ball_radius * p.ball_radius;
  const double den2 = p.ball_inertia + ball_term;
  const double den4 = p.ball_mass * x[0] * x[0] + p.beam_inertia;

  Vector dx(4);
  dx[0] = x[1];
  dx[1] = ball_term * (x[0] * x[3] * x[3] - p.gravity * std::sin(x[2])) / den2;
  dx[2] = x[3];
  dx[3] = (-2.0 * p.ball_mass * x[0] * x[1] * x[3] -
           p.ball_mass * p.gravity * x[0] * std::cos(x[2]) + u[0] + u[1]) /
          den4;
  return dx;
}

void BallOnBeam::jacobians(const Vector& x, const Vector& u, Matrix& dfdx,
                           Matrix& dfdu) const {
  const auto& p = params_;
  const double ball_term = p.ball_mass * p.ball_radius * p.ball_radius;
  const double c2 = ball_term / (p.ball_inertia + ball_term);
  const double den4 = p.ball_mass * x[0] * x[0] + p.beam_inertia;
  const double num4 = -2.0 * p.ball_mass * x[0] * x[1] * x[3] -
                      p.ball_mass * p.gravity * x[0] * std::cos(x[2]) + u[0] +
                      u[1];

  dfdx.setZero(4, 4);
  dfdx(0, 1) = 1.0;
  dfdx(1, 0) = c2 * x[3] * x[3];
  dfdx(1, 2) = -c2 * p.gravity * std::cos(x[2]);
  dfdx(1, 3) = c2 * 2.0 * x[0] * x[3];
  dfdx(2, 3) = 1.0;
  dfdx(3, 0) = ((-2.0 * p.ball_mass * x[1] * x[3] -
                 p.ball_mass * p.gravity * std::cos(x[2])) *
                    den4 -
                num4 * 2.0 * p.ball_mass * x[0]) /
               (den4 * den4);
  dfdx(3, 1) = -2.0 * p.ball_mass * x[0] * x[3] / den4;
  dfdx(3, 2) = p.ball_mass * p.gravity * x[0] * std::sin(x[2]) / den4;
  dfdx(3, 3) = -2.0 * p.ball_mass * x[0] * x[1] / den4;

  dfdu.setZero(4, 2);
  dfdu(3, 0) = 1.0 / den4;
  dfdu(3, 1) = 1.0 / den4;
}

LinearContinuousSystem::LinearContinuousSystem(Matrix a, Matrix b)
    : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || a_.rows() != b_.rows())
    throw std::invalid_argument("linear system dimension mismatch");
}

Vector LinearContinuousSystem::deriv(const Vector& x, const Vector& u) const {
  return a_ * x + b_ * u;
}

void LinearContinuousSystem::jacobians(const Vector&, const Vector&,
                                       Matrix& dfdx, Matrix& dfdu) const {
  dfdx = a_;
  dfdu = b_;
}

Matrix LinearGameMatrices::joint_b() const {
  int m = 0;
  for (const auto& bi : b) m += static_cast<int>(bi.cols());
  Matrix out(state_dim(), m);
  int c = 0;
  for (const auto& bi : b) {
    out.middleCols(c, bi.cols()) = bi;
    c += static_cast<int>(bi.cols());
  }
  return out;
}

Matrix LinearGameMatrices::joint_b_d() const {
  int m = 0;
  for (const auto& bi : b_d) m += static_cast<int>(bi.cols());
  Matrix out(state_dim(), m);
  int c = 0;
  for (const auto& bi : b_d) {
    out.middleCols(c, bi.cols()) = bi;
    c += static_cast<int>(bi.cols());
  }
  return out;
}

LinearGameMatrices linearize_ball_on_beam(const BallOnBeamParams& params) {
  params.validate();
  const double ball_term = params.ball_mass * params.ball_radius * params.ball_radius;

  LinearGameMatrices lin;
  lin.a.setZero(4, 4);
  lin.a(0, 1) = 1.0;
  lin.a(1, 2) = -ball_term * params.gravity / (params.ball_inertia + ball_term);
  lin.a(2, 3) = 1.0;
  lin.a(3, 0) = -params.ball_mass * params.gravity / params.beam_inertia;
  Matrix bi(4, 1);
  bi << 0.0, 0.0, 0.0, 1.0 / params.beam_inertia;
  lin.b = {bi, bi};
  return lin;
}

void discretize_exact(const Matrix& a, const Matrix& b, double dt, Matrix& a_d,
                      Matrix& b_d) {
  if (dt <= 0) throw std::invalid_argument("sampling time must be positive");
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  // Augmented-matrix exponential: exp([A B; 0 0] dt) = [Ad Bd; 0 I].
  Matrix aug = Matrix::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a * dt;
  aug.topRightCorner(n, m) = b * dt;
  const Matrix e = aug.exp();
  a_d = e.topLeftCorner(n, n);
  b_d = e.topRightCorner(n, m);
}

LinearGameMatrices discretize_exact(LinearGameMatrices lin, double dt) {
  Matrix bd_joint;
  discretize_exact(lin.a, lin.joint_b(), dt, lin.a_d, bd_joint);
  lin.b_d.clear();
  int c = 0;
  for (const auto& bi : lin.b) {
    lin.b_d.push_back(bd_joint.middleCols(c, bi.cols()));
    c += static_cast<int>(bi.cols());
  }
  lin.dt = dt;
  return lin;
}

Rk4Dynamics::Rk4Dynamics(ContinuousSystemPtr system, double dt)
    : system_(std::move(system)), dt_(dt) {
  if (dt_ <= 0) throw std::invalid_argument("sampling time must be positive");
}

Vector Rk4Dynamics::step(int, const Vector& x, const Vector& u) const {
  const double h = dt_;
  const Vector k1 = system_->deriv(x, u);
  const Vector k2 = system_->deriv(x + 0.5 * h * k1, u);
  const Vector k3 = system_->deriv(x + 0.5 * h * k2, u);
  const Vector k4 = system_->deriv(x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void Rk4Dynamics::step_jacobians(int, const Vector& x, const Vector& u,
                                 Matrix& dfdx, Matrix& dfdu) const {
  const double h = dt_;
  const int n = system_->state_dim();

  const Vector k1 = system_->deriv(x, u);
  const Vector x2 = x + 0.5 * h * k1;
  const Vector k2 = system_->deriv(x2, u);
  const Vector x3 = x + 0.5 * h * k2;
  const Vector k3 = system_->deriv(x3, u);
  const Vector x4 = x + h * k3;

  Matrix a1, b1, a2, b2, a3, b3, a4, b4;
  system_->jacobians(x, u, a1, b1);
  system_->jacobians(x2, u, a2, b2);
  system_->jacobians(x3, u, a3, b3);
  system_->jacobians(x4, u, a4, b4);

  const Matrix eye = Matrix::Identity(n, n);
  const Matrix dk1x = a1;
  const Matrix dk2x = a2 * (eye + 0.5 * h * dk1x);
  const Matrix dk3x = a3 * (eye + 0.5 * h * dk2x);
  const Matrix dk4x = a4 * (eye + h * dk3x);
  dfdx = eye + (h / 6.0) * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x);

  const Matrix dk1u = b1;
  const Matrix dk2u = a2 * (0.5 * h * dk1u) + b2;
  const Matrix dk3u = a3 * (0.5 * h * dk2u) + b3;
  const Matrix dk4u = a4 * (h * dk3u) + b4;
  dfdu = (h / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);
}

LinearDiscreteDynamics::LinearDiscreteDynamics(Matrix a_d, Matrix b_d)
    : a_d_(std::move(a_d)), b_d_(std::move(b_d)) {
  if (a_d_.rows() != a_d_.cols() || a_d_.rows() != b_d_.rows())
    throw std::invalid_argument("discrete linear system dimension mismatch");
}

Vector LinearDiscreteDynamics::step(int, const Vector& x,
                                    const Vector& u) const {
  return a_d_ * x + b_d_ * u;
}

void LinearDiscreteDynamics::step_jacobians(int, const Vector&, const Vector&,
                                            Matrix& dfdx, Matrix& dfdu) const {
  dfdx = a_d_;
  dfdu = b_d_;
}

ClosedLoopDynamics::ClosedLoopDynamics(DiscreteDynamicsPtr base,
                                       std::vector<FeedbackLawPtr> laws,
                                       std::vector<int> control_dims,
                                       int player)
    : base_(std::move(base)),
      laws_(std::move(laws)),
      dims_(std::move(control_dims)),
      player_(player) {
  if (laws_.size() != dims_.size())
    throw std::invalid_argument("closed loop: one law slot per player");
  int total = 0;
  offsets_.resize(dims_.size());
  for (std::size_t j = 0; j < dims_.size(); ++j) {
    offsets_[j] = total;
    total += dims_[j];
  }
  if (total != base_->control_dim())
    throw std::invalid_argument("closed loop: control widths do not sum up");
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) continue;
    if (!laws_[j])
      throw std::invalid_argument("missing feedback law for player " +
                                  std::to_string(j + 1));
    if (laws_[j]->control_dim() != dims_[j])
      throw std::invalid_argument("feedback law width mismatch for player " +
                                  std::to_string(j + 1));
  }
}

Vector ClosedLoopDynamics::joint_controls(const Vector& x,
                                          const Vector& u_own) const {
  Vector u(base_->control_dim());
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) {
      u.segment(offsets_[j], dims_[j]) = u_own;
    } else {
      u.segment(offsets_[j], dims_[j]) = laws_[j]->value(x);
    }
  }
  return u;
}

Vector ClosedLoopDynamics::step(int k, const Vector& x,
                                const Vector& u_own) const {
  return base_->step(k, x, joint_controls(x, u_own));
}

void ClosedLoopDynamics::step_jacobians(int k, const Vector& x,
                                        const Vector& u_own, Matrix& dfdx,
                                        Matrix& dfdu) const {
  const Vector u = joint_controls(x, u_own);
  Matrix a, b;
  base_->step_jacobians(k, x, u, a, b);
  dfdx = a;
  for (std::size_t j = 0; j < laws_.size(); ++j) {
    if (static_cast<int>(j) == player_) continue;
    dfdx.noalias() +=
        b.middleCols(offsets_[j], dims_[j]) * laws_[j]->jacobian(x);
  }
  dfdu = b.middleCols(offsets_[player_], dims_[player_]);
}

}  // namespace idg
