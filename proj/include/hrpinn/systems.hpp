#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/projection.hpp"
#include "hrpinn/tape.hpp"

namespace hrpinn {

// Scalar evaluation contexts. System dynamics and invariants are written
// once against this interface and run either on plain doubles (data
// generation, oracles) or on a Tape (model rollouts, penalties).
struct ValueCtx {
  using V = double;
  V konst(double c) const { return c; }
  V add(V a, V b) const { return a + b; }
  V sub(V a, V b) const { return a - b; }
  V mul(V a, V b) const { return a * b; }
  V div(V a, V b) const { return a / b; }
  V neg(V a) const { return -a; }
  V square(V a) const { return a * a; }
  V sqrt(V a) const { return std::sqrt(a); }
  V log(V a) const { return std::log(a); }
  V sin(V a) const { return std::sin(a); }
  V cos(V a) const { return std::cos(a); }
  V asinh(V a) const { return std::asinh(a); }
  V recip(V a) const { return 1.0 / a; }
  double peek(V a) const { return a; }
};

struct TapeCtx {
  Tape& tape;
  using V = Var;
  V konst(double c) const { return tape.constant(c); }
  V add(V a, V b) const { return tape.add(a, b); }
  V sub(V a, V b) const { return tape.sub(a, b); }
  V mul(V a, V b) const { return tape.mul(a, b); }
  V div(V a, V b) const { return tape.mul(a, tape.reciprocal(b)); }
  V neg(V a) const { return tape.neg(a); }
  V square(V a) const { return tape.square(a); }
  V sqrt(V a) const { return tape.sqrt(a); }
  V log(V a) const { return tape.log(a); }
  V sin(V a) const { return tape.sin(a); }
  V cos(V a) const { return tape.cos(a); }
  V asinh(V a) const { return tape.asinh(a); }
  V recip(V a) const { return tape.reciprocal(a); }
  double peek(V a) const { return tape.value(a)[0]; }
};

enum class Part { Full, Prior, Residual };

// A benchmark dynamical system: full dynamics, physics-prior/residual
// split, algebraic invariants with calibrated offsets, and analytic
// constraint Jacobians/Hessians.
class System : public std::enable_shared_from_this<System> {
 public:
  virtual ~System() = default;

  virtual const char* name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t input_dim() const { return 0; }
  virtual std::size_t constraint_dim() const = 0;
  virtual std::vector<double> initial_state() const = 0;
  virtual std::vector<double> input_at(double) const { return {}; }

  virtual double default_dt() const { return 0.01; }
  virtual std::size_t default_steps() const { return 1000; }

  virtual void dynamics(Part part, const double* x, double t, const double* w,
                        double* out) const = 0;
  virtual Var dynamics_tape(Tape& tape, Part part, Var x, double t, const double* w) const = 0;

  // Offset-corrected invariants g(x,t); zero on the manifold.
  virtual void constraint(const double* x, double t, double* g) const = 0;
  virtual Var constraint_tape(Tape& tape, Var x, double t) const = 0;
  virtual void constraint_jacobian(const double* x, double t, double* G) const = 0;
  virtual void constraint_hessian(const double* x, double t, std::size_t i, double* H) const = 0;

  // The invariant set at a fixed time, packaged for the projection layer.
  std::shared_ptr<const Constraint> constraint_at(double t) const;
};

namespace detail {

struct BoundConstraint final : Constraint {
  std::shared_ptr<const System> sys;
  double t;
  BoundConstraint(std::shared_ptr<const System> s, double time) : sys(std::move(s)), t(time) {}
  std::size_t state_dim() const override { return sys->state_dim(); }
  std::size_t constraint_dim() const override { return sys->constraint_dim(); }
  void eval(const double* x, double* g) const override { sys->constraint(x, t, g); }
  void jacobian(const double* x, double* G) const override {
    sys->constraint_jacobian(x, t, G);
  }
  void hessian(const double* x, std::size_t i, double* H) const override {
    sys->constraint_hessian(x, t, i, H);
  }
};

}  // namespace detail

inline std::shared_ptr<const Constraint> System::constraint_at(double t) const {
  return std::make_shared<detail::BoundConstraint>(shared_from_this(), t);
}

// CRTP glue: concrete systems implement dyn_impl / inv_impl once,
// templated over the evaluation context.
template <class Derived>
class SystemBase : public System {
 public:
  void dynamics(Part part, const double* x, double t, const double* w,
                double* out) const override {
    ValueCtx c;
    derived().dyn_impl(c, part, x, t, w, out);
  }

  Var dynamics_tape(Tape& tape, Part part, Var x, double t, const double* w) const override {
    TapeCtx c{tape};
    const std::size_t n = state_dim(), d = input_dim();
    std::vector<Var> xi(n), wi(d), out(n);
    for (std::size_t i = 0; i < n; ++i) xi[i] = tape.slice(x, i, 1);
    for (std::size_t i = 0; i < d; ++i) wi[i] = tape.constant(w[i]);
    derived().dyn_impl(c, part, xi.data(), t, d ? wi.data() : nullptr, out.data());
    return tape.concat(out);
  }

  void constraint(const double* x, double t, double* g) const override {
    ValueCtx c;
    derived().inv_impl(c, x, t, g);
    for (std::size_t i = 0; i < constraint_dim(); ++i) g[i] -= offsets_[i];
  }

  Var constraint_tape(Tape& tape, Var x, double t) const override {
    TapeCtx c{tape};
    const std::size_t n = state_dim(), m = constraint_dim();
    std::vector<Var> xi(n), gi(m);
    for (std::size_t i = 0; i < n; ++i) xi[i] = tape.slice(x, i, 1);
    derived().inv_impl(c, xi.data(), t, gi.data());
    for (std::size_t i = 0; i < m; ++i) gi[i] = tape.sub(gi[i], tape.constant(offsets_[i]));
    return tape.concat(gi);
  }

 protected:
  // Fix invariant offsets so that g(x0, 0) = 0.
  void calibrate() {
    offsets_.assign(constraint_dim(), 0.0);
    std::vector<double> x0 = initial_state();
    std::vector<double> g(constraint_dim());
    ValueCtx c;
    derived().inv_impl(c, x0.data(), 0.0, g.data());
    offsets_ = g;
  }

  std::vector<double> offsets_;

 private:
  const Derived& derived() const { return static_cast<const Derived&>(*this); }
};

// ---------------------------------------------------------------------------
// Mass-spring: xdot = v, vdot = -x; invariant E = (x^2 + v^2)/2.
// Prior keeps the kinematics (v, 0); the force (0, -x) is the residual.
class MassSpringSystem final : public SystemBase<MassSpringSystem> {
 public:
  MassSpringSystem() { calibrate(); }
  const char* name() const override { return "mass_spring"; }
  std::size_t state_dim() const override { return 2; }
  std::size_t constraint_dim() const override { return 1; }
  std::vector<double> initial_state() const override { return {1.0, 0.0}; }

  template <class C>
  void dyn_impl(C& c, Part part, const typename C::V* x, double, const typename C::V*,
                typename C::V* out) const {
    out[0] = part == Part::Residual ? c.konst(0.0) : x[1];
    out[1] = part == Part::Prior ? c.konst(0.0) : c.neg(x[0]);
  }

  template <class C>
  void inv_impl(C& c, const typename C::V* x, double, typename C::V* g) const {
    g[0] = c.mul(c.konst(0.5), c.add(c.square(x[0]), c.square(x[1])));
  }

  void constraint_jacobian(const double* x, double, double* G) const override {
    G[0] = x[0];
    G[1] = x[1];
  }

  void constraint_hessian(const double*, double, std::size_t, double* H) const override {
    H[0] = 1.0;
    H[1] = 0.0;
    H[2] = 0.0;
    H[3] = 1.0;
  }
};

// ---------------------------------------------------------------------------
// Lotka-Volterra with alpha=1.5, beta=1, gamma=3, delta=1; invariant
// V = delta*x - gamma*ln x + beta*y - alpha*ln y. Prior keeps the
// uncoupled terms, the coupling terms are the residual.
class LotkaVolterraSystem final : public SystemBase<LotkaVolterraSystem> {
 public:
  static constexpr double kAlpha = 1.5, kBeta = 1.0, kGamma = 3.0, kDelta = 1.0;
  static constexpr double kDomainGuard = 1e-8;

  LotkaVolterraSystem() { calibrate(); }
  const char* name() const override { return "lotka_volterra"; }
  std::size_t state_dim() const override { return 2; }
  std::size_t constraint_dim() const override { return 1; }
  std::vector<double> initial_state() const override { return {1.0, 1.0}; }

  template <class C>
  void dyn_impl(C& c, Part part, const typename C::V* x, double, const typename C::V*,
                typename C::V* out) const {
    if (part == Part::Prior) {
      out[0] = c.mul(c.konst(kAlpha), x[0]);
      out[1] = c.mul(c.konst(-kGamma), x[1]);
      return;
    }
    auto coupling = c.mul(x[0], x[1]);
    auto res0 = c.mul(c.konst(-kBeta), coupling);
    auto res1 = c.mul(c.konst(kDelta), coupling);
    if (part == Part::Residual) {
      out[0] = res0;
      out[1] = res1;
    } else {
      out[0] = c.add(c.mul(c.konst(kAlpha), x[0]), res0);
      out[1] = c.add(c.mul(c.konst(-kGamma), x[1]), res1);
    }
  }

  // Plain evaluation rejects non-positive populations and clamps the log
  // argument at the domain guard; on a tape the log simply records, and a
  // non-positive population surfaces as a divergence.
  template <class C>
  void inv_impl(C& c, const typename C::V* x, double, typename C::V* g) const {
    if constexpr (std::is_same_v<C, ValueCtx>) {
      check_positive(x);
      const double xs = clamp(x[0]), ys = clamp(x[1]);
      g[0] = (kDelta * xs - kGamma * std::log(xs)) + (kBeta * ys - kAlpha * std::log(ys));
    } else {
      g[0] = c.add(c.sub(c.mul(c.konst(kDelta), x[0]), c.mul(c.konst(kGamma), c.log(x[0]))),
                   c.sub(c.mul(c.konst(kBeta), x[1]), c.mul(c.konst(kAlpha), c.log(x[1]))));
    }
  }

  void constraint_jacobian(const double* x, double, double* G) const override {
    check_positive(x);
    G[0] = kDelta - kGamma / clamp(x[0]);
    G[1] = kBeta - kAlpha / clamp(x[1]);
  }

  void constraint_hessian(const double* x, double, std::size_t, double* H) const override {
    check_positive(x);
    H[0] = kGamma / (clamp(x[0]) * clamp(x[0]));
    H[1] = 0.0;
    H[2] = 0.0;
    H[3] = kAlpha / (clamp(x[1]) * clamp(x[1]));
  }

 private:
  static double clamp(double v) { return v < kDomainGuard ? kDomainGuard : v; }

  static void check_positive(const double* x) {
    if (x[0] <= 0.0 || x[1] <= 0.0)
      throw DomainError("lotka_volterra invariant undefined: log of non-positive population");
  }
};

// ---------------------------------------------------------------------------
// Two-body (Kepler): qdot = p, pdot = -q/|q|^3; invariant is the angular
// momentum L = q1 p2 - q2 p1. Eccentricity-0.6 orbit.
class TwoBodySystem final : public SystemBase<TwoBodySystem> {
 public:
  TwoBodySystem() { calibrate(); }
  const char* name() const override { return "two_body"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t constraint_dim() const override { return 1; }
  std::vector<double> initial_state() const override {
    return {0.4, 0.0, 0.0, std::sqrt((1.0 + 0.6) / (1.0 - 0.6))};
  }

  template <class C>
  void dyn_impl(C& c, Part part, const typename C::V* x, double, const typename C::V*,
                typename C::V* out) const {
    auto zero = c.konst(0.0);
    if (part == Part::Prior) {
      out[0] = x[2];
      out[1] = x[3];
      out[2] = zero;
      out[3] = zero;
      return;
    }
    auto s = c.add(c.square(x[0]), c.square(x[1]));
    auto r = c.sqrt(s);
    if (c.peek(r) < 1e-9)
      throw SingularityError("two_body dynamics at |q| < 1e-9");
    auto inv_r3 = c.recip(c.mul(r, s));
    auto a0 = c.neg(c.mul(x[0], inv_r3));
    auto a1 = c.neg(c.mul(x[1], inv_r3));
    if (part == Part::Residual) {
      out[0] = zero;
      out[1] = zero;
      out[2] = a0;
      out[3] = a1;
    } else {
      out[0] = x[2];
      out[1] = x[3];
      out[2] = c.add(zero, a0);
      out[3] = c.add(zero, a1);
    }
  }

  template <class C>
  void inv_impl(C& c, const typename C::V* x, double, typename C::V* g) const {
    g[0] = c.sub(c.mul(x[0], x[3]), c.mul(x[1], x[2]));
  }

  void constraint_jacobian(const double* x, double, double* G) const override {
    G[0] = x[3];
    G[1] = -x[2];
    G[2] = -x[1];
    G[3] = x[0];
  }

  void constraint_hessian(const double*, double, std::size_t, double* H) const override {
    for (int i = 0; i < 16; ++i) H[i] = 0.0;
    H[0 * 4 + 3] = 1.0;
    H[3 * 4 + 0] = 1.0;
    H[1 * 4 + 2] = -1.0;
    H[2 * 4 + 1] = -1.0;
  }
};

// ---------------------------------------------------------------------------
// Nonlinear spring in the plane: xdot = u, ydot = v,
// udot = -x(x^2+y^2), vdot = -y(x^2+y^2); invariants are the energy
// E = (u^2+v^2)/2 + (x^2+y^2)^2/4 and angular momentum L = x v - y u.
// State order (x, y, u, v).
class NonlinearSpringSystem final : public SystemBase<NonlinearSpringSystem> {
 public:
  NonlinearSpringSystem() { calibrate(); }
  const char* name() const override { return "nonlinear_spring"; }
  std::size_t state_dim() const override { return 4; }
  std::size_t constraint_dim() const override { return 2; }
  // A non-circular orbit: on circular orbits the energy and momentum
  // gradients are parallel and the constraint Jacobian loses rank.
  std::vector<double> initial_state() const override { return {1.0, 0.0, 0.2, 1.1}; }

  template <class C>
  void dyn_impl(C& c, Part part, const typename C::V* x, double, const typename C::V*,
                typename C::V* out) const {
    auto zero = c.konst(0.0);
    if (part == Part::Prior) {
      out[0] = x[2];
      out[1] = x[3];
      out[2] = zero;
      out[3] = zero;
      return;
    }
    auto r2 = c.add(c.square(x[0]), c.square(x[1]));
    auto f0 = c.neg(c.mul(x[0], r2));
    auto f1 = c.neg(c.mul(x[1], r2));
    if (part == Part::Residual) {
      out[0] = zero;
      out[1] = zero;
      out[2] = f0;
      out[3] = f1;
    } else {
      out[0] = x[2];
      out[1] = x[3];
      out[2] = c.add(zero, f0);
      out[3] = c.add(zero, f1);
    }
  }

  template <class C>
  void inv_impl(C& c, const typename C::V* x, double, typename C::V* g) const {
    auto r2 = c.add(c.square(x[0]), c.square(x[1]));
    g[0] = c.add(c.mul(c.konst(0.5), c.add(c.square(x[2]), c.square(x[3]))),
                 c.mul(c.konst(0.25), c.square(r2)));
    g[1] = c.sub(c.mul(x[0], x[3]), c.mul(x[1], x[2]));
  }

  void constraint_jacobian(const double* x, double, double* G) const override {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    G[0] = x[0] * r2;
    G[1] = x[1] * r2;
    G[2] = x[2];
    G[3] = x[3];
    G[4] = x[3];
    G[5] = -x[2];
    G[6] = -x[1];
    G[7] = x[0];
  }

  void constraint_hessian(const double* x, double, std::size_t i, double* H) const override {
    for (int k = 0; k < 16; ++k) H[k] = 0.0;
    if (i == 0) {
      H[0 * 4 + 0] = 3.0 * x[0] * x[0] + x[1] * x[1];
      H[0 * 4 + 1] = 2.0 * x[0] * x[1];
      H[1 * 4 + 0] = 2.0 * x[0] * x[1];
      H[1 * 4 + 1] = x[0] * x[0] + 3.0 * x[1] * x[1];
      H[2 * 4 + 2] = 1.0;
      H[3 * 4 + 3] = 1.0;
    } else {
      H[0 * 4 + 3] = 1.0;
      H[3 * 4 + 0] = 1.0;
      H[1 * 4 + 2] = -1.0;
      H[2 * 4 + 1] = -1.0;
    }
  }
};

// ---------------------------------------------------------------------------
// Planar robot arm: three unit links tracking a prescribed circular
// end-effector path p(t). State is the joint vector theta; the input
// carries pdot(t). The constraint e(theta) - p(t) = 0 is time-varying.
// The full kinematic mapping is the prior; the residual is zero.
class RobotArmSystem final : public SystemBase<RobotArmSystem> {
 public:
  static constexpr int kLinks = 3;
  static constexpr double kRadius = 0.5, kCenterX = 1.5, kCenterY = 0.5;

  RobotArmSystem() { calibrate(); }
  const char* name() const override { return "robot_arm"; }
  std::size_t state_dim() const override { return 3; }
  std::size_t input_dim() const override { return 2; }
  std::size_t constraint_dim() const override { return 2; }

  // Elbow configuration reaching p(0) in closed form.
  std::vector<double> initial_state() const override {
    const double px = kCenterX + kRadius, py = kCenterY;
    const double r = std::hypot(px, py);
    const double phi = std::atan2(py, px);
    const double psi = std::acos((r - 1.0) / 2.0);
    return {phi + psi, -psi, -psi};
  }

  static std::vector<double> path(double t) {
    return {kCenterX + kRadius * std::cos(t), kCenterY + kRadius * std::sin(t)};
  }

  std::vector<double> input_at(double t) const override {
    return {-kRadius * std::sin(t), kRadius * std::cos(t)};
  }

  template <class C>
  void dyn_impl(C& c, Part part, const typename C::V* x, double, const typename C::V* w,
                typename C::V* out) const {
    if (part == Part::Residual) {
      for (int i = 0; i < kLinks; ++i) out[i] = c.konst(0.0);
      return;
    }
    if (!w) throw StructuralError("robot_arm dynamics require the input pdot(t)");
    // Jacobian rows of e(theta): J[0][j] = -sum_{i>=j} sin(Theta_i),
    // J[1][j] = sum_{i>=j} cos(Theta_i) with cumulative angles Theta_i.
    typename C::V cum[kLinks], sins[kLinks], coss[kLinks];
    cum[0] = x[0];
    for (int i = 1; i < kLinks; ++i) cum[i] = c.add(cum[i - 1], x[i]);
    for (int i = 0; i < kLinks; ++i) {
      sins[i] = c.sin(cum[i]);
      coss[i] = c.cos(cum[i]);
    }
    typename C::V j0[kLinks], j1[kLinks];
    for (int j = kLinks - 1; j >= 0; --j) {
      if (j == kLinks - 1) {
        j0[j] = c.neg(sins[j]);
        j1[j] = coss[j];
      } else {
        j0[j] = c.sub(j0[j + 1], sins[j]);
        j1[j] = c.add(j1[j + 1], coss[j]);
      }
    }
    // M = J J^T (2x2), solve M y = pdot, then thetadot = J^T y.
    auto dot3 = [&](typename C::V* a, typename C::V* b) {
      return c.add(c.mul(a[0], b[0]), c.add(c.mul(a[1], b[1]), c.mul(a[2], b[2])));
    };
    auto m00 = dot3(j0, j0);
    auto m01 = dot3(j0, j1);
    auto m11 = dot3(j1, j1);
    auto det = c.sub(c.mul(m00, m11), c.square(m01));
    if (std::abs(c.peek(det)) < 1e-12)
      throw SingularityError("robot_arm at singular e'e'^T");
    auto inv_det = c.recip(det);
    auto y0 = c.mul(inv_det, c.sub(c.mul(m11, w[0]), c.mul(m01, w[1])));
    auto y1 = c.mul(inv_det, c.sub(c.mul(m00, w[1]), c.mul(m01, w[0])));
    for (int j = 0; j < kLinks; ++j) out[j] = c.add(c.mul(j0[j], y0), c.mul(j1[j], y1));
  }

  template <class C>
  void inv_impl(C& c, const typename C::V* x, double t, typename C::V* g) const {
    typename C::V cum = x[0];
    typename C::V ex = c.cos(cum), ey = c.sin(cum);
    for (int i = 1; i < kLinks; ++i) {
      cum = c.add(cum, x[i]);
      ex = c.add(ex, c.cos(cum));
      ey = c.add(ey, c.sin(cum));
    }
    const std::vector<double> p = path(t);
    g[0] = c.sub(ex, c.konst(p[0]));
    g[1] = c.sub(ey, c.konst(p[1]));
  }

  void constraint_jacobian(const double* x, double, double* G) const override {
    double cum[kLinks];
    cum[0] = x[0];
    for (int i = 1; i < kLinks; ++i) cum[i] = cum[i - 1] + x[i];
    for (int j = 0; j < kLinks; ++j) {
      double sx = 0.0, sy = 0.0;
      for (int i = j; i < kLinks; ++i) {
        sx -= std::sin(cum[i]);
        sy += std::cos(cum[i]);
      }
      G[0 * kLinks + j] = sx;
      G[1 * kLinks + j] = sy;
    }
  }

  void constraint_hessian(const double* x, double, std::size_t i, double* H) const override {
    double cum[kLinks];
    cum[0] = x[0];
    for (int k = 1; k < kLinks; ++k) cum[k] = cum[k - 1] + x[k];
    for (int a = 0; a < kLinks; ++a)
      for (int b = 0; b < kLinks; ++b) {
        double s = 0.0;
        for (int k = std::max(a, b); k < kLinks; ++k)
          s += (i == 0) ? -std::cos(cum[k]) : -std::sin(cum[k]);
        H[a * kLinks + b] = s;
      }
  }
};

// ---------------------------------------------------------------------------
// Free rigid body: ydot = y x (I^{-1} y) with I = diag(1,2,3); invariant
// C = |y|^2 / 2. No kinematic separation: the prior is zero and the full
// dynamics are the residual.
class RigidBodySystem final : public SystemBase<RigidBodySystem> {
 public:
  RigidBodySystem() { calibrate(); }
  const char* name() const override { return "rigid_body"; }
  std::size_t state_dim() const override { return 3; }
  std::size_t constraint_dim() const override { return 1; }
  std::vector<double> initial_state() const override {
    return {std::cos(0.1), 0.0, std::sin(0.1)};
  }

  template <class C>
  void dyn_impl(C& c, Part part, const typename C::V* x, double, const typename C::V*,
                typename C::V* out) const {
    if (part == Part::Prior) {
      for (int i = 0; i < 3; ++i) out[i] = c.konst(0.0);
      return;
    }
    typename C::V u0 = x[0];
    typename C::V u1 = c.mul(c.konst(0.5), x[1]);
    typename C::V u2 = c.mul(c.konst(1.0 / 3.0), x[2]);
    out[0] = c.sub(c.mul(x[1], u2), c.mul(x[2], u1));
    out[1] = c.sub(c.mul(x[2], u0), c.mul(x[0], u2));
    out[2] = c.sub(c.mul(x[0], u1), c.mul(x[1], u0));
  }

  template <class C>
  void inv_impl(C& c, const typename C::V* x, double, typename C::V* g) const {
    g[0] = c.mul(c.konst(0.5),
                 c.add(c.square(x[0]), c.add(c.square(x[1]), c.square(x[2]))));
  }

  void constraint_jacobian(const double* x, double, double* G) const override {
    G[0] = x[0];
    G[1] = x[1];
    G[2] = x[2];
  }

  void constraint_hessian(const double*, double, std::size_t, double* H) const override {
    for (int k = 0; k < 9; ++k) H[k] = 0.0;
    H[0] = H[4] = H[8] = 1.0;
  }
};

// ---------------------------------------------------------------------------

inline std::shared_ptr<System> make_system(const std::string& name) {
  if (name == "mass_spring") return std::make_shared<MassSpringSystem>();
  if (name == "lotka_volterra") return std::make_shared<LotkaVolterraSystem>();
  if (name == "two_body") return std::make_shared<TwoBodySystem>();
  if (name == "nonlinear_spring") return std::make_shared<NonlinearSpringSystem>();
  if (name == "robot_arm") return std::make_shared<RobotArmSystem>();
  if (name == "rigid_body") return std::make_shared<RigidBodySystem>();
  throw ConfigError("unknown system '" + name + "'");
}

inline std::vector<std::string> system_names() {
  return {"mass_spring", "lotka_volterra", "two_body",
          "nonlinear_spring", "robot_arm", "rigid_body"};
}

// ---------------------------------------------------------------------------
// Spec'd operation surface.

inline std::vector<double> eval_full(const System& s, const std::vector<double>& x, double t,
                                     const std::vector<double>& w = {}) {
  if (x.size() != s.state_dim()) throw StructuralError("state dimension mismatch");
  std::vector<double> out(s.state_dim());
  s.dynamics(Part::Full, x.data(), t, w.empty() ? nullptr : w.data(), out.data());
  return out;
}

inline std::vector<double> eval_prior(const System& s, const std::vector<double>& x, double t,
                                      const std::vector<double>& w = {}) {
  if (x.size() != s.state_dim()) throw StructuralError("state dimension mismatch");
  std::vector<double> out(s.state_dim());
  s.dynamics(Part::Prior, x.data(), t, w.empty() ? nullptr : w.data(), out.data());
  return out;
}

inline std::vector<double> eval_residual_target(const System& s, const std::vector<double>& x,
                                                double t, const std::vector<double>& w = {}) {
  if (x.size() != s.state_dim()) throw StructuralError("state dimension mismatch");
  std::vector<double> out(s.state_dim());
  s.dynamics(Part::Residual, x.data(), t, w.empty() ? nullptr : w.data(), out.data());
  return out;
}

inline std::vector<double> eval_constraint(const System& s, const std::vector<double>& x,
                                           double t) {
  if (x.size() != s.state_dim()) throw StructuralError("state dimension mismatch");
  std::vector<double> g(s.constraint_dim());
  s.constraint(x.data(), t, g.data());
  return g;
}

// Analytic constraint Jacobian; raises ConstraintQualificationError when
// the smallest singular value drops below 1e-10.
inline Tensor eval_constraint_jacobian(const System& s, const std::vector<double>& x, double t) {
  if (x.size() != s.state_dim()) throw StructuralError("state dimension mismatch");
  const std::size_t m = s.constraint_dim(), n = s.state_dim();
  Tensor G({m, n});
  s.constraint_jacobian(x.data(), t, G.data());
  Eigen::Map<const RowMat> Gm(G.data(), static_cast<long>(m), static_cast<long>(n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Gm);
  if (svd.singularValues().minCoeff() < 1e-10)
    throw ConstraintQualificationError(std::string("constraint Jacobian rank deficient for ") +
                                       s.name());
  return G;
}

}  // namespace hrpinn
