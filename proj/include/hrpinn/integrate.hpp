#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/projection.hpp"
#include "hrpinn/systems.hpp"
#include "hrpinn/tape.hpp"
#include "hrpinn/trajectory.hpp"

namespace hrpinn {

enum class Integrator { Euler, RK4 };

inline const char* integrator_name(Integrator i) {
  return i == Integrator::Euler ? "euler" : "rk4";
}

namespace detail {
inline void check_step_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DivergenceError(std::string("non-finite ") + what);
}
}  // namespace detail

// Forward Euler step x + dt f(x, t). F: (const std::vector<double>&, double) -> std::vector<double>.
template <class F>
std::vector<double> step_euler(F&& f, const std::vector<double>& x, double t, double dt) {
  if (dt <= 0.0) throw StructuralError("step size must be positive");
  std::vector<double> k = f(x, t);
  detail::check_step_finite(k, "dynamics in euler step");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + dt * k[i];
  return out;
}

// Classical 4-stage Runge-Kutta step.
template <class F>
std::vector<double> step_rk4(F&& f, const std::vector<double>& x, double t, double dt) {
  if (dt <= 0.0) throw StructuralError("step size must be positive");
  const std::size_t n = x.size();
  std::vector<double> k1 = f(x, t);
  detail::check_step_finite(k1, "dynamics in rk4 stage 1");
  std::vector<double> x2(n);
  for (std::size_t i = 0; i < n; ++i) x2[i] = x[i] + 0.5 * dt * k1[i];
  std::vector<double> k2 = f(x2, t + 0.5 * dt);
  detail::check_step_finite(k2, "dynamics in rk4 stage 2");
  std::vector<double> x3(n);
  for (std::size_t i = 0; i < n; ++i) x3[i] = x[i] + 0.5 * dt * k2[i];
  std::vector<double> k3 = f(x3, t + 0.5 * dt);
  detail::check_step_finite(k3, "dynamics in rk4 stage 3");
  std::vector<double> x4(n);
  for (std::size_t i = 0; i < n; ++i) x4[i] = x[i] + dt * k3[i];
  std::vector<double> k4 = f(x4, t + dt);
  detail::check_step_finite(k4, "dynamics in rk4 stage 4");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

template <class F>
std::vector<double> step(Integrator kind, F&& f, const std::vector<double>& x, double t,
                         double dt) {
  return kind == Integrator::Euler ? step_euler(f, x, t, dt) : step_rk4(f, x, t, dt);
}

// Tape-recorded counterparts. F: (Tape&, Var x, double t) -> Var dx.
template <class F>
Var step_euler_tape(Tape& tape, F&& f, Var x, double t, double dt) {
  return tape.add(x, tape.scale(f(tape, x, t), dt));
}

template <class F>
Var step_rk4_tape(Tape& tape, F&& f, Var x, double t, double dt) {
  Var k1 = f(tape, x, t);
  Var x2 = tape.add(x, tape.scale(k1, 0.5 * dt));
  Var k2 = f(tape, x2, t + 0.5 * dt);
  Var x3 = tape.add(x, tape.scale(k2, 0.5 * dt));
  Var k3 = f(tape, x3, t + 0.5 * dt);
  Var x4 = tape.add(x, tape.scale(k3, dt));
  Var k4 = f(tape, x4, t + dt);
  Var acc = tape.add(tape.add(k1, k4), tape.scale(tape.add(k2, k3), 2.0));
  return tape.add(x, tape.scale(acc, dt / 6.0));
}

template <class F>
Var step_tape(Integrator kind, Tape& tape, F&& f, Var x, double t, double dt) {
  return kind == Integrator::Euler ? step_euler_tape(tape, f, x, t, dt)
                                   : step_rk4_tape(tape, f, x, t, dt);
}

// Ground-truth trajectory for a benchmark system. With `projected` the
// state is re-projected onto the constraint manifold after every step so
// the reference satisfies |g|_inf <= tol throughout.
inline Trajectory generate_reference(std::shared_ptr<const System> sys, std::vector<double> x0,
                                     double dt, std::size_t K, bool projected,
                                     double tol = 1e-12, Integrator integ = Integrator::RK4) {
  if (x0.size() != sys->state_dim()) throw StructuralError("x0 dimension mismatch");
  Trajectory traj;
  traj.t0 = 0.0;
  traj.dt = dt;
  const bool has_input = sys->input_dim() > 0;
  auto f = [&](const std::vector<double>& x, double t) {
    std::vector<double> w = sys->input_at(t);
    std::vector<double> out(sys->state_dim());
    sys->dynamics(Part::Full, x.data(), t, w.empty() ? nullptr : w.data(), out.data());
    return out;
  };

  std::vector<double> x = std::move(x0);
  traj.states.push_back(x);
  if (has_input) traj.inputs.push_back(sys->input_at(0.0));
  for (std::size_t k = 0; k < K; ++k) {
    const double t = static_cast<double>(k) * dt;
    try {
      x = step(integ, f, x, t, dt);
      if (projected) {
        auto c = sys->constraint_at(t + dt);
        ProjectionResult res = project_robust(*c, Tensor::vector(x), tol);
        x.assign(res.x_star.data(), res.x_star.data() + res.x_star.size());
      }
    } catch (const NonConvergenceError& e) {
      throw NonConvergenceError("reference projection failed at step " + std::to_string(k + 1) +
                                    ": " + e.what(),
                                e.final_residual);
    } catch (const DivergenceError& e) {
      throw DivergenceError(
          "reference generation diverged at step " + std::to_string(k + 1) + ": " + e.what(),
          static_cast<long>(k + 1));
    }
    traj.states.push_back(x);
    if (has_input) traj.inputs.push_back(sys->input_at(static_cast<double>(k + 1) * dt));
  }
  return traj;
}

}  // namespace hrpinn
