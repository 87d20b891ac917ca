#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/integrate.hpp"
#include "hrpinn/nn.hpp"
#include "hrpinn/systems.hpp"
#include "hrpinn/tape.hpp"
#include "hrpinn/trajectory.hpp"

namespace hrpinn {

// Lumped-parameter lithium-ion cell (NASA PCoE parameter set).
struct BatteryParams {
  double q_max = 1.32e4;  // C
  double R = 8.314;       // J/mol/K
  double F = 96487.0;     // C/mol
  double n_e = 1.0;       // electrons transferred
  double D = 7.0e6;       // mol s / C / m^3
  double tau_o = 10.0;    // s
  double alpha = 0.5;
  double R_o = 0.085;  // ohm
  double S_p = 2e-4, S_n = 2e-4;          // m^2
  double k_p = 2e4, k_n = 2e4;            // A/m^2
  double v_s_p = 2e-6, v_s_n = 2e-6;      // m^3
  double v_b_p = 2e-5, v_b_n = 2e-5;      // m^3
  double tau_eta_p = 90.0, tau_eta_n = 90.0;
  double U0_p = 4.03, U0_n = 0.01;  // V
  std::vector<double> A_p = {-33642.23, 0.11,       23506.89,  -74679.26, 14359.34,
                             307849.79, 85053.13,   -1075148.06, 2173.62,   991586.68,
                             283423.47, -163020.34, -470297.35};
  std::vector<double> A_n = {86.19};
  double temperature = 298.0;  // K, exogenous constant

  double eps_rk = 1e-6;  // |2x-1| clamp around the expansion singularity
  double eps_x = 1e-6;   // mole-fraction guard for the Nernst log

  double q_max_s_p() const { return q_max * v_s_p / (v_s_p + v_b_p); }
  double q_max_s_n() const { return q_max * v_s_n / (v_s_n + v_b_n); }

  // Full-charge style default: x_p = 0.4, x_n = 0.6 apportioned between
  // bulk and surface by volume ratio, filter states at zero.
  double x_p0 = 0.4, x_n0 = 0.6;
  std::vector<double> initial_state() const {
    const double fp = v_s_p / (v_s_p + v_b_p), fn = v_s_n / (v_s_n + v_b_n);
    return {x_p0 * q_max * (1.0 - fp), x_p0 * q_max * fp,
            x_n0 * q_max * (1.0 - fn), x_n0 * q_max * fn,
            0.0, 0.0, 0.0};
  }
};

// State layout: [q_b_p, q_s_p, q_b_n, q_s_n, V'_o, V'_eta_p, V'_eta_n].
enum BatteryState : std::size_t {
  kQbp = 0,
  kQsp = 1,
  kQbn = 2,
  kQsn = 3,
  kVoF = 4,
  kVetaPF = 5,
  kVetaNF = 6,
  kBatteryStateDim = 7,
};

struct BatteryDiag {
  bool rk_clamped = false;
};

// Redlich-Kister activity correction, the paper's printed grouping:
//   V_INT = (1/nF) sum_k A_k [ (2x-1)^{k+1} - (k(2x-1)-(x-1)) (2x-1)^{k-1} ].
// The k = 0 term is singular at x = 1/2; |2x-1| is clamped at eps with
// its sign kept and the clamp is surfaced through `diag`.
template <class C>
typename C::V redlich_kister_ctx(C& c, typename C::V x, const std::vector<double>& A, double n_e,
                                 double F, double eps_rk, BatteryDiag* diag) {
  using V = typename C::V;
  V u = c.sub(c.mul(c.konst(2.0), x), c.konst(1.0));
  const double uval = c.peek(u);
  if (std::abs(uval) < eps_rk) {
    u = c.konst(uval >= 0.0 ? eps_rk : -eps_rk);
    if (diag) diag->rk_clamped = true;
  }
  V xm1 = c.sub(x, c.konst(1.0));
  V pk1 = u;                // u^{k+1}
  V pkm1 = c.recip(u);      // u^{k-1}
  V acc = c.konst(0.0);
  for (std::size_t k = 0; k < A.size(); ++k) {
    V coef = c.sub(c.mul(c.konst(static_cast<double>(k)), u), xm1);
    V term = c.sub(pk1, c.mul(coef, pkm1));
    acc = c.add(acc, c.mul(c.konst(A[k]), term));
    if (k + 1 < A.size()) {
      pk1 = c.mul(pk1, u);
      pkm1 = c.mul(pkm1, u);
    }
  }
  return c.mul(c.konst(1.0 / (n_e * F)), acc);
}

inline double redlich_kister(double x, const std::vector<double>& A, double n_e, double F,
                             double eps_rk = 1e-6, BatteryDiag* diag = nullptr) {
  ValueCtx c;
  return redlich_kister_ctx(c, x, A, n_e, F, eps_rk, diag);
}

// Everything the algebraic constraint block determines at one instant.
struct AlgebraicState {
  double V = 0.0;
  double V_U_p = 0.0, V_U_n = 0.0;
  double V_INT_p = 0.0, V_INT_n = 0.0;
  double V_eta_p = 0.0, V_eta_n = 0.0;
  double J_p = 0.0, J_n = 0.0;
  double J0_p = 0.0, J0_n = 0.0;
  double V_o = 0.0;
  double qdot_bs_p = 0.0, qdot_bs_n = 0.0;
  double C_b_p = 0.0, C_s_p = 0.0, C_b_n = 0.0, C_s_n = 0.0;
  double x_p = 0.0, x_n = 0.0, x_s_p = 0.0, x_s_n = 0.0;
  BatteryDiag diag;
};

namespace detail {

template <class C>
void check_fraction(C& c, typename C::V x, const char* name) {
  const double v = c.peek(x);
  if (!(v > 0.0 && v < 1.0))
    throw DomainError(std::string("battery mole fraction ") + name + " = " + std::to_string(v) +
                      " left (0,1)");
}

// Clamp a mole fraction into [eps, 1-eps] for the Nernst log; outside
// the guard band the value is frozen (no gradient w.r.t. the state).
template <class C>
typename C::V nernst_clamp(C& c, typename C::V x, double eps) {
  const double v = c.peek(x);
  if (v < eps) return c.konst(eps);
  if (v > 1.0 - eps) return c.konst(1.0 - eps);
  return x;
}

}  // namespace detail

// Explicit forward cascade through the algebraic block of the cell:
// concentrations -> mole fractions -> current densities -> overpotentials
// (arcsinh form) -> equilibrium potentials (Nernst + activity term) ->
// ohmic drop -> diffusion rates -> terminal voltage. `vint` supplies the
// activity correction per electrode; the reference model plugs in the
// Redlich-Kister expansion, the grey-box cell plugs in its networks.
template <class C>
struct CascadeOut {
  using V = typename C::V;
  V voltage, V_o, V_eta_p, V_eta_n, qdot_bs_p, qdot_bs_n;
};

template <class C, class VintFn>
CascadeOut<C> battery_cascade(C& c, const BatteryParams& P, const typename C::V* x,
                              typename C::V i_app, VintFn&& vint, AlgebraicState* z = nullptr,
                              BatteryDiag* diag = nullptr) {
  using V = typename C::V;
  if (P.alpha != 0.5)
    throw StructuralError("battery cascade assumes the Table value alpha = 0.5");

  V C_b_p = c.mul(x[kQbp], c.konst(1.0 / P.v_b_p));
  V C_s_p = c.mul(x[kQsp], c.konst(1.0 / P.v_s_p));
  V C_b_n = c.mul(x[kQbn], c.konst(1.0 / P.v_b_n));
  V C_s_n = c.mul(x[kQsn], c.konst(1.0 / P.v_s_n));

  V x_p = c.mul(c.add(x[kQbp], x[kQsp]), c.konst(1.0 / P.q_max));
  V x_n = c.mul(c.add(x[kQbn], x[kQsn]), c.konst(1.0 / P.q_max));
  V x_s_p = c.mul(x[kQsp], c.konst(1.0 / P.q_max_s_p()));
  V x_s_n = c.mul(x[kQsn], c.konst(1.0 / P.q_max_s_n()));
  detail::check_fraction(c, x_p, "x_p");
  detail::check_fraction(c, x_n, "x_n");
  detail::check_fraction(c, x_s_p, "x_s_p");
  detail::check_fraction(c, x_s_n, "x_s_n");

  V J_p = c.mul(i_app, c.konst(1.0 / P.S_p));
  V J_n = c.mul(i_app, c.konst(1.0 / P.S_n));
  // J0 = k (1-xs)^alpha xs^(1-alpha); alpha = 0.5 gives k sqrt((1-xs) xs)
  V one = c.konst(1.0);
  V J0_p = c.mul(c.konst(P.k_p), c.sqrt(c.mul(c.sub(one, x_s_p), x_s_p)));
  V J0_n = c.mul(c.konst(P.k_n), c.sqrt(c.mul(c.sub(one, x_s_n), x_s_n)));

  const double vt = 2.0 * P.R * P.temperature / P.F;
  V V_eta_p = c.mul(c.konst(vt), c.asinh(c.mul(J_p, c.recip(c.mul(c.konst(2.0), J0_p)))));
  V V_eta_n = c.mul(c.konst(vt), c.asinh(c.mul(J_n, c.recip(c.mul(c.konst(2.0), J0_n)))));

  const double nernst = P.R * P.temperature / (P.n_e * P.F);
  V xcp = detail::nernst_clamp(c, x_p, P.eps_x);
  V xcn = detail::nernst_clamp(c, x_n, P.eps_x);
  V V_INT_p = vint(c, x_p, /*positive=*/true);
  V V_INT_n = vint(c, x_n, /*positive=*/false);
  V V_U_p = c.add(c.konst(P.U0_p),
                  c.add(c.mul(c.konst(nernst), c.log(c.mul(c.sub(one, xcp), c.recip(xcp)))),
                        V_INT_p));
  V V_U_n = c.add(c.konst(P.U0_n),
                  c.add(c.mul(c.konst(nernst), c.log(c.mul(c.sub(one, xcn), c.recip(xcn)))),
                        V_INT_n));

  V V_o = c.mul(i_app, c.konst(P.R_o));
  V qdot_bs_p = c.mul(c.konst(1.0 / P.D), c.sub(C_b_p, C_s_p));
  V qdot_bs_n = c.mul(c.konst(1.0 / P.D), c.sub(C_b_n, C_s_n));

  // terminal voltage uses the filtered drops carried in the state
  V voltage = c.sub(V_U_p, c.add(V_U_n, c.add(x[kVoF], c.add(x[kVetaPF], x[kVetaNF]))));

  if (z) {
    z->V = c.peek(voltage);
    z->V_U_p = c.peek(V_U_p);
    z->V_U_n = c.peek(V_U_n);
    z->V_INT_p = c.peek(V_INT_p);
    z->V_INT_n = c.peek(V_INT_n);
    z->V_eta_p = c.peek(V_eta_p);
    z->V_eta_n = c.peek(V_eta_n);
    z->J_p = c.peek(J_p);
    z->J_n = c.peek(J_n);
    z->J0_p = c.peek(J0_p);
    z->J0_n = c.peek(J0_n);
    z->V_o = c.peek(V_o);
    z->qdot_bs_p = c.peek(qdot_bs_p);
    z->qdot_bs_n = c.peek(qdot_bs_n);
    z->C_b_p = c.peek(C_b_p);
    z->C_s_p = c.peek(C_s_p);
    z->C_b_n = c.peek(C_b_n);
    z->C_s_n = c.peek(C_s_n);
    z->x_p = c.peek(x_p);
    z->x_n = c.peek(x_n);
    z->x_s_p = c.peek(x_s_p);
    z->x_s_n = c.peek(x_s_n);
    if (diag) z->diag = *diag;
  }
  CascadeOut<C> out;
  out.voltage = voltage;
  out.V_o = V_o;
  out.V_eta_p = V_eta_p;
  out.V_eta_n = V_eta_n;
  out.qdot_bs_p = qdot_bs_p;
  out.qdot_bs_n = qdot_bs_n;
  return out;
}

// Standard activity hook: the Redlich-Kister expansion of each electrode.
struct RedlichKisterVint {
  const BatteryParams* P;
  BatteryDiag* diag = nullptr;
  template <class C>
  typename C::V operator()(C& c, typename C::V x, bool positive) const {
    return redlich_kister_ctx(c, x, positive ? P->A_p : P->A_n, P->n_e, P->F, P->eps_rk, diag);
  }
};

// Solve the algebraic block at (x, i_app). Every constraint is satisfied
// by construction; residuals can be checked with battery_residuals.
inline AlgebraicState solve_algebraic(const std::vector<double>& x, double i_app,
                                      const BatteryParams& P) {
  if (x.size() != kBatteryStateDim) throw StructuralError("battery state must have 7 entries");
  ValueCtx c;
  AlgebraicState z;
  BatteryDiag diag;
  RedlichKisterVint vint{&P, &diag};
  battery_cascade(c, P, x.data(), i_app, vint, &z, &diag);
  return z;
}

// Residuals of every algebraic constraint line given solved values;
// evaluated directly from the constraint equations, not via the cascade
// ordering.
inline std::vector<double> battery_residuals(const std::vector<double>& x,
                                             const AlgebraicState& z, double i_app,
                                             const BatteryParams& P) {
  std::vector<double> r;
  const double nernst = P.R * P.temperature / (P.n_e * P.F);
  r.push_back(z.V - (z.V_U_p - z.V_U_n - x[kVoF] - x[kVetaPF] - x[kVetaNF]));
  r.push_back(z.V_U_p - (P.U0_p + nernst * std::log((1.0 - z.x_p) / z.x_p) + z.V_INT_p));
  r.push_back(z.V_U_n - (P.U0_n + nernst * std::log((1.0 - z.x_n) / z.x_n) + z.V_INT_n));
  r.push_back(z.V_INT_p - redlich_kister(z.x_p, P.A_p, P.n_e, P.F, P.eps_rk));
  r.push_back(z.V_INT_n - redlich_kister(z.x_n, P.A_n, P.n_e, P.F, P.eps_rk));
  const double vt = 2.0 * P.R * P.temperature / P.F;
  r.push_back(z.V_eta_p - vt * std::asinh(z.J_p / (2.0 * z.J0_p)));
  r.push_back(z.V_eta_n - vt * std::asinh(z.J_n / (2.0 * z.J0_n)));
  r.push_back(z.J_p - i_app / P.S_p);
  r.push_back(z.J_n - i_app / P.S_n);
  r.push_back(z.J0_p - P.k_p * std::pow(1.0 - z.x_s_p, P.alpha) * std::pow(z.x_s_p, 1.0 - P.alpha));
  r.push_back(z.J0_n - P.k_n * std::pow(1.0 - z.x_s_n, P.alpha) * std::pow(z.x_s_n, 1.0 - P.alpha));
  r.push_back(z.V_o - i_app * P.R_o);
  r.push_back(z.qdot_bs_p - (z.C_b_p - z.C_s_p) / P.D);
  r.push_back(z.qdot_bs_n - (z.C_b_n - z.C_s_n) / P.D);
  r.push_back(z.C_b_p - x[kQbp] / P.v_b_p);
  r.push_back(z.C_s_p - x[kQsp] / P.v_s_p);
  r.push_back(z.C_b_n - x[kQbn] / P.v_b_n);
  r.push_back(z.C_s_n - x[kQsn] / P.v_s_n);
  r.push_back(z.x_p - (x[kQbp] + x[kQsp]) / P.q_max);
  r.push_back(z.x_n - (x[kQbn] + x[kQsn]) / P.q_max);
  r.push_back(z.x_s_p - x[kQsp] / P.q_max_s_p());
  r.push_back(z.x_s_n - x[kQsn] / P.q_max_s_n());
  return r;
}

// The seven differential rates of the cell.
inline std::vector<double> battery_derivative(const std::vector<double>& x,
                                              const AlgebraicState& z, double i_app,
                                              const BatteryParams& P) {
  (void)i_app;
  std::vector<double> dx(kBatteryStateDim);
  dx[kQsp] = i_app + z.qdot_bs_p;
  dx[kQbp] = -z.qdot_bs_p;
  dx[kQsn] = -i_app + z.qdot_bs_n;
  dx[kQbn] = -z.qdot_bs_n;
  dx[kVoF] = (z.V_o - x[kVoF]) / P.tau_o;
  dx[kVetaPF] = (z.V_eta_p - x[kVetaPF]) / P.tau_eta_p;
  dx[kVetaNF] = (z.V_eta_n - x[kVetaNF]) / P.tau_eta_n;
  return dx;
}

// One synthetic discharge: observations plus the full latent trajectory.
struct DischargeData {
  std::vector<double> times;
  std::vector<double> current;
  std::vector<double> temperature;
  std::vector<double> voltage;
  Trajectory latent;  // 7-dim ground-truth states
  bool hit_cutoff = false;
  bool domain_truncated = false;
  bool rk_clamped = false;
};

// Integrate the DAE under `current(t)` until the terminal voltage
// reaches `v_cutoff` or the horizon ends. The algebraic block is solved
// at every stage; a domain exit truncates the profile with a flag.
inline DischargeData generate_discharge(const BatteryParams& P,
                                        const std::function<double(double)>& current, double dt,
                                        double v_cutoff, std::size_t max_steps = 200000,
                                        Integrator integ = Integrator::RK4) {
  DischargeData out;
  out.latent.t0 = 0.0;
  out.latent.dt = dt;
  std::vector<double> x = P.initial_state();

  auto f = [&](const std::vector<double>& xs, double t) {
    AlgebraicState z = solve_algebraic(xs, current(t), P);
    if (z.diag.rk_clamped) out.rk_clamped = true;
    return battery_derivative(xs, z, current(t), P);
  };

  for (std::size_t k = 0; k <= max_steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    AlgebraicState z;
    try {
      z = solve_algebraic(x, current(t), P);
    } catch (const DomainError&) {
      out.domain_truncated = true;
      break;
    }
    if (z.diag.rk_clamped) out.rk_clamped = true;
    out.times.push_back(t);
    out.current.push_back(current(t));
    out.temperature.push_back(P.temperature);
    out.voltage.push_back(z.V);
    out.latent.states.push_back(x);
    if (z.V <= v_cutoff) {
      out.hit_cutoff = true;
      break;
    }
    if (k == max_steps) break;
    try {
      x = step(integ, f, x, t, dt);
    } catch (const DomainError&) {
      out.domain_truncated = true;
      break;
    }
  }
  return out;
}

inline void save_discharge_csv(std::ostream& os, const DischargeData& d) {
  os << "t,i_app,T,V\n";
  for (std::size_t k = 0; k < d.times.size(); ++k) {
    detail::put_g17(os, d.times[k]);
    os << ',';
    detail::put_g17(os, d.current[k]);
    os << ',';
    detail::put_g17(os, d.temperature[k]);
    os << ',';
    detail::put_g17(os, d.voltage[k]);
    os << '\n';
  }
}

inline void save_discharge_csv_file(const std::string& path, const DischargeData& d) {
  std::ofstream os(path);
  if (!os) throw StructuralError("cannot open discharge file for writing: " + path);
  save_discharge_csv(os, d);
}

// ---------------------------------------------------------------------------
// Grey-box cell: the cascade with the activity corrections swapped for
// per-electrode hooks (networks, oracles, or zero for the ablation).

using VintTapeFn = std::function<Var(Tape&, Var x_scalar)>;

inline VintTapeFn vint_network(const MlpVars& vars) {
  return [vars](Tape& tape, Var x) { return mlp_forward(tape, vars, x); };
}

inline VintTapeFn vint_true(const BatteryParams& P, bool positive) {
  const std::vector<double>* A = positive ? &P.A_p : &P.A_n;
  const double n_e = P.n_e, F = P.F, eps = P.eps_rk;
  return [A, n_e, F, eps](Tape& tape, Var x) {
    TapeCtx c{tape};
    return redlich_kister_ctx(c, x, *A, n_e, F, eps, nullptr);
  };
}

inline VintTapeFn vint_zero() {
  return [](Tape& tape, Var) { return tape.constant(0.0); };
}

struct BatteryRollout {
  std::vector<Var> states;    // {7} per step
  std::vector<Var> voltages;  // {1} per step
};

// Forward-Euler recurrent cell over the battery DAE with hook-supplied
// activity terms; everything is recorded for BPTT.
inline BatteryRollout battery_rollout(Tape& tape, const BatteryParams& P,
                                      const VintTapeFn& vint_p, const VintTapeFn& vint_n,
                                      const std::vector<double>& x0,
                                      const std::function<double(double)>& current, double dt,
                                      std::size_t steps) {
  if (x0.size() != kBatteryStateDim) throw StructuralError("battery state must have 7 entries");
  BatteryRollout out;
  TapeCtx c{tape};
  auto hook = [&](TapeCtx& ctx, Var x, bool positive) {
    return positive ? vint_p(ctx.tape, x) : vint_n(ctx.tape, x);
  };

  Var h = tape.constant(Tensor::vector(x0));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double i_app = current(t);
    std::vector<Var> xs(kBatteryStateDim);
    for (std::size_t i = 0; i < kBatteryStateDim; ++i) xs[i] = tape.slice(h, i, 1);
    Var iv = tape.constant(i_app);
    auto casc = battery_cascade(c, P, xs.data(), iv, hook);
    out.states.push_back(h);
    out.voltages.push_back(casc.voltage);
    if (k == steps) break;
    // Euler update of the seven rates
    std::vector<Var> dx(kBatteryStateDim);
    dx[kQsp] = tape.add(iv, casc.qdot_bs_p);
    dx[kQbp] = tape.neg(casc.qdot_bs_p);
    dx[kQsn] = tape.add(tape.neg(iv), casc.qdot_bs_n);
    dx[kQbn] = tape.neg(casc.qdot_bs_n);
    dx[kVoF] = tape.scale(tape.sub(casc.V_o, xs[kVoF]), 1.0 / P.tau_o);
    dx[kVetaPF] = tape.scale(tape.sub(casc.V_eta_p, xs[kVetaPF]), 1.0 / P.tau_eta_p);
    dx[kVetaNF] = tape.scale(tape.sub(casc.V_eta_n, xs[kVetaNF]), 1.0 / P.tau_eta_n);
    h = tape.add(h, tape.scale(tape.concat(dx), dt));
  }
  return out;
}

// Voltage predictions of a grey-box cell along a recorded profile.
inline std::vector<double> battery_predict_voltage(const BatteryParams& P,
                                                   const VintTapeFn& vint_p,
                                                   const VintTapeFn& vint_n,
                                                   const DischargeData& profile) {
  Tape tape;
  const double dt = profile.latent.dt;
  auto current = [&](double t) {
    std::size_t k = static_cast<std::size_t>(t / dt + 0.5);
    if (k >= profile.current.size()) k = profile.current.size() - 1;
    return profile.current[k];
  };
  BatteryRollout roll = battery_rollout(tape, P, vint_p, vint_n, profile.latent.states.front(),
                                        current, dt, profile.times.size() - 1);
  std::vector<double> v;
  for (Var x : roll.voltages) v.push_back(tape.value(x)[0]);
  return v;
}

}  // namespace hrpinn
