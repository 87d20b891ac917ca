#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/integrate.hpp"
#include "hrpinn/nn.hpp"
#include "hrpinn/projection.hpp"
#include "hrpinn/systems.hpp"
#include "hrpinn/tape.hpp"
#include "hrpinn/trajectory.hpp"

namespace hrpinn {

enum class ModelKind { NODE, PNODE, HRPINN, PHRPINN, PINN };
enum class ProjChoice { None, Fast, Robust };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::NODE: return "node";
    case ModelKind::PNODE: return "pnode";
    case ModelKind::HRPINN: return "hrpinn";
    case ModelKind::PHRPINN: return "phrpinn";
    case ModelKind::PINN: return "pinn";
  }
  return "?";
}

inline ModelKind model_kind_from(const std::string& s) {
  if (s == "node") return ModelKind::NODE;
  if (s == "pnode") return ModelKind::PNODE;
  if (s == "hrpinn") return ModelKind::HRPINN;
  if (s == "phrpinn") return ModelKind::PHRPINN;
  if (s == "pinn") return ModelKind::PINN;
  throw ConfigError("unknown model kind '" + s + "'");
}

inline const char* proj_choice_name(ProjChoice p) {
  switch (p) {
    case ProjChoice::None: return "none";
    case ProjChoice::Fast: return "fast";
    case ProjChoice::Robust: return "robust";
  }
  return "?";
}

inline ProjChoice proj_choice_from(const std::string& s) {
  if (s == "none") return ProjChoice::None;
  if (s == "fast") return ProjChoice::Fast;
  if (s == "robust") return ProjChoice::Robust;
  throw ConfigError("unknown projection mode '" + s + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::HRPINN;
  ProjChoice projection = ProjChoice::None;
  double soft_weight = 0.0;  // lambda_c, soft constraint penalty weight
  Integrator integrator = Integrator::RK4;
  double dt = 0.01;
  std::size_t steps = 1000;
  std::vector<std::size_t> net_layers;       // dynamics net, or PINN trajectory net
  std::vector<std::size_t> residual_layers;  // PINN unknown-dynamics net
  double lambda_diff = 1.0;                  // PINN differential-residual weight
  double lambda_alg = 1.0;                   // PINN algebraic-residual weight
  double projection_tol = 1e-10;
  int projection_max_iter = 50;

  bool uses_projection() const { return kind == ModelKind::PNODE || kind == ModelKind::PHRPINN; }
  bool uses_prior() const { return kind == ModelKind::HRPINN || kind == ModelKind::PHRPINN; }

  void validate(const System& sys) const {
    std::string faults;
    if (uses_projection() && projection == ProjChoice::None)
      faults += "  projected models require projection_mode fast|robust\n";
    if (!uses_projection() && kind != ModelKind::PINN && projection != ProjChoice::None)
      faults += "  unprojected models require projection_mode none\n";
    if (soft_weight < 0.0) faults += "  soft constraint weight must be >= 0\n";
    if (dt <= 0.0) faults += "  dt must be positive\n";
    if (steps == 0) faults += "  horizon must be at least one step\n";
    if (net_layers.size() < 2) faults += "  network needs input and output layers\n";
    if (kind == ModelKind::PINN) {
      if (!net_layers.empty() && net_layers.front() != 1)
        faults += "  pinn trajectory network input must be scalar time\n";
      if (residual_layers.size() < 2) faults += "  pinn needs a residual network\n";
      if (!residual_layers.empty() &&
          (residual_layers.front() != sys.state_dim() ||
           residual_layers.back() != sys.state_dim()))
        faults += "  pinn residual network must map state to state\n";
    } else if (!net_layers.empty() && (net_layers.front() != sys.state_dim() ||
                                       net_layers.back() != sys.state_dim())) {
      faults += "  dynamics network must map state to state\n";
    }
    if (!faults.empty()) throw ConfigError("invalid model config:\n" + faults);
  }
};

struct ModelParams {
  MlpParams net;
  MlpParams residual_net;  // PINN only

  std::vector<Tensor*> tensors(ModelKind kind) {
    std::vector<Tensor*> out = net.tensors();
    if (kind == ModelKind::PINN)
      for (Tensor* t : residual_net.tensors()) out.push_back(t);
    return out;
  }
};

inline ModelParams init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  p.net = mlp_init(cfg.net_layers, seed);
  if (cfg.kind == ModelKind::PINN) p.residual_net = mlp_init(cfg.residual_layers, seed * 2 + 1);
  return p;
}

struct ModelVars {
  MlpVars net;
  MlpVars residual_net;
};

inline ModelVars model_leaves(Tape& tape, const ModelParams& p, ModelKind kind) {
  ModelVars v;
  v.net = mlp_leaves(tape, p.net);
  if (kind == ModelKind::PINN) v.residual_net = mlp_leaves(tape, p.residual_net);
  return v;
}

struct RolloutResult {
  std::vector<Var> states;                    // h_0 ... h_K
  std::vector<double> violations;             // |g(h_k, t_k)|_inf, NaN out of domain
  std::vector<ProjectionResult> projections;  // per-step diagnostics when projecting
};

// Residual-dynamics hook: builds f_hat(x, t) on the tape. The default
// model closure evaluates the network on the state; tests substitute
// oracles here.
using ResidualFn = std::function<Var(Tape&, Var, double)>;

inline ResidualFn network_residual(const MlpVars& vars) {
  return [vars](Tape& tape, Var x, double) { return mlp_forward(tape, vars, x); };
}

// Unrolled recurrent cell shared by the whole zoo: one integrator step
// of (prior + residual network) per grid point, followed by a manifold
// projection for the projected kinds. Everything lands on the tape so
// the loss can be backpropagated through time.
inline RolloutResult rollout(Tape& tape, std::shared_ptr<const System> sys,
                             const ModelConfig& cfg, const ResidualFn& residual, Var x0) {
  if (tape.value(x0).size() != sys->state_dim())
    throw StructuralError("rollout x0 dimension mismatch");
  RolloutResult out;
  out.states.reserve(cfg.steps + 1);
  out.states.push_back(x0);

  const bool has_input = sys->input_dim() > 0;
  auto dyn = [&](Tape& tp, Var x, double t) -> Var {
    Var res = residual(tp, x, t);
    Var prior;
    if (cfg.uses_prior()) {
      std::vector<double> w = has_input ? sys->input_at(t) : std::vector<double>{};
      prior = sys->dynamics_tape(tp, Part::Prior, x, t, w.empty() ? nullptr : w.data());
    } else {
      prior = tp.constant(Tensor({sys->state_dim()}));
    }
    return tp.add(prior, res);
  };

  auto record_violation = [&](Var h, double t) {
    std::vector<double> g(sys->constraint_dim());
    try {
      sys->constraint(tape.value(h).data(), t, g.data());
      double v = 0.0;
      for (double gi : g) v = std::max(v, std::abs(gi));
      out.violations.push_back(v);
    } catch (const DomainError&) {
      out.violations.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  };
  record_violation(x0, 0.0);

  Var h = x0;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    try {
      h = step_tape(cfg.integrator, tape, dyn, h, t, cfg.dt);
      if (cfg.uses_projection()) {
        ProjectionResult diag;
        h = project_on_tape(tape, h, sys->constraint_at(t + cfg.dt),
                            cfg.projection == ProjChoice::Fast ? ProjectionMode::Fast
                                                               : ProjectionMode::Robust,
                            cfg.projection_tol, cfg.projection_max_iter, &diag);
        out.projections.push_back(std::move(diag));
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("rollout diverged at step " + std::to_string(k + 1) + ": " + e.what(),
                            static_cast<long>(k + 1));
    }
    out.states.push_back(h);
    record_violation(h, t + cfg.dt);
  }
  return out;
}

inline Trajectory rollout_trajectory(const Tape& tape, const RolloutResult& r, double dt) {
  Trajectory traj;
  traj.t0 = 0.0;
  traj.dt = dt;
  for (Var v : r.states) {
    const Tensor& x = tape.value(v);
    traj.states.emplace_back(x.data(), x.data() + x.size());
  }
  return traj;
}

// Mean squared error of selected rollout states against observations.
// `observed` lists grid indices carrying data; empty means every point.
inline Var trajectory_mse(Tape& tape, const std::vector<Var>& states, const Trajectory& data,
                          const std::vector<std::size_t>& observed = {}) {
  if (states.size() != data.states.size())
    throw StructuralError("rollout/data horizon mismatch");
  std::vector<std::size_t> idx = observed;
  if (idx.empty())
    for (std::size_t k = 0; k < states.size(); ++k) idx.push_back(k);
  Var acc = tape.constant(0.0);
  std::size_t count = 0;
  for (std::size_t k : idx) {
    Var diff = tape.sub(states[k], tape.constant(Tensor::vector(data.states[k])));
    acc = tape.add(acc, tape.sum(tape.square(diff)));
    count += data.states[k].size();
  }
  return tape.scale(acc, 1.0 / static_cast<double>(count));
}

// lambda_c * mean over steps of |g(h_k, t_k)|^2, recorded on the tape.
inline Var soft_constraint_penalty(Tape& tape, const System& sys, const std::vector<Var>& states,
                                   double dt, double lambda_c) {
  if (lambda_c < 0.0) throw StructuralError("soft constraint weight must be >= 0");
  Var acc = tape.constant(0.0);
  for (std::size_t k = 0; k < states.size(); ++k) {
    Var g = sys.constraint_tape(tape, states[k], static_cast<double>(k) * dt);
    acc = tape.add(acc, tape.sum(tape.square(g)));
  }
  return tape.scale(acc, lambda_c / static_cast<double>(states.size()));
}

// PINN trajectory network evaluated at scalar time t.
inline Var pinn_trajectory(Tape& tape, const MlpVars& traj_net, double t) {
  return mlp_forward(tape, traj_net, tape.constant(Tensor::vector({t})));
}

// Composite PINN loss: data MSE + lambda_diff * mean |dx/dt - f_phys -
// f_unk|^2 + lambda_alg * mean |g(x)|^2 over the collocation points. The
// time derivative of the trajectory network is recorded on the same tape
// via tangent propagation, so gradients flow to both networks.
inline Var pinn_loss(Tape& tape, std::shared_ptr<const System> sys, const ModelConfig& cfg,
                     const ModelVars& vars, const Trajectory& data,
                     const std::vector<std::size_t>& observed = {},
                     const std::vector<double>& collocation = {}) {
  // L_data
  std::vector<std::size_t> idx = observed;
  if (idx.empty())
    for (std::size_t k = 0; k < data.states.size(); ++k) idx.push_back(k);
  Var acc = tape.constant(0.0);
  std::size_t count = 0;
  for (std::size_t k : idx) {
    Var xhat = pinn_trajectory(tape, vars.net, data.time(k));
    Var diff = tape.sub(xhat, tape.constant(Tensor::vector(data.states[k])));
    acc = tape.add(acc, tape.sum(tape.square(diff)));
    count += data.states[k].size();
  }
  Var loss = tape.scale(acc, 1.0 / static_cast<double>(count));

  // Collocation grid defaults to the training grid itself.
  std::vector<double> ts = collocation;
  if (ts.empty())
    for (std::size_t k = 0; k < data.states.size(); ++k) ts.push_back(data.time(k));

  const bool has_input = sys->input_dim() > 0;
  if (cfg.lambda_diff > 0.0) {
    Var diff_acc = tape.constant(0.0);
    for (double t : ts) {
      auto [xhat, dxdt] =
          mlp_forward_with_input_tangent(tape, vars.net, tape.constant(Tensor::vector({t})));
      std::vector<double> w = has_input ? sys->input_at(t) : std::vector<double>{};
      Var fphys = sys->dynamics_tape(tape, Part::Prior, xhat, t, w.empty() ? nullptr : w.data());
      Var funk = mlp_forward(tape, vars.residual_net, xhat);
      Var resid = tape.sub(dxdt, tape.add(fphys, funk));
      diff_acc = tape.add(diff_acc, tape.sum(tape.square(resid)));
    }
    loss = tape.add(loss, tape.scale(diff_acc, cfg.lambda_diff / static_cast<double>(ts.size())));
  }
  if (cfg.lambda_alg > 0.0) {
    Var alg_acc = tape.constant(0.0);
    for (double t : ts) {
      Var xhat = pinn_trajectory(tape, vars.net, t);
      Var g = sys->constraint_tape(tape, xhat, t);
      alg_acc = tape.add(alg_acc, tape.sum(tape.square(g)));
    }
    loss = tape.add(loss, tape.scale(alg_acc, cfg.lambda_alg / static_cast<double>(ts.size())));
  }
  return loss;
}

// Model loss on the tape, dispatching on kind; returns the loss Var and,
// for recurrent kinds, the rollout for diagnostics.
inline std::pair<Var, RolloutResult> model_loss(Tape& tape, std::shared_ptr<const System> sys,
                                                const ModelConfig& cfg, const ModelVars& vars,
                                                const Trajectory& data,
                                                const std::vector<std::size_t>& observed = {}) {
  if (cfg.kind == ModelKind::PINN)
    return {pinn_loss(tape, sys, cfg, vars, data, observed), RolloutResult{}};
  Var x0 = tape.constant(Tensor::vector(data.states.front()));
  RolloutResult r = rollout(tape, sys, cfg, network_residual(vars.net), x0);
  Var loss = trajectory_mse(tape, r.states, data, observed);
  if (cfg.soft_weight > 0.0)
    loss = tape.add(loss, soft_constraint_penalty(tape, *sys, r.states, cfg.dt, cfg.soft_weight));
  return {loss, std::move(r)};
}

// Deterministic prediction over a grid: recurrent kinds unroll the cell,
// the PINN evaluates its trajectory network.
inline Trajectory predict(std::shared_ptr<const System> sys, const ModelConfig& cfg,
                          const ModelParams& params, const std::vector<double>& x0,
                          std::size_t steps) {
  Tape tape;
  Trajectory out;
  out.t0 = 0.0;
  out.dt = cfg.dt;
  if (cfg.kind == ModelKind::PINN) {
    MlpVars net = mlp_constants(tape, params.net);
    for (std::size_t k = 0; k <= steps; ++k) {
      Var x = pinn_trajectory(tape, net, static_cast<double>(k) * cfg.dt);
      const Tensor& v = tape.value(x);
      out.states.emplace_back(v.data(), v.data() + v.size());
    }
    return out;
  }
  ModelConfig run = cfg;
  run.steps = steps;
  MlpVars net = mlp_constants(tape, params.net);
  RolloutResult r = rollout(tape, sys, run, network_residual(net),
                            tape.constant(Tensor::vector(x0)));
  return rollout_trajectory(tape, r, cfg.dt);
}

}  // namespace hrpinn
