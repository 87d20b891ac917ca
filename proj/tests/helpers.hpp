#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "hrpinn/models.hpp"
#include "hrpinn/systems.hpp"
#include "hrpinn/train.hpp"

namespace hrpinn::testing {

// Decorator that blanks the physics prior and moves the full dynamics
// into the residual target; used for the architectural-identity checks
// (a grey-box cell with a zero prior must collapse to its black-box
// counterpart).
class ZeroPriorSystem final : public System {
 public:
  explicit ZeroPriorSystem(std::shared_ptr<System> inner) : inner_(std::move(inner)) {}

  const char* name() const override { return inner_->name(); }
  std::size_t state_dim() const override { return inner_->state_dim(); }
  std::size_t input_dim() const override { return inner_->input_dim(); }
  std::size_t constraint_dim() const override { return inner_->constraint_dim(); }
  std::vector<double> initial_state() const override { return inner_->initial_state(); }
  std::vector<double> input_at(double t) const override { return inner_->input_at(t); }

  void dynamics(Part part, const double* x, double t, const double* w,
                double* out) const override {
    if (part == Part::Prior) {
      for (std::size_t i = 0; i < state_dim(); ++i) out[i] = 0.0;
      return;
    }
    inner_->dynamics(Part::Full, x, t, w, out);
  }

  Var dynamics_tape(Tape& tape, Part part, Var x, double t, const double* w) const override {
    if (part == Part::Prior) {
      std::vector<Var> zeros(state_dim());
      for (auto& z : zeros) z = tape.constant(0.0);
      return tape.concat(zeros);
    }
    return inner_->dynamics_tape(tape, Part::Full, x, t, w);
  }

  void constraint(const double* x, double t, double* g) const override {
    inner_->constraint(x, t, g);
  }
  Var constraint_tape(Tape& tape, Var x, double t) const override {
    return inner_->constraint_tape(tape, x, t);
  }
  void constraint_jacobian(const double* x, double t, double* G) const override {
    inner_->constraint_jacobian(x, t, G);
  }
  void constraint_hessian(const double* x, double t, std::size_t i, double* H) const override {
    inner_->constraint_hessian(x, t, i, H);
  }

 private:
  std::shared_ptr<System> inner_;
};

// BPTT gradient of a model loss against the central-difference oracle;
// returns |g_ad - g_fd|_inf / (|g_ad|_inf + 1e-12) over all parameters.
inline double model_gradient_fd_error(std::shared_ptr<const System> sys, const ModelConfig& cfg,
                                      ModelParams params, const Trajectory& data,
                                      double h = 1e-5) {
  std::vector<double> g_ad;
  {
    Tape tape;
    ModelVars vars = model_leaves(tape, params, cfg.kind);
    auto [loss, roll] = model_loss(tape, sys, cfg, vars, data);
    tape.backward(loss, Tensor::scalar(1.0));
    auto collect = [&](const MlpVars& mv) {
      for (std::size_t l = 0; l < mv.weights.size(); ++l) {
        for (double v : tape.grad(mv.weights[l]).values()) g_ad.push_back(v);
        for (double v : tape.grad(mv.biases[l]).values()) g_ad.push_back(v);
      }
    };
    collect(vars.net);
    if (cfg.kind == ModelKind::PINN) collect(vars.residual_net);
  }

  auto loss_at = [&](const ModelParams& p) {
    Tape tape;
    ModelVars vars;
    vars.net = mlp_constants(tape, p.net);
    if (cfg.kind == ModelKind::PINN) vars.residual_net = mlp_constants(tape, p.residual_net);
    auto [loss, roll] = model_loss(tape, sys, cfg, vars, data);
    return tape.value(loss)[0];
  };

  std::vector<Tensor*> slots = params.tensors(cfg.kind);
  double worst_abs = 0.0, scale = 1e-12;
  std::size_t flat = 0;
  for (Tensor* slot : slots)
    for (std::size_t i = 0; i < slot->size(); ++i, ++flat) {
      const double keep = (*slot)[i];
      (*slot)[i] = keep + h;
      const double fp = loss_at(params);
      (*slot)[i] = keep - h;
      const double fm = loss_at(params);
      (*slot)[i] = keep;
      const double cd = (fp - fm) / (2.0 * h);
      worst_abs = std::max(worst_abs, std::abs(cd - g_ad[flat]));
      scale = std::max(scale, std::abs(g_ad[flat]));
    }
  return worst_abs / scale;
}

}  // namespace hrpinn::testing
