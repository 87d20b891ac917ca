#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/models.hpp"
#include "hrpinn/nn.hpp"
#include "hrpinn/tape.hpp"
#include "hrpinn/tensor.hpp"

namespace hrpinn {

// Adam moment state; one slot per parameter tensor.
struct OptimState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline OptimState make_optim_state(const std::vector<Tensor*>& params, double eta) {
  OptimState s;
  s.eta = eta;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

// Bias-corrected Adam update theta <- theta - eta * mhat / (sqrt(vhat) + eps).
inline void adam_step(OptimState& state, const std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw StructuralError("adam_step: parameter/gradient/moment count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(g)) throw StructuralError("adam_step: gradient shape mismatch");
    if (!g.all_finite()) throw DivergenceError("non-finite gradient in adam_step");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= state.eta * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

struct PlateauConfig {
  double factor = 0.5;
  int patience = 10;
  double threshold = 1e-4;  // relative improvement threshold
  double min_eta = 1e-6;
};

struct PlateauState {
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
};

// Halve the learning rate when the best loss has not improved by the
// relative threshold within `patience` epochs; floored at min_eta.
inline double plateau_scheduler(double loss, PlateauState& ps, double eta,
                                const PlateauConfig& cfg) {
  if (loss < ps.best * (1.0 - cfg.threshold)) {
    ps.best = loss;
    ps.stale = 0;
    return eta;
  }
  if (loss < ps.best) ps.best = loss;
  ++ps.stale;
  if (ps.stale >= cfg.patience) {
    ps.stale = 0;
    return std::max(eta * cfg.factor, cfg.min_eta);
  }
  return eta;
}

struct TrainConfig {
  int epochs = 100;  // 100 for the battery study, 500 at paper scale for benchmarks
  double eta0 = 1e-3;
  PlateauConfig plateau;
  double clip_norm = 100.0;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  double loss = 0.0;
  double eta = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> curve;
  bool diverged = false;
  std::string divergence_note;
  double wall_seconds = 0.0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
};

inline double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads)
      for (double& v : g.values()) v *= scale;
  }
  return norm;
}

// Full-batch training of one model on one trajectory. Deterministic per
// seed; a divergence truncates the curve and sets the flag instead of
// aborting.
inline TrainResult train(std::shared_ptr<const System> sys, const ModelConfig& model_cfg,
                         const TrainConfig& train_cfg, const Trajectory& data,
                         const std::vector<std::size_t>& observed = {}) {
  model_cfg.validate(*sys);
  if (model_cfg.kind != ModelKind::PINN) {
    if (data.states.size() != model_cfg.steps + 1)
      throw ConfigError("training data horizon does not match model steps");
    if (std::abs(data.dt - model_cfg.dt) > 1e-12)
      throw ConfigError("training data grid does not match model dt");
  }

  const auto t_start = std::chrono::steady_clock::now();
  TrainResult result;
  result.params = init_model_params(model_cfg, train_cfg.seed);
  OptimState opt = make_optim_state(result.params.tensors(model_cfg.kind), train_cfg.eta0);
  PlateauState plateau;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto e_start = std::chrono::steady_clock::now();
    double loss_value;
    std::vector<Tensor> grads;
    try {
      Tape tape;
      ModelVars vars = model_leaves(tape, result.params, model_cfg.kind);
      auto [loss, roll] = model_loss(tape, sys, model_cfg, vars, data, observed);
      loss_value = tape.value(loss)[0];
      tape.backward(loss, Tensor::scalar(1.0));
      auto collect = [&](const MlpVars& mv) {
        for (std::size_t l = 0; l < mv.weights.size(); ++l) {
          grads.push_back(tape.grad(mv.weights[l]));
          grads.push_back(tape.grad(mv.biases[l]));
        }
      };
      collect(vars.net);
      if (model_cfg.kind == ModelKind::PINN) collect(vars.residual_net);
      clip_gradients(grads, train_cfg.clip_norm);
      adam_step(opt, result.params.tensors(model_cfg.kind), grads);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_note = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    } catch (const NonConvergenceError& e) {
      result.diverged = true;
      result.divergence_note =
          std::string("epoch ") + std::to_string(epoch) + ": projection failed: " + e.what();
      break;
    } catch (const DomainError& e) {
      result.diverged = true;
      result.divergence_note = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start).count();
    result.curve.push_back({loss_value, opt.eta, wall});
    opt.eta = plateau_scheduler(loss_value, plateau, opt.eta, train_cfg.plateau);
  }

  if (!result.curve.empty()) result.final_loss = result.curve.back().loss;
  if (result.diverged) result.final_loss = std::numeric_limits<double>::quiet_NaN();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace hrpinn
