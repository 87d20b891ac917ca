#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/tape.hpp"
#include "hrpinn/tensor.hpp"

namespace hrpinn {

// Fully connected network, tanh on hidden layers, identity output.
struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Tensor> weights;  // {out,in} per layer
  std::vector<Tensor> biases;   // {out} per layer

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }

  // All trainable tensors in fixed order W0,b0,W1,b1,...
  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
};

inline std::size_t param_count(const MlpParams& p) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l)
    n += p.layer_sizes[l] * p.layer_sizes[l + 1] + p.layer_sizes[l + 1];
  return n;
}

inline std::size_t param_count_for(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

// Glorot-uniform weights, zero biases; bit-reproducible per seed.
inline MlpParams mlp_init(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw StructuralError("mlp needs at least input and output layers");
  for (std::size_t w : layer_sizes)
    if (w == 0) throw StructuralError("mlp layer width must be >= 1");
  MlpParams p;
  p.layer_sizes = layer_sizes;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Tensor w({fan_out, fan_in});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Tensor({fan_out}));
  }
  return p;
}

// Hidden width giving a parameter count within +-tol of `target` for a
// net (in, w, w, ..., out) with `hidden_layers` hidden layers.
inline std::size_t match_hidden_width(std::size_t in, std::size_t out, std::size_t hidden_layers,
                                      std::size_t target, double tol = 0.10) {
  std::size_t best_w = 1;
  double best_gap = 1e300;
  for (std::size_t w = 1; w <= 4096; ++w) {
    std::vector<std::size_t> sizes{in};
    for (std::size_t l = 0; l < hidden_layers; ++l) sizes.push_back(w);
    sizes.push_back(out);
    const double gap =
        std::abs(static_cast<double>(param_count_for(sizes)) - static_cast<double>(target));
    if (gap < best_gap) {
      best_gap = gap;
      best_w = w;
    }
    if (param_count_for(sizes) > target && gap > best_gap) break;
  }
  if (best_gap > tol * static_cast<double>(target) && target > 20)
    throw StructuralError("no hidden width matches parameter target " + std::to_string(target));
  return best_w;
}

// Tape handles for one network's parameters.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline MlpVars mlp_leaves(Tape& tape, const MlpParams& p) {
  MlpVars v;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    v.weights.push_back(tape.leaf(p.weights[l]));
    v.biases.push_back(tape.leaf(p.biases[l]));
  }
  return v;
}

// Parameters as constants: used when a network is evaluated but not trained.
inline MlpVars mlp_constants(Tape& tape, const MlpParams& p) {
  MlpVars v;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    v.weights.push_back(tape.constant(p.weights[l]));
    v.biases.push_back(tape.constant(p.biases[l]));
  }
  return v;
}

inline Var mlp_forward(Tape& tape, const MlpVars& vars, Var input) {
  Var h = input;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    Var z = tape.add(tape.matmul(vars.weights[l], h), vars.biases[l]);
    h = (l + 1 < vars.weights.size()) ? tape.tanh(z) : z;
  }
  return h;
}

// Forward pass together with the derivative of the output with respect
// to the scalar input, both recorded on the tape. The derivative is the
// input-tangent propagated through each layer using first-order
// primitives (tanh'(z) = 1 - tanh(z)^2), so differentiating it with
// respect to the parameters needs no nested tape.
inline std::pair<Var, Var> mlp_forward_with_input_tangent(Tape& tape, const MlpVars& vars,
                                                          Var input) {
  Var h = input;
  Var dh = tape.constant(Tensor({tape.value(input).size()},
                                std::vector<double>(tape.value(input).size(), 1.0)));
  Var one = tape.constant(1.0);
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    Var z = tape.add(tape.matmul(vars.weights[l], h), vars.biases[l]);
    Var dz = tape.matmul(vars.weights[l], dh);
    if (l + 1 < vars.weights.size()) {
      Var y = tape.tanh(z);
      h = y;
      dh = tape.mul(tape.sub(one, tape.square(y)), dz);
    } else {
      h = z;
      dh = dz;
    }
  }
  return {h, dh};
}

// Plain (untaped) evaluation; used by data-side oracles.
inline std::vector<double> mlp_eval(const MlpParams& p, const std::vector<double>& input) {
  std::vector<double> h = input;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Tensor& W = p.weights[l];
    const Tensor& b = p.biases[l];
    std::vector<double> z(W.rows());
    for (std::size_t r = 0; r < W.rows(); ++r) {
      double s = b[r];
      for (std::size_t c = 0; c < W.cols(); ++c) s += W.at(r, c) * h[c];
      z[r] = (l + 1 < p.weights.size()) ? std::tanh(s) : s;
    }
    h = std::move(z);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint format (version 1, byte-stable):
//   hrpinn-mlp v1
//   layers <n0> <n1> ... <nk>
//   <all weights then bias of layer 0, one value per line, %.17g>
//   <layer 1 ...>
// Weights are written row-major.

inline void save_mlp(std::ostream& os, const MlpParams& p) {
  os << "hrpinn-mlp v1\n";
  os << "layers";
  for (std::size_t s : p.layer_sizes) os << ' ' << s;
  os << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << '\n';
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (double v : p.weights[l].values()) put(v);
    for (double v : p.biases[l].values()) put(v);
  }
}

inline MlpParams load_mlp(std::istream& is) {
  std::string magic, ver;
  is >> magic >> ver;
  if (magic != "hrpinn-mlp" || ver != "v1")
    throw StructuralError("not a v1 mlp checkpoint (got '" + magic + " " + ver + "')");
  std::string kw;
  is >> kw;
  if (kw != "layers") throw StructuralError("mlp checkpoint missing layer header");
  std::vector<std::size_t> sizes;
  while (true) {
    if (std::isdigit(is.peek()) || is.peek() == ' ') {
      std::size_t s;
      if (is >> s)
        sizes.push_back(s);
      else
        break;
      if (is.peek() == '\n') break;
    } else
      break;
  }
  if (sizes.size() < 2) throw StructuralError("mlp checkpoint has fewer than two layers");
  MlpParams p;
  p.layer_sizes = sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Tensor w({sizes[l + 1], sizes[l]});
    for (std::size_t i = 0; i < w.size(); ++i)
      if (!(is >> w[i])) throw StructuralError("mlp checkpoint truncated");
    Tensor b({sizes[l + 1]});
    for (std::size_t i = 0; i < b.size(); ++i)
      if (!(is >> b[i])) throw StructuralError("mlp checkpoint truncated");
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

inline void save_mlp_file(const std::string& path, const MlpParams& p) {
  std::ofstream os(path);
  if (!os) throw StructuralError("cannot open checkpoint for writing: " + path);
  save_mlp(os, p);
}

inline MlpParams load_mlp_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw StructuralError("cannot open checkpoint: " + path);
  return load_mlp(is);
}

}  // namespace hrpinn
