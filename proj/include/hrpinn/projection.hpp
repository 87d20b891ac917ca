#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/tape.hpp"
#include "hrpinn/tensor.hpp"

namespace hrpinn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Equality constraint g(x) = 0 with analytic Jacobian. Time-dependent
// constraints are bound to a fixed evaluation time before use here.
struct Constraint {
  virtual ~Constraint() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t constraint_dim() const = 0;
  virtual void eval(const double* x, double* g) const = 0;
  virtual void jacobian(const double* x, double* G) const = 0;  // row-major m x n

  // Hessian of component i. Default: central differences of the
  // Jacobian row with h = 1e-6.
  virtual void hessian(const double* x, std::size_t i, double* H) const {
    const std::size_t n = state_dim(), m = constraint_dim();
    const double h = 1e-6;
    std::vector<double> xp(x, x + n), Gp(m * n), Gm(m * n);
    for (std::size_t j = 0; j < n; ++j) {
      xp[j] = x[j] + h;
      jacobian(xp.data(), Gp.data());
      xp[j] = x[j] - h;
      jacobian(xp.data(), Gm.data());
      xp[j] = x[j];
      for (std::size_t k = 0; k < n; ++k)
        H[k * n + j] = (Gp[i * n + k] - Gm[i * n + k]) / (2.0 * h);
    }
  }

  Eigen::VectorXd eval_vec(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g(constraint_dim());
    eval(x.data(), g.data());
    return g;
  }

  RowMat jacobian_mat(const Eigen::VectorXd& x) const {
    RowMat G(constraint_dim(), state_dim());
    jacobian(x.data(), G.data());
    return G;
  }
};

// Constraint assembled from callables; handy for tests and ad-hoc manifolds.
struct FunctionConstraint final : Constraint {
  std::size_t n, m;
  std::function<void(const double*, double*)> g_fn;
  std::function<void(const double*, double*)> G_fn;

  FunctionConstraint(std::size_t n_, std::size_t m_,
                     std::function<void(const double*, double*)> g,
                     std::function<void(const double*, double*)> G = {})
      : n(n_), m(m_), g_fn(std::move(g)), G_fn(std::move(G)) {}

  std::size_t state_dim() const override { return n; }
  std::size_t constraint_dim() const override { return m; }
  void eval(const double* x, double* g) const override { g_fn(x, g); }
  void jacobian(const double* x, double* G) const override {
    if (G_fn) {
      G_fn(x, G);
      return;
    }
    // central differences of g
    const double h = 1e-7;
    std::vector<double> xp(x, x + n), gp(m), gm(m);
    for (std::size_t j = 0; j < n; ++j) {
      xp[j] = x[j] + h;
      g_fn(xp.data(), gp.data());
      xp[j] = x[j] - h;
      g_fn(xp.data(), gm.data());
      xp[j] = x[j];
      for (std::size_t i = 0; i < m; ++i) G[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
    }
  }
};

enum class ProjectionMode { Fast, Robust };

inline const char* projection_mode_name(ProjectionMode m) {
  return m == ProjectionMode::Fast ? "fast" : "robust";
}

struct ProjectionResult {
  Tensor x_star;
  Tensor lambda;
  int iterations = 0;
  double kkt_residual = 0.0;
  ProjectionMode mode = ProjectionMode::Robust;
};

namespace detail {

inline double sigma_min(const RowMat& G) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
  return svd.singularValues().minCoeff();
}

inline void require_full_rank(const RowMat& G, const char* where) {
  if (sigma_min(G) < 1e-10)
    throw ConstraintQualificationError(std::string("constraint Jacobian is rank deficient in ") +
                                       where);
}

}  // namespace detail

// Newton iteration on the bordered KKT system
//   [ x - xt + G(x)^T l ; g(x) ] = 0
// with backtracking damping on ||F||_2 (step halved up to 20 times).
inline ProjectionResult project_robust(const Constraint& c, const Tensor& x_tilde,
                                       double tol = 1e-10, int max_iter = 50) {
  const std::size_t n = c.state_dim(), m = c.constraint_dim();
  if (x_tilde.size() != n)
    throw StructuralError("projection input dimension mismatch");
  Eigen::Map<const Eigen::VectorXd> xt(x_tilde.data(), static_cast<long>(n));
  Eigen::VectorXd x = xt;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(static_cast<long>(m));

  auto residual = [&](const Eigen::VectorXd& xx, const Eigen::VectorXd& ll) {
    RowMat G = c.jacobian_mat(xx);
    Eigen::VectorXd F(static_cast<long>(n + m));
    F.head(static_cast<long>(n)) = xx - xt + G.transpose() * ll;
    F.tail(static_cast<long>(m)) = c.eval_vec(xx);
    return F;
  };

  Eigen::VectorXd F = residual(x, lam);
  int iterations = 0;
  std::vector<double> H(n * n);
  while (true) {
    if (iterations >= max_iter)
      throw NonConvergenceError("projection Newton exceeded " + std::to_string(max_iter) +
                                    " iterations (residual " +
                                    std::to_string(F.lpNorm<Eigen::Infinity>()) + ")",
                                F.lpNorm<Eigen::Infinity>());
    RowMat G = c.jacobian_mat(x);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<long>(n + m), static_cast<long>(n + m));
    K.topLeftCorner(static_cast<long>(n), static_cast<long>(n)) =
        Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n));
    for (std::size_t i = 0; i < m; ++i) {
      c.hessian(x.data(), i, H.data());
      K.topLeftCorner(static_cast<long>(n), static_cast<long>(n)) +=
          lam[static_cast<long>(i)] * Eigen::Map<const RowMat>(H.data(), static_cast<long>(n),
                                                               static_cast<long>(n));
    }
    K.topRightCorner(static_cast<long>(n), static_cast<long>(m)) = G.transpose();
    K.bottomLeftCorner(static_cast<long>(m), static_cast<long>(n)) = G;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible())
      throw ConstraintQualificationError("singular KKT matrix in robust projection");
    Eigen::VectorXd delta = lu.solve(-F);

    // backtracking on ||F||_2
    double alpha = 1.0;
    const double f0 = F.norm();
    Eigen::VectorXd xn, ln, Fn;
    for (int ls = 0; ls <= 20; ++ls) {
      xn = x + alpha * delta.head(static_cast<long>(n));
      ln = lam + alpha * delta.tail(static_cast<long>(m));
      Fn = residual(xn, ln);
      if (Fn.norm() < f0 || ls == 20) break;
      alpha *= 0.5;
    }
    x = xn;
    lam = ln;
    F = Fn;
    ++iterations;
    if (F.lpNorm<Eigen::Infinity>() <= tol) break;
  }

  ProjectionResult out;
  out.x_star = Tensor({n}, std::vector<double>(x.data(), x.data() + n));
  out.lambda = m > 0 ? Tensor({m}, std::vector<double>(lam.data(), lam.data() + m))
                     : Tensor({1}, {0.0});
  out.iterations = iterations;
  out.kkt_residual = F.lpNorm<Eigen::Infinity>();
  out.mode = ProjectionMode::Robust;
  return out;
}

// Single linearized KKT step at the predicted state:
//   delta = -G^T (G G^T)^{-1} g(xt),  x* = xt + delta.
// The normal-equation solve goes through a QR factorization of G^T.
inline ProjectionResult project_fast(const Constraint& c, const Tensor& x_tilde) {
  const std::size_t n = c.state_dim(), m = c.constraint_dim();
  if (x_tilde.size() != n)
    throw StructuralError("projection input dimension mismatch");
  Eigen::Map<const Eigen::VectorXd> xt(x_tilde.data(), static_cast<long>(n));
  RowMat G = c.jacobian_mat(xt);
  detail::require_full_rank(G, "project_fast");

  Eigen::VectorXd g = c.eval_vec(xt);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G.transpose());
  Eigen::MatrixXd R = qr.matrixQR()
                          .topRows(static_cast<long>(m))
                          .triangularView<Eigen::Upper>();
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<long>(n),
                                                                    static_cast<long>(m));
  // G = R^T Q^T, so G delta = -g  =>  z = -R^{-T} g, delta = Q z (least-norm)
  Eigen::VectorXd z = R.transpose().triangularView<Eigen::Lower>().solve(-g);
  Eigen::VectorXd delta = Q * z;
  // delta = -G^T lambda = -(Q R) lambda  =>  lambda = -R^{-1} z
  Eigen::VectorXd lam = R.triangularView<Eigen::Upper>().solve(-z);
  Eigen::VectorXd x = xt + delta;

  ProjectionResult out;
  out.x_star = Tensor({n}, std::vector<double>(x.data(), x.data() + n));
  out.lambda = Tensor({m}, std::vector<double>(lam.data(), lam.data() + m));
  out.iterations = 1;
  out.kkt_residual = c.eval_vec(x).lpNorm<Eigen::Infinity>();
  out.mode = ProjectionMode::Fast;
  return out;
}

// Orthogonal projector onto the tangent space of the manifold:
//   J = I - G^T (G G^T)^{-1} G,
// assembled as I - V V^T from an orthonormal row basis of G (SVD).
inline Tensor tangent_projector(const Tensor& G_at_xstar) {
  const std::size_t m = G_at_xstar.rows(), n = G_at_xstar.cols();
  Eigen::Map<const RowMat> G(G_at_xstar.data(), static_cast<long>(m), static_cast<long>(n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinV);
  if (svd.singularValues().minCoeff() < 1e-10)
    throw ConstraintQualificationError("rank-deficient constraint Jacobian in tangent_projector");
  Eigen::MatrixXd V = svd.matrixV();  // n x m orthonormal
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n)) -
                      V * V.transpose();
  Tensor out({n, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col)
      out.at(r, col) = J(static_cast<long>(r), static_cast<long>(col));
  return out;
}

// Exact reverse-mode rule for the robust projection: solve the bordered
// KKT sensitivity system
//   [ I + sum_i lambda_i H_i   G^T ] [y ]   [upstream]
//   [ G                         0  ] [mu] = [   0    ]
// and return y (= (dx*/dxt)^T upstream; the system is symmetric).
inline Tensor projection_backward_exact(const Constraint& c, const Tensor& x_star,
                                        const Tensor& lambda, const Tensor& upstream) {
  const std::size_t n = c.state_dim(), m = c.constraint_dim();
  Eigen::Map<const Eigen::VectorXd> xs(x_star.data(), static_cast<long>(n));
  RowMat G = c.jacobian_mat(xs);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<long>(n + m), static_cast<long>(n + m));
  K.topLeftCorner(static_cast<long>(n), static_cast<long>(n)) =
      Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n));
  std::vector<double> H(n * n);
  for (std::size_t i = 0; i < m; ++i) {
    c.hessian(xs.data(), i, H.data());
    K.topLeftCorner(static_cast<long>(n), static_cast<long>(n)) +=
        lambda[i] * Eigen::Map<const RowMat>(H.data(), static_cast<long>(n),
                                             static_cast<long>(n));
  }
  K.topRightCorner(static_cast<long>(n), static_cast<long>(m)) = G.transpose();
  K.bottomLeftCorner(static_cast<long>(m), static_cast<long>(n)) = G;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible())
    throw NondegeneracyError("singular bordered KKT matrix in projection backward");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<long>(n + m));
  for (std::size_t i = 0; i < n; ++i) rhs[static_cast<long>(i)] = upstream[i];
  Eigen::VectorXd sol = lu.solve(rhs);
  return Tensor({n}, std::vector<double>(sol.data(), sol.data() + n));
}

// Tangent-space reverse rule: upstream multiplied by the (symmetric)
// tangent projector at x*.
inline Tensor projection_backward_fast(const Tensor& G_at_xstar, const Tensor& upstream) {
  Tensor J = tangent_projector(G_at_xstar);
  const std::size_t n = J.rows();
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += J.at(r, c) * upstream[c];
    out[r] = s;
  }
  return out;
}

// Projection as a differentiable tape operation. Robust mode pairs the
// Newton solve with the exact KKT sensitivity backward; fast mode pairs
// the single linearized step with the tangent-space projector.
class ProjectionOp final : public CustomOp {
 public:
  ProjectionOp(std::shared_ptr<const Constraint> constraint, ProjectionMode mode,
               double tol = 1e-10, int max_iter = 50)
      : constraint_(std::move(constraint)), mode_(mode), tol_(tol), max_iter_(max_iter) {}

  const char* name() const override { return "project"; }

  Tensor forward(const std::vector<const Tensor*>& inputs) override {
    const Tensor& xt = *inputs.at(0);
    last_ = mode_ == ProjectionMode::Robust ? project_robust(*constraint_, xt, tol_, max_iter_)
                                            : project_fast(*constraint_, xt);
    return last_.x_star;
  }

  void backward(const std::vector<const Tensor*>&, const Tensor& output, const Tensor& seed,
                const std::vector<Tensor*>& input_grads) override {
    Tensor down = mode_ == ProjectionMode::Robust
                      ? projection_backward_exact(*constraint_, output, last_.lambda, seed)
                      : projection_backward_fast(jacobian_at(output), seed);
    Tensor& g = *input_grads.at(0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += down[i];
  }

  const ProjectionResult& last() const { return last_; }

 private:
  Tensor jacobian_at(const Tensor& x) const {
    const std::size_t n = constraint_->state_dim(), m = constraint_->constraint_dim();
    Tensor G({m, n});
    constraint_->jacobian(x.data(), G.data());
    return G;
  }

  std::shared_ptr<const Constraint> constraint_;
  ProjectionMode mode_;
  double tol_;
  int max_iter_;
  ProjectionResult last_;
};

// Record a projection of `x_tilde` on the tape; `diag`, when non-null,
// receives the solve diagnostics.
inline Var project_on_tape(Tape& tape, Var x_tilde, std::shared_ptr<const Constraint> constraint,
                           ProjectionMode mode, double tol = 1e-10, int max_iter = 50,
                           ProjectionResult* diag = nullptr) {
  auto op = std::make_shared<ProjectionOp>(std::move(constraint), mode, tol, max_iter);
  Var out = tape.custom(op, {x_tilde});
  if (diag) *diag = op->last();
  return out;
}

}  // namespace hrpinn
