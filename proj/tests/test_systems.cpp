#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hrpinn/systems.hpp"

using namespace hrpinn;

namespace {

// in-domain random state near the system's initial condition
std::vector<double> random_state(const System& sys, std::mt19937_64& rng, double spread = 0.3) {
  std::uniform_real_distribution<double> d(-spread, spread);
  std::vector<double> x = sys.initial_state();
  for (double& v : x) v += d(rng);
  if (std::string(sys.name()) == "lotka_volterra")
    for (double& v : x) v = std::max(v, 0.2);
  if (std::string(sys.name()) == "two_body") {
    // keep |q| away from the collision singularity
    const double r = std::hypot(x[0], x[1]);
    if (r < 0.2) {
      x[0] += 0.3;
      x[1] += 0.3;
    }
  }
  return x;
}

std::vector<double> fd_constraint_jacobian(const System& sys, const std::vector<double>& x,
                                           double t) {
  const std::size_t n = sys.state_dim(), m = sys.constraint_dim();
  std::vector<double> J(m * n), gp(m), gm(m), xx = x;
  const double h = 1e-6;
  for (std::size_t j = 0; j < n; ++j) {
    xx[j] = x[j] + h;
    sys.constraint(xx.data(), t, gp.data());
    xx[j] = x[j] - h;
    sys.constraint(xx.data(), t, gm.data());
    xx[j] = x[j];
    for (std::size_t i = 0; i < m; ++i) J[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("mass-spring rows of the benchmark table") {
  auto sys = make_system("mass_spring");
  auto f = eval_full(*sys, {1.0, 0.0}, 0.0);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == -1.0);
  auto prior = eval_prior(*sys, {1.0, 2.0}, 0.0);
  CHECK(prior[0] == 2.0);
  CHECK(prior[1] == 0.0);
  auto res = eval_residual_target(*sys, {1.0, 2.0}, 0.0);
  CHECK(res[0] == 0.0);
  CHECK(res[1] == -1.0);

  // offsets: E0 = 1/2 from the initial state
  CHECK(eval_constraint(*sys, {1.0, 0.0}, 0.0)[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(eval_constraint(*sys, {2.0, 0.0}, 0.0)[0] == Catch::Approx(1.5));
  Tensor G = eval_constraint_jacobian(*sys, {1.0, 0.0}, 0.0);
  CHECK(G[0] == 1.0);
  CHECK(G[1] == 0.0);
}

TEST_CASE("two-body dynamics and angular momentum") {
  auto sys = make_system("two_body");
  auto f = eval_full(*sys, {1.0, 0.0, 0.0, 1.0}, 0.0);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 1.0);
  CHECK(f[2] == Catch::Approx(-1.0));
  CHECK(f[3] == Catch::Approx(0.0).margin(1e-15));

  // L0 = 0.8 for the eccentric orbit initial condition
  auto x0 = sys->initial_state();
  CHECK(x0[0] * x0[3] - x0[1] * x0[2] == Catch::Approx(0.8));
  CHECK(eval_constraint(*sys, x0, 0.0)[0] == Catch::Approx(0.0).margin(1e-15));

  // partials by hand at q=(1,0), p=(0,1): (p2, -p1, -q2, q1) = (1,0,0,1)
  Tensor G = eval_constraint_jacobian(*sys, {1.0, 0.0, 0.0, 1.0}, 0.0);
  CHECK(G[0] == 1.0);
  CHECK(G[1] == 0.0);
  CHECK(G[2] == 0.0);
  CHECK(G[3] == 1.0);

  CHECK_THROWS_AS(eval_full(*sys, {1e-10, 0.0, 0.0, 1.0}, 0.0), SingularityError);
}

TEST_CASE("rigid body spin axis cases") {
  auto sys = make_system("rigid_body");
  auto f = eval_full(*sys, {1.0, 0.0, 0.0}, 0.0);
  for (double v : f) CHECK(v == Catch::Approx(0.0).margin(1e-15));
  auto prior = eval_prior(*sys, {0.3, 0.7, -0.2}, 0.0);
  for (double v : prior) CHECK(v == 0.0);
}

TEST_CASE("robot arm prior equals full dynamics, residual vanishes") {
  auto sys = make_system("robot_arm");
  auto x0 = sys->initial_state();
  auto w = sys->input_at(0.7);
  auto full = eval_full(*sys, x0, 0.7, w);
  auto prior = eval_prior(*sys, x0, 0.7, w);
  auto res = eval_residual_target(*sys, x0, 0.7, w);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(full[i] == prior[i]);
    CHECK(res[i] == 0.0);
  }
  // the initial configuration reaches the path start
  CHECK(eval_constraint(*sys, x0, 0.0)[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(eval_constraint(*sys, x0, 0.0)[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("lotka-volterra domain handling") {
  auto sys = make_system("lotka_volterra");
  CHECK_THROWS_AS(eval_constraint(*sys, {-0.1, 1.0}, 0.0), DomainError);
  CHECK_THROWS_AS(eval_constraint(*sys, {1.0, 0.0}, 0.0), DomainError);
  CHECK(std::isfinite(eval_constraint(*sys, {1e-9, 1.0}, 0.0)[0]));  // guard clamps
  CHECK(eval_constraint(*sys, {1.0, 1.0}, 0.0)[0] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("split consistency on 1000 random states per system") {
  std::mt19937_64 rng(123);
  for (const auto& name : system_names()) {
    auto sys = make_system(name);
    for (int i = 0; i < 1000; ++i) {
      auto x = random_state(*sys, rng);
      const double t = 0.01 * (i % 100);
      auto w = sys->input_at(t);
      auto full = eval_full(*sys, x, t, w);
      auto prior = eval_prior(*sys, x, t, w);
      auto res = eval_residual_target(*sys, x, t, w);
      for (std::size_t j = 0; j < x.size(); ++j) {
        CAPTURE(name, i, j);
        REQUIRE(std::abs(prior[j] + res[j] - full[j]) < 1e-12);
      }
    }
  }
}

TEST_CASE("analytic constraint Jacobians match finite differences") {
  std::mt19937_64 rng(77);
  for (const auto& name : system_names()) {
    auto sys = make_system(name);
    const std::size_t n = sys->state_dim(), m = sys->constraint_dim();
    for (int i = 0; i < 50; ++i) {
      auto x = random_state(*sys, rng);
      const double t = 0.05 * i;
      Tensor G = eval_constraint_jacobian(*sys, x, t);
      auto Gfd = fd_constraint_jacobian(*sys, x, t);
      for (std::size_t k = 0; k < m * n; ++k) {
        CAPTURE(name, i, k);
        REQUIRE(std::abs(G[k] - Gfd[k]) / (std::abs(Gfd[k]) + 1e-6) < 1e-6);
      }
    }
  }
}

TEST_CASE("analytic constraint Hessians match finite differences of G") {
  std::mt19937_64 rng(78);
  for (const auto& name : system_names()) {
    auto sys = make_system(name);
    const std::size_t n = sys->state_dim(), m = sys->constraint_dim();
    auto c = sys->constraint_at(0.3);
    // reference Hessian via the base-class FD fallback
    struct FdOnly : Constraint {
      const Constraint* inner;
      std::size_t state_dim() const override { return inner->state_dim(); }
      std::size_t constraint_dim() const override { return inner->constraint_dim(); }
      void eval(const double* x, double* g) const override { inner->eval(x, g); }
      void jacobian(const double* x, double* G) const override { inner->jacobian(x, G); }
    } fd;
    fd.inner = c.get();
    for (int i = 0; i < 10; ++i) {
      auto x = random_state(*sys, rng, 0.15);
      std::vector<double> Ha(n * n), Hf(n * n);
      for (std::size_t ci = 0; ci < m; ++ci) {
        c->hessian(x.data(), ci, Ha.data());
        fd.hessian(x.data(), ci, Hf.data());
        for (std::size_t k = 0; k < n * n; ++k) {
          CAPTURE(name, ci, k);
          REQUIRE(std::abs(Ha[k] - Hf[k]) < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("tape dynamics agree bitwise with plain dynamics") {
  std::mt19937_64 rng(9);
  for (const auto& name : system_names()) {
    auto sys = make_system(name);
    for (int i = 0; i < 20; ++i) {
      auto x = random_state(*sys, rng);
      const double t = 0.07 * i;
      auto w = sys->input_at(t);
      for (Part part : {Part::Full, Part::Prior, Part::Residual}) {
        auto plain = std::vector<double>(sys->state_dim());
        sys->dynamics(part, x.data(), t, w.empty() ? nullptr : w.data(), plain.data());
        Tape tape;
        Var xv = tape.constant(Tensor::vector(x));
        Var out = sys->dynamics_tape(tape, part, xv, t, w.empty() ? nullptr : w.data());
        for (std::size_t j = 0; j < plain.size(); ++j) {
          CAPTURE(name, i, j);
          REQUIRE(tape.value(out)[j] == plain[j]);
        }
      }
      // invariants too
      std::vector<double> g(sys->constraint_dim());
      sys->constraint(x.data(), t, g.data());
      Tape tape;
      Var gv = sys->constraint_tape(tape, tape.constant(Tensor::vector(x)), t);
      for (std::size_t j = 0; j < g.size(); ++j) REQUIRE(tape.value(gv)[j] == g[j]);
    }
  }
}

TEST_CASE("constraint qualification holds along the nonlinear spring orbit") {
  // the chosen non-circular initial condition must keep the energy and
  // momentum gradients independent everywhere on the orbit
  auto sys = make_system("nonlinear_spring");
  std::vector<double> x = sys->initial_state();
  double sigma_min_worst = 1e300;
  for (int k = 0; k < 4000; ++k) {
    Tensor G = eval_constraint_jacobian(*sys, x, 0.0);  // throws if rank deficient
    Eigen::Map<const RowMat> Gm(G.data(), 2, 4);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Gm);
    sigma_min_worst = std::min(sigma_min_worst, svd.singularValues().minCoeff());
    // advance with a crude RK2 step; accuracy is irrelevant here
    std::vector<double> f = eval_full(*sys, x, 0.0);
    std::vector<double> xm(4);
    for (int i = 0; i < 4; ++i) xm[i] = x[i] + 0.005 * f[i];
    std::vector<double> fm = eval_full(*sys, xm, 0.0);
    for (int i = 0; i < 4; ++i) x[i] += 0.01 * 0.5 * (f[i] + fm[i]);
  }
  CHECK(sigma_min_worst > 0.05);
}
