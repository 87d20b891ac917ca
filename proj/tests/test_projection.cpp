#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>

#include "hrpinn/projection.hpp"

using namespace hrpinn;

namespace {

// circle constraint g = (x^2 + v^2)/2 - E0
std::shared_ptr<FunctionConstraint> circle(double E0 = 0.5) {
  auto c = std::make_shared<FunctionConstraint>(
      2, 1,
      [E0](const double* x, double* g) { g[0] = 0.5 * (x[0] * x[0] + x[1] * x[1]) - E0; },
      [](const double* x, double* G) {
        G[0] = x[0];
        G[1] = x[1];
      });
  return c;
}

std::shared_ptr<FunctionConstraint> affine(std::vector<double> a, double b) {
  auto n = a.size();
  return std::make_shared<FunctionConstraint>(
      n, 1,
      [a, b, n](const double* x, double* g) {
        double s = -b;
        for (std::size_t i = 0; i < n; ++i) s += a[i] * x[i];
        g[0] = s;
      },
      [a, n](const double*, double* G) {
        for (std::size_t i = 0; i < n; ++i) G[i] = a[i];
      });
}

}  // namespace

TEST_CASE("robust projection onto the unit circle") {
  auto c = circle();
  // closest point to (2, 0) on the E=1/2 circle is (1, 0) with lambda = 1;
  // cross-checked below by brute-force minimization over the circle.
  ProjectionResult r = project_robust(*c, Tensor::vector({2.0, 0.0}));
  CHECK(r.x_star[0] == Catch::Approx(1.0).margin(1e-10));
  CHECK(r.x_star[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.lambda[0] == Catch::Approx(1.0).margin(1e-9));
  CHECK(r.kkt_residual <= 1e-10);

  double best = 1e300;
  for (int i = 0; i < 400000; ++i) {
    const double phi = 2.0 * M_PI * i / 400000.0;
    const double dx = std::cos(phi) - 2.0, dv = std::sin(phi);
    best = std::min(best, dx * dx + dv * dv);
  }
  const double got =
      (r.x_star[0] - 2.0) * (r.x_star[0] - 2.0) + r.x_star[1] * r.x_star[1];
  CHECK(got <= best + 1e-9);
}

TEST_CASE("robust projection of an on-manifold point is the identity") {
  auto c = circle();
  ProjectionResult r = project_robust(*c, Tensor::vector({0.0, 1.0}));
  CHECK(r.x_star[0] == Catch::Approx(0.0).margin(1e-14));
  CHECK(r.x_star[1] == Catch::Approx(1.0).margin(1e-14));
  CHECK(r.lambda[0] == Catch::Approx(0.0).margin(1e-14));
  CHECK(r.iterations == 1);
}

TEST_CASE("linear constraints converge in one Newton iteration") {
  auto c = affine({1.0, 2.0, -1.0}, 0.5);
  ProjectionResult r = project_robust(*c, Tensor::vector({1.0, 1.0, 1.0}));
  CHECK(r.iterations == 1);
  std::vector<double> g(1);
  c->eval(r.x_star.data(), g.data());
  CHECK(std::abs(g[0]) <= 1e-12);

  // fast and robust agree exactly for affine constraints
  ProjectionResult f = project_fast(*c, Tensor::vector({1.0, 1.0, 1.0}));
  for (int i = 0; i < 3; ++i)
    CHECK(f.x_star[i] == Catch::Approx(r.x_star[i]).margin(1e-13));
}

TEST_CASE("fast projection takes one linearized step") {
  auto c = circle();
  ProjectionResult r = project_fast(*c, Tensor::vector({1.1, 0.0}));
  // hand evaluation: delta = -G^T (G G^T)^{-1} g with G = (1.1, 0),
  // g = (1.21 - 1)/2 = 0.105 -> x* = 1.1 - 0.105/1.1
  CHECK(r.x_star[0] == Catch::Approx(1.1 - 0.105 / 1.1).epsilon(1e-12));
  CHECK(r.x_star[1] == 0.0);
  CHECK(r.iterations == 1);
  // violation strictly reduced
  std::vector<double> g0(1), g1(1);
  const double xt[2] = {1.1, 0.0};
  c->eval(xt, g0.data());
  c->eval(r.x_star.data(), g1.data());
  CHECK(std::abs(g1[0]) < std::abs(g0[0]));

  // on-manifold input unchanged
  ProjectionResult id = project_fast(*c, Tensor::vector({1.0, 0.0}));
  CHECK(id.x_star[0] == 1.0);
  CHECK(id.x_star[1] == 0.0);
}

TEST_CASE("tangent projector identities") {
  // G = [1, 0] by hand
  Tensor G = Tensor::matrix(1, 2, {1.0, 0.0});
  Tensor J = tangent_projector(G);
  CHECK(J.at(0, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(J.at(0, 1) == Catch::Approx(0.0).margin(1e-15));
  CHECK(J.at(1, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(J.at(1, 1) == Catch::Approx(1.0).margin(1e-15));

  // full constraint kills all directions
  Tensor I3 = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor Z = tangent_projector(I3);
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(Z[i]) < 1e-14);

  // random G: idempotent and annihilates G^T
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor Gr({2, 5});
    for (std::size_t i = 0; i < Gr.size(); ++i) Gr[i] = dist(rng);
    Tensor Jr = tangent_projector(Gr);
    // J^2 = J
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t col = 0; col < 5; ++col) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += Jr.at(r, k) * Jr.at(k, col);
        CHECK(std::abs(s - Jr.at(r, col)) < 1e-12);
      }
    // J G^T = 0
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t m = 0; m < 2; ++m) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += Jr.at(r, k) * Gr.at(m, k);
        CHECK(std::abs(s) < 1e-12);
      }
  }

  Tensor deficient = Tensor::matrix(2, 3, {1, 0, 0, 1, 0, 0});
  CHECK_THROWS_AS(tangent_projector(deficient), ConstraintQualificationError);
}

TEST_CASE("exact backward matches finite differences of the full projection") {
  auto c = circle();
  const Tensor upstream = Tensor::vector({0.7, -1.3});
  const Tensor xt = Tensor::vector({1.4, 0.5});
  ProjectionResult r = project_robust(*c, xt, 1e-13);
  Tensor grad = projection_backward_exact(*c, r.x_star, r.lambda, upstream);

  const double h = 1e-6;
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor xp = xt, xm = xt;
    xp[i] += h;
    xm[i] -= h;
    ProjectionResult rp = project_robust(*c, xp, 1e-13);
    ProjectionResult rm = project_robust(*c, xm, 1e-13);
    double cd = 0.0;
    for (std::size_t j = 0; j < 2; ++j)
      cd += upstream[j] * (rp.x_star[j] - rm.x_star[j]) / (2.0 * h);
    CHECK(std::abs(cd - grad[i]) / (std::abs(grad[i]) + 1e-12) < 1e-5);
  }

  // upstream 0 -> gradient 0
  Tensor zero = projection_backward_exact(*c, r.x_star, r.lambda, Tensor::vector({0.0, 0.0}));
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
}

TEST_CASE("exact backward reduces to the tangent projector for linear g") {
  auto c = affine({1.0, 0.0}, 0.3);
  ProjectionResult r = project_robust(*c, Tensor::vector({0.9, 0.4}));
  const Tensor upstream = Tensor::vector({3.0, 4.0});
  Tensor exact = projection_backward_exact(*c, r.x_star, r.lambda, upstream);
  Tensor G = Tensor::matrix(1, 2, {1.0, 0.0});
  Tensor fast = projection_backward_fast(G, upstream);
  CHECK(exact[0] == Catch::Approx(fast[0]).margin(1e-14));
  CHECK(exact[1] == Catch::Approx(fast[1]).margin(1e-14));
  CHECK(fast[0] == Catch::Approx(0.0).margin(1e-14));
  CHECK(fast[1] == Catch::Approx(4.0).margin(1e-14));
}

TEST_CASE("fast backward annihilates the row space") {
  Tensor G = Tensor::matrix(1, 3, {0.6, -0.8, 0.0});
  // upstream in the row space of G^T maps to zero
  Tensor up = Tensor::vector({0.6 * 2.5, -0.8 * 2.5, 0.0});
  Tensor out = projection_backward_fast(G, up);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(out[i]) < 1e-13);
}

TEST_CASE("projection feasibility and idempotency near the circle") {
  auto c = circle();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> radial(-0.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    const double phi = angle(rng);
    const double rho = 1.0 + radial(rng);
    Tensor xt = Tensor::vector({rho * std::cos(phi), rho * std::sin(phi)});
    ProjectionResult r = project_robust(*c, xt, 1e-10);
    std::vector<double> g(1);
    c->eval(r.x_star.data(), g.data());
    REQUIRE(std::abs(g[0]) <= 1e-10);
    // projecting again moves by < 10 tol
    ProjectionResult r2 = project_robust(*c, r.x_star, 1e-10);
    double move = 0.0;
    for (std::size_t j = 0; j < 2; ++j)
      move = std::max(move, std::abs(r2.x_star[j] - r.x_star[j]));
    CHECK(move < 1e-9);
  }
}

TEST_CASE("non-convergence and singularity are reported") {
  auto c = circle();
  // projecting from the center of the circle: gradient vanishes, Newton
  // cannot make progress within the budget
  CHECK_THROWS(project_robust(*c, Tensor::vector({0.0, 0.0}), 1e-12, 8));

  auto degenerate = std::make_shared<FunctionConstraint>(
      2, 1, [](const double* x, double* g) { g[0] = x[0] * x[0]; },
      [](const double* x, double* G) {
        G[0] = 2.0 * x[0];
        G[1] = 0.0;
      });
  CHECK_THROWS_AS(project_fast(*degenerate, Tensor::vector({0.0, 1.0})),
                  ConstraintQualificationError);
}

TEST_CASE("projection as a tape op differentiates end to end") {
  auto c = circle();
  for (ProjectionMode mode : {ProjectionMode::Robust, ProjectionMode::Fast}) {
    // loss = <w, proj(x)>; for robust mode the gradient must match FD of
    // the projected loss tightly, for fast mode only approximately
    const Tensor xt = Tensor::vector({1.2, 0.4});
    const Tensor w = Tensor::vector({0.3, -1.1});
    Tape tape;
    Var x = tape.leaf(xt);
    Var p = project_on_tape(tape, x, c, mode, 1e-13);
    Var loss = tape.sum(tape.mul(p, tape.constant(w)));
    tape.backward(loss, Tensor::scalar(1.0));
    Tensor g = tape.grad(x);

    const double h = 1e-6;
    for (std::size_t i = 0; i < 2; ++i) {
      Tensor xp = xt, xm = xt;
      xp[i] += h;
      xm[i] -= h;
      auto eval = [&](const Tensor& v) {
        ProjectionResult r = mode == ProjectionMode::Robust ? project_robust(*c, v, 1e-13)
                                                            : project_fast(*c, v);
        return r.x_star[0] * w[0] + r.x_star[1] * w[1];
      };
      const double cd = (eval(xp) - eval(xm)) / (2.0 * h);
      const double tol = mode == ProjectionMode::Robust ? 1e-5 : 0.25;
      CHECK(std::abs(cd - g[i]) / (std::abs(g[i]) + 1e-12) < tol);
    }
  }
}
