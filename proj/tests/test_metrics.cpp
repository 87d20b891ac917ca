#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "hrpinn/integrate.hpp"
#include "hrpinn/metrics.hpp"

using namespace hrpinn;

TEST_CASE("mae basics") {
  CHECK(mae({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  CHECK(mae({1.0, 2.0}, {1.0, 3.0}) == Catch::Approx(0.5));
  // constant offset translates exactly
  std::vector<double> a{0.1, -0.5, 2.0}, b;
  for (double v : a) b.push_back(v + 0.75);
  CHECK(mae(a, b) == Catch::Approx(0.75));
  CHECK_THROWS_AS(mae(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                  StructuralError);
}

TEST_CASE("dtw basics") {
  std::vector<std::vector<double>> a{{0.0}, {0.0}, {1.0}, {1.0}};
  std::vector<std::vector<double>> b{{0.0}, {1.0}};
  CHECK(dtw(a, a) == 0.0);
  CHECK(dtw(a, b) == 0.0);  // perfect warp, enumerated by hand
  CHECK(dtw(std::vector<double>{2.5}, std::vector<double>{4.0}) == Catch::Approx(1.5));
  CHECK_THROWS_AS(dtw(std::vector<std::vector<double>>{}, a), StructuralError);
}

TEST_CASE("dtw properties on random series") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> a, b;
    for (int k = 0; k < 30; ++k) a.push_back({d(rng), d(rng)});
    for (int k = 0; k < 30; ++k) b.push_back({d(rng), d(rng)});
    const double dab = dtw(a, b);
    CHECK(dab >= 0.0);
    CHECK(dtw(a, a) == 0.0);
    CHECK(dab == Catch::Approx(dtw(b, a)));  // symmetric step pattern
    // never worse than the identity alignment
    double identity_cost = 0.0;
    for (int k = 0; k < 30; ++k) {
      const double dx = a[k][0] - b[k][0], dy = a[k][1] - b[k][1];
      identity_cost += std::sqrt(dx * dx + dy * dy);
    }
    CHECK(dab <= identity_cost + 1e-12);
  }
}

TEST_CASE("violation stats") {
  auto sys = make_system("mass_spring");
  // projected reference: mean below tolerance
  Trajectory ref = generate_reference(sys, sys->initial_state(), 0.01, 200, true, 1e-12);
  auto [mean_v, max_v] = violation_stats(ref, *sys);
  CHECK(mean_v <= 1e-12 * 10);
  CHECK(max_v <= 1e-10);

  // two-step series by hand: g values 0.1 and 0.3 -> (0.2, 0.3)
  // E = (x^2+v^2)/2 with offset 0.5 -> need x so that E - 0.5 = 0.1, 0.3
  Trajectory t;
  t.t0 = 0.0;
  t.dt = 1.0;
  t.states.push_back({std::sqrt(2.0 * 0.6), 0.0});
  t.states.push_back({std::sqrt(2.0 * 0.8), 0.0});
  auto [m2, x2] = violation_stats(t, *sys);
  CHECK(m2 == Catch::Approx(0.2));
  CHECK(x2 == Catch::Approx(0.3));

  // all points on the manifold
  Trajectory on;
  on.t0 = 0.0;
  on.dt = 1.0;
  on.states.push_back({1.0, 0.0});
  on.states.push_back({0.0, 1.0});
  auto [m3, x3] = violation_stats(on, *sys);
  CHECK(m3 < 1e-15);
  CHECK(x3 < 1e-15);
}

TEST_CASE("trajectory csv round trip") {
  auto sys = make_system("robot_arm");
  Trajectory ref = generate_reference(sys, sys->initial_state(), 0.01, 20, true, 1e-12);
  std::ostringstream os;
  save_trajectory_csv(os, ref);
  CHECK(os.str().rfind("t,x0,x1,x2,w0,w1\n", 0) == 0);
  std::istringstream is(os.str());
  Trajectory back = load_trajectory_csv(is);
  REQUIRE(back.states.size() == ref.states.size());
  for (std::size_t k = 0; k < ref.states.size(); ++k)
    for (std::size_t i = 0; i < 3; ++i) CHECK(back.states[k][i] == ref.states[k][i]);
  CHECK(back.inputs[5][0] == ref.inputs[5][0]);
}
