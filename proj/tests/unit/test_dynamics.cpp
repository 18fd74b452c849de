#include "gvimp/dynamics.hpp"
#include "gvimp/errors.hpp"
#include "gvimp/gp_prior.hpp"

#include "../support/generators.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace gvimp;
using gvimp::testing::Gen;

TEST_CASE("point robot block structure") {
  const auto s2 = point_robot_lti(2);
  CHECK(s2.A.rows() == 4);
  CHECK(s2.B.cols() == 2);
  CHECK(s2.A.topRightCorner(2, 2) == Matrix::Identity(2, 2));
  CHECK(s2.A.topLeftCorner(2, 2).norm() == 0.0);
  CHECK(s2.A.bottomRows(2).norm() == 0.0);
  CHECK(s2.B.topRows(2).norm() == 0.0);
  CHECK(s2.B.bottomRows(2) == Matrix::Identity(2, 2));
  CHECK(s2.a.norm() == 0.0);

  const auto s3 = point_robot_lti(3);
  CHECK(s3.A.rows() == 6);
  CHECK(s3.B.cols() == 3);

  Gen gen(21);
  const Vector p = gen.vector(3);
  const Vector v = gen.vector(3);
  Vector x(6);
  x << p, v;
  Vector expected(6);
  expected << v, Vector::Zero(3);
  CHECK(s3.A * x == expected);

  CHECK_THROWS_AS(point_robot_lti(1), std::invalid_argument);
  CHECK_THROWS_AS(point_robot_lti(4), std::invalid_argument);
}

TEST_CASE("LTV system validation") {
  const auto step = point_robot_lti(2);
  CHECK_THROWS_AS(LtvSystem::constant(step, 3, 0.0), std::invalid_argument);
  auto sys = LtvSystem::constant(step, 3, 0.1);
  CHECK(sys.num_intervals() == 3);
  sys.steps[1].a = Vector::Zero(3);
  CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
}

TEST_CASE("planar quadrotor parameters and drift") {
  const QuadrotorParams params;
  CHECK(params.mass == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(params.length == doctest::Approx(std::sqrt(2.0)));
  CHECK(params.inertia == 1.0);

  const auto quad = planar_quadrotor();
  CHECK(quad.state_dim == 6);
  CHECK(quad.noise_dim == 2);

  Vector expected(6);
  expected << 0, 0, 0, 0, -9.81, 0;
  CHECK(quad.drift(Vector::Zero(6)) == expected);

  Vector tilted = Vector::Zero(6);
  tilted(2) = std::numbers::pi / 2;
  tilted(3) = 1.0;
  const Vector f = quad.drift(tilted);
  CHECK(std::abs(f(0)) < 1e-15);
  CHECK(f(3) == doctest::Approx(-9.81));

  const Matrix g = quad.diffusion(Vector::Zero(6));
  CHECK(g.topRows(4).norm() == 0.0);
  CHECK(g(4, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(g(4, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(g(5, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(g(5, 1) == doctest::Approx(-std::sqrt(2.0)));
}

TEST_CASE("level quadrotor drift is a double integrator with gravity") {
  const auto quad = planar_quadrotor();
  Gen gen(22);
  for (int trial = 0; trial < 100; ++trial) {
    Vector x = gen.vector(6, 3.0);
    x(2) = 0.0;
    x(5) = 0.0;
    const Vector f = quad.drift(x);
    CHECK(f(0) == x(3));
    CHECK(f(1) == x(4));
    CHECK(f(2) == 0.0);
    CHECK(f(3) == 0.0);
    CHECK(f(4) == -9.81);
    CHECK(f(5) == 0.0);
  }
}

TEST_CASE("euler step") {
  NonlinearSystem still{"still", 2, 1, [](const Vector& x) { return Vector::Zero(x.size()); },
                        [](const Vector&) { return Matrix::Zero(2, 1); }};
  const Vector x = Vector::Constant(2, 3.0);
  CHECK(euler_step(still, x, 0.5) == x);

  NonlinearSystem growth{"growth", 1, 1, [](const Vector& v) { return v; },
                         [](const Vector&) { return Matrix::Ones(1, 1); }};
  CHECK(euler_step(growth, Vector::Ones(1), 0.1)(0) == doctest::Approx(1.1));
  CHECK_THROWS_AS(euler_step(growth, Vector::Ones(1), 0.0), std::invalid_argument);

  NonlinearSystem blowup{"blowup", 1, 1, [](const Vector&) { return Vector::Constant(1, INFINITY); },
                         [](const Vector&) { return Matrix::Ones(1, 1); }};
  CHECK_THROWS_AS(euler_step(blowup, Vector::Ones(1), 0.1), NumericalError);

  const auto quad = planar_quadrotor();
  const Vector hover = euler_step(quad, Vector::Zero(6), 0.01);
  CHECK(hover(4) == doctest::Approx(-0.0981));
}

TEST_CASE("euler propagation of the point robot matches the exponential") {
  // A is nilpotent, so exp(A dt) = I + A dt and the Euler map is exact.
  const auto step = point_robot_lti(2);
  Gen gen(23);
  const NonlinearSystem linear{"lti", 4, 2, [&](const Vector& v) { return Vector(step.A * v); },
                               [&](const Vector&) { return step.B; }};
  for (double dt : {0.1, 0.05, 0.025}) {
    const Vector x = gen.vector(4);
    const auto sys = LtvSystem::constant(step, 1, dt);
    const Vector exact = transition_kernel(sys, 0).phi * x;
    CHECK((euler_step(linear, x, dt) - exact).norm() <= 1e-14 * (1.0 + x.norm()));
  }
}
