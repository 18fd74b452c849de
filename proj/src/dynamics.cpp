#include "gvimp/dynamics.hpp"

#include "gvimp/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace gvimp {

void LtvSystem::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("LTV system: dt must be positive");
  if (steps.size() < 2) throw std::invalid_argument("LTV system: need at least two knots");
  const auto n = steps.front().A.rows();
  const auto m = steps.front().B.cols();
  for (const auto& s : steps) {
    if (s.A.rows() != n || s.A.cols() != n || s.a.size() != n || s.B.rows() != n || s.B.cols() != m) {
      throw std::invalid_argument("LTV system: inconsistent step dimensions");
    }
  }
}

LtvSystem LtvSystem::constant(const LtvStep& step, int num_intervals, double dt) {
  LtvSystem sys{std::vector<LtvStep>(num_intervals + 1, step), dt};
  sys.validate();
  return sys;
}

LtvStep point_robot_lti(int dim) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("point robot dimension must be 2 or 3");
  const int n = 2 * dim;
  LtvStep s{Matrix::Zero(n, n), Vector::Zero(n), Matrix::Zero(n, dim)};
  s.A.topRightCorner(dim, dim).setIdentity();
  s.B.bottomRows(dim).setIdentity();
  return s;
}

NonlinearSystem planar_quadrotor(const QuadrotorParams& p) {
  NonlinearSystem sys;
  sys.name = "planar_quadrotor";
  sys.state_dim = 6;
  sys.noise_dim = 2;
  sys.drift = [g = p.gravity](const Vector& x) {
    const double phi = x(2);
    const double vx = x(3);
    const double vz = x(4);
    const double phidot = x(5);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    Vector f(6);
    f << vx * c - vz * s,
         vx * s + vz * c,
         phidot,
         vz * phidot - g * s,
         -vx * phidot - g * c,
         0.0;
    return f;
  };
  Matrix input = Matrix::Zero(6, 2);
  input(4, 0) = 1.0 / p.mass;
  input(4, 1) = 1.0 / p.mass;
  input(5, 0) = p.length / p.inertia;
  input(5, 1) = -p.length / p.inertia;
  sys.diffusion = [input](const Vector&) { return input; };
  return sys;
}

Vector euler_step(const NonlinearSystem& sys, const Vector& x, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be positive");
  Vector next = x + sys.drift(x) * dt;
  if (!next.allFinite()) throw NumericalError("euler_step: non-finite state");
  return next;
}

}  // namespace gvimp
