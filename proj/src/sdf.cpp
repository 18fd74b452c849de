#include "gvimp/sdf.hpp"

#include "gvimp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace gvimp {

namespace {

constexpr double kEmptyFieldValue = 1e6;

}  // namespace

SignedDistanceField::SignedDistanceField(int dim, std::vector<int> extents, Vector origin, double cell_size,
                                         std::vector<double> values)
    : dim_(dim), extents_(std::move(extents)), origin_(std::move(origin)), cell_size_(cell_size),
      values_(std::move(values)) {
  if (dim_ != 2 && dim_ != 3) throw std::invalid_argument("SDF dimension must be 2 or 3");
  if (static_cast<int>(extents_.size()) != dim_ || origin_.size() != dim_) {
    throw std::invalid_argument("SDF extents/origin do not match dimension");
  }
  if (!(cell_size_ > 0.0)) throw std::invalid_argument("SDF cell size must be positive");
  std::size_t count = 1;
  for (int e : extents_) {
    if (e < 2) throw std::invalid_argument("SDF needs at least two nodes per axis");
    count *= static_cast<std::size_t>(e);
  }
  if (values_.size() != count) throw std::invalid_argument("SDF value count does not match extents");
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("SDF values must be finite");
  }
}

std::size_t SignedDistanceField::flat(int ix, int iy, int iz) const {
  const auto nx = static_cast<std::size_t>(extents_[0]);
  const auto ny = static_cast<std::size_t>(extents_[1]);
  return (static_cast<std::size_t>(iz) * ny + static_cast<std::size_t>(iy)) * nx + static_cast<std::size_t>(ix);
}

double SignedDistanceField::node(int ix, int iy, int iz) const { return values_[flat(ix, iy, iz)]; }

double SignedDistanceField::distance(const Eigen::Ref<const Vector>& p) const {
  if (p.size() < dim_) throw std::invalid_argument("SDF query has too few coordinates");
  int idx[3] = {0, 0, 0};
  double frac[3] = {0.0, 0.0, 0.0};
  bool clamped = false;
  for (int a = 0; a < dim_; ++a) {
    double u = (p(a) - origin_(a)) / cell_size_;
    const double hi = extents_[a] - 1;
    if (!(u >= 0.0)) {  // also catches NaN
      u = 0.0;
      clamped = true;
    } else if (u > hi) {
      u = hi;
      clamped = true;
    }
    // Snap queries that land on a node up to rounding so nodes return stored values.
    if (std::abs(u - std::round(u)) < 1e-9) u = std::round(u);
    int i = static_cast<int>(std::floor(u));
    if (i >= extents_[a] - 1) i = extents_[a] - 2;
    idx[a] = i;
    frac[a] = u - i;
  }
  if (clamped) oob_->fetch_add(1, std::memory_order_relaxed);

  const auto lerp = [](double a, double b, double t) { return (1.0 - t) * a + t * b; };
  const int x = idx[0];
  const int y = idx[1];
  const double c00 = lerp(node(x, y, idx[2]), node(x + 1, y, idx[2]), frac[0]);
  const double c10 = lerp(node(x, y + 1, idx[2]), node(x + 1, y + 1, idx[2]), frac[0]);
  const double plane0 = lerp(c00, c10, frac[1]);
  if (dim_ == 2) return plane0;
  const int z = idx[2] + 1;
  const double c01 = lerp(node(x, y, z), node(x + 1, y, z), frac[0]);
  const double c11 = lerp(node(x, y + 1, z), node(x + 1, y + 1, z), frac[0]);
  return lerp(plane0, lerp(c01, c11, frac[1]), frac[2]);
}

double SignedDistanceField::max_adjacent_slope() const {
  double worst = 0.0;
  const int nz = dim_ == 3 ? extents_[2] : 1;
  for (int iz = 0; iz < nz; ++iz) {
    for (int iy = 0; iy < extents_[1]; ++iy) {
      for (int ix = 0; ix < extents_[0]; ++ix) {
        const double v = node(ix, iy, iz);
        if (ix + 1 < extents_[0]) worst = std::max(worst, std::abs(node(ix + 1, iy, iz) - v));
        if (iy + 1 < extents_[1]) worst = std::max(worst, std::abs(node(ix, iy + 1, iz) - v));
        if (iz + 1 < nz) worst = std::max(worst, std::abs(node(ix, iy, iz + 1) - v));
      }
    }
  }
  return worst / cell_size_;
}

SignedDistanceField parse_sdf(std::istream& in) {
  std::string tag;
  if (!(in >> tag) || (tag != "SDF2" && tag != "SDF3")) {
    throw ConfigError("SDF file: expected header tag SDF2 or SDF3");
  }
  const int dim = tag == "SDF2" ? 2 : 3;
  // Header order is slowest axis first: [layers] rows cols.
  std::vector<int> counts(dim);
  for (auto& c : counts) {
    if (!(in >> c) || c < 2) throw ConfigError("SDF file: bad grid extent in header");
  }
  double cell = 0.0;
  if (!(in >> cell) || !(cell > 0.0)) throw ConfigError("SDF file: bad cell size");
  Vector origin(dim);
  for (int a = 0; a < dim; ++a) {
    if (!(in >> origin(a))) throw ConfigError("SDF file: bad origin");
  }
  std::vector<int> extents(counts.rbegin(), counts.rend());
  std::size_t total = 1;
  for (int e : extents) total *= static_cast<std::size_t>(e);
  std::vector<double> values(total);
  for (std::size_t k = 0; k < total; ++k) {
    if (!(in >> values[k])) {
      throw ConfigError("SDF file: expected " + std::to_string(total) + " values, got " + std::to_string(k));
    }
    if (!std::isfinite(values[k])) throw ConfigError("SDF file: non-finite value");
  }
  return {dim, std::move(extents), std::move(origin), cell, std::move(values)};
}

SignedDistanceField load_sdf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open SDF file: " + path);
  try {
    return parse_sdf(in);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (" + path + ")");
  }
}

void write_sdf(std::ostream& out, const SignedDistanceField& sdf) {
  const auto& e = sdf.extents();
  out << (sdf.dim() == 2 ? "SDF2" : "SDF3");
  for (auto it = e.rbegin(); it != e.rend(); ++it) out << ' ' << *it;
  out << std::setprecision(17) << ' ' << sdf.cell_size();
  for (int a = 0; a < sdf.dim(); ++a) out << ' ' << sdf.origin()(a);
  out << '\n';
  const auto row = static_cast<std::size_t>(e[0]);
  const auto& v = sdf.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    out << v[k] << ((k + 1) % row == 0 ? '\n' : ' ');
  }
}

double primitive_distance(const Primitive& prim, const Vector& p) {
  if (prim.kind == Primitive::Kind::Disc) {
    return (p - prim.center).norm() - prim.radius;
  }
  // Box: standard exact SDF of an axis-aligned box.
  const Vector q = (p - prim.center).cwiseAbs() - prim.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

SignedDistanceField rasterize(const std::vector<Primitive>& primitives, const Bounds& bounds, double cell_size) {
  const int dim = static_cast<int>(bounds.lower.size());
  if (dim != 2 && dim != 3) throw std::invalid_argument("rasterize: bounds must be 2D or 3D");
  if (bounds.upper.size() != dim) throw std::invalid_argument("rasterize: bounds dimension mismatch");
  if (!(cell_size > 0.0)) throw std::invalid_argument("rasterize: cell size must be positive");
  for (const auto& prim : primitives) {
    if (prim.center.size() != dim) throw std::invalid_argument("rasterize: primitive dimension mismatch");
    if (prim.kind == Primitive::Kind::Box && prim.half_extents.size() != dim) {
      throw std::invalid_argument("rasterize: box half extents dimension mismatch");
    }
  }

  std::vector<int> extents(dim);
  for (int a = 0; a < dim; ++a) {
    const double span = bounds.upper(a) - bounds.lower(a);
    if (!(span > 0.0)) throw std::invalid_argument("rasterize: empty bounds");
    extents[a] = static_cast<int>(std::ceil(span / cell_size - 1e-9)) + 1;
  }
  std::size_t total = 1;
  for (int e : extents) total *= static_cast<std::size_t>(e);
  std::vector<double> values(total, kEmptyFieldValue);

  const int nz = dim == 3 ? extents[2] : 1;
  Vector p(dim);
  std::size_t k = 0;
  for (int iz = 0; iz < nz; ++iz) {
    for (int iy = 0; iy < extents[1]; ++iy) {
      for (int ix = 0; ix < extents[0]; ++ix, ++k) {
        p(0) = bounds.lower(0) + ix * cell_size;
        p(1) = bounds.lower(1) + iy * cell_size;
        if (dim == 3) p(2) = bounds.lower(2) + iz * cell_size;
        double d = kEmptyFieldValue;
        for (const auto& prim : primitives) d = std::min(d, primitive_distance(prim, p));
        values[k] = d;
      }
    }
  }
  return {dim, std::move(extents), bounds.lower, cell_size, std::move(values)};
}

void CollisionModel::validate() const {
  if (!(radius_eps >= 0.0)) throw std::invalid_argument("collision model: radius_eps must be >= 0");
  if (!(sigma_obs > 0.0)) throw std::invalid_argument("collision model: sigma_obs must be positive");
}

double hinge_cost(const CollisionModel& model, double d) {
  const double h = std::max(model.radius_eps - d, 0.0);
  return model.sigma_obs * h * h;
}

double min_clearance(const std::vector<Vector>& states, const SignedDistanceField& sdf,
                     const CollisionModel& model) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : states) best = std::min(best, sdf.distance(x.head(sdf.dim())) - model.radius_eps);
  return best;
}

}  // namespace gvimp
