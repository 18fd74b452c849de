#pragma once

#include "gvimp/gaussian.hpp"

#include <atomic>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace gvimp {

/// Signed distance field on a regular 2D or 3D grid; positive outside obstacles.
///
/// Values are stored row-major with the last axis fastest: index (y, x) in 2D
/// and (z, y, x) in 3D, matching the text file layout.
class SignedDistanceField {
 public:
  SignedDistanceField(int dim, std::vector<int> extents, Vector origin, double cell_size,
                      std::vector<double> values);

  int dim() const { return dim_; }
  /// Node counts along x, y (, z).
  const std::vector<int>& extents() const { return extents_; }
  const Vector& origin() const { return origin_; }
  double cell_size() const { return cell_size_; }
  const std::vector<double>& values() const { return values_; }

  /// Value stored at integer node (ix, iy[, iz]).
  double node(int ix, int iy, int iz = 0) const;

  /// Bilinear / trilinear interpolated distance at a world point. Queries
  /// outside the grid are clamped to the border and counted.
  double distance(const Eigen::Ref<const Vector>& p) const;

  /// Number of clamped out-of-bounds queries so far.
  long out_of_bounds_count() const { return oob_->load(std::memory_order_relaxed); }

  /// Largest |Δ| between adjacent nodes divided by cell_size; 1 for a true SDF.
  double max_adjacent_slope() const;

 private:
  std::size_t flat(int ix, int iy, int iz) const;

  int dim_;
  std::vector<int> extents_;
  Vector origin_;
  double cell_size_;
  std::vector<double> values_;
  std::shared_ptr<std::atomic<long>> oob_ = std::make_shared<std::atomic<long>>(0);
};

/// Reads the "SDF2 rows cols cell ox oy" / "SDF3 layers rows cols cell ox oy oz" text format.
/// Throws ConfigError on unreadable or malformed input.
SignedDistanceField load_sdf(const std::string& path);
SignedDistanceField parse_sdf(std::istream& in);
void write_sdf(std::ostream& out, const SignedDistanceField& sdf);

struct Primitive {
  enum class Kind { Disc, Box };
  Kind kind = Kind::Disc;
  Vector center;
  double radius = 0.0;  // Disc
  Vector half_extents;  // Box
};

/// Exact signed distance to one primitive (disc = circle/sphere by dimension).
double primitive_distance(const Primitive& prim, const Vector& p);

struct Bounds {
  Vector lower;
  Vector upper;
};

/// Samples the union of primitives on a grid covering `bounds`. An empty list
/// yields a field of 1e6 everywhere.
SignedDistanceField rasterize(const std::vector<Primitive>& primitives, const Bounds& bounds,
                              double cell_size);

struct CollisionModel {
  double radius_eps = 0.0;
  double sigma_obs = 1.0;

  void validate() const;
};

/// σ_obs · max(radius_eps − d, 0)²
double hinge_cost(const CollisionModel& model, double d);

/// min over knots of distance(position) − radius_eps. Positions are the first
/// sdf.dim() coordinates of each state.
double min_clearance(const std::vector<Vector>& states, const SignedDistanceField& sdf,
                     const CollisionModel& model);

}  // namespace gvimp
