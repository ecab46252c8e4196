#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "avgeo/random.hpp"

namespace avgeo {

using Vec3 = Eigen::Vector3d;

/// IUGG mean Earth radius. Every kilometre figure in the toolkit uses it.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// Latitude/longitude in degrees. Longitude lives in (-180, 180].
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  /// Validates latitude and wraps longitude into (-180, 180].
  static GeoPoint make(double lat, double lon);

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

double normalize_lon(double lon);

/// Point on the unit sphere, embedded in R^3.
class UnitVec {
public:
  UnitVec() : v_(1.0, 0.0, 0.0) {}

  /// Scales `v` onto the sphere. Throws InvalidInput for zero or non-finite input.
  static UnitVec normalize(const Vec3& v);
  static UnitVec normalize(double x, double y, double z) { return normalize(Vec3(x, y, z)); }

  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  const Vec3& vec() const { return v_; }

  UnitVec operator-() const { return UnitVec(-v_); }
  friend bool operator==(const UnitVec& a, const UnitVec& b) { return a.v_ == b.v_; }

private:
  explicit UnitVec(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

/// Ambient 3-vector lying in the tangent plane at `base`.
struct TangentVec {
  UnitVec base;
  Vec3 v = Vec3::Zero();

  double norm() const { return v.norm(); }
};

struct GeodesicPoint {
  UnitVec point;
  TangentVec velocity;
};

UnitVec to_unit(const GeoPoint& p);
GeoPoint from_unit(const UnitVec& u);

/// Great-circle angle in radians, in [0, pi].
double geodesic_distance(const UnitVec& a, const UnitVec& b);
double geodesic_distance_km(const UnitVec& a, const UnitVec& b);
double geodesic_distance_km(const GeoPoint& a, const GeoPoint& b);

/// Exponential map. `v` must be orthogonal to `base` (relative tolerance 1e-10).
UnitVec exp_map(const UnitVec& base, const Vec3& v);
UnitVec exp_map(const TangentVec& t);

/// Inverse of exp_map. Throws SingularityError when `target` is within 1e-8 rad of -base.
TangentVec log_map(const UnitVec& base, const UnitVec& target);

/// Constant-speed geodesic from y0 (t = 0) to y1 (t = 1) and its velocity at t.
GeodesicPoint geodesic_interpolate(const UnitVec& y0, const UnitVec& y1, double t);

/// Uniform point on the sphere (normalized Gaussian 3-vector).
UnitVec sample_uniform(Rng& rng);

/// Orthogonal projection of `v` onto the tangent plane at `base`.
TangentVec project_tangent(const UnitVec& base, const Vec3& v);

/// Right-handed orthonormal basis (e1, e2) of the tangent plane at `base`.
std::array<Vec3, 2> tangent_basis(const UnitVec& base);

} // namespace avgeo
