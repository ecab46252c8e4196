#include "avgeo/sphere.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "avgeo/errors.hpp"

namespace avgeo {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kTangentTol = 1e-10;
constexpr double kAntipodalTol = 1e-8;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidInput(std::string(what) + " is not finite");
}

} // namespace

double normalize_lon(double lon) {
  require_finite(lon, "longitude");
  double r = std::fmod(lon, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

GeoPoint GeoPoint::make(double lat, double lon) {
  require_finite(lat, "latitude");
  if (lat < -90.0 || lat > 90.0) throw InvalidInput("latitude out of [-90, 90]: " + std::to_string(lat));
  return GeoPoint{lat, normalize_lon(lon)};
}

UnitVec UnitVec::normalize(const Vec3& v) {
  if (!v.allFinite()) throw InvalidInput("vector has non-finite components");
  const double n = v.norm();
  if (n == 0.0) throw InvalidInput("cannot normalize the zero vector");
  return UnitVec(v / n);
}

UnitVec to_unit(const GeoPoint& p) {
  const GeoPoint q = GeoPoint::make(p.lat, p.lon);
  const double phi = q.lat * kDeg;
  const double lam = q.lon * kDeg;
  return UnitVec::normalize(std::cos(phi) * std::cos(lam), std::cos(phi) * std::sin(lam), std::sin(phi));
}

GeoPoint from_unit(const UnitVec& u) {
  const double lat = std::atan2(u.z(), std::hypot(u.x(), u.y())) / kDeg;
  const double lon = std::atan2(u.y(), u.x()) / kDeg;
  return GeoPoint{lat, lon == -180.0 ? 180.0 : lon};
}

double geodesic_distance(const UnitVec& a, const UnitVec& b) {
  return std::atan2(a.vec().cross(b.vec()).norm(), a.vec().dot(b.vec()));
}

double geodesic_distance_km(const UnitVec& a, const UnitVec& b) {
  return geodesic_distance(a, b) * kEarthRadiusKm;
}

double geodesic_distance_km(const GeoPoint& a, const GeoPoint& b) {
  return geodesic_distance_km(to_unit(a), to_unit(b));
}

UnitVec exp_map(const UnitVec& base, const Vec3& v) {
  if (!v.allFinite()) throw InvalidInput("tangent vector has non-finite components");
  const double n = v.norm();
  if (std::abs(base.vec().dot(v)) > kTangentTol * std::max(1.0, n))
    throw InvalidInput("vector is not tangent at the base point");
  if (n == 0.0) return base;
  return UnitVec::normalize(std::cos(n) * base.vec() + std::sin(n) * (v / n));
}

UnitVec exp_map(const TangentVec& t) { return exp_map(t.base, t.v); }

TangentVec log_map(const UnitVec& base, const UnitVec& target) {
  const double d = geodesic_distance(base, target);
  if (d > std::numbers::pi - kAntipodalTol) throw SingularityError("log map of an antipodal pair is undefined");
  Vec3 u = target.vec() - base.vec().dot(target.vec()) * base.vec();
  const double un = u.norm();
  if (un == 0.0 || d == 0.0) return TangentVec{base, Vec3::Zero()};
  u /= un;
  // Remove the residual normal component left by rounding.
  u -= base.vec().dot(u) * base.vec();
  return TangentVec{base, d * u};
}

GeodesicPoint geodesic_interpolate(const UnitVec& y0, const UnitVec& y1, double t) {
  require_finite(t, "interpolation time");
  const TangentVec v = log_map(y0, y1);
  const double theta = v.norm();
  if (theta == 0.0) return {y0, TangentVec{y0, Vec3::Zero()}};
  const Vec3 dir = v.v / theta;
  const double c = std::cos(t * theta);
  const double s = std::sin(t * theta);
  UnitVec point = t == 0.0 ? y0 : t == 1.0 ? y1 : UnitVec::normalize(c * y0.vec() + s * dir);
  Vec3 vel = theta * (-s * y0.vec() + c * dir);
  // Velocity is recomputed in the frame of the returned point so it stays tangent
  // at exact endpoints as well.
  vel -= point.vec().dot(vel) * point.vec();
  vel *= theta / vel.norm();
  return {point, TangentVec{point, vel}};
}

UnitVec sample_uniform(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Vec3 v(g(rng), g(rng), g(rng));
    if (v.squaredNorm() > 1e-24) return UnitVec::normalize(v);
  }
}

TangentVec project_tangent(const UnitVec& base, const Vec3& v) {
  if (!v.allFinite()) throw InvalidInput("vector has non-finite components");
  return TangentVec{base, v - base.vec().dot(v) * base.vec()};
}

std::array<Vec3, 2> tangent_basis(const UnitVec& base) {
  const Vec3& n = base.vec();
  // Pick the coordinate axis least aligned with n.
  Vec3 axis = Vec3::UnitX();
  if (std::abs(n.y()) < std::abs(n.x()) && std::abs(n.y()) <= std::abs(n.z()))
    axis = Vec3::UnitY();
  else if (std::abs(n.z()) < std::abs(n.x()))
    axis = Vec3::UnitZ();
  Vec3 e1 = (axis - n.dot(axis) * n).normalized();
  Vec3 e2 = n.cross(e1);
  return {e1, e2};
}

} // namespace avgeo
