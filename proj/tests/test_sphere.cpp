#include <doctest.h>

#include <cmath>
#include <numbers>

#include "avgeo/errors.hpp"
#include "avgeo/sphere.hpp"

using namespace avgeo;

namespace {

GeoPoint random_geopoint(Rng& rng) {
  // Stay a hair away from the poles, where longitude is not recoverable.
  std::uniform_real_distribution<double> lat(-89.999, 89.999);
  std::uniform_real_distribution<double> lon(-180.0, 180.0);
  return GeoPoint::make(lat(rng), lon(rng));
}

Vec3 random_tangent(const UnitVec& base, double max_norm, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto basis = tangent_basis(base);
  const double angle = 2.0 * std::numbers::pi * u(rng);
  return max_norm * u(rng) * (std::cos(angle) * basis[0] + std::sin(angle) * basis[1]);
}

double lon_diff(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

} // namespace

TEST_CASE("to_unit conventions") {
  const UnitVec o = to_unit(GeoPoint::make(0, 0));
  CHECK(o.x() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(o.y()) < 1e-15);
  CHECK(std::abs(o.z()) < 1e-15);

  for (double lon : {-170.0, 0.0, 33.0, 180.0}) {
    const UnitVec n = to_unit(GeoPoint::make(90, lon));
    CHECK(n.z() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::hypot(n.x(), n.y()) < 1e-15);
  }

  // Direct trigonometry: cos45*cos45 = 1/2, cos45*sin45 = 1/2, sin45 = sqrt2/2.
  const UnitVec p = to_unit(GeoPoint::make(45, 45));
  CHECK(p.x() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p.y() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p.z() == doctest::Approx(std::numbers::sqrt2 / 2).epsilon(1e-14));
}

TEST_CASE("invalid coordinates are rejected") {
  CHECK_THROWS_AS(to_unit(GeoPoint{std::nan(""), 0.0}), InvalidInput);
  CHECK_THROWS_AS(to_unit(GeoPoint{0.0, std::numeric_limits<double>::infinity()}), InvalidInput);
  CHECK_THROWS_AS(GeoPoint::make(90.5, 0), InvalidInput);
  CHECK_THROWS_AS(UnitVec::normalize(0, 0, 0), InvalidInput);
}

TEST_CASE("longitude normalization into (-180, 180]") {
  CHECK(normalize_lon(-180.0) == 180.0);
  CHECK(normalize_lon(540.0) == 180.0);
  CHECK(normalize_lon(190.0) == doctest::Approx(-170.0));
  CHECK(normalize_lon(-190.0) == doctest::Approx(170.0));
  CHECK(from_unit(to_unit(GeoPoint::make(10, -180))).lon == doctest::Approx(180.0));
}

TEST_CASE("geodesic distance reference values") {
  const UnitVec a = to_unit(GeoPoint::make(0, 0));
  CHECK(geodesic_distance(a, a) == 0.0);
  CHECK(geodesic_distance_km(GeoPoint::make(0, 0), GeoPoint::make(0, 180)) ==
        doctest::Approx(std::numbers::pi * kEarthRadiusKm).epsilon(1e-12));
  CHECK(geodesic_distance_km(GeoPoint::make(0, 0), GeoPoint::make(0, 180)) == doctest::Approx(20015.11).epsilon(1e-6));
  CHECK(geodesic_distance_km(GeoPoint::make(0, 0), GeoPoint::make(90, 0)) == doctest::Approx(10007.56).epsilon(1e-6));
}

TEST_CASE("round trip GeoPoint -> UnitVec -> GeoPoint on 1000 points") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint p = random_geopoint(rng);
    const GeoPoint q = from_unit(to_unit(p));
    CHECK(std::abs(q.lat - p.lat) < 1e-9);
    CHECK(lon_diff(q.lon, p.lon) < 1e-9);
    CHECK(std::abs(to_unit(p).vec().norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("exp map reference values and errors") {
  const UnitVec b = UnitVec::normalize(1, 0, 0);
  CHECK(exp_map(b, Vec3::Zero()) == b);
  const UnitVec q = exp_map(b, Vec3(0, std::numbers::pi / 2, 0));
  CHECK(std::abs(q.x()) < 1e-15);
  CHECK(q.y() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(exp_map(b, Vec3(0.1, 0.2, 0)), InvalidInput);
}

TEST_CASE("log map properties and antipodal singularity") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const UnitVec a = sample_uniform(rng);
    const UnitVec b = sample_uniform(rng);
    const TangentVec v = log_map(a, b);
    CHECK(v.norm() == doctest::Approx(geodesic_distance(a, b)).epsilon(1e-12));
    CHECK(std::abs(v.v.dot(a.vec())) < 1e-12);
  }
  const UnitVec a = sample_uniform(rng);
  CHECK_THROWS_AS(log_map(a, -a), SingularityError);
  CHECK(log_map(a, a).norm() == 0.0);
}

TEST_CASE("log(exp(t)) round trip for random tangents") {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const UnitVec b = sample_uniform(rng);
    const Vec3 t = random_tangent(b, 3.1, rng);
    const TangentVec back = log_map(b, exp_map(b, t));
    CHECK((back.v - t).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("exp(log) inverse on 1000 non-antipodal pairs") {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const UnitVec a = sample_uniform(rng);
    const UnitVec b = sample_uniform(rng);
    const UnitVec c = exp_map(log_map(a, b));
    CHECK((c.vec() - b.vec()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("triangle inequality on 1000 triples") {
  Rng rng(15);
  for (int i = 0; i < 1000; ++i) {
    const UnitVec a = sample_uniform(rng), b = sample_uniform(rng), c = sample_uniform(rng);
    CHECK(geodesic_distance(a, c) <= geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-12);
    CHECK(geodesic_distance(a, b) == geodesic_distance(b, a));
  }
}

TEST_CASE("geodesic interpolation") {
  const UnitVec x = UnitVec::normalize(1, 0, 0);
  const UnitVec y = UnitVec::normalize(0, 1, 0);

  const auto mid = geodesic_interpolate(x, y, 0.5);
  CHECK(mid.point.x() == doctest::Approx(std::numbers::sqrt2 / 2).epsilon(1e-15));
  CHECK(mid.point.y() == doctest::Approx(std::numbers::sqrt2 / 2).epsilon(1e-15));
  CHECK(std::abs(mid.point.z()) < 1e-15);

  const auto start = geodesic_interpolate(x, y, 0.0);
  CHECK(start.point == x);
  CHECK((start.velocity.v - log_map(x, y).v).norm() < 1e-15);
  CHECK(geodesic_interpolate(x, y, 1.0).point == y);

  CHECK_THROWS_AS(geodesic_interpolate(x, -x, 0.3), SingularityError);

  // Proportionality: d(y0, y_t) = t d(y0, y1), and constant speed.
  Rng rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const UnitVec a = sample_uniform(rng);
    const UnitVec b = sample_uniform(rng);
    const double t = u(rng);
    const auto g = geodesic_interpolate(a, b, t);
    const double total = geodesic_distance(a, b);
    CHECK(geodesic_distance(a, g.point) == doctest::Approx(t * total).epsilon(1e-9));
    CHECK(std::abs(g.velocity.norm() - total) < 1e-9);
    CHECK(std::abs(g.velocity.v.dot(g.point.vec())) < 1e-10);
  }
}

TEST_CASE("project_tangent is orthogonal and idempotent") {
  Rng rng(17);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 100; ++i) {
    const UnitVec b = sample_uniform(rng);
    const Vec3 v(g(rng), g(rng), g(rng));
    const TangentVec p = project_tangent(b, v);
    CHECK(std::abs(p.v.dot(b.vec())) < 1e-12);
    CHECK((project_tangent(b, p.v).v - p.v).norm() < 1e-15);
  }
}

TEST_CASE("uniform sampler: mean near zero and balanced octants over 100k draws") {
  Rng rng(18);
  constexpr int n = 100000;
  Vec3 mean = Vec3::Zero();
  std::array<int, 8> octant{};
  for (int i = 0; i < n; ++i) {
    const UnitVec u = sample_uniform(rng);
    mean += u.vec();
    ++octant[static_cast<std::size_t>((u.x() > 0) | (u.y() > 0) << 1 | (u.z() > 0) << 2)];
  }
  mean /= n;
  CHECK(mean.norm() < 0.02);
  const double expected = n / 8.0;
  const double sigma = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
  for (int c : octant) CHECK(std::abs(c - expected) < 4.0 * sigma);
}

TEST_CASE("tangent basis is orthonormal and right-handed") {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const UnitVec b = sample_uniform(rng);
    const auto e = tangent_basis(b);
    CHECK(std::abs(e[0].dot(b.vec())) < 1e-14);
    CHECK(std::abs(e[1].dot(b.vec())) < 1e-14);
    CHECK(std::abs(e[0].dot(e[1])) < 1e-14);
    CHECK(e[0].cross(e[1]).dot(b.vec()) == doctest::Approx(1.0));
  }
}
