#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "avgeo/errors.hpp"
#include "avgeo/eval.hpp"
#include "avgeo/io.hpp"
#include "oracles.hpp"

using namespace avgeo;

namespace {

GeoPoint offset(const GeoPoint& p, double km, double bearing) {
  const UnitVec u = to_unit(p);
  const auto e = tangent_basis(u);
  return from_unit(exp_map(u, (km / kEarthRadiusKm) * (std::cos(bearing) * e[0] + std::sin(bearing) * e[1])));
}

const std::vector<double> kFixtureKm{10, 30, 100, 250, 500, 800, 1000, 2000, 3000, 5000};

std::vector<EvalRecord> distance_fixture() {
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < kFixtureKm.size(); ++i) {
    const GeoPoint truth = GeoPoint::make(-40.0 + 8.0 * static_cast<double>(i), -150.0 + 31.0 * static_cast<double>(i));
    recs.push_back({offset(truth, kFixtureKm[i], 0.7 * static_cast<double>(i)), truth, std::nullopt, {}});
  }
  return recs;
}

std::vector<oracle::V3> vecs(const std::vector<UnitVec>& pts) {
  std::vector<oracle::V3> out;
  for (const auto& p : pts) out.push_back(p.vec());
  return out;
}

std::vector<UnitVec> cluster(const UnitVec& c, double spread, int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, spread);
  const auto e = tangent_basis(c);
  std::vector<UnitVec> out;
  for (int i = 0; i < n; ++i) out.push_back(exp_map(c, g(rng) * e[0] + g(rng) * e[1]));
  return out;
}

} // namespace

TEST_CASE("distance fixture accuracies and median") {
  const auto recs = distance_fixture();
  // Per-record distance oracle.
  std::vector<double> d;
  for (const auto& r : recs) d.push_back(geodesic_distance_km(r.prediction, r.truth));
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(kFixtureKm[i]).epsilon(1e-9));

  const auto acc = accuracy_at(recs, kDefaultThresholdsKm);
  const std::vector<double> expected{0.1, 0.3, 0.5, 0.8};
  REQUIRE(acc.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const double t = kDefaultThresholdsKm[i];
    const double oracle = static_cast<double>(std::count_if(d.begin(), d.end(), [t](double x) { return x <= t; })) / 10.0;
    CHECK(acc[i].threshold_km == t);
    CHECK(acc[i].accuracy == oracle);
    CHECK(acc[i].accuracy == expected[i]);
  }
  CHECK(median_error(recs) == doctest::Approx(650.0).epsilon(1e-9));

  auto odd = recs;
  odd.pop_back();
  CHECK(median_error(odd) == doctest::Approx(500.0).epsilon(1e-9));
  CHECK_THROWS_AS(median_error(std::vector<EvalRecord>{}), InvalidInput);
}

TEST_CASE("exact and antipodal predictions") {
  Rng rng(1);
  std::vector<EvalRecord> same, opposite;
  for (int i = 0; i < 20; ++i) {
    const UnitVec p = sample_uniform(rng);
    same.push_back({from_unit(p), from_unit(p), std::nullopt, {}});
    opposite.push_back({from_unit(-p), from_unit(p), std::nullopt, {}});
  }
  for (const auto& a : accuracy_at(same, kDefaultThresholdsKm)) CHECK(a.accuracy == 1.0);
  for (const auto& a : accuracy_at(opposite, kDefaultThresholdsKm)) CHECK(a.accuracy == 0.0);
}

TEST_CASE("threshold ties count as correct and accuracy is monotone") {
  const GeoPoint a = GeoPoint::make(0, 0);
  const GeoPoint b = GeoPoint::make(0, 1);
  const double d = geodesic_distance_km(a, b);
  const std::vector<EvalRecord> recs{{a, b, std::nullopt, {}}};
  const std::vector<double> at{d};
  CHECK(accuracy_at(recs, at)[0].accuracy == 1.0);

  Rng rng(2);
  std::vector<EvalRecord> random;
  for (int i = 0; i < 200; ++i) random.push_back({from_unit(sample_uniform(rng)), from_unit(sample_uniform(rng)), std::nullopt, {}});
  const std::vector<double> thresholds{10, 100, 1000, 5000, 10000, 20000};
  const auto acc = accuracy_at(random, thresholds);
  for (std::size_t i = 1; i < acc.size(); ++i) CHECK(acc[i].accuracy >= acc[i - 1].accuracy);
}

TEST_CASE("median is permutation invariant") {
  auto recs = distance_fixture();
  Rng rng(3);
  const double m = median_error(recs);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(recs.begin(), recs.end(), rng);
    CHECK(median_error(recs) == m);
  }
}

TEST_CASE("nll summary") {
  std::vector<EvalRecord> recs = distance_fixture();
  CHECK_FALSE(nll_summary(recs).has_value());
  recs[0].log_likelihood = -1.0;
  recs[3].log_likelihood = 2.0;
  CHECK(*nll_summary(recs) == doctest::Approx(-0.5));
}

TEST_CASE("prd metrics match the exhaustive oracle on n = 8, k = 2") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const UnitVec c = sample_uniform(rng);
    const auto gen = cluster(c, 0.3, 8, rng);
    const auto ref = cluster(c, 0.2, 8, rng);
    const auto m = prd_metrics(gen, ref, 2);
    const auto o = oracle::exhaustive_prd(vecs(gen), vecs(ref), 2);
    CHECK(m.precision == o.precision);
    CHECK(m.recall == o.recall);
    CHECK(m.density == o.density);
    CHECK(m.coverage == o.coverage);
  }
}

TEST_CASE("prd metrics on identical and disjoint sets") {
  Rng rng(5);
  const UnitVec c = sample_uniform(rng);
  const auto ref = cluster(c, 0.05, 30, rng);
  const auto same = prd_metrics(ref, ref, 3);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.coverage == 1.0);
  CHECK(same.density >= 1.0);

  const auto far = cluster(-c, 0.05, 30, rng);
  const auto disjoint = prd_metrics(far, ref, 3);
  CHECK(disjoint.precision == 0.0);
  CHECK(disjoint.recall == 0.0);
  CHECK(disjoint.density == 0.0);
  CHECK(disjoint.coverage == 0.0);

  CHECK_THROWS_AS(prd_metrics(std::vector<UnitVec>(ref.begin(), ref.begin() + 3), ref, 3), InvalidInput);
  CHECK_THROWS_AS(prd_metrics(ref, ref, 0), InvalidInput);
}

TEST_CASE("prd metrics are invariant under a common rotation") {
  Rng rng(6);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(1.1, Vec3(0.3, -1, 0.5).normalized()).toRotationMatrix();
  for (int trial = 0; trial < 20; ++trial) {
    const UnitVec c = sample_uniform(rng);
    const auto gen = cluster(c, 0.4, 25, rng);
    const auto ref = cluster(c, 0.3, 20, rng);
    std::vector<UnitVec> rg, rr;
    for (const auto& p : gen) rg.push_back(UnitVec::normalize(R * p.vec()));
    for (const auto& p : ref) rr.push_back(UnitVec::normalize(R * p.vec()));
    const auto a = prd_metrics(gen, ref, 3);
    const auto b = prd_metrics(rg, rr, 3);
    CHECK(a.precision == b.precision);
    CHECK(a.recall == b.recall);
    CHECK(a.density == b.density);
    CHECK(a.coverage == b.coverage);
  }
}

TEST_CASE("evaluate assembles the report") {
  auto recs = distance_fixture();
  recs[2].log_likelihood = -3.0;
  const MetricReport rep = evaluate(recs);
  CHECK(rep.num_records == 10);
  CHECK(rep.accuracy[2].accuracy == 0.5);
  CHECK(rep.median_error_km == doctest::Approx(650.0));
  CHECK(*rep.mean_nll == 3.0);
  REQUIRE(rep.prd.has_value());
  CHECK(rep.prd_k == 3);

  const auto j = avgeo::io::to_json(rep);
  CHECK(j.at("accuracy").at("750km").get<double>() == 0.5);
  const std::string csv = avgeo::io::report_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

  std::vector<EvalRecord> tiny(recs.begin(), recs.begin() + 2);
  CHECK_FALSE(evaluate(tiny).prd.has_value());
}
