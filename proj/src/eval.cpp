#include "avgeo/eval.hpp"

#include <algorithm>
#include <string>

#include "avgeo/errors.hpp"

namespace avgeo {
namespace {

std::vector<double> errors_km(std::span<const EvalRecord> records) {
  std::vector<double> d;
  d.reserve(records.size());
  for (const auto& r : records) d.push_back(geodesic_distance_km(r.prediction, r.truth));
  return d;
}

// Distance from each point to its k-th nearest neighbour within the same set.
std::vector<double> knn_radii(std::span<const UnitVec> pts, int k) {
  std::vector<double> radii(pts.size());
  std::vector<double> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d.clear();
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) d.push_back(geodesic_distance(pts[i], pts[j]));
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    radii[i] = d[static_cast<std::size_t>(k - 1)];
  }
  return radii;
}

} // namespace

std::vector<ThresholdAccuracy> accuracy_at(std::span<const EvalRecord> records, std::span<const double> thresholds_km) {
  const auto d = errors_km(records);
  std::vector<ThresholdAccuracy> out;
  for (double t : thresholds_km) {
    const auto hits = std::count_if(d.begin(), d.end(), [t](double x) { return x <= t; });
    out.push_back({t, records.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(records.size())});
  }
  return out;
}

double median_error(std::span<const EvalRecord> records) {
  if (records.empty()) throw InvalidInput("median of an empty record set");
  auto d = errors_km(records);
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  return n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

std::optional<double> nll_summary(std::span<const EvalRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.log_likelihood) continue;
    sum -= *r.log_likelihood;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

PrdMetrics prd_metrics(std::span<const UnitVec> generated, std::span<const UnitVec> reference, int k) {
  if (k < 1) throw InvalidInput("k must be at least 1");
  if (generated.size() <= static_cast<std::size_t>(k) || reference.size() <= static_cast<std::size_t>(k))
    throw InvalidInput("kNN metrics need more than k = " + std::to_string(k) + " points per set");
  const auto ref_r = knn_radii(reference, k);
  const auto gen_r = knn_radii(generated, k);

  PrdMetrics m;
  std::size_t precise = 0;
  std::size_t ball_hits = 0;
  for (const auto& g : generated) {
    bool inside_any = false;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      if (geodesic_distance(g, reference[i]) <= ref_r[i]) {
        inside_any = true;
        ++ball_hits;
      }
    }
    if (inside_any) ++precise;
  }
  std::size_t recalled = 0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    bool in_gen_ball = false;
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < generated.size(); ++j) {
      const double d = geodesic_distance(reference[i], generated[j]);
      if (d <= gen_r[j]) in_gen_ball = true;
      nearest = std::min(nearest, d);
    }
    if (in_gen_ball) ++recalled;
    if (nearest <= ref_r[i]) ++covered;
  }
  const double M = static_cast<double>(generated.size());
  const double N = static_cast<double>(reference.size());
  m.precision = static_cast<double>(precise) / M;
  m.recall = static_cast<double>(recalled) / N;
  m.density = static_cast<double>(ball_hits) / (static_cast<double>(k) * M);
  m.coverage = static_cast<double>(covered) / N;
  return m;
}

MetricReport evaluate(std::span<const EvalRecord> records, std::span<const double> thresholds_km, int k) {
  MetricReport rep;
  rep.num_records = records.size();
  rep.accuracy = accuracy_at(records, thresholds_km);
  if (!records.empty()) rep.median_error_km = median_error(records);
  rep.mean_nll = nll_summary(records);
  std::vector<UnitVec> generated;
  std::vector<UnitVec> reference;
  for (const auto& r : records) {
    reference.push_back(to_unit(r.truth));
    if (r.samples.empty())
      generated.push_back(to_unit(r.prediction));
    else
      for (const auto& s : r.samples) generated.push_back(to_unit(s));
  }
  rep.prd_k = k;
  if (generated.size() > static_cast<std::size_t>(k) && reference.size() > static_cast<std::size_t>(k))
    rep.prd = prd_metrics(generated, reference, k);
  return rep;
}

} // namespace avgeo
