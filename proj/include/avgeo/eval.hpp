#pragma once

#include <optional>
#include <span>
#include <vector>

#include "avgeo/sphere.hpp"

namespace avgeo {

inline const std::vector<double> kDefaultThresholdsKm{25.0, 200.0, 750.0, 2500.0};

struct EvalRecord {
  GeoPoint prediction;
  GeoPoint truth;
  std::optional<double> log_likelihood;
  std::vector<GeoPoint> samples;
};

struct ThresholdAccuracy {
  double threshold_km = 0.0;
  double accuracy = 0.0;
};

struct PrdMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double density = 0.0;
  double coverage = 0.0;
};

struct MetricReport {
  std::size_t num_records = 0;
  std::vector<ThresholdAccuracy> accuracy;
  double median_error_km = 0.0;
  std::optional<double> mean_nll;
  std::optional<PrdMetrics> prd;
  int prd_k = 0;
};

/// Fraction of records with error <= threshold, for each threshold.
std::vector<ThresholdAccuracy> accuracy_at(std::span<const EvalRecord> records, std::span<const double> thresholds_km);

/// Median geodesic error in km; mean of the middle pair for even counts.
double median_error(std::span<const EvalRecord> records);

/// Mean of -log p over the records that carry a likelihood; empty if none do.
std::optional<double> nll_summary(std::span<const EvalRecord> records);

/// k-nearest-neighbour manifold metrics under geodesic distance.
///
/// Each reference point owns a ball whose radius is the distance to its k-th
/// nearest other reference point (generated balls likewise for recall).
/// Needs more than k points in each set.
PrdMetrics prd_metrics(std::span<const UnitVec> generated, std::span<const UnitVec> reference, int k);

/// Accuracy, median error, NLL and (when enough points exist) kNN metrics.
/// The generated set pools record samples, falling back to predictions; the
/// reference set is the truths.
MetricReport evaluate(std::span<const EvalRecord> records, std::span<const double> thresholds_km = kDefaultThresholdsKm,
                      int k = 3);

} // namespace avgeo
