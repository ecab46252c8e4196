#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "avgeo/cells.hpp"
#include "avgeo/net.hpp"
#include "avgeo/sphere.hpp"

namespace avgeo {

class FlowModel;

/// Polygon with great-circle edges: one outer ring and optional holes.
/// Rings are stored open (the closing vertex is dropped).
struct SphericalPolygon {
  std::vector<UnitVec> outer;
  std::vector<std::vector<UnitVec>> holes;
  Vec3 center = Vec3::UnitX(); // every vertex lies strictly in the hemisphere around it

  /// Builds from closed GeoPoint rings (first == last, >= 4 vertices). The
  /// first ring is the outer boundary. Throws InvalidInput for rings that are
  /// open, too short or not contained in an open hemisphere.
  static SphericalPolygon from_rings(const std::vector<std::vector<GeoPoint>>& rings);

  /// Closed-set containment: boundary points count as inside.
  bool contains(const UnitVec& p) const;
};

enum class RingSide { Outside, Boundary, Inside };

/// Spherical winding-number test of `p` against an open ring lying in the
/// hemisphere around `center`.
RingSide classify_point(std::span<const UnitVec> ring, const Vec3& center, const UnitVec& p);

/// Case-folded entity name -> polygon(s).
class EntityGazetteer {
public:
  /// Adds a named entity. Names are case-folded and must be unique.
  void add(std::string_view name, std::vector<SphericalPolygon> polygons);

  /// GeoJSON FeatureCollection with a `name` property per feature and
  /// Polygon or MultiPolygon geometry.
  static EntityGazetteer from_geojson(const nlohmann::json& doc);
  static EntityGazetteer load(const std::string& path);

  bool has(std::string_view name) const;
  /// False for names that are not in the gazetteer.
  bool contains(std::string_view name, const UnitVec& p) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entities_.size(); }

private:
  std::map<std::string, std::vector<SphericalPolygon>, std::less<>> entities_;
};

std::string case_fold(std::string_view s);

struct RewardCoefficients {
  double geo = 1.0;
  double align = 1.0;
  double calib = 0.1;
};

struct RewardConfig {
  CellLevelWeights cells{};
  RewardCoefficients coefficients{};
  double kl_beta = 0.01; // carried for an external policy trainer
  int group_size = 8;

  void validate() const;
};

struct RewardComponents {
  double geo = 0.0;
  double align = 0.0;
  double calib = 0.0;
};

/// Weighted agreement of the prediction's and truth's cells across levels.
double r_geo(const UnitVec& prediction, const UnitVec& truth, const CellLevelWeights& weights);

/// Case-insensitive, word-bounded longest-match scan for gazetteer names.
/// Duplicates are dropped; order of first occurrence is kept.
std::vector<std::string> parse_entities(std::string_view text, const EntityGazetteer& gazetteer);

/// 1 if the prediction lies in the polygon of any listed entity, else 0 (also for an empty list).
double r_align(std::span<const std::string> entities, const UnitVec& prediction, const EntityGazetteer& gazetteer);

/// Log-likelihood of the truth under the flow conditioned on psi.
double r_calib(const FlowModel& flow, const UnitVec& truth, const VectorXd& psi, int steps);

double total_reward(const RewardComponents& components, const RewardCoefficients& coefficients);

/// (r - mean) / (std + 1e-8) with the population standard deviation.
std::vector<double> group_advantages(std::span<const double> rewards);

} // namespace avgeo
