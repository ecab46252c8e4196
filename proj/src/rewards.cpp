#include "avgeo/rewards.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "avgeo/errors.hpp"
#include "avgeo/rfm.hpp"

namespace avgeo {
namespace {

constexpr double kBoundaryTol = 1e-10;
constexpr double kHemisphereMargin = 1e-9;

std::vector<UnitVec> open_ring(const std::vector<GeoPoint>& ring) {
  if (ring.size() < 4) throw InvalidInput("polygon rings need at least 4 vertices");
  if (!(ring.front() == ring.back())) throw InvalidInput("polygon rings must be closed (first vertex == last vertex)");
  std::vector<UnitVec> out;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) out.push_back(to_unit(ring[i]));
  return out;
}

bool on_arc(const Vec3& a, const Vec3& b, const Vec3& p) {
  if ((p - a).norm() <= kBoundaryTol || (p - b).norm() <= kBoundaryTol) return true;
  const Vec3 n = a.cross(b);
  const double nn = n.norm();
  if (nn == 0.0) return false;
  if (std::abs(p.dot(n)) / nn > kBoundaryTol) return false;
  return a.cross(p).dot(n) >= 0.0 && p.cross(b).dot(n) >= 0.0;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

GeoPoint read_position(const nlohmann::json& pos) {
  if (!pos.is_array() || pos.size() < 2) throw InvalidInput("GeoJSON position must be [lon, lat]");
  return GeoPoint::make(pos[1].get<double>(), pos[0].get<double>());
}

std::vector<std::vector<GeoPoint>> read_rings(const nlohmann::json& rings) {
  std::vector<std::vector<GeoPoint>> out;
  for (const auto& ring : rings) {
    std::vector<GeoPoint> pts;
    for (const auto& pos : ring) pts.push_back(read_position(pos));
    out.push_back(std::move(pts));
  }
  return out;
}

} // namespace

SphericalPolygon SphericalPolygon::from_rings(const std::vector<std::vector<GeoPoint>>& rings) {
  if (rings.empty()) throw InvalidInput("polygon needs an outer ring");
  SphericalPolygon poly;
  poly.outer = open_ring(rings.front());
  for (std::size_t r = 1; r < rings.size(); ++r) poly.holes.push_back(open_ring(rings[r]));
  Vec3 sum = Vec3::Zero();
  for (const auto& v : poly.outer) sum += v.vec();
  if (sum.norm() < 1e-12) throw InvalidInput("polygon is not contained in a hemisphere");
  poly.center = sum.normalized();
  auto check = [&](const std::vector<UnitVec>& ring) {
    for (const auto& v : ring)
      if (v.vec().dot(poly.center) <= kHemisphereMargin)
        throw InvalidInput("polygon is not contained in an open hemisphere");
  };
  check(poly.outer);
  for (const auto& h : poly.holes) check(h);
  return poly;
}

RingSide classify_point(std::span<const UnitVec> ring, const Vec3& center, const UnitVec& p) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i)
    if (on_arc(ring[i].vec(), ring[(i + 1) % n].vec(), p.vec())) return RingSide::Boundary;
  if (p.vec().dot(center) <= 0.0) return RingSide::Outside;
  const auto basis = tangent_basis(p);
  auto azimuth = [&](const UnitVec& v) { return std::atan2(v.vec().dot(basis[1]), v.vec().dot(basis[0])); };
  double total = 0.0;
  double prev = azimuth(ring[0]);
  for (std::size_t i = 1; i <= n; ++i) {
    const double cur = azimuth(ring[i % n]);
    double delta = cur - prev;
    if (delta > std::numbers::pi) delta -= 2.0 * std::numbers::pi;
    if (delta <= -std::numbers::pi) delta += 2.0 * std::numbers::pi;
    total += delta;
    prev = cur;
  }
  const long winding = std::lround(total / (2.0 * std::numbers::pi));
  return winding != 0 ? RingSide::Inside : RingSide::Outside;
}

bool SphericalPolygon::contains(const UnitVec& p) const {
  if (classify_point(outer, center, p) == RingSide::Outside) return false;
  for (const auto& hole : holes)
    if (classify_point(hole, center, p) == RingSide::Inside) return false;
  return true;
}

std::string case_fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void EntityGazetteer::add(std::string_view name, std::vector<SphericalPolygon> polygons) {
  std::string key = case_fold(name);
  if (key.empty()) throw InvalidInput("entity name must not be empty");
  if (polygons.empty()) throw InvalidInput("entity '" + key + "' has no polygons");
  if (entities_.contains(key)) throw InvalidInput("duplicate entity name '" + key + "'");
  entities_.emplace(std::move(key), std::move(polygons));
}

EntityGazetteer EntityGazetteer::from_geojson(const nlohmann::json& doc) {
  if (doc.value("type", "") != "FeatureCollection") throw InvalidInput("gazetteer must be a GeoJSON FeatureCollection");
  EntityGazetteer g;
  for (const auto& feature : doc.at("features")) {
    const auto& props = feature.at("properties");
    if (!props.contains("name") || !props["name"].is_string()) throw InvalidInput("gazetteer feature without a name");
    const auto& geom = feature.at("geometry");
    const std::string type = geom.at("type").get<std::string>();
    std::vector<SphericalPolygon> polys;
    if (type == "Polygon") {
      polys.push_back(SphericalPolygon::from_rings(read_rings(geom.at("coordinates"))));
    } else if (type == "MultiPolygon") {
      for (const auto& poly : geom.at("coordinates")) polys.push_back(SphericalPolygon::from_rings(read_rings(poly)));
    } else {
      throw InvalidInput("unsupported gazetteer geometry type '" + type + "'");
    }
    g.add(props["name"].get<std::string>(), std::move(polys));
  }
  return g;
}

EntityGazetteer EntityGazetteer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open gazetteer '" + path + "'");
  try {
    return from_geojson(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed gazetteer '" + path + "': " + e.what());
  }
}

bool EntityGazetteer::has(std::string_view name) const { return entities_.contains(case_fold(name)); }

bool EntityGazetteer::contains(std::string_view name, const UnitVec& p) const {
  const auto it = entities_.find(case_fold(name));
  if (it == entities_.end()) return false;
  for (const auto& poly : it->second)
    if (poly.contains(p)) return true;
  return false;
}

std::vector<std::string> EntityGazetteer::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entities_) out.push_back(k);
  return out;
}

void RewardConfig::validate() const {
  cells.validate();
  if (group_size < 2) throw InvalidInput("group size must be at least 2");
  if (!(kl_beta >= 0.0)) throw InvalidInput("KL coefficient must be nonnegative");
}

double r_geo(const UnitVec& prediction, const UnitVec& truth, const CellLevelWeights& weights) {
  double r = 0.0;
  for (std::size_t i = 0; i < weights.levels.size(); ++i)
    if (same_cell(prediction, truth, weights.levels[i])) r += weights.weights[i];
  return r;
}

std::vector<std::string> parse_entities(std::string_view text, const EntityGazetteer& gazetteer) {
  const std::string folded = case_fold(text);
  const auto keys = gazetteer.names();
  std::vector<std::string> found;
  std::size_t i = 0;
  while (i < folded.size()) {
    if (i > 0 && is_word_char(folded[i - 1]) && is_word_char(folded[i])) {
      ++i;
      continue;
    }
    std::size_t best = 0;
    const std::string* match = nullptr;
    for (const auto& k : keys) {
      if (k.size() <= best || folded.compare(i, k.size(), k) != 0) continue;
      const std::size_t end = i + k.size();
      if (end < folded.size() && is_word_char(folded[end]) && is_word_char(k.back())) continue;
      best = k.size();
      match = &k;
    }
    if (match) {
      if (std::find(found.begin(), found.end(), *match) == found.end()) found.push_back(*match);
      i += best;
    } else {
      ++i;
    }
  }
  return found;
}

double r_align(std::span<const std::string> entities, const UnitVec& prediction, const EntityGazetteer& gazetteer) {
  for (const auto& e : entities)
    if (gazetteer.contains(e, prediction)) return 1.0;
  return 0.0;
}

double r_calib(const FlowModel& flow, const UnitVec& truth, const VectorXd& psi, int steps) {
  return log_likelihood(flow, truth, psi, steps);
}

double total_reward(const RewardComponents& c, const RewardCoefficients& w) {
  return w.geo * c.geo + w.align * c.align + w.calib * c.calib;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return std::vector<double>(rewards.size(), 0.0);
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / (sd + 1e-8));
  return out;
}

} // namespace avgeo
