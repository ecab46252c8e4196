#include "avgeo/cells.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avgeo/errors.hpp"

namespace avgeo {
namespace {

void check_level(int level) {
  if (level < 0 || level > kMaxCellLevel)
    throw InvalidInput("cell level must be in [0, " + std::to_string(kMaxCellLevel) + "], got " + std::to_string(level));
}

std::uint32_t quantize(double st, int level) {
  const double scale = std::ldexp(1.0, level);
  const double cells = scale - 1.0;
  const double q = std::floor(st * scale);
  return static_cast<std::uint32_t>(std::clamp(q, 0.0, cells));
}

} // namespace

CellId::CellId(int face, int level, std::uint32_t i, std::uint32_t j) : face_(face), level_(level), i_(i), j_(j) {
  if (face < 0 || face > 5) throw InvalidInput("face must be in [0, 5]");
  check_level(level);
  const std::uint64_t n = std::uint64_t{1} << level;
  if (i >= n || j >= n) throw InvalidInput("cell coordinates exceed the level grid");
}

CellId CellId::from_path(int face, const std::vector<int>& digits) {
  check_level(static_cast<int>(digits.size()));
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  for (int d : digits) {
    if (d < 0 || d > 3) throw InvalidInput("quadrant digit must be in [0, 3]");
    i = (i << 1) | static_cast<std::uint32_t>(d >> 1);
    j = (j << 1) | static_cast<std::uint32_t>(d & 1);
  }
  return CellId(face, static_cast<int>(digits.size()), i, j);
}

CellId CellId::parse(std::string_view token) {
  const auto slash = token.find('/');
  if (slash != 1 || token.empty() || token[0] < '0' || token[0] > '5')
    throw InvalidInput("malformed cell token: " + std::string(token));
  std::vector<int> digits;
  for (char ch : token.substr(2)) {
    if (ch < '0' || ch > '3') throw InvalidInput("malformed cell token: " + std::string(token));
    digits.push_back(ch - '0');
  }
  return from_path(token[0] - '0', digits);
}

std::vector<int> CellId::path() const {
  std::vector<int> digits(static_cast<std::size_t>(level_));
  for (int k = 0; k < level_; ++k) {
    const int shift = level_ - 1 - k;
    digits[static_cast<std::size_t>(k)] = static_cast<int>(((i_ >> shift) & 1u) << 1 | ((j_ >> shift) & 1u));
  }
  return digits;
}

std::string CellId::token() const {
  std::string out = std::to_string(face_) + "/";
  for (int d : path()) out.push_back(static_cast<char>('0' + d));
  return out;
}

int face_of(const UnitVec& p) {
  const std::array<double, 6> signed_axis{p.x(), p.y(), p.z(), -p.x(), -p.y(), -p.z()};
  int best = 0;
  for (int f = 1; f < 6; ++f)
    if (signed_axis[static_cast<std::size_t>(f)] > signed_axis[static_cast<std::size_t>(best)]) best = f;
  return best;
}

std::array<double, 2> face_uv(int face, const Vec3& p) {
  switch (face) {
  case 0: return {p.y() / p.x(), p.z() / p.x()};
  case 1: return {-p.x() / p.y(), p.z() / p.y()};
  case 2: return {-p.x() / p.z(), -p.y() / p.z()};
  case 3: return {p.z() / p.x(), p.y() / p.x()};
  case 4: return {p.z() / p.y(), -p.x() / p.y()};
  case 5: return {-p.y() / p.z(), -p.x() / p.z()};
  default: throw InvalidInput("face must be in [0, 5]");
  }
}

CellId cell_at(const UnitVec& p, int level) {
  check_level(level);
  const int face = face_of(p);
  const auto [u, v] = face_uv(face, p.vec());
  const double s = 0.5 * (u + 1.0);
  const double t = 0.5 * (v + 1.0);
  return CellId(face, level, quantize(s, level), quantize(t, level));
}

CellId parent(const CellId& c) {
  if (c.level() < 1) throw InvalidInput("level-0 cells have no parent");
  return CellId(c.face(), c.level() - 1, c.i() >> 1, c.j() >> 1);
}

bool contains(const CellId& c, const UnitVec& p) { return cell_at(p, c.level()) == c; }

bool same_cell(const UnitVec& a, const UnitVec& b, int level) { return cell_at(a, level) == cell_at(b, level); }

void CellLevelWeights::validate() const {
  if (levels.size() != weights.size() || levels.empty())
    throw InvalidInput("cell levels and weights must be non-empty and of equal length");
  for (int l : levels) check_level(l);
  for (double w : weights)
    if (!(w >= 0.0)) throw InvalidInput("cell weights must be nonnegative");
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidInput("cell weights must sum to 1");
}

} // namespace avgeo
