#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "avgeo/sphere.hpp"

namespace avgeo {

inline constexpr int kMaxCellLevel = 14;

/// Cube face + quadtree path. Faces are 0:+x 1:+y 2:+z 3:-x 4:-y 5:-z.
///
/// The path is stored as the integer (i, j) coordinates of the cell on its
/// face at `level`; quadrant digit k is 2 * bit_i + bit_j taken from the
/// k-th most significant bit.
class CellId {
public:
  CellId() = default;
  CellId(int face, int level, std::uint32_t i, std::uint32_t j);

  /// Builds a cell from its quadrant digits (each in 0..3).
  static CellId from_path(int face, const std::vector<int>& digits);
  /// Parses the `f/d1d2...dk` token form.
  static CellId parse(std::string_view token);

  int face() const { return face_; }
  int level() const { return level_; }
  std::uint32_t i() const { return i_; }
  std::uint32_t j() const { return j_; }
  std::vector<int> path() const;

  /// `f/d1d2...dk`, e.g. `3/0213`.
  std::string token() const;

  friend bool operator==(const CellId&, const CellId&) = default;

private:
  int face_ = 0;
  int level_ = 0;
  std::uint32_t i_ = 0;
  std::uint32_t j_ = 0;
};

/// Face with the dominant axis; ties go to the lowest face index.
int face_of(const UnitVec& p);

/// Gnomonic (u, v) coordinates of `p` on `face`, each in [-1, 1] when p is on that face.
std::array<double, 2> face_uv(int face, const Vec3& p);

CellId cell_at(const UnitVec& p, int level);
CellId parent(const CellId& c);
bool contains(const CellId& c, const UnitVec& p);
bool same_cell(const UnitVec& a, const UnitVec& b, int level);

/// Level weights of the hierarchical reward. Weights are nonnegative and sum to 1.
struct CellLevelWeights {
  std::vector<int> levels{1, 5, 12};
  std::vector<double> weights{0.2, 0.3, 0.5};

  /// Throws InvalidInput if the invariants do not hold.
  void validate() const;
};

} // namespace avgeo
