#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oracle {

using V3 = Eigen::Vector3d;

// Orthonormal frame of each cube face: centre c and the directions of u and v.
struct FaceFrame {
  V3 c, a, b;
};

inline const std::array<FaceFrame, 6>& face_frames() {
  static const std::array<FaceFrame, 6> frames{{
      {V3(1, 0, 0), V3(0, 1, 0), V3(0, 0, 1)},
      {V3(0, 1, 0), V3(-1, 0, 0), V3(0, 0, 1)},
      {V3(0, 0, 1), V3(-1, 0, 0), V3(0, -1, 0)},
      {V3(-1, 0, 0), V3(0, 0, -1), V3(0, -1, 0)},
      {V3(0, -1, 0), V3(0, 0, -1), V3(1, 0, 0)},
      {V3(0, 0, -1), V3(0, 1, 0), V3(1, 0, 0)},
  }};
  return frames;
}

inline int face(const V3& p) {
  int best = 0;
  double best_val = p.dot(face_frames()[0].c);
  for (int f = 1; f < 6; ++f) {
    const double val = p.dot(face_frames()[static_cast<std::size_t>(f)].c);
    if (val > best_val) {
      best = f;
      best_val = val;
    }
  }
  return best;
}

// Grid line k of 2^level on one axis, as a plane normal: p is on the high side when p . n >= 0.
inline V3 grid_normal(const V3& axis, const V3& centre, std::uint32_t k, int level) {
  const double uk = 2.0 * static_cast<double>(k) / std::ldexp(1.0, level) - 1.0;
  return axis - uk * centre;
}

// Half-space test of p against the great circles bounding cell (face, level, i, j).
inline bool cell_contains(int f, int level, std::uint32_t i, std::uint32_t j, const V3& p) {
  if (face(p) != f) return false;
  const auto& fr = face_frames()[static_cast<std::size_t>(f)];
  const std::uint32_t n = 1u << level;
  auto in_range = [&](const V3& axis, std::uint32_t idx) {
    if (idx > 0 && p.dot(grid_normal(axis, fr.c, idx, level)) < 0) return false;
    if (idx + 1 < n && p.dot(grid_normal(axis, fr.c, idx + 1, level)) >= 0) return false;
    return true;
  };
  return in_range(fr.a, i) && in_range(fr.b, j);
}

struct Cell {
  int face;
  std::uint32_t i, j;
  bool operator==(const Cell&) const = default;
};

// Locates the cell by counting the grid planes p lies above.
inline Cell locate(const V3& p, int level) {
  const int f = face(p);
  const auto& fr = face_frames()[static_cast<std::size_t>(f)];
  const std::uint32_t n = 1u << level;
  Cell c{f, 0, 0};
  for (std::uint32_t k = 1; k < n; ++k) {
    if (p.dot(grid_normal(fr.a, fr.c, k, level)) >= 0) c.i = k;
    if (p.dot(grid_normal(fr.b, fr.c, k, level)) >= 0) c.j = k;
  }
  return c;
}

inline double r_geo(const V3& a, const V3& b, const std::vector<int>& levels, const std::vector<double>& weights) {
  double r = 0.0;
  for (std::size_t l = 0; l < levels.size(); ++l)
    if (locate(a, levels[l]) == locate(b, levels[l])) r += weights[l];
  return r;
}

} // namespace oracle

namespace oracle {

// Fibonacci lattice: n near-equal-area points, for quadrature over the sphere.
inline std::vector<V3> fibonacci_sphere(int n) {
  std::vector<V3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(1.0 - z * z);
    pts.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
  }
  return pts;
}

} // namespace oracle

namespace oracle {

enum class Side { Outside, Boundary, Inside };

// Gnomonic projection onto the plane tangent at `centre` turns great-circle
// edges into straight segments; then a planar crossing-number test.
inline Side planar_side(const std::vector<V3>& ring, const V3& centre, const V3& p, double tol = 1e-9) {
  if (p.dot(centre) <= 0.0) return Side::Outside;
  V3 e0 = std::abs(centre.x()) < 0.9 ? V3::UnitX() : V3::UnitY();
  e0 = (e0 - e0.dot(centre) * centre).normalized();
  const V3 e1 = centre.cross(e0);
  auto project = [&](const V3& v) {
    const V3 q = v / v.dot(centre);
    return Eigen::Vector2d(q.dot(e0), q.dot(e1));
  };
  const Eigen::Vector2d P = project(p);
  bool inside = false;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Eigen::Vector2d A = project(ring[i]);
    const Eigen::Vector2d B = project(ring[(i + 1) % ring.size()]);
    const Eigen::Vector2d AB = B - A, AP = P - A;
    const double cross = AB.x() * AP.y() - AB.y() * AP.x();
    const double along = AB.dot(AP);
    if (std::abs(cross) <= tol * AB.norm() && along >= -tol && along <= AB.squaredNorm() + tol) return Side::Boundary;
    if ((A.y() > P.y()) != (B.y() > P.y())) {
      const double x_at = A.x() + (P.y() - A.y()) * AB.x() / AB.y();
      if (P.x() < x_at) inside = !inside;
    }
  }
  return inside ? Side::Inside : Side::Outside;
}

} // namespace oracle

namespace oracle {

// Plain-loop decomposition reference: tries every kernel sequence of length K
// and keeps those where each pick is the first maximiser of w_j . r over the
// residual it sees.
struct Trace {
  std::vector<int> kernels;
  std::vector<double> activations;
  std::vector<std::vector<double>> reconstructions;
  std::vector<double> residual;
};

inline double loop_dot(const Eigen::MatrixXd& W, int j, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += W(static_cast<Eigen::Index>(i), j) * r[i];
  return s;
}

inline std::vector<Trace> brute_force_paths(const Eigen::MatrixXd& W, const Eigen::VectorXd& x, int K) {
  const int N = static_cast<int>(W.cols());
  std::vector<Trace> consistent;
  std::vector<int> seq(static_cast<std::size_t>(K), 0);
  while (true) {
    Trace t;
    t.residual.assign(x.data(), x.data() + x.size());
    bool ok = true;
    for (int k = 0; k < K && ok; ++k) {
      const int pick = seq[static_cast<std::size_t>(k)];
      const double a_pick = loop_dot(W, pick, t.residual);
      for (int j = 0; j < N; ++j) {
        const double a = loop_dot(W, j, t.residual);
        if (a > a_pick || (a == a_pick && j < pick)) ok = false;
      }
      const double z = a_pick > 0.0 ? a_pick : 0.0;
      std::vector<double> rec(t.residual.size());
      for (std::size_t i = 0; i < rec.size(); ++i) {
        rec[i] = z * W(static_cast<Eigen::Index>(i), pick);
        t.residual[i] -= rec[i];
      }
      t.kernels.push_back(pick);
      t.activations.push_back(z);
      t.reconstructions.push_back(rec);
    }
    if (ok) consistent.push_back(t);
    int pos = K - 1;
    while (pos >= 0 && ++seq[static_cast<std::size_t>(pos)] == N) seq[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  return consistent;
}

struct Prd {
  double precision, recall, density, coverage;
};

inline double acos_dist(const V3& a, const V3& b) { return std::acos(std::clamp(a.dot(b), -1.0, 1.0)); }

// Full distance matrices, radii by sorting each row.
inline Prd exhaustive_prd(const std::vector<V3>& gen, const std::vector<V3>& ref, int k) {
  auto radii = [&](const std::vector<V3>& s) {
    std::vector<double> r;
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::vector<double> row;
      for (std::size_t j = 0; j < s.size(); ++j)
        if (i != j) row.push_back(acos_dist(s[i], s[j]));
      std::sort(row.begin(), row.end());
      r.push_back(row[static_cast<std::size_t>(k - 1)]);
    }
    return r;
  };
  const auto rr = radii(ref), rg = radii(gen);
  double prec = 0, dens = 0, rec = 0, cov = 0;
  for (const auto& g : gen) {
    int hits = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) hits += acos_dist(g, ref[i]) <= rr[i] ? 1 : 0;
    prec += hits > 0 ? 1 : 0;
    dens += hits;
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    bool in_gen = false, covered = false;
    for (std::size_t j = 0; j < gen.size(); ++j) {
      const double d = acos_dist(ref[i], gen[j]);
      in_gen = in_gen || d <= rg[j];
      covered = covered || d <= rr[i];
    }
    rec += in_gen ? 1 : 0;
    cov += covered ? 1 : 0;
  }
  const double M = static_cast<double>(gen.size()), N = static_cast<double>(ref.size());
  return {prec / M, rec / N, dens / (k * M), cov / N};
}

// Group-standardised rewards in extended precision, population deviation.
inline std::vector<double> advantages(const std::vector<double>& r) {
  const auto n = static_cast<long double>(r.size());
  long double mean = 0.0L;
  for (double x : r) mean += x;
  mean /= n;
  long double var = 0.0L;
  for (double x : r) var += (x - mean) * (x - mean);
  const long double sd = std::sqrt(var / n);
  std::vector<double> out;
  for (double x : r) out.push_back(static_cast<double>((x - mean) / (sd + 1e-8L)));
  return out;
}

} // namespace oracle
