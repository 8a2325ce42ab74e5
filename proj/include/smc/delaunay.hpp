// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace smc {

/// Integer lattice point. Predicates are exact for |coordinate| <= 2^17.
using IPoint = std::array<std::int64_t, 3>;

inline constexpr std::int64_t kMaxLatticeCoord = std::int64_t{1} << 17;

/// Sign of det[b - a, c - a, d - a]; positive when d lies on the side of
/// plane abc that (b - a) x (c - a) points to.
int orient3d(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d);
/// Positive when e is strictly inside the sphere through a, b, c, d, given
/// orient3d(a, b, c, d) > 0. The sign flips for negatively oriented input.
int insphere(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d, const IPoint& e);

/// Incremental Bowyer-Watson Delaunay tetrahedralization with ghost cells
/// joining each hull face to a vertex at infinity.
class Delaunay3 {
 public:
  static constexpr int kInfinite = -1;

  struct Tet {
    std::array<int, 4> v{};  // positively oriented; kInfinite marks a ghost
    std::array<int, 4> n{};  // n[i] is the cell across the face opposite v[i]
    bool alive = true;
  };

  /// Points must be pairwise distinct and not all coplanar (GeometryError).
  explicit Delaunay3(std::vector<IPoint> points);

  const std::vector<IPoint>& points() const { return points_; }
  const std::vector<Tet>& cells() const { return cells_; }
  static bool is_ghost(const Tet& t);
  std::size_t finite_cells() const;

 private:
  bool conflicts(const Tet& t, const IPoint& p) const;
  int locate(const IPoint& p);
  void insert(int vertex);
  int new_cell();

  std::vector<IPoint> points_;
  std::vector<Tet> cells_;
  std::vector<int> free_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  int last_ = 0;
  std::uint64_t walk_state_ = 0x9E3779B97F4A7C15ull;
};

}  // namespace smc
