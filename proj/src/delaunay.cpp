// SPDX-License-Identifier: Apache-2.0
#include "smc/delaunay.hpp"

#include <algorithm>
#include <tuple>

#include "smc/error.hpp"

namespace smc {

namespace {

using i128 = __int128;

int sign_of(i128 v) { return (v > 0) - (v < 0); }

std::uint64_t face_key(int a, int b, int c) {
  std::array<std::uint64_t, 3> k{static_cast<std::uint64_t>(a + 1), static_cast<std::uint64_t>(b + 1),
                                 static_cast<std::uint64_t>(c + 1)};
  std::sort(k.begin(), k.end());
  return (k[0] << 42) | (k[1] << 21) | k[2];
}

std::uint64_t face_key(const std::array<int, 4>& v, int opposite) {
  std::array<int, 3> f{};
  for (int i = 0, j = 0; i < 4; ++i) {
    if (i != opposite) f[j++] = v[i];
  }
  return face_key(f[0], f[1], f[2]);
}

}  // namespace

int orient3d(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d) {
  const i128 ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
  const i128 vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
  const i128 wx = d[0] - a[0], wy = d[1] - a[1], wz = d[2] - a[2];
  return sign_of(ux * (vy * wz - vz * wy) - uy * (vx * wz - vz * wx) + uz * (vx * wy - vy * wx));
}

int insphere(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d, const IPoint& e) {
  const i128 aex = a[0] - e[0], aey = a[1] - e[1], aez = a[2] - e[2];
  const i128 bex = b[0] - e[0], bey = b[1] - e[1], bez = b[2] - e[2];
  const i128 cex = c[0] - e[0], cey = c[1] - e[1], cez = c[2] - e[2];
  const i128 dex = d[0] - e[0], dey = d[1] - e[1], dez = d[2] - e[2];
  const i128 ab = aex * bey - bex * aey, bc = bex * cey - cex * bey;
  const i128 cd = cex * dey - dex * cey, da = dex * aey - aex * dey;
  const i128 ac = aex * cey - cex * aey, bd = bex * dey - dex * bey;
  const i128 abc = aez * bc - bez * ac + cez * ab;
  const i128 bcd = bez * cd - cez * bd + dez * bc;
  const i128 cda = cez * da + dez * ac + aez * cd;
  const i128 dab = dez * ab + aez * bd + bez * da;
  const i128 alift = aex * aex + aey * aey + aez * aez;
  const i128 blift = bex * bex + bey * bey + bez * bez;
  const i128 clift = cex * cex + cey * cey + cez * cez;
  const i128 dlift = dex * dex + dey * dey + dez * dez;
  // The classic determinant is positive for points inside when d is below
  // abc; orient3d above uses the opposite handedness.
  return -sign_of((dlift * abc - clift * dab) + (blift * cda - alift * bcd));
}

bool Delaunay3::is_ghost(const Tet& t) {
  return t.v[0] == kInfinite || t.v[1] == kInfinite || t.v[2] == kInfinite || t.v[3] == kInfinite;
}

std::size_t Delaunay3::finite_cells() const {
  std::size_t n = 0;
  for (const auto& t : cells_) n += t.alive && !is_ghost(t);
  return n;
}

Delaunay3::Delaunay3(std::vector<IPoint> points) : points_(std::move(points)) {
  for (const auto& p : points_) {
    for (auto c : p) {
      if (c > kMaxLatticeCoord || c < -kMaxLatticeCoord) throw GeometryError("delaunay: coordinate out of range");
    }
  }
  const int n = static_cast<int>(points_.size());
  if (n < 4) throw GeometryError("delaunay: need at least 4 points");
  // First non-degenerate simplex.
  int i1 = -1, i2 = -1, i3 = -1;
  for (int i = 1; i < n && i1 < 0; ++i) {
    if (points_[i] != points_[0]) i1 = i;
  }
  if (i1 < 0) throw GeometryError("delaunay: all points coincide (planar degeneracy)");
  auto collinear = [&](int k) {
    const auto& a = points_[0];
    const auto& b = points_[i1];
    const auto& c = points_[k];
    const i128 ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
    const i128 vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
    return uy * vz - uz * vy == 0 && uz * vx - ux * vz == 0 && ux * vy - uy * vx == 0;
  };
  for (int i = 1; i < n && i2 < 0; ++i) {
    if (i != i1 && !collinear(i)) i2 = i;
  }
  if (i2 < 0) throw GeometryError("delaunay: collinear input (planar degeneracy)");
  for (int i = 1; i < n && i3 < 0; ++i) {
    if (i != i1 && i != i2 && orient3d(points_[0], points_[i1], points_[i2], points_[i]) != 0) i3 = i;
  }
  if (i3 < 0) throw GeometryError("delaunay: coplanar input (planar degeneracy)");

  std::array<int, 4> v{0, i1, i2, i3};
  if (orient3d(points_[0], points_[i1], points_[i2], points_[i3]) < 0) std::swap(v[2], v[3]);
  cells_.reserve(static_cast<std::size_t>(n) * 8);
  cells_.push_back({v, {1, 2, 3, 4}, true});
  for (int i = 0; i < 4; ++i) {
    Tet g;
    g.v = v;
    g.v[i] = kInfinite;
    // Flip so that the vertex at infinity sits on the outer side of the face.
    const int a = (i + 1) % 4, b = (i + 2) % 4;
    std::swap(g.v[a], g.v[b]);
    g.n.fill(-1);
    cells_.push_back(g);
  }
  std::vector<std::tuple<std::uint64_t, int, int>> faces;
  for (int c = 0; c < 5; ++c) {
    for (int k = 0; k < 4; ++k) faces.emplace_back(face_key(cells_[c].v, k), c, k);
  }
  std::sort(faces.begin(), faces.end());
  for (std::size_t f = 0; f + 1 < faces.size(); f += 2) {
    const auto& [k1, c1, j1] = faces[f];
    const auto& [k2, c2, j2] = faces[f + 1];
    if (k1 != k2) throw GeometryError("delaunay: inconsistent initial simplex");
    cells_[c1].n[j1] = c2;
    cells_[c2].n[j2] = c1;
  }
  stamp_.assign(cells_.size(), 0);
  last_ = 0;

  const std::array<int, 4> seeded{0, i1, i2, i3};
  for (int i = 0; i < n; ++i) {
    if (std::find(seeded.begin(), seeded.end(), i) != seeded.end()) continue;
    insert(i);
  }
}

bool Delaunay3::conflicts(const Tet& t, const IPoint& p) const {
  int inf = -1;
  for (int i = 0; i < 4; ++i) {
    if (t.v[i] == kInfinite) inf = i;
  }
  if (inf < 0) return insphere(points_[t.v[0]], points_[t.v[1]], points_[t.v[2]], points_[t.v[3]], p) > 0;
  std::array<IPoint, 4> q;
  for (int i = 0; i < 4; ++i) q[i] = i == inf ? p : points_[t.v[i]];
  const int o = orient3d(q[0], q[1], q[2], q[3]);
  if (o != 0) return o > 0;
  // Coplanar with the hull face: inside its circumcircle? Any sphere through
  // the face's three vertices cuts the plane in that circle, so lift one
  // vertex off the plane along the dominant normal axis.
  std::array<IPoint, 3> f;
  for (int i = 0, j = 0; i < 4; ++i) {
    if (i != inf) f[j++] = points_[t.v[i]];
  }
  const i128 ux = f[1][0] - f[0][0], uy = f[1][1] - f[0][1], uz = f[1][2] - f[0][2];
  const i128 vx = f[2][0] - f[0][0], vy = f[2][1] - f[0][1], vz = f[2][2] - f[0][2];
  const i128 nrm[3] = {uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx};
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if ((nrm[a] < 0 ? -nrm[a] : nrm[a]) > (nrm[axis] < 0 ? -nrm[axis] : nrm[axis])) axis = a;
  }
  IPoint lifted = f[0];
  lifted[axis] += 1;
  const int lo = orient3d(f[0], f[1], f[2], lifted);
  return lo * insphere(f[0], f[1], f[2], lifted, p) > 0;
}

int Delaunay3::locate(const IPoint& p) {
  int t = last_;
  if (t < 0 || t >= static_cast<int>(cells_.size()) || !cells_[t].alive) {
    t = 0;
    while (!cells_[t].alive) ++t;
  }
  const std::size_t limit = 4 * cells_.size() + 64;
  for (std::size_t step = 0; step < limit; ++step) {
    const Tet& c = cells_[t];
    int inf = -1;
    for (int i = 0; i < 4; ++i) {
      if (c.v[i] == kInfinite) inf = i;
    }
    if (inf >= 0) {
      if (conflicts(c, p)) return t;
      t = c.n[inf];
      continue;
    }
    walk_state_ = walk_state_ * 6364136223846793005ull + 1442695040888963407ull;
    const int r = static_cast<int>(walk_state_ >> 62);
    bool moved = false;
    for (int kk = 0; kk < 4 && !moved; ++kk) {
      const int k = (r + kk) & 3;
      std::array<IPoint, 4> q;
      for (int i = 0; i < 4; ++i) q[i] = i == k ? p : points_[c.v[i]];
      if (orient3d(q[0], q[1], q[2], q[3]) < 0) {
        t = c.n[k];
        moved = true;
      }
    }
    if (!moved) return t;
  }
  for (int i = 0; i < static_cast<int>(cells_.size()); ++i) {
    if (cells_[i].alive && conflicts(cells_[i], p)) return i;
  }
  throw GeometryError("delaunay: point location failed");
}

int Delaunay3::new_cell() {
  if (!free_.empty()) {
    const int c = free_.back();
    free_.pop_back();
    cells_[c].alive = true;
    return c;
  }
  cells_.push_back({});
  stamp_.push_back(0);
  return static_cast<int>(cells_.size()) - 1;
}

void Delaunay3::insert(int vertex) {
  const IPoint& p = points_[vertex];
  const int start = locate(p);
  if (!conflicts(cells_[start], p)) throw GeometryError("delaunay: located cell does not conflict");
  ++epoch_;
  const std::uint32_t tested = 2 * epoch_, cavity = 2 * epoch_ + 1;

  struct Boundary {
    std::array<int, 4> v;
    int k, outside, back;  // back: face index of this cavity cell as seen from outside
  };
  std::vector<int> stack{start}, members{start};
  std::vector<Boundary> boundary;
  stamp_[start] = cavity;
  while (!stack.empty()) {
    const int t = stack.back();
    stack.pop_back();
    for (int k = 0; k < 4; ++k) {
      const int nb = cells_[t].n[k];
      if (stamp_[nb] == cavity) continue;
      if (stamp_[nb] != tested && conflicts(cells_[nb], p)) {
        stamp_[nb] = cavity;
        stack.push_back(nb);
        members.push_back(nb);
        continue;
      }
      stamp_[nb] = tested;
      int back = 0;
      while (cells_[nb].n[back] != t) ++back;
      boundary.push_back({cells_[t].v, k, nb, back});
    }
  }
  // A later member may have joined after one of its faces was recorded.
  boundary.erase(std::remove_if(boundary.begin(), boundary.end(),
                                [&](const Boundary& b) { return stamp_[b.outside] == cavity; }),
                 boundary.end());

  for (int t : members) {
    cells_[t].alive = false;
    free_.push_back(t);
  }
  std::vector<std::tuple<std::uint64_t, int, int>> faces;
  for (const auto& b : boundary) {
    const int c = new_cell();
    Tet& nt = cells_[c];
    nt.v = b.v;
    nt.v[b.k] = vertex;
    nt.n.fill(-1);
    nt.n[b.k] = b.outside;
    nt.alive = true;
    stamp_[c] = 0;
    cells_[b.outside].n[b.back] = c;
    if (!is_ghost(nt) &&
        orient3d(points_[nt.v[0]], points_[nt.v[1]], points_[nt.v[2]], points_[nt.v[3]]) <= 0) {
      throw GeometryError("delaunay: degenerate cell; perturb the input");
    }
    for (int k = 0; k < 4; ++k) {
      if (k != b.k) faces.emplace_back(face_key(nt.v, k), c, k);
    }
    last_ = c;
  }
  std::sort(faces.begin(), faces.end());
  for (std::size_t f = 0; f + 1 < faces.size(); f += 2) {
    const auto& [k1, c1, j1] = faces[f];
    const auto& [k2, c2, j2] = faces[f + 1];
    if (k1 != k2) throw GeometryError("delaunay: cavity is not star-shaped");
    cells_[c1].n[j1] = c2;
    cells_[c2].n[j2] = c1;
  }
  if (faces.size() % 2) throw GeometryError("delaunay: cavity is not star-shaped");
}

}  // namespace smc
