// SPDX-License-Identifier: Apache-2.0
#include "smc/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <unordered_map>

#include "smc/delaunay.hpp"
#include "smc/metrics.hpp"

namespace smc {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double circumradius(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const Vec3 u = sub(b, a), v = sub(c, a), w = sub(d, a);
  const Vec3 vw = cross(v, w), wu = cross(w, u), uv = cross(u, v);
  const double den = 2.0 * dot(u, vw);
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  const double uu = dot(u, u), vv = dot(v, v), ww = dot(w, w);
  const Vec3 x{(uu * vw[0] + vv * wu[0] + ww * uv[0]) / den, (uu * vw[1] + vv * wu[1] + ww * uv[1]) / den,
               (uu * vw[2] + vv * wu[2] + ww * uv[2]) / den};
  return std::sqrt(dot(x, x));
}

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = sub(b, a), ac = sub(c, a), ap = sub(p, a);
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = sub(p, b);
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double t = d1 / (d1 - d3);
    return {a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]};
  }
  const Vec3 cp = sub(p, c);
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double t = d2 / (d2 - d6);
    return {a[0] + t * ac[0], a[1] + t * ac[1], a[2] + t * ac[2]};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b[0] + t * (c[0] - b[0]), b[1] + t * (c[1] - b[1]), b[2] + t * (c[2] - b[2])};
  }
  const double den = 1.0 / (va + vb + vc);
  const double v = vb * den, w = vc * den;
  return {a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w, a[2] + ab[2] * v + ac[2] * w};
}

// Outward face of a positively oriented cell, opposite vertex i.
constexpr int kOutward[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};

}  // namespace

int euler_characteristic(const Mesh& m) {
  std::set<int> verts;
  std::set<std::pair<int, int>> edges;
  for (const auto& f : m.faces) {
    for (int i = 0; i < 3; ++i) {
      verts.insert(f[i]);
      const int a = f[i], b = f[(i + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return static_cast<int>(verts.size()) - static_cast<int>(edges.size()) + static_cast<int>(m.faces.size());
}

Mesh alpha_shape(const std::vector<Vec3>& points, double alpha, const AlphaOptions& opt, AlphaStats* stats) {
  if (!(alpha > 0.0)) throw ParameterError("alpha_shape: alpha must be > 0");
  if (points.size() < 4) throw GeometryError("alpha_shape: need at least 4 points (planar degeneracy)");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(p[a])) throw GeometryError("alpha_shape: non-finite coordinate");
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  // An integral centre keeps integer translations exact.
  Vec3 centre;
  double extent = 0.0;
  for (int a = 0; a < 3; ++a) {
    centre[a] = std::floor(0.5 * (lo[a] + hi[a]));
    extent = std::max({extent, std::abs(hi[a] - centre[a]), std::abs(lo[a] - centre[a])});
  }
  extent += opt.jitter + 1.0;
  const int bits = std::clamp(static_cast<int>(std::floor(std::log2(static_cast<double>(kMaxLatticeCoord) / extent))),
                              0, 30);
  const double unit = std::ldexp(1.0, bits);

  // Exact predicates make ties explicit; a fresh jitter resolves the rare
  // cospherical configuration that survives the first draw.
  std::vector<IPoint> lattice;
  std::vector<std::size_t> source;  // lattice vertex -> input point
  std::optional<Delaunay3> dt;
  for (int attempt = 0; !dt; ++attempt) {
    std::mt19937_64 rng(opt.seed + static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> jitter(-opt.jitter, opt.jitter);
    lattice.clear();
    lattice.reserve(points.size());
    std::set<IPoint> seen;
    source.clear();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3& p = points[i];
      IPoint q;
      for (int a = 0; a < 3; ++a) {
        const double j = opt.jitter > 0.0 ? jitter(rng) : 0.0;
        q[a] = std::llround(((p[a] - centre[a]) + j) * unit);
      }
      if (seen.insert(q).second) {
        lattice.push_back(q);
        source.push_back(i);
      }
    }
    try {
      dt.emplace(lattice);
    } catch (const GeometryError& e) {
      const std::string what = e.what();
      if (what.find("planar") != std::string::npos || opt.jitter <= 0.0 || attempt >= 3) throw;
    }
  }
  std::vector<Vec3> pos(lattice.size());
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    for (int a = 0; a < 3; ++a) pos[i][a] = static_cast<double>(lattice[i][a]) / unit + centre[a];
  }
  const auto& cells = dt->cells();
  std::vector<std::uint8_t> kept(cells.size(), 0), exterior(cells.size(), 0);
  std::size_t kept_count = 0;
  std::vector<int> stack;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].alive) continue;
    if (Delaunay3::is_ghost(cells[c])) {
      exterior[c] = 1;
      stack.push_back(static_cast<int>(c));
      continue;
    }
    const auto& v = cells[c].v;
    if (circumradius(pos[v[0]], pos[v[1]], pos[v[2]], pos[v[3]]) <= alpha) {
      kept[c] = 1;
      ++kept_count;
    }
  }
  if (kept_count == 0) {
    throw GeometryError("alpha_shape: empty complex at alpha " + std::to_string(alpha) + "; try a larger alpha");
  }
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    for (int nb : cells[c].n) {
      if (!exterior[nb] && !kept[nb]) {
        exterior[nb] = 1;
        stack.push_back(nb);
      }
    }
  }

  if (stats) {
    *stats = {};
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!cells[c].alive || exterior[c]) continue;
      const auto& v = cells[c].v;
      const double vol =
          std::abs(dot(sub(pos[v[1]], pos[v[0]]), cross(sub(pos[v[2]], pos[v[0]]), sub(pos[v[3]], pos[v[0]])))) / 6.0;
      stats->solid_volume += vol;
      if (kept[c]) {
        ++stats->kept_cells;
      } else {
        ++stats->enclosed_cells;
        stats->enclosed_volume += vol;
      }
    }
  }

  // Connectivity comes from the perturbed lattice; geometry from the input.
  Mesh mesh;
  std::unordered_map<int, int> remap;
  auto vid = [&](int v) {
    auto [it, inserted] = remap.emplace(v, static_cast<int>(mesh.vertices.size()));
    if (inserted) mesh.vertices.push_back(points[source[v]]);
    return it->second;
  };
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].alive || exterior[c]) continue;
    for (int k = 0; k < 4; ++k) {
      if (!exterior[cells[c].n[k]]) continue;
      const auto& v = cells[c].v;
      const int a = v[kOutward[k][0]], b = v[kOutward[k][1]], e = v[kOutward[k][2]];
      const Vec3 n = cross(sub(points[source[b]], points[source[a]]), sub(points[source[e]], points[source[a]]));
      if (dot(n, n) == 0.0) continue;
      mesh.faces.push_back({vid(a), vid(b), vid(e)});
    }
  }
  return mesh;
}

double default_alpha(const std::vector<Vec3>& points) {
  if (points.size() < 2) throw GeometryError("default_alpha: need at least 2 points");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-9});
  const double cell = std::max(span / std::cbrt(static_cast<double>(points.size())), 1e-9);
  using Key = std::array<long, 3>;
  std::map<Key, std::vector<std::size_t>> grid;
  auto key_of = [&](const Vec3& p) {
    return Key{static_cast<long>(std::floor((p[0] - lo[0]) / cell)), static_cast<long>(std::floor((p[1] - lo[1]) / cell)),
               static_cast<long>(std::floor((p[2] - lo[2]) / cell))};
  };
  for (std::size_t i = 0; i < points.size(); ++i) grid[key_of(points[i])].push_back(i);
  const long max_ring = static_cast<long>(std::ceil(span / cell)) + 1;
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Key k = key_of(points[i]);
    double best = std::numeric_limits<double>::infinity();
    for (long r = 0; r <= max_ring; ++r) {
      for (long a = -r; a <= r; ++a) {
        for (long b = -r; b <= r; ++b) {
          for (long c = -r; c <= r; ++c) {
            if (std::max({std::labs(a), std::labs(b), std::labs(c)}) != r) continue;
            auto it = grid.find({k[0] + a, k[1] + b, k[2] + c});
            if (it == grid.end()) continue;
            for (std::size_t j : it->second) {
              if (j == i) continue;
              const Vec3 d = sub(points[j], points[i]);
              best = std::min(best, std::sqrt(dot(d, d)));
            }
          }
        }
      }
      if (best <= static_cast<double>(r) * cell) break;
    }
    total += std::isfinite(best) ? best : 0.0;
  }
  return 3.0 * total / static_cast<double>(points.size());
}

double winding_number(const Mesh& mesh, const Vec3& p) {
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3 a = sub(mesh.vertices[f[0]], p), b = sub(mesh.vertices[f[1]], p), c = sub(mesh.vertices[f[2]], p);
    const double la = std::sqrt(dot(a, a)), lb = std::sqrt(dot(b, b)), lc = std::sqrt(dot(c, c));
    const double num = dot(a, cross(b, c));
    const double den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

SegMask voxelize_and_fill(const Mesh& mesh, const Dims& dims) {
  if (dims.count() == 0) throw ParameterError("voxelize_and_fill: empty dims");
  Grid<std::uint8_t> surface(dims, 0);
  Grid<double> near_d2(dims, std::numeric_limits<double>::infinity());
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices.at(f[0]);
    const Vec3& b = mesh.vertices.at(f[1]);
    const Vec3& c = mesh.vertices.at(f[2]);
    int lo[3], hi[3];
    for (int ax = 0; ax < 3; ++ax) {
      lo[ax] = std::max(0, static_cast<int>(std::ceil(std::min({a[ax], b[ax], c[ax]}) - 0.5)));
      hi[ax] = std::min(dims[ax] - 1, static_cast<int>(std::floor(std::max({a[ax], b[ax], c[ax]}) + 0.5)));
    }
    for (int i = lo[0]; i <= hi[0]; ++i) {
      for (int j = lo[1]; j <= hi[1]; ++j) {
        for (int k = lo[2]; k <= hi[2]; ++k) {
          const Vec3 p{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)};
          const Vec3 d = sub(closest_on_triangle(p, a, b, c), p);
          const double d2 = dot(d, d);
          if (d2 <= 0.25) surface(i, j, k) = 1;
          near_d2(i, j, k) = std::min(near_d2(i, j, k), d2);
        }
      }
    }
  }
  Grid<std::uint8_t> outside(dims, 0);
  std::vector<std::size_t> stack;
  auto push = [&](int i, int j, int k) {
    const std::size_t idx = surface.index(i, j, k);
    if (surface[idx] || outside[idx]) return;
    outside[idx] = 1;
    stack.push_back(idx);
  };
  for (int i = 0; i < dims.h; ++i) {
    for (int j = 0; j < dims.w; ++j) {
      for (int k = 0; k < dims.d; ++k) {
        if (i == 0 || j == 0 || k == 0 || i == dims.h - 1 || j == dims.w - 1 || k == dims.d - 1) push(i, j, k);
      }
    }
  }
  static constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!stack.empty()) {
    const Index3 p = surface.coords(stack.back());
    stack.pop_back();
    for (const auto& o : off) {
      const int i = p[0] + o[0], j = p[1] + o[1], k = p[2] + o[2];
      if (dims.contains(i, j, k)) push(i, j, k);
    }
  }
  // Band voxels are decided by the winding number of their centre; centres
  // on the surface itself count as outside.
  SegMask m;
  m.labels = Grid<std::uint8_t>(dims, 0);
  std::size_t filled = 0;
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    if (surface[i]) {
      const Index3 c = surface.coords(i);
      m.labels[i] = near_d2[i] > 1e-12 &&
                    winding_number(mesh, {static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])}) > 0.5;
    } else {
      m.labels[i] = !outside[i];
    }
    filled += m.labels[i];
  }
  if (static_cast<double>(filled) > 0.9 * static_cast<double>(dims.count())) {
    throw GeometryError("voxelize_and_fill: fill leaked into " + std::to_string(filled) + " of " +
                        std::to_string(dims.count()) + " voxels");
  }
  return m;
}

std::vector<Vec3> largest_point_cluster(const std::vector<Vec3>& points, int link) {
  if (link < 1 || points.empty()) return points;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells;
  std::vector<std::uint64_t> order;  // first-seen cells
  auto key = [](const Index3& c) { return voxel_key(c); };
  std::vector<Index3> cell_of(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Index3 c{static_cast<int>(std::floor(points[i][0])), static_cast<int>(std::floor(points[i][1])),
                   static_cast<int>(std::floor(points[i][2]))};
    cell_of[i] = c;
    auto [it, fresh] = cells.try_emplace(key(c));
    if (fresh) order.push_back(it->first);
    it->second.push_back(i);
  }
  std::unordered_map<std::uint64_t, int> label;
  std::vector<std::size_t> best;
  for (std::uint64_t start : order) {
    if (label.count(start)) continue;
    const int id = static_cast<int>(label.size());
    std::vector<std::uint64_t> stack{start}, members;
    label[start] = id;
    while (!stack.empty()) {
      const std::uint64_t k = stack.back();
      stack.pop_back();
      members.push_back(k);
      const Index3 c = cell_of[cells.at(k).front()];
      for (int di = -link; di <= link; ++di) {
        for (int dj = -link; dj <= link; ++dj) {
          for (int dk = -link; dk <= link; ++dk) {
            const std::uint64_t n = key({c[0] + di, c[1] + dj, c[2] + dk});
            if (!cells.count(n) || label.count(n)) continue;
            label[n] = id;
            stack.push_back(n);
          }
        }
      }
    }
    std::vector<std::size_t> pts;
    for (auto k : members) pts.insert(pts.end(), cells.at(k).begin(), cells.at(k).end());
    if (pts.size() > best.size()) best = std::move(pts);
  }
  std::sort(best.begin(), best.end());
  std::vector<Vec3> out;
  out.reserve(best.size());
  for (auto i : best) out.push_back(points[i]);
  return out;
}

Reconstruction reconstruct_points(const std::vector<Vec3>& input, const Dims& dims, const ReconstructOptions& opt) {
  Reconstruction r;
  const std::vector<Vec3> points = largest_point_cluster(input, opt.cluster_link);
  r.points_used = points.size();
  r.alpha = opt.alpha > 0.0 ? opt.alpha : default_alpha(points);
  for (r.attempts = 1;; ++r.attempts) {
    try {
      r.mesh = alpha_shape(points, r.alpha, opt.alpha_opts, &r.stats);
      if (r.stats.enclosed_fraction() < opt.min_enclosed_fraction && r.attempts <= opt.retries) {
        r.alpha *= 2.0;
        continue;
      }
      r.mask = voxelize_and_fill(r.mesh, dims);
      break;
    } catch (const GeometryError& e) {
      const std::string what = e.what();
      const bool retryable = what.find("empty complex") != std::string::npos || what.find("leaked") != std::string::npos;
      if (!retryable || r.attempts > opt.retries) throw;
      r.alpha *= 2.0;
    }
  }
  if (opt.keep_largest_component) {
    const Components cc = connected_components(r.mask.labels, 26);
    if (cc.count > 1) {
      const int best = static_cast<int>(std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin()) + 1;
      for (std::size_t i = 0; i < r.mask.labels.size(); ++i) r.mask.labels[i] = cc.labels[i] == best;
    }
  }
  return r;
}

std::vector<Vec3> foreground_points(const PointCloud& pc, const PointLabels& labels) {
  if (labels.size() != pc.size()) throw ContractError("foreground_points: label count differs from point count");
  std::vector<Vec3> out;
  for (std::size_t p = 0; p < pc.size(); ++p) {
    if (labels[p] == 0) continue;
    const auto& c = pc.coords[p];
    out.push_back({static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])});
  }
  return out;
}

void write_obj(const std::filesystem::path& path, const Mesh& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(9);
  for (const auto& v : m.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void write_mesh_ply(const std::filesystem::path& path, const Mesh& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(9);
  out << "ply\nformat ascii 1.0\nelement vertex " << m.vertices.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nelement face " << m.faces.size()
      << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : m.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& f : m.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

}  // namespace smc
