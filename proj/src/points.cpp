// SPDX-License-Identifier: Apache-2.0
#include "smc/points.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace smc {

namespace {

Index3 floor_div(const Index3& c, int stride) {
  // Coordinates are non-negative, so integer division floors.
  return {c[0] / stride, c[1] / stride, c[2] / stride};
}

}  // namespace

std::uint64_t voxel_key(const Index3& v) {
  auto u = [](int x) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(x + (1 << 20))) & 0x1FFFFF; };
  return (u(v[0]) << 42) | (u(v[1]) << 21) | u(v[2]);
}

PointCloud sample_edge_points(const EdgeMap& edges, const Roi& roi, std::size_t n, Rng& rng) {
  const Dims d = edges.dims();
  if (!roi.valid_in(d)) throw ContractError("sample_edge_points: ROI outside the edge map");
  std::vector<Index3> candidates;
  for (int i = roi.lo[0]; i <= roi.hi[0]; ++i) {
    for (int j = roi.lo[1]; j <= roi.hi[1]; ++j) {
      for (int k = roi.lo[2]; k <= roi.hi[2]; ++k) {
        if (edges.bits(i, j, k)) candidates.push_back({i, j, k});
      }
    }
  }
  if (candidates.empty()) throw ContractError("sample_edge_points: no edge voxels inside the ROI (empty ROI)");
  PointCloud pc;
  pc.source_dims = d;
  pc.coords.reserve(n);
  const std::size_t m = candidates.size();
  if (m >= n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, m - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
      pc.coords.push_back(candidates[i]);
    }
  } else {
    std::shuffle(candidates.begin(), candidates.end(), rng);
    pc.coords = candidates;
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    while (pc.coords.size() < n) pc.coords.push_back(candidates[pick(rng)]);
    pc.with_replacement = true;
  }
  return pc;
}

PointLabels label_points(const PointCloud& pc, const SegMask& mask, int dilate) {
  if (!(mask.dims() == pc.source_dims)) throw ContractError("label_points: mask dims differ from point cloud");
  if (dilate < 0) throw ParameterError("label_points: dilation must be >= 0");
  const Dims d = mask.dims();
  PointLabels labels(pc.size(), 0);
  for (std::size_t p = 0; p < pc.size(); ++p) {
    const auto& c = pc.coords[p];
    if (!d.contains(c[0], c[1], c[2])) throw ContractError("label_points: coordinate outside the mask");
    int label = mask.labels(c[0], c[1], c[2]);
    if (label == 0 && dilate > 0) {
      for (int a = -dilate; a <= dilate; ++a) {
        for (int b = -dilate; b <= dilate; ++b) {
          for (int e = -dilate; e <= dilate; ++e) {
            const int i = c[0] + a, j = c[1] + b, k = c[2] + e;
            if (d.contains(i, j, k)) label = std::max<int>(label, mask.labels(i, j, k));
          }
        }
      }
    }
    labels[p] = label;
  }
  return labels;
}

std::vector<double> normalized_coords(const PointCloud& pc) {
  std::vector<double> out(pc.size() * 3);
  for (std::size_t p = 0; p < pc.size(); ++p) {
    for (int a = 0; a < 3; ++a) {
      const int n = pc.source_dims[a];
      out[p * 3 + a] = n > 1 ? 2.0 * pc.coords[p][a] / (n - 1) - 1.0 : 0.0;
    }
  }
  return out;
}

std::int64_t SparseGrid::find(const Index3& v) const {
  auto it = index.find(voxel_key(v));
  return it == index.end() ? -1 : it->second;
}

std::shared_ptr<const SparseNeighbors> SparseGrid::neighbors() const {
  auto nbr = std::make_shared<SparseNeighbors>();
  nbr->rows = active.size();
  nbr->index.assign(active.size() * 27, -1);
  for (std::size_t r = 0; r < active.size(); ++r) {
    const auto& v = active[r];
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const std::int64_t s = find({v[0] + dx, v[1] + dy, v[2] + dz});
          nbr->index[r * 27 + conv_tap(dx, dy, dz)] = static_cast<std::int32_t>(s);
        }
      }
    }
  }
  return nbr;
}

SparseGrid voxelize_points(const PointCloud& pc, int stride) {
  if (stride < 1) throw ParameterError("voxelize_points: stride must be >= 1");
  SparseGrid g;
  g.stride = stride;
  g.point_row.resize(pc.size());
  for (std::size_t p = 0; p < pc.size(); ++p) {
    const Index3 v = floor_div(pc.coords[p], stride);
    auto [it, inserted] = g.index.emplace(voxel_key(v), static_cast<std::int64_t>(g.active.size()));
    if (inserted) {
      g.active.push_back(v);
      g.counts.push_back(0.0);
    }
    g.point_row[p] = it->second;
    g.counts[it->second] += 1.0;
  }
  const auto norm = normalized_coords(pc);
  std::vector<double> feat(g.active.size() * 3, 0.0);
  for (std::size_t p = 0; p < pc.size(); ++p) {
    for (int a = 0; a < 3; ++a) feat[g.point_row[p] * 3 + a] += norm[p * 3 + a];
  }
  for (std::size_t r = 0; r < g.active.size(); ++r) {
    for (int a = 0; a < 3; ++a) feat[r * 3 + a] /= g.counts[r];
  }
  g.feat = Tensor::from({g.active.size(), 3}, std::move(feat));
  return g;
}

Tensor gather_point_features(const Tensor& dense, const PointCloud& pc, int stride) {
  if (dense.rank() != 4) throw ContractError("gather_point_features: expected [H, W, D, C] features");
  const Dims& d = pc.source_dims;
  const int hs = static_cast<int>(dense.dim(0)), ws = static_cast<int>(dense.dim(1)),
            ds = static_cast<int>(dense.dim(2));
  auto up = [stride](int n) { return (n + stride - 1) / stride; };
  if (stride < 1 || hs != up(d.h) || ws != up(d.w) || ds != up(d.d)) {
    throw ContractError("gather_point_features: feature grid " + shape_str(dense.shape()) +
                        " does not match stride " + std::to_string(stride));
  }
  std::vector<std::int64_t> rows(pc.size());
  for (std::size_t p = 0; p < pc.size(); ++p) {
    const Index3 v = floor_div(pc.coords[p], stride);
    rows[p] = (static_cast<std::int64_t>(v[0]) * ws + v[1]) * ds + v[2];
  }
  const std::size_t c = dense.dim(3);
  return gather_rows(reshape(dense, {static_cast<std::size_t>(hs) * ws * ds, c}), rows);
}

Tensor nn_upscale(const SparseGrid& coarse, const Tensor& coarse_feat, const PointCloud& pc) {
  if (coarse_feat.rank() != 2 || coarse_feat.rows() != coarse.rows()) {
    throw ContractError("nn_upscale: features do not match the sparse grid");
  }
  std::vector<std::int64_t> rows(pc.size());
  for (std::size_t p = 0; p < pc.size(); ++p) {
    rows[p] = coarse.find(floor_div(pc.coords[p], coarse.stride));
    if (rows[p] < 0) throw ContractError("nn_upscale: point " + std::to_string(p) + " has no containing voxel");
  }
  return gather_rows(coarse_feat, rows);
}

std::vector<std::int64_t> parent_rows(const SparseGrid& fine, const SparseGrid& coarse) {
  if (coarse.stride != 2 * fine.stride) throw ContractError("parent_rows: strides must differ by 2x");
  std::vector<std::int64_t> parent(fine.rows());
  for (std::size_t r = 0; r < fine.rows(); ++r) {
    parent[r] = coarse.find(floor_div(fine.active[r], 2));
    if (parent[r] < 0) throw ContractError("parent_rows: coarse grid misses a fine voxel");
  }
  return parent;
}

void write_ply(const std::filesystem::path& path, const PointCloud& pc, const PointLabels& labels) {
  if (labels.size() != pc.size()) throw ContractError("write_ply: label count differs from point count");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "comment dims " << pc.source_dims.h << ' ' << pc.source_dims.w << ' ' << pc.source_dims.d << '\n';
  out << "element vertex " << pc.size() << '\n';
  out << "property int x\nproperty int y\nproperty int z\nproperty int label\nend_header\n";
  for (std::size_t p = 0; p < pc.size(); ++p) {
    const auto& c = pc.coords[p];
    out << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << labels[p] << '\n';
  }
}

LabeledCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw FormatError(path.string() + " is not a PLY file");
  LabeledCloud lc;
  std::size_t n = 0;
  bool ascii = false, has_dims = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string kind;
      ls >> kind;
      ascii = kind == "ascii";
    } else if (tag == "comment") {
      std::string what;
      ls >> what;
      if (what == "dims") {
        ls >> lc.cloud.source_dims.h >> lc.cloud.source_dims.w >> lc.cloud.source_dims.d;
        has_dims = true;
      }
    } else if (tag == "element") {
      std::string what;
      ls >> what >> n;
    }
  }
  if (!ascii) throw FormatError(path.string() + ": only ASCII PLY is supported");
  if (!has_dims) throw FormatError(path.string() + ": missing 'comment dims H W D'");
  lc.cloud.coords.resize(n);
  lc.labels.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    auto& c = lc.cloud.coords[p];
    if (!(in >> c[0] >> c[1] >> c[2] >> lc.labels[p])) throw FormatError(path.string() + ": truncated vertex list");
    if (!lc.cloud.source_dims.contains(c[0], c[1], c[2])) throw FormatError(path.string() + ": vertex outside dims");
  }
  return lc;
}

std::optional<Roi> foreground_bbox(const PointCloud& pc, const PointLabels& labels) {
  std::optional<Roi> box;
  for (std::size_t p = 0; p < pc.size(); ++p) {
    if (labels[p] == 0) continue;
    const auto& c = pc.coords[p];
    if (!box) {
      box = Roi{c, c};
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      box->lo[a] = std::min(box->lo[a], c[a]);
      box->hi[a] = std::max(box->hi[a], c[a]);
    }
  }
  return box;
}

}  // namespace smc
