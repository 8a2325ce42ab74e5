// SPDX-License-Identifier: Apache-2.0
#include "smc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace smc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_dims(const SegMask& a, const SegMask& b, const char* what) {
  if (!(a.dims() == b.dims())) throw ContractError(std::string(what) + ": mask dims differ");
}

Grid<std::uint8_t> foreground(const SegMask& m) {
  Grid<std::uint8_t> fg(m.dims());
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = m.labels[i] != 0;
  return fg;
}

struct Box {
  Index3 lo{0, 0, 0}, hi{-1, -1, -1};
  bool empty = true;
  double volume() const {
    if (empty) return 0.0;
    double v = 1.0;
    for (int a = 0; a < 3; ++a) v *= hi[a] - lo[a] + 1;
    return v;
  }
};

Box bbox(const SegMask& m) {
  Box b;
  for (std::size_t idx = 0; idx < m.labels.size(); ++idx) {
    if (!m.labels[idx]) continue;
    const Index3 c = m.labels.coords(idx);
    if (b.empty) {
      b.lo = b.hi = c;
      b.empty = false;
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = std::min(b.lo[a], c[a]);
      b.hi[a] = std::max(b.hi[a], c[a]);
    }
  }
  return b;
}

// Lower envelope of parabolas (x - x_p)^2 + f(p) with x_p = p * step.
void edt_1d(std::vector<double>& f, double step, std::vector<int>& v, std::vector<double>& z, std::vector<double>& out) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  auto inter = [&](int q, int p) {
    const double xq = q * step, xp = p * step;
    return ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
  };
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = inter(q, v[k]);
    while (s <= z[k]) {
      --k;
      if (k < 0) break;
      s = inter(q, v[k]);
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double x = q * step;
    while (z[j + 1] < x) ++j;
    const double dx = x - v[j] * step;
    out[q] = dx * dx + f[v[j]];
  }
}

}  // namespace

double dice(const SegMask& pred, const SegMask& gt) {
  require_same_dims(pred, gt, "dice");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool a = pred.labels[i] != 0, b = gt.labels[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

Grid<std::uint8_t> boundary_voxels(const Grid<std::uint8_t>& fg) {
  const Dims d = fg.dims();
  Grid<std::uint8_t> out(d, 0);
  static constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      for (int k = 0; k < d.d; ++k) {
        if (!fg(i, j, k)) continue;
        for (const auto& o : off) {
          const int a = i + o[0], b = j + o[1], c = k + o[2];
          if (!d.contains(a, b, c) || !fg(a, b, c)) {
            out(i, j, k) = 1;
            break;
          }
        }
      }
    }
  }
  return out;
}

Field distance_transform(const Grid<std::uint8_t>& seeds, const Spacing& spacing) {
  const Dims d = seeds.dims();
  Field sq(d, kInf);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i]) sq[i] = 0.0;
  }
  const int longest = std::max({d.h, d.w, d.d});
  std::vector<double> f(longest), out(longest), z(longest + 1);
  std::vector<int> v(longest);
  for (int axis = 0; axis < 3; ++axis) {
    const int n = d[axis];
    f.resize(n);
    out.resize(n);
    const int o1 = axis == 0 ? d.w : d.h, o2 = axis == 2 ? d.w : d.d;
    for (int a = 0; a < o1; ++a) {
      for (int b = 0; b < o2; ++b) {
        auto at = [&](int t) -> double& {
          if (axis == 0) return sq(t, a, b);
          if (axis == 1) return sq(a, t, b);
          return sq(a, b, t);
        };
        for (int t = 0; t < n; ++t) f[t] = at(t);
        edt_1d(f, spacing[axis], v, z, out);
        for (int t = 0; t < n; ++t) at(t) = out[t];
      }
    }
  }
  for (auto& x : sq.values()) x = std::sqrt(x);
  return sq;
}

double assd(const SegMask& pred, const SegMask& gt, const Spacing& spacing) {
  require_same_dims(pred, gt, "assd");
  if (pred.foreground_count() == 0 || gt.foreground_count() == 0) {
    throw NumericError("assd: undefined distance (empty mask)");
  }
  const auto bp = boundary_voxels(foreground(pred));
  const auto bg = boundary_voxels(foreground(gt));
  const Field to_g = distance_transform(bg, spacing);
  const Field to_p = distance_transform(bp, spacing);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    if (bp[i]) {
      total += to_g[i];
      ++count;
    }
    if (bg[i]) {
      total += to_p[i];
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double assd(const SegMask& pred, const SegMask& gt) { return assd(pred, gt, gt.spacing); }

double bbox_iou(const SegMask& pred, const SegMask& gt) {
  require_same_dims(pred, gt, "bbox_iou");
  const Box a = bbox(pred), b = bbox(gt);
  if (a.empty || b.empty) return 0.0;
  Box inter;
  inter.empty = false;
  for (int ax = 0; ax < 3; ++ax) {
    inter.lo[ax] = std::max(a.lo[ax], b.lo[ax]);
    inter.hi[ax] = std::min(a.hi[ax], b.hi[ax]);
    if (inter.lo[ax] > inter.hi[ax]) return 0.0;
  }
  const double i = inter.volume();
  return i / (a.volume() + b.volume() - i);
}

Components connected_components(const Grid<std::uint8_t>& fg, int connectivity) {
  if (connectivity != 6 && connectivity != 26) throw ParameterError("connected_components: connectivity 6 or 26");
  const Dims d = fg.dims();
  Components c;
  c.labels = Grid<std::int32_t>(d, 0);
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < fg.size(); ++seed) {
    if (!fg[seed] || c.labels[seed]) continue;
    const int id = ++c.count;
    std::int64_t size = 0;
    c.labels[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const Index3 p = fg.coords(cur);
      for (int a = -1; a <= 1; ++a) {
        for (int b = -1; b <= 1; ++b) {
          for (int e = -1; e <= 1; ++e) {
            const int manhattan = std::abs(a) + std::abs(b) + std::abs(e);
            if (manhattan == 0 || (connectivity == 6 && manhattan != 1)) continue;
            const int i = p[0] + a, j = p[1] + b, k = p[2] + e;
            if (!d.contains(i, j, k)) continue;
            const std::size_t n = fg.index(i, j, k);
            if (fg[n] && !c.labels[n]) {
              c.labels[n] = id;
              stack.push_back(n);
            }
          }
        }
      }
    }
    c.sizes.push_back(size);
  }
  return c;
}

SideMetrics evaluate_side(const SegMask& pred, const SegMask& gt) {
  SideMetrics m;
  m.dice = dice(pred, gt);
  m.bbox_iou = bbox_iou(pred, gt);
  if (pred.foreground_count() > 0 && gt.foreground_count() > 0) m.assd = assd(pred, gt);
  return m;
}

double EvalReport::mean_dice() const {
  if (cases.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cases) s += c.mean_dice();
  return s / static_cast<double>(cases.size());
}

std::optional<double> EvalReport::mean_assd() const {
  double s = 0.0;
  int n = 0;
  for (const auto& c : cases) {
    for (const auto* side : {&c.left, &c.right}) {
      if (side->assd) {
        s += *side->assd;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

double EvalReport::mean_bbox_iou() const {
  if (cases.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cases) s += 0.5 * (c.left.bbox_iou + c.right.bbox_iou);
  return s / static_cast<double>(cases.size());
}

namespace {

std::string fmt(std::optional<double> v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::optional<double> mean_of(std::optional<double> a, std::optional<double> b) {
  if (a && b) return 0.5 * (*a + *b);
  return a ? a : b;
}

template <class Get>
std::optional<double> side_mean(const EvalReport& r, Get get) {
  double s = 0.0;
  int n = 0;
  for (const auto& c : r.cases) {
    if (auto v = get(c)) {
      s += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

nlohmann::json opt_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "case,dice_L,dice_R,dice_mean,assd_L,assd_R,assd_mean,bbox_iou_L,bbox_iou_R,bbox_iou_mean\n";
  for (const auto& c : report.cases) {
    out << c.case_id << ',' << fmt(c.left.dice) << ',' << fmt(c.right.dice) << ',' << fmt(c.mean_dice()) << ','
        << fmt(c.left.assd) << ',' << fmt(c.right.assd) << ',' << fmt(mean_of(c.left.assd, c.right.assd)) << ','
        << fmt(c.left.bbox_iou) << ',' << fmt(c.right.bbox_iou) << ','
        << fmt(0.5 * (c.left.bbox_iou + c.right.bbox_iou)) << '\n';
  }
  const auto dl = side_mean(report, [](const CaseReport& c) { return std::optional<double>(c.left.dice); });
  const auto dr = side_mean(report, [](const CaseReport& c) { return std::optional<double>(c.right.dice); });
  const auto al = side_mean(report, [](const CaseReport& c) { return c.left.assd; });
  const auto ar = side_mean(report, [](const CaseReport& c) { return c.right.assd; });
  const auto bl = side_mean(report, [](const CaseReport& c) { return std::optional<double>(c.left.bbox_iou); });
  const auto br = side_mean(report, [](const CaseReport& c) { return std::optional<double>(c.right.bbox_iou); });
  out << "mean," << fmt(dl) << ',' << fmt(dr) << ',' << fmt(report.mean_dice()) << ',' << fmt(al) << ','
      << fmt(ar) << ',' << fmt(report.mean_assd()) << ',' << fmt(bl) << ',' << fmt(br) << ','
      << fmt(report.mean_bbox_iou()) << '\n';
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json j;
  j["cases"] = nlohmann::json::array();
  for (const auto& c : report.cases) {
    auto side = [](const SideMetrics& m) {
      return nlohmann::json{{"dice", m.dice}, {"assd", opt_json(m.assd)}, {"bbox_iou", m.bbox_iou}};
    };
    j["cases"].push_back({{"case", c.case_id}, {"L", side(c.left)}, {"R", side(c.right)}, {"mean_dice", c.mean_dice()}});
  }
  j["mean"] = {{"dice", report.mean_dice()}, {"assd", opt_json(report.mean_assd())}, {"bbox_iou", report.mean_bbox_iou()}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace smc
