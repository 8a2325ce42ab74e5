// SPDX-License-Identifier: Apache-2.0
#include "smc/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace smc {

static_assert(std::endian::native == std::endian::little, "volume codec assumes a little-endian host");

namespace {

constexpr int kCodecVersion = 1;

std::filesystem::path header_path(const std::filesystem::path& stem) { return stem.string() + ".json"; }
std::filesystem::path payload_path(const std::filesystem::path& stem) { return stem.string() + ".bin"; }

void check_dims(const Dims& d, const char* what) {
  if (d.h < 8 || d.w < 8 || d.d < 8) {
    throw ParameterError(std::string(what) + ": every dim must be >= 8, got " + std::to_string(d.h) + "x" +
                         std::to_string(d.w) + "x" + std::to_string(d.d));
  }
}

void check_spacing(const Spacing& s, const char* what) {
  if (!(s.x > 0 && s.y > 0 && s.z > 0)) throw ParameterError(std::string(what) + ": spacing must be positive");
}

nlohmann::json header_common(const char* format, const Dims& d, const Spacing& s, const char* dtype,
                             const std::filesystem::path& stem) {
  return {{"format", format},
          {"version", kCodecVersion},
          {"dims", {d.h, d.w, d.d}},
          {"spacing", {s.x, s.y, s.z}},
          {"dtype", dtype},
          {"payload", payload_path(stem).filename().string()}};
}

struct Header {
  Dims dims;
  Spacing spacing;
  nlohmann::json raw;
};

Header read_header(const std::filesystem::path& stem, const char* format, const char* dtype) {
  std::ifstream in(header_path(stem));
  if (!in) throw FormatError("cannot open header " + header_path(stem).string());
  Header h;
  try {
    h.raw = nlohmann::json::parse(in);
    if (h.raw.at("format").get<std::string>() != format) {
      throw FormatError("expected format " + std::string(format) + " in " + header_path(stem).string());
    }
    const int version = h.raw.at("version").get<int>();
    if (version != kCodecVersion) throw FormatError("unknown version " + std::to_string(version));
    if (h.raw.at("dtype").get<std::string>() != dtype) throw FormatError("unexpected dtype in " + stem.string());
    const auto d = h.raw.at("dims").get<std::array<int, 3>>();
    const auto s = h.raw.at("spacing").get<std::array<double, 3>>();
    h.dims = {d[0], d[1], d[2]};
    h.spacing = {s[0], s[1], s[2]};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed header " + header_path(stem).string() + ": " + e.what());
  }
  if (h.dims.h <= 0 || h.dims.w <= 0 || h.dims.d <= 0) throw FormatError("non-positive dims in " + stem.string());
  return h;
}

std::vector<char> read_payload(const std::filesystem::path& stem, std::size_t expected) {
  std::ifstream in(payload_path(stem), std::ios::binary);
  if (!in) throw FormatError("cannot open payload " + payload_path(stem).string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != expected) {
    throw FormatError("payload length mismatch in " + payload_path(stem).string() + ": expected " +
                      std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  }
  return bytes;
}

void write_pair(const std::filesystem::path& stem, const nlohmann::json& header, const void* data,
                std::size_t bytes) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream out(header_path(stem));
    if (!out) throw Error("cannot write " + header_path(stem).string());
    out << header.dump(2) << '\n';
  }
  std::ofstream out(payload_path(stem), std::ios::binary);
  if (!out) throw Error("cannot write " + payload_path(stem).string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw Error("write failed: " + payload_path(stem).string());
}

double percentile(std::vector<float> values, double p) {
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  const double a = values[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(values.begin() + lo + 1, values.end());
  return a + (rank - static_cast<double>(lo)) * (b - a);
}

template <class T>
SidePair<Grid<T>> split_grid(const Grid<T>& g) {
  const Dims d = g.dims();
  const int half = d.w / 2;
  Grid<T> left({d.h, half, d.d});
  Grid<T> right({d.h, d.w - half, d.d});
  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      for (int k = 0; k < d.d; ++k) {
        if (j < half) {
          left(i, j, k) = g(i, j, k);
        } else {
          right(i, j - half, k) = g(i, j, k);
        }
      }
    }
  }
  return {std::move(left), std::move(right), half};
}

template <class T>
Grid<T> join_grid(const Grid<T>& left, const Grid<T>& right, int offset) {
  const Dims l = left.dims(), r = right.dims();
  if (l.h != r.h || l.d != r.d || offset != l.w) throw ContractError("join_sides: halves do not fit together");
  Grid<T> g({l.h, l.w + r.w, l.d});
  for (int i = 0; i < l.h; ++i) {
    for (int j = 0; j < l.w + r.w; ++j) {
      for (int k = 0; k < l.d; ++k) g(i, j, k) = j < offset ? left(i, j, k) : right(i, j - offset, k);
    }
  }
  return g;
}

Dims unit_dims(const Dims& d, const Spacing& s) {
  Dims out{static_cast<int>(std::lround(d.h * s.x)), static_cast<int>(std::lround(d.w * s.y)),
           static_cast<int>(std::lround(d.d * s.z))};
  if (out.h < 8 || out.w < 8 || out.d < 8) throw ParameterError("resample: output smaller than 8 voxels on an axis");
  return out;
}

}  // namespace

void Volume::validate() const {
  check_dims(dims(), "volume");
  check_spacing(spacing, "volume");
  for (float v : voxels.values()) {
    if (!std::isfinite(v)) throw ParameterError("volume: non-finite intensity");
  }
}

void SegMask::validate() const {
  check_dims(dims(), "mask");
  check_spacing(spacing, "mask");
  if (num_classes < 2 || num_classes > 256) throw ParameterError("mask: class count must be in [2, 256]");
  for (auto v : labels.values()) {
    if (v >= num_classes) {
      throw ParameterError("mask: label " + std::to_string(v) + " >= class count " + std::to_string(num_classes));
    }
  }
}

std::size_t SegMask::foreground_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels.values().begin(), labels.values().end(), [](std::uint8_t v) { return v != 0; }));
}

void write_volume(const Volume& v, const std::filesystem::path& stem) {
  v.validate();
  auto header = header_common("svol", v.dims(), v.spacing, "float32le", stem);
  write_pair(stem, header, v.voxels.values().data(), v.voxels.size() * sizeof(float));
}

Volume read_volume(const std::filesystem::path& stem) {
  const Header h = read_header(stem, "svol", "float32le");
  const auto bytes = read_payload(stem, h.dims.count() * sizeof(float));
  std::vector<float> values(h.dims.count());
  std::memcpy(values.data(), bytes.data(), bytes.size());
  Volume v{Grid<float>(h.dims, std::move(values)), h.spacing};
  v.validate();
  return v;
}

void write_mask(const SegMask& m, const std::filesystem::path& stem) {
  m.validate();
  auto header = header_common("smask", m.dims(), m.spacing, "uint8", stem);
  header["num_classes"] = m.num_classes;
  write_pair(stem, header, m.labels.values().data(), m.labels.size());
}

SegMask read_mask(const std::filesystem::path& stem) {
  const Header h = read_header(stem, "smask", "uint8");
  const auto bytes = read_payload(stem, h.dims.count());
  std::vector<std::uint8_t> labels(bytes.begin(), bytes.end());
  SegMask m{Grid<std::uint8_t>(h.dims, std::move(labels)), h.raw.value("num_classes", 2), h.spacing};
  m.validate();
  return m;
}

Volume normalize_intensity(const Volume& v, double p_lo, double p_hi) {
  if (!(p_lo >= 0.0 && p_lo < p_hi && p_hi <= 100.0)) {
    throw ParameterError("normalize: need 0 <= p_lo < p_hi <= 100");
  }
  Volume out = v;
  const auto& values = v.voxels.values();
  if (values.empty()) return out;
  const double lo = percentile(values, p_lo);
  const double hi = percentile(values, p_hi);
  auto& dst = out.voxels.values();
  if (!(hi > lo)) {
    std::fill(dst.begin(), dst.end(), 0.0f);
    return out;
  }
  const double inv = 1.0 / (hi - lo);
  for (auto& x : dst) x = static_cast<float>((std::clamp<double>(x, lo, hi) - lo) * inv);
  return out;
}

Volume resample_unit_spacing(const Volume& v) {
  const Dims in = v.dims();
  const Dims out_dims = unit_dims(in, v.spacing);
  if (v.spacing == Spacing{}) return v;
  Volume out{Grid<float>(out_dims), Spacing{}};
  // Source coordinate of output voxel o along an axis is o / spacing.
  auto axis_weights = [](int o, double s, int n, int& i0, int& i1, double& t) {
    const double x = std::clamp(o / s, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(x));
    i1 = std::min(i0 + 1, n - 1);
    t = x - i0;
  };
  for (int i = 0; i < out_dims.h; ++i) {
    int x0, x1;
    double tx;
    axis_weights(i, v.spacing.x, in.h, x0, x1, tx);
    for (int j = 0; j < out_dims.w; ++j) {
      int y0, y1;
      double ty;
      axis_weights(j, v.spacing.y, in.w, y0, y1, ty);
      for (int k = 0; k < out_dims.d; ++k) {
        int z0, z1;
        double tz;
        axis_weights(k, v.spacing.z, in.d, z0, z1, tz);
        const auto& g = v.voxels;
        const double c00 = g(x0, y0, z0) * (1 - tz) + g(x0, y0, z1) * tz;
        const double c01 = g(x0, y1, z0) * (1 - tz) + g(x0, y1, z1) * tz;
        const double c10 = g(x1, y0, z0) * (1 - tz) + g(x1, y0, z1) * tz;
        const double c11 = g(x1, y1, z0) * (1 - tz) + g(x1, y1, z1) * tz;
        const double c0 = c00 * (1 - ty) + c01 * ty;
        const double c1 = c10 * (1 - ty) + c11 * ty;
        out.voxels(i, j, k) = static_cast<float>(c0 * (1 - tx) + c1 * tx);
      }
    }
  }
  return out;
}

SegMask resample_unit_spacing(const SegMask& m) {
  const Dims in = m.dims();
  const Dims out_dims = unit_dims(in, m.spacing);
  if (m.spacing == Spacing{}) return m;
  SegMask out{Grid<std::uint8_t>(out_dims), m.num_classes, Spacing{}};
  auto nearest = [](int o, double s, int n) {
    return std::clamp(static_cast<int>(std::floor(o / s + 0.5)), 0, n - 1);
  };
  for (int i = 0; i < out_dims.h; ++i) {
    const int si = nearest(i, m.spacing.x, in.h);
    for (int j = 0; j < out_dims.w; ++j) {
      const int sj = nearest(j, m.spacing.y, in.w);
      for (int k = 0; k < out_dims.d; ++k) out.labels(i, j, k) = m.labels(si, sj, nearest(k, m.spacing.z, in.d));
    }
  }
  return out;
}

SidePair<Volume> split_sides(const Volume& v) {
  if (v.dims().w < 16) throw ParameterError("split_sides: W must be >= 16");
  auto g = split_grid(v.voxels);
  return {{std::move(g.left), v.spacing}, {std::move(g.right), v.spacing}, g.right_offset};
}

SidePair<SegMask> split_sides(const SegMask& m) {
  if (m.dims().w < 16) throw ParameterError("split_sides: W must be >= 16");
  auto g = split_grid(m.labels);
  return {{std::move(g.left), m.num_classes, m.spacing}, {std::move(g.right), m.num_classes, m.spacing},
          g.right_offset};
}

Volume join_sides(const SidePair<Volume>& halves) {
  return {join_grid(halves.left.voxels, halves.right.voxels, halves.right_offset), halves.left.spacing};
}

SegMask join_sides(const SidePair<SegMask>& halves) {
  return {join_grid(halves.left.labels, halves.right.labels, halves.right_offset), halves.left.num_classes,
          halves.left.spacing};
}

}  // namespace smc
