// SPDX-License-Identifier: Apache-2.0
#include "smc/phantom.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

namespace smc {

namespace {

using Rng = std::mt19937_64;

constexpr int kMargin = 4;

double draw(Rng& rng, const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Tube {
  double h, w, r;  // runs along the third axis
  bool contains(double i, double j) const { return (i - h) * (i - h) + (j - w) * (j - w) <= r * r; }
};

}  // namespace

std::string to_string(PhantomStyle s) { return s == PhantomStyle::ct_like ? "ct_like" : "mri_like"; }

PhantomStyle parse_style(const std::string& s) {
  if (s == "ct_like") return PhantomStyle::ct_like;
  if (s == "mri_like") return PhantomStyle::mri_like;
  throw ParameterError("unknown phantom style '" + s + "' (ct_like | mri_like)");
}

bool Ellipsoid::contains(double i, double j, double k) const {
  const double a = (i - c[0]) / r[0], b = (j - c[1]) / r[1], e = (k - c[2]) / r[2];
  return a * a + b * b + e * e <= 1.0;
}

double Ellipsoid::volume() const { return 4.0 / 3.0 * std::numbers::pi * r[0] * r[1] * r[2]; }

void PhantomSpec::validate() const {
  if (side.h < 16 || side.w < 16 || side.d < 16) throw ParameterError("phantom: side dims must be >= 16");
  const Range* centres[3] = {&centre_h, &centre_w, &centre_d};
  const Range* radii[3] = {&radius_h, &radius_w, &radius_d};
  for (int a = 0; a < 3; ++a) {
    if (centres[a]->lo > centres[a]->hi || radii[a]->lo > radii[a]->hi || radii[a]->lo <= 0) {
      throw ParameterError("phantom: malformed kidney range on axis " + std::to_string(a));
    }
    const double n = side[a];
    if (centres[a]->lo * n - radii[a]->hi < kMargin || centres[a]->hi * n + radii[a]->hi > n - 1 - kMargin) {
      throw ParameterError("phantom: kidney ranges violate the " + std::to_string(kMargin) +
                           "-voxel margin on axis " + std::to_string(a));
    }
  }
  if (distractors < 0) throw ParameterError("phantom: distractor count must be >= 0");
  if (noise < 0 || bias_strength < 0 || bias_strength >= 1) throw ParameterError("phantom: noise/bias out of range");
}

PhantomSpec default_spec(PhantomStyle style, std::uint64_t geometry_seed, std::uint64_t texture_seed) {
  PhantomSpec s;
  s.style = style;
  s.geometry_seed = geometry_seed;
  s.texture_seed = texture_seed;
  if (style == PhantomStyle::mri_like) {
    s.noise = 0.04;
    s.bias_strength = 0.3;
  }
  return s;
}

double ct_value(Tissue t) {
  switch (t) {
    case air: return 0.0;
    case fat: return 0.30;
    case muscle: return 0.45;
    case kidney: return 0.62;
    case vessel: return 0.75;
    case blob: return 0.55;
    case bone: return 1.0;
  }
  return 0.0;
}

double mri_value(Tissue t) {
  if (t == air) return 0.02;
  // Monotone decreasing remap: tissue ordering inverts relative to ct_like.
  return 0.15 + 0.85 * std::pow(1.0 - ct_value(t), 1.6);
}

PhantomGeometry generate_geometry(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.geometry_seed);
  const Dims d{spec.side.h, 2 * spec.side.w, spec.side.d};
  PhantomGeometry g;
  g.tissue = Grid<std::uint8_t>(d, air);

  const double ch = 0.5 * (d.h - 1), cw = 0.5 * (d.w - 1);
  const double ah = 0.47 * d.h * std::uniform_real_distribution<double>(0.96, 1.0)(rng);
  const double aw = 0.48 * d.w * std::uniform_real_distribution<double>(0.96, 1.0)(rng);
  const double fat_rim = 1.0 - 4.0 / std::min(ah, aw);

  for (int side = 0; side < 2; ++side) {
    Ellipsoid& e = g.kidney[side];
    const double off[3] = {0.0, static_cast<double>(side * spec.side.w), 0.0};
    const Range* centres[3] = {&spec.centre_h, &spec.centre_w, &spec.centre_d};
    const Range* radii[3] = {&spec.radius_h, &spec.radius_w, &spec.radius_d};
    for (int a = 0; a < 3; ++a) {
      e.c[a] = off[a] + draw(rng, *centres[a]) * spec.side[a];
      e.r[a] = draw(rng, *radii[a]);
    }
  }
  const double vh = ch + 0.04 * d.h;
  const Tube tubes[3] = {{vh, cw - 0.05 * d.w, 3.5}, {vh, cw + 0.05 * d.w, 4.0}, {ch + 0.22 * d.h, cw, 6.0}};
  const Tissue tube_tissue[3] = {vessel, vessel, bone};

  std::vector<Ellipsoid> blobs;
  for (int tries = 0; static_cast<int>(blobs.size()) < spec.distractors && tries < 1000; ++tries) {
    Ellipsoid b;
    b.c[0] = std::uniform_real_distribution<double>(ch - 0.6 * ah, ch + 0.6 * ah)(rng);
    b.c[1] = std::uniform_real_distribution<double>(cw - 0.6 * aw, cw + 0.6 * aw)(rng);
    b.c[2] = std::uniform_real_distribution<double>(6.0, d.d - 7.0)(rng);
    for (double& r : b.r) r = std::uniform_real_distribution<double>(3.0, 6.0)(rng);
    bool clear = true;
    for (const auto& k : g.kidney) {
      double dist = 0.0;
      for (int a = 0; a < 3; ++a) dist += std::pow((b.c[a] - k.c[a]) / (k.r[a] + b.r[a] + 3.0), 2);
      clear = clear && dist > 1.0;
    }
    for (const auto& t : tubes) {
      clear = clear && std::hypot(b.c[0] - t.h, b.c[1] - t.w) > t.r + std::max(b.r[0], b.r[1]) + 3.0;
    }
    for (const auto& o : blobs) {
      clear = clear && std::hypot(b.c[0] - o.c[0], b.c[1] - o.c[1], b.c[2] - o.c[2]) > 14.0;
    }
    if (clear) blobs.push_back(b);
  }

  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      const double rho = std::hypot((i - ch) / ah, (j - cw) / aw);
      if (rho > 1.0) continue;
      Tissue base = rho > fat_rim ? fat : muscle;
      for (int t = 0; t < 3; ++t) {
        if (tubes[t].contains(i, j)) base = tube_tissue[t];
      }
      for (int k = 0; k < d.d; ++k) {
        Tissue v = base;
        for (const auto& b : blobs) {
          if (b.contains(i, j, k)) v = blob;
        }
        for (const auto& e : g.kidney) {
          if (e.contains(i, j, k)) v = kidney;
        }
        g.tissue(i, j, k) = v;
      }
    }
  }
  return g;
}

Volume render_texture(const PhantomGeometry& g, const PhantomSpec& spec) {
  Rng rng(spec.texture_seed);
  const Dims d = g.tissue.dims();
  Volume v;
  v.voxels = Grid<float>(d, 0.0f);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool mri = spec.style == PhantomStyle::mri_like;

  // Low-frequency multiplicative bias: a few random plane waves.
  struct Wave {
    double f[3], phase, amp;
  };
  std::vector<Wave> waves;
  if (mri && spec.bias_strength > 0) {
    for (int m = 0; m < 3; ++m) {
      Wave w;
      for (int a = 0; a < 3; ++a) w.f[a] = std::uniform_real_distribution<double>(-1.0, 1.0)(rng) / d[a];
      w.phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      w.amp = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
      waves.push_back(w);
    }
  }
  double amp_sum = 0.0;
  for (const auto& w : waves) amp_sum += w.amp;

  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      for (int k = 0; k < d.d; ++k) {
        const Tissue t = static_cast<Tissue>(g.tissue(i, j, k));
        double x;
        if (!mri) {
          x = ct_value(t) + (spec.noise > 0 ? spec.noise * gauss(rng) : 0.0);
        } else {
          double bias = 1.0;
          for (const auto& w : waves) {
            bias += spec.bias_strength * w.amp / amp_sum *
                    std::cos(2.0 * std::numbers::pi * (w.f[0] * i + w.f[1] * j + w.f[2] * k) + w.phase);
          }
          const double s = mri_value(t) * bias;
          if (spec.noise > 0) {
            const double re = s + spec.noise * gauss(rng), im = spec.noise * gauss(rng);
            x = std::sqrt(re * re + im * im);
          } else {
            x = s;
          }
        }
        v.voxels(i, j, k) = static_cast<float>(x);
      }
    }
  }
  return v;
}

PhantomCase generate_case(const PhantomSpec& spec) {
  const PhantomGeometry g = generate_geometry(spec);
  PhantomCase c;
  c.volume = render_texture(g, spec);
  c.mask.labels = Grid<std::uint8_t>(g.tissue.dims(), 0);
  for (std::size_t i = 0; i < g.tissue.size(); ++i) c.mask.labels[i] = g.tissue[i] == kidney;
  return c;
}

PhantomCase make_ball_phantom(const Dims& dims, double radius, PhantomStyle style, std::uint64_t seed) {
  PhantomSpec spec = default_spec(style, 0, seed);
  PhantomGeometry g;
  g.tissue = Grid<std::uint8_t>(dims, muscle);
  const double c[3] = {0.5 * (dims.h - 1), 0.5 * (dims.w - 1), 0.5 * (dims.d - 1)};
  PhantomCase out;
  out.mask.labels = Grid<std::uint8_t>(dims, 0);
  for (int i = 0; i < dims.h; ++i) {
    for (int j = 0; j < dims.w; ++j) {
      for (int k = 0; k < dims.d; ++k) {
        if (std::hypot(i - c[0], j - c[1], k - c[2]) <= radius) {
          g.tissue(i, j, k) = kidney;
          out.mask.labels(i, j, k) = 1;
        }
      }
    }
  }
  out.volume = render_texture(g, spec);
  return out;
}

std::filesystem::path generate_split(const std::filesystem::path& out, const SplitOptions& opt) {
  if (opt.n_source < 1 || opt.n_target < 1 || opt.n_holdout < 0) {
    throw ParameterError("generate_split: need >= 1 source and target case");
  }
  std::filesystem::create_directories(out);
  nlohmann::json manifest{{"format", "smc-dataset"},
                          {"version", 1},
                          {"seed", opt.seed},
                          {"side", {opt.side.h, opt.side.w, opt.side.d}},
                          {"cases", nlohmann::json::array()}};
  struct Pool {
    const char* domain;
    const char* prefix;
    int count;
    PhantomStyle style;
    std::uint64_t tag;
  };
  // The low two bits of a geometry seed identify its pool, so pools never overlap.
  const Pool pools[3] = {{"source", "src", opt.n_source, PhantomStyle::ct_like, 0},
                         {"target", "tgt", opt.n_target, PhantomStyle::mri_like, 1},
                         {"holdout", "hold", opt.n_holdout, PhantomStyle::ct_like, 2}};
  for (const auto& pool : pools) {
    for (int i = 0; i < pool.count; ++i) {
      const std::uint64_t geo = (opt.seed << 24) | (static_cast<std::uint64_t>(i) << 2) | pool.tag;
      const std::uint64_t tex = splitmix(geo);
      PhantomSpec spec = default_spec(pool.style, geo, tex);
      // Kidney radii are defined for a 64^3 side; other sides scale them by the usable interior span.
      const PhantomSpec ref;
      auto scaled = [&](Range r, int n, int n_ref) {
        const double f = static_cast<double>(n - 1 - 2 * kMargin) / (n_ref - 1 - 2 * kMargin);
        return Range{r.lo * f, r.hi * f};
      };
      spec.radius_h = scaled(ref.radius_h, opt.side.h, ref.side.h);
      spec.radius_w = scaled(ref.radius_w, opt.side.w, ref.side.w);
      spec.radius_d = scaled(ref.radius_d, opt.side.d, ref.side.d);
      spec.side = opt.side;
      const PhantomCase c = generate_case(spec);
      char id[32];
      std::snprintf(id, sizeof id, "%s_%03d", pool.prefix, i);
      const std::filesystem::path dir = out / id;
      std::filesystem::create_directories(dir);
      write_volume(c.volume, dir / "image.svol");
      write_mask(c.mask, dir / "mask.smask");
      manifest["cases"].push_back({{"id", id},
                                   {"domain", pool.domain},
                                   {"style", to_string(pool.style)},
                                   {"geometry_seed", geo},
                                   {"texture_seed", tex},
                                   {"image", std::string(id) + "/image.svol"},
                                   {"mask", std::string(id) + "/mask.smask"},
                                   {"eval_only_mask", std::string(pool.domain) == "target"}});
    }
  }
  const auto path = out / "manifest.json";
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << manifest.dump(2) << '\n';
  return path;
}

std::vector<ManifestCase> DatasetManifest::domain(const std::string& name) const {
  std::vector<ManifestCase> out;
  for (const auto& c : cases) {
    if (c.domain == name) out.push_back(c);
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_json) {
  std::ifstream in(manifest_json);
  if (!in) throw FormatError("cannot open " + manifest_json.string());
  DatasetManifest m;
  m.root = manifest_json.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "smc-dataset") throw FormatError("not a dataset manifest");
    for (const auto& c : j.at("cases")) {
      ManifestCase mc;
      mc.id = c.at("id").get<std::string>();
      mc.domain = c.at("domain").get<std::string>();
      mc.style = parse_style(c.at("style").get<std::string>());
      mc.geometry_seed = c.at("geometry_seed").get<std::uint64_t>();
      mc.texture_seed = c.at("texture_seed").get<std::uint64_t>();
      mc.image = m.root / c.at("image").get<std::string>();
      mc.mask = m.root / c.at("mask").get<std::string>();
      mc.eval_only_mask = c.at("eval_only_mask").get<bool>();
      m.cases.push_back(std::move(mc));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + manifest_json.string() + ": " + e.what());
  }
  return m;
}

}  // namespace smc
