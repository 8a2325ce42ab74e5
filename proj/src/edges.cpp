// SPDX-License-Identifier: Apache-2.0
#include "smc/edges.hpp"

#include <algorithm>
#include <cmath>

namespace smc {

namespace {

// Half-sample symmetric reflection: ... b a | a b c ... c b | b a ...
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

void convolve_axis(const Field& in, Field& out, const std::vector<double>& kernel, int axis) {
  const Dims d = in.dims();
  const int r = static_cast<int>(kernel.size() / 2);
  const int n = d[axis];
  std::vector<double> line(n), padded(n + 2 * r);
  const int outer_a = axis == 0 ? d.w : d.h;
  const int outer_b = axis == 2 ? d.w : d.d;
  for (int a = 0; a < outer_a; ++a) {
    for (int b = 0; b < outer_b; ++b) {
      auto at = [&](int t) -> std::size_t {
        switch (axis) {
          case 0: return in.index(t, a, b);
          case 1: return in.index(a, t, b);
          default: return in.index(a, b, t);
        }
      };
      for (int t = -r; t < n + r; ++t) padded[t + r] = in[at(reflect(t, n))];
      for (int t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int q = 0; q <= 2 * r; ++q) acc += kernel[q] * padded[t + q];
        out[at(t)] = acc;
      }
    }
  }
}

Field to_field(const Volume& v) {
  Field f(v.dims());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = v.voxels[i];
  return f;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(bits.values().begin(), bits.values().end(), std::uint8_t{1}));
}

SegMask EdgeMap::as_mask(const Spacing& spacing) const { return {bits, 2, spacing}; }

EdgeMap EdgeMap::from_mask(const SegMask& m) {
  EdgeMap e{Grid<std::uint8_t>(m.dims())};
  for (std::size_t i = 0; i < e.bits.size(); ++i) e.bits[i] = m.labels[i] != 0;
  return e;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian: sigma must be positive");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) total += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& v : k) v /= total;
  return k;
}

Field gaussian_smooth(const Field& f, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  Field a(f.dims()), b(f.dims());
  convolve_axis(f, a, kernel, 0);
  convolve_axis(a, b, kernel, 1);
  convolve_axis(b, a, kernel, 2);
  return a;
}

Field gaussian_smooth(const Volume& v, double sigma) { return gaussian_smooth(to_field(v), sigma); }

Field dog_response(const Field& f, double sigma, double k) {
  if (!(k > 1.0)) throw ParameterError("dog: ratio k must exceed 1");
  Field narrow = gaussian_smooth(f, sigma);
  const Field wide = gaussian_smooth(f, k * sigma);
  for (std::size_t i = 0; i < narrow.size(); ++i) narrow[i] -= wide[i];
  return narrow;
}

Field dog_response(const Volume& v, double sigma, double k) { return dog_response(to_field(v), sigma, k); }

EdgeMap extract_edges(const Field& r, double grad_floor) {
  if (!(grad_floor >= 0.0)) throw ParameterError("extract_edges: grad_floor must be >= 0");
  const Dims d = r.dims();
  EdgeMap e{Grid<std::uint8_t>(d)};
  static constexpr int kOff[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      for (int k = 0; k < d.d; ++k) {
        const double v = r(i, j, k);
        const int s = sign_of(v);
        for (const auto& o : kOff) {
          const int a = i + o[0], b = j + o[1], c = k + o[2];
          if (!d.contains(a, b, c)) continue;
          const double u = r(a, b, c);
          if (sign_of(u) == s) continue;
          if (std::abs(v) > std::abs(u)) continue;
          if (std::abs(v - u) < grad_floor) continue;
          e.bits(i, j, k) = 1;
          break;
        }
      }
    }
  }
  return e;
}

double adaptive_floor(const Field& response, double fraction) {
  std::vector<double> mags(response.size());
  for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(response[i]);
  if (mags.empty()) return 0.0;
  const auto at = static_cast<std::size_t>(std::floor(0.99 * static_cast<double>(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + at, mags.end());
  return fraction * mags[at];
}

double noise_sigma(const Volume& v) {
  const Dims d = v.dims();
  std::vector<double> diffs;
  diffs.reserve(d.count());
  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      for (int k = 0; k + 1 < d.d; ++k) diffs.push_back(std::abs(double(v.voxels(i, j, k + 1)) - v.voxels(i, j, k)));
    }
  }
  if (diffs.empty()) return 0.0;
  const auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
  std::nth_element(diffs.begin(), mid, diffs.end());
  // |a - b| of two N(0, s^2) samples has median 0.6745 * sqrt(2) * s.
  return *mid / (0.6744897501960817 * std::sqrt(2.0));
}

double dog_noise_gain(double sigma, double k) {
  const auto g1 = gaussian_kernel(sigma), g2 = gaussian_kernel(k * sigma);
  const int r1 = static_cast<int>(g1.size() / 2), r2 = static_cast<int>(g2.size() / 2);
  double s11 = 0.0, s22 = 0.0, s12 = 0.0;
  for (double x : g1) s11 += x * x;
  for (double x : g2) s22 += x * x;
  for (int t = -r1; t <= r1; ++t) s12 += g1[t + r1] * g2[t + r2];
  // The 3-D kernels are separable, so each inner product is a cube.
  return std::sqrt(std::max(0.0, s11 * s11 * s11 + s22 * s22 * s22 - 2.0 * s12 * s12 * s12));
}

double edge_floor(const Volume& v, const Field& response, const EdgeParams& params) {
  return std::max(adaptive_floor(response, params.floor_fraction),
                  params.noise_factor * noise_sigma(v) * dog_noise_gain(params.sigma, params.k));
}

EdgeMap detect_edges(const Volume& v, const EdgeParams& params) {
  const Field r = dog_response(v, params.sigma, params.k);
  return extract_edges(r, edge_floor(v, r, params));
}

}  // namespace smc
