// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smc/volume.hpp"

namespace smc {

enum class PhantomStyle { ct_like, mri_like };

std::string to_string(PhantomStyle s);
PhantomStyle parse_style(const std::string& s);

struct Range {
  double lo = 0.0, hi = 0.0;
};

struct PhantomSpec {
  Dims side{64, 64, 64};  // one side; a case is side.h x 2 side.w x side.d
  /// Kidney centre per axis as a fraction of the side extent.
  Range centre_h{0.40, 0.60}, centre_w{0.42, 0.58}, centre_d{0.40, 0.60};
  Range radius_h{10.0, 13.0}, radius_w{8.0, 11.0}, radius_d{12.0, 16.0};
  int distractors = 4;
  PhantomStyle style = PhantomStyle::ct_like;
  double noise = 0.02;
  double bias_strength = 0.0;
  std::uint64_t geometry_seed = 1;
  std::uint64_t texture_seed = 2;

  /// Throws ParameterError when the kidney ranges cannot keep a 4-voxel margin.
  void validate() const;
};

/// Style preset: ct_like noise 0.02 without bias; mri_like noise 0.04, bias 0.3.
PhantomSpec default_spec(PhantomStyle style, std::uint64_t geometry_seed, std::uint64_t texture_seed);

struct Ellipsoid {
  double c[3];
  double r[3];
  bool contains(double i, double j, double k) const;
  double volume() const;
};

/// Label map of one case; identical for both styles given the geometry seed.
struct PhantomGeometry {
  Grid<std::uint8_t> tissue;      // see Tissue
  Ellipsoid kidney[2];            // left, right (whole-case coordinates)
};

enum Tissue : std::uint8_t { air = 0, fat, muscle, kidney, vessel, blob, bone };

PhantomGeometry generate_geometry(const PhantomSpec& spec);
Volume render_texture(const PhantomGeometry& g, const PhantomSpec& spec);

struct PhantomCase {
  Volume volume;
  SegMask mask;  // 1 = kidney
};

PhantomCase generate_case(const PhantomSpec& spec);

/// Tissue value in the ct_like style, and its mri_like remap.
double ct_value(Tissue t);
double mri_value(Tissue t);

/// Analytic ball of `radius` centred in `dims` on a muscle background.
PhantomCase make_ball_phantom(const Dims& dims, double radius, PhantomStyle style, std::uint64_t seed);

struct SplitOptions {
  int n_source = 8;
  int n_target = 4;
  int n_holdout = 0;  // extra ct_like cases with masks, for held-out evaluation
  std::uint64_t seed = 7;
  Dims side{64, 64, 64};
};

/// Writes case directories and manifest.json under `out`; returns the manifest path.
std::filesystem::path generate_split(const std::filesystem::path& out, const SplitOptions& opt);

struct ManifestCase {
  std::string id;
  std::string domain;  // source | target | holdout
  PhantomStyle style = PhantomStyle::ct_like;
  std::uint64_t geometry_seed = 0, texture_seed = 0;
  std::filesystem::path image, mask;
  bool eval_only_mask = false;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestCase> cases;
  std::vector<ManifestCase> domain(const std::string& name) const;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_json);

}  // namespace smc
