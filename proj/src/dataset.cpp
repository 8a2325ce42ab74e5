// SPDX-License-Identifier: Apache-2.0
#include "smc/dataset.hpp"

namespace smc {

namespace {

bool unit(const Spacing& s) { return s.x == 1.0 && s.y == 1.0 && s.z == 1.0; }

}  // namespace

std::vector<SideItem> prepare_case(const std::string& case_id, const Volume& volume, const SegMask* mask,
                                   const EdgeParams& edges) {
  volume.validate();
  const Volume v = normalize_intensity(unit(volume.spacing) ? volume : resample_unit_spacing(volume));
  const auto vs = split_sides(v);
  std::optional<SidePair<SegMask>> ms;
  if (mask) {
    const SegMask m = unit(mask->spacing) ? *mask : resample_unit_spacing(*mask);
    if (!(m.dims() == v.dims())) throw ContractError("prepare_case: mask and volume dims differ for " + case_id);
    ms = split_sides(m);
  }
  std::vector<SideItem> out(2);
  for (int s = 0; s < 2; ++s) {
    SideItem& it = out[s];
    it.case_id = case_id;
    it.side = s;
    it.volume = s == 0 ? vs.left : vs.right;
    it.edges = detect_edges(it.volume, edges);
    if (ms) it.mask = s == 0 ? ms->left : ms->right;
  }
  return out;
}

std::vector<SideItem> load_side_items(const DatasetManifest& manifest, const std::string& domain,
                                      const EdgeParams& edges, bool with_masks) {
  std::vector<SideItem> items;
  for (const auto& c : manifest.domain(domain)) {
    const Volume v = read_volume(c.image);
    std::optional<SegMask> m;
    if (with_masks) m = read_mask(c.mask);
    for (auto& it : prepare_case(c.id, v, m ? &*m : nullptr, edges)) items.push_back(std::move(it));
  }
  return items;
}

PointCloud edge_voxels(const EdgeMap& edges, const Roi& roi) {
  PointCloud pc;
  pc.source_dims = edges.dims();
  for (std::size_t i = 0; i < edges.bits.size(); ++i) {
    if (!edges.bits[i]) continue;
    const Index3 c = edges.bits.coords(i);
    if (roi.contains(c)) pc.coords.push_back(c);
  }
  return pc;
}

}  // namespace smc
