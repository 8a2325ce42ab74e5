// SPDX-License-Identifier: Apache-2.0
#include "smc/inference.hpp"

#include <algorithm>
#include <numeric>

namespace smc {

std::string to_string(Readout r) { return r == Readout::point ? "point" : "image"; }

Readout parse_readout(const std::string& s) {
  if (s == "point") return Readout::point;
  if (s == "image") return Readout::image;
  throw ParameterError("unknown readout '" + s + "' (expected point or image)");
}

LabeledCloud predict_side(const SmcNet& net, const SideItem& item, const Roi& roi, const InferenceOptions& opt) {
  if (opt.chunk == 0) throw ParameterError("inference: chunk must be >= 1");
  LabeledCloud out;
  out.cloud = edge_voxels(item.edges, roi);
  const std::size_t n = out.cloud.size();
  out.labels.assign(n, 0);
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opt.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::optional<ImageFeatures> image;
  if (opt.readout == Readout::image) image = net.image_encode_decode(item.volume);

  const std::size_t chunks = (n + opt.chunk - 1) / opt.chunk;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = c * n / chunks, hi = (c + 1) * n / chunks;
    PointCloud part;
    part.source_dims = out.cloud.source_dims;
    for (std::size_t i = lo; i < hi; ++i) part.coords.push_back(out.cloud.coords[order[i]]);
    const Tensor p = image ? net.predict_image(*image, part) : net.predict_points(part);
    const auto d = p.data();
    const std::size_t k = p.cols();
    for (std::size_t r = 0; r < part.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (d[r * k + j] > d[r * k + best]) best = j;
      }
      out.labels[order[lo + r]] = static_cast<int>(best);
    }
  }
  return out;
}

SidePrediction reconstruct_side(LabeledCloud cloud, const InferenceOptions& opt) {
  SidePrediction s;
  s.mask.labels = Grid<std::uint8_t>(cloud.cloud.source_dims, 0);
  const auto fg = foreground_points(cloud.cloud, cloud.labels);
  s.cloud = std::move(cloud);
  if (fg.size() < 4) {
    s.failure = "fewer than 4 foreground points";
    return s;
  }
  try {
    s.recon = reconstruct_points(fg, s.mask.dims(), opt.reconstruct);
    s.mask = s.recon->mask;
  } catch (const GeometryError& e) {
    s.failure = e.what();
  }
  return s;
}

EvalRun evaluate_items(const SmcNet& net, const std::vector<SideItem>& items, const InferenceOptions& opt,
                       const std::map<std::string, Roi>& rois) {
  if (items.size() % 2 != 0) throw ContractError("evaluate_items: items must come in left/right pairs");
  EvalRun run;
  for (std::size_t i = 0; i < items.size(); i += 2) {
    CaseReport cr;
    cr.case_id = items[i].case_id;
    for (std::size_t s = 0; s < 2; ++s) {
      const SideItem& it = items[i + s];
      if (it.case_id != cr.case_id || it.side != static_cast<int>(s)) {
        throw ContractError("evaluate_items: items of " + cr.case_id + " are not a left/right pair");
      }
      if (!it.mask) throw ContractError("evaluate_items: no mask for " + it.key());
      const auto r = rois.find(it.key());
      const Roi roi = r != rois.end() ? r->second : Roi::full(it.edges.dims());
      SidePrediction p = reconstruct_side(predict_side(net, it, roi, opt), opt);
      (s == 0 ? cr.left : cr.right) = evaluate_side(p.mask, *it.mask);
      run.sides.emplace(it.key(), std::move(p));
    }
    run.report.cases.push_back(std::move(cr));
  }
  return run;
}

}  // namespace smc
