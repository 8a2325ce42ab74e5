// SPDX-License-Identifier: Apache-2.0
#include "smc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "smc/config.hpp"
#include "smc/inference.hpp"

namespace smc {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TrainMode m) { return m == TrainMode::uda ? "uda" : "source-only"; }

TrainMode parse_mode(const std::string& s) {
  if (s == "uda") return TrainMode::uda;
  if (s == "source-only" || s == "source_only") return TrainMode::source_only;
  throw ParameterError("unknown training mode '" + s + "' (expected source-only or uda)");
}

std::string to_string(RoiRule r) { return r == RoiRule::gradual ? "gradual" : "jump"; }

RoiRule parse_roi_rule(const std::string& s) {
  if (s == "gradual") return RoiRule::gradual;
  if (s == "jump") return RoiRule::jump;
  throw ParameterError("unknown roi_rule '" + s + "' (expected gradual or jump)");
}

void TrainConfig::validate() const {
  if (max_iters < 1) throw ParameterError("config: max_iters must be >= 1");
  if (val_interval < 1 || val_interval > max_iters) throw ParameterError("config: need 1 <= val_interval <= max_iters");
  if (batch_source < 1 || batch_target < 1) throw ParameterError("config: batch sizes must be >= 1");
  if (!(base_lr > 0.0) || !(decay > 0.0)) throw ParameterError("config: base_lr and decay must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 1 || milestones[i] >= max_iters) throw ParameterError("config: milestones must lie in [1, max_iters)");
    if (i > 0 && milestones[i] <= milestones[i - 1]) throw ParameterError("config: milestones must increase");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ParameterError("config: Adam needs 0 <= beta < 1 and eps > 0");
  }
  if (points < 1) throw ParameterError("config: points must be >= 1");
  if (tau < 0.0 || tau > 1.0) throw ParameterError("config: tau must lie in [0, 1]");
  if (label_dilate < 0) throw ParameterError("config: label_dilate must be >= 0");
  if (roi_divisor < 1) throw ParameterError("config: roi_divisor must be >= 1");
  if (!(edges.sigma > 0.0) || !(edges.k > 1.0)) throw ParameterError("config: edges need sigma > 0 and k > 1");
  loss.validate();
  backbone.validate();
}

TrainConfig desk_profile() { return TrainConfig{}; }

TrainConfig clinical_profile() {
  TrainConfig c;
  c.max_iters = 15000;
  c.val_interval = 1000;
  c.milestones = {9000, 12500};
  c.points = 100000;
  return c;
}

TrainConfig profile(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "clinical") return clinical_profile();
  throw ParameterError("unknown profile '" + name + "' (expected desk or clinical)");
}

double lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter >= cfg.max_iters) throw ContractError("lr_at: iteration outside [0, max_iters)");
  double lr = cfg.base_lr;
  for (int m : cfg.milestones) {
    if (iter >= m) lr *= cfg.decay;
  }
  return lr;
}

RoiUpdate update_progressive_roi(const PointCloud& pc, const PointLabels& labels, const Roi& prev, RoiRule rule,
                                 int divisor) {
  if (divisor < 1) throw ParameterError("update_progressive_roi: divisor must be >= 1");
  RoiUpdate u;
  u.roi = prev;
  u.bbox = foreground_bbox(pc, labels);
  if (!u.bbox) {
    u.no_foreground = true;
    return u;
  }
  const Roi& b = *u.bbox;
  for (int a = 0; a < 3; ++a) {
    const int g_lo = std::max(0, b.lo[a] - prev.lo[a]);
    const int g_hi = std::max(0, prev.hi[a] - b.hi[a]);
    const int m_lo = rule == RoiRule::gradual ? g_lo / divisor : g_lo - g_lo / divisor;
    const int m_hi = rule == RoiRule::gradual ? g_hi / divisor : g_hi - g_hi / divisor;
    u.roi.lo[a] = std::min(prev.lo[a] + m_lo, b.lo[a]);
    u.roi.hi[a] = std::max(prev.hi[a] - m_hi, b.hi[a]);
  }
  return u;
}

json to_json(const Roi& r) { return {{"lo", r.lo}, {"hi", r.hi}}; }

Roi roi_from_json(const json& j) {
  Roi r;
  r.lo = j.at("lo").get<Index3>();
  r.hi = j.at("hi").get<Index3>();
  return r;
}

json rois_to_json(const std::map<std::string, RoiTrack>& rois) {
  json tracks = json::array();
  for (const auto& [key, t] : rois) {
    json hist = json::array();
    for (const auto& e : t.history) {
      hist.push_back({{"iter", e.iter},
                      {"roi", to_json(e.roi)},
                      {"bbox", e.bbox ? to_json(*e.bbox) : json(nullptr)},
                      {"roi_volume", e.roi.volume()},
                      {"no_foreground", e.no_foreground}});
    }
    tracks.push_back({{"key", key}, {"domain", t.domain}, {"roi", to_json(t.roi)}, {"history", hist}});
  }
  return {{"tracks", tracks}};
}

std::map<std::string, RoiTrack> rois_from_json(const json& j) {
  std::map<std::string, RoiTrack> out;
  try {
    for (const auto& t : j.at("tracks")) {
      RoiTrack r;
      r.domain = t.at("domain").get<std::string>();
      r.roi = roi_from_json(t.at("roi"));
      for (const auto& e : t.at("history")) {
        RoiEvent ev;
        ev.iter = e.at("iter").get<int>();
        ev.roi = roi_from_json(e.at("roi"));
        if (!e.at("bbox").is_null()) ev.bbox = roi_from_json(e.at("bbox"));
        ev.no_foreground = e.at("no_foreground").get<bool>();
        r.history.push_back(ev);
      }
      out[t.at("key").get<std::string>()] = std::move(r);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ROI history: ") + e.what());
  }
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t iter, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ iter) ^ stream);
}

LabeledCloud labelled_edges(const SideItem& item, const Roi& roi, int dilate) {
  if (!item.mask) throw ContractError("labelled_edges: " + item.key() + " has no mask");
  LabeledCloud lc;
  lc.cloud = edge_voxels(item.edges, roi);
  lc.labels = label_points(lc.cloud, *item.mask, dilate);
  return lc;
}

Trainer::Trainer(TrainConfig cfg, std::vector<SideItem> source, std::vector<SideItem> target)
    : cfg_(std::move(cfg)),
      source_(std::move(source)),
      target_(std::move(target)),
      net_((cfg_.validate(), cfg_.backbone), cfg_.init_seed),
      adam_(cfg_.adam) {
  if (source_.empty()) throw ParameterError("trainer: the source dataset is empty");
  for (const auto& it : source_) {
    if (!it.mask) throw ContractError("trainer: source item " + it.key() + " has no mask");
    rois_[it.key()] = {"source", Roi::full(it.edges.dims()), {}};
  }
  for (const auto& it : target_) {
    if (rois_.count(it.key())) throw ContractError("trainer: duplicate side " + it.key());
    rois_[it.key()] = {"target", Roi::full(it.edges.dims()), {}};
  }
}

std::map<std::string, Roi> Trainer::current_rois(const std::string& domain) const {
  std::map<std::string, Roi> out;
  for (const auto& [k, t] : rois_) {
    if (t.domain == domain) out[k] = t.roi;
  }
  return out;
}

std::vector<BatchItem> Trainer::sample_source(int iter) const {
  Rng rng(stream_seed(cfg_.seed, static_cast<std::uint64_t>(iter), 1));
  std::uniform_int_distribution<std::size_t> pick(0, source_.size() - 1);
  std::vector<BatchItem> batch;
  for (int b = 0; b < cfg_.batch_source; ++b) {
    const SideItem& it = source_[pick(rng)];
    BatchItem bi;
    bi.item = &it;
    bi.points = sample_edge_points(it.edges, rois_.at(it.key()).roi, static_cast<std::size_t>(cfg_.points), rng);
    bi.labels = label_points(bi.points, *it.mask, cfg_.label_dilate);
    batch.push_back(std::move(bi));
  }
  return batch;
}

std::vector<BatchItem> Trainer::sample_target(int iter) const {
  std::vector<BatchItem> batch;
  if (target_.empty()) return batch;
  Rng rng(stream_seed(cfg_.seed, static_cast<std::uint64_t>(iter), 2));
  std::uniform_int_distribution<std::size_t> pick(0, target_.size() - 1);
  for (int b = 0; b < cfg_.batch_target; ++b) {
    const SideItem& it = target_[pick(rng)];
    BatchItem bi;
    bi.item = &it;
    bi.points = sample_edge_points(it.edges, rois_.at(it.key()).roi, static_cast<std::size_t>(cfg_.points), rng);
    batch.push_back(std::move(bi));
  }
  return batch;
}

namespace {

void require_finite(double v, const std::string& what, const std::string& dump) {
  if (!std::isfinite(v)) throw NumericError("non-finite " + what + " loss (" + dump + ")");
}

std::string dump(const SourceLoss& l) {
  std::ostringstream s;
  s << "seg_pt=" << l.seg_pt << " seg_img=" << l.seg_img << " seg_fuse=" << l.seg_fuse << " seg_spt=" << l.seg_spt
    << " xm=" << l.xm;
  return s.str();
}

std::string dump(const TargetLoss& l) {
  std::ostringstream s;
  s << "seg_img=" << l.seg_img << " seg_fuse=" << l.seg_fuse << " seg_spt=" << l.seg_spt << " xm=" << l.xm
    << " kept=" << l.kept;
  return s.str();
}

}  // namespace

StepLog Trainer::accumulate(const std::vector<BatchItem>& source, const std::vector<BatchItem>& target) {
  if (source.empty()) throw ContractError("accumulate: empty source batch");
  net_.params().zero_grad();
  StepLog log;
  const int classes = cfg_.backbone.classes;
  const double ws = 1.0 / static_cast<double>(source.size());
  for (const auto& b : source) {
    Tape tape;
    Tape::Scope scope(tape);
    const NetOutput out = net_.forward(b.item->volume, b.points);
    const SourceLoss l = source_loss(loss_inputs(out), b.labels, class_frequencies(b.labels, classes), cfg_.loss);
    require_finite(l.value, "source", b.item->key() + ": " + dump(l));
    tape.backward(scale(l.total, ws));
    log.loss_s += ws * l.value;
    log.s_seg_pt += ws * l.seg_pt;
    log.s_seg_img += ws * l.seg_img;
    log.s_seg_fuse += ws * l.seg_fuse;
    log.s_seg_spt += ws * l.seg_spt;
    log.s_seg += ws * l.seg;
    log.s_xm += ws * l.xm;
  }
  // With lambda_t = 0 the target objective is identically zero.
  if (cfg_.mode == TrainMode::uda && cfg_.loss.lambda_t != 0.0 && !target.empty()) {
    const double wt = 1.0 / static_cast<double>(target.size());
    for (const auto& b : target) {
      Tape tape;
      Tape::Scope scope(tape);
      const NetOutput out = net_.forward(b.item->volume, b.points);
      const TargetLoss l = target_loss(loss_inputs(out), cfg_.loss, cfg_.tau);
      require_finite(l.value, "target", b.item->key() + ": " + dump(l));
      if (l.total.requires_grad()) tape.backward(scale(l.total, wt));
      log.loss_t += wt * l.value;
      log.t_seg_img += wt * l.seg_img;
      log.t_seg_fuse += wt * l.seg_fuse;
      log.t_seg_spt += wt * l.seg_spt;
      log.t_seg += wt * l.seg;
      log.t_xm += wt * l.xm;
      log.t_kept += wt * static_cast<double>(l.kept);
      log.t_filtered += l.all_filtered ? 1 : 0;
    }
  }
  log.loss = log.loss_s + log.loss_t;
  return log;
}

StepLog Trainer::train_step() {
  if (iter_ >= cfg_.max_iters) throw ContractError("train_step: already at max_iters");
  const double lr = lr_at(iter_, cfg_);
  const int next = iter_ + 1;
  const auto src = sample_source(next);
  const auto tgt = cfg_.mode == TrainMode::uda ? sample_target(next) : std::vector<BatchItem>{};
  StepLog log = accumulate(src, tgt);
  adam_.step(net_.params(), lr);
  iter_ = next;
  log.iter = iter_;
  log.lr = lr;
  return log;
}

Trainer::Validation Trainer::validate() {
  Validation v;
  v.iter = iter_;
  InferenceOptions opt;
  opt.chunk = static_cast<std::size_t>(cfg_.points);
  for (std::size_t i = 0; i < target_.size(); ++i) {
    const SideItem& it = target_[i];
    RoiTrack& t = rois_.at(it.key());
    opt.seed = stream_seed(cfg_.seed, static_cast<std::uint64_t>(iter_), 16 + i);
    LabeledCloud pred = predict_side(net_, it, t.roi, opt);
    const RoiUpdate u = update_progressive_roi(pred.cloud, pred.labels, t.roi, cfg_.roi_rule, cfg_.roi_divisor);
    t.roi = u.roi;
    t.history.push_back({iter_, u.roi, u.bbox, u.no_foreground});
    v.predictions.emplace(it.key(), std::move(pred));
  }
  if (cfg_.source_roi) {
    for (const auto& it : source_) {
      RoiTrack& t = rois_.at(it.key());
      const LabeledCloud lc = labelled_edges(it, t.roi, cfg_.label_dilate);
      const RoiUpdate u = update_progressive_roi(lc.cloud, lc.labels, t.roi, cfg_.roi_rule, cfg_.roi_divisor);
      t.roi = u.roi;
      t.history.push_back({iter_, u.roi, u.bbox, u.no_foreground});
    }
  }
  return v;
}

namespace {

const char* kLossHeader =
    "iter,lr,loss,loss_s,loss_t,s_seg_pt,s_seg_img,s_seg_fuse,s_seg_spt,s_seg,s_xm,t_seg_img,t_seg_fuse,t_seg_spt,"
    "t_seg,t_xm,t_kept,t_filtered,lambda_s1,lambda_s2,lambda_1,lambda_2,lambda_t,distill_ratio";

std::string loss_row(const StepLog& l, const LossWeights& w) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,"
                "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                l.iter, l.lr, l.loss, l.loss_s, l.loss_t, l.s_seg_pt, l.s_seg_img, l.s_seg_fuse, l.s_seg_spt, l.s_seg,
                l.s_xm, l.t_seg_img, l.t_seg_fuse, l.t_seg_spt, l.t_seg, l.t_xm, l.t_kept, l.t_filtered, w.lambda_s1,
                w.lambda_s2, w.lambda_1, w.lambda_2, w.lambda_t, w.distill_ratio);
  return buf;
}

/// Keeps the header and rows up to `iter`, so a resumed run continues the file.
void truncate_losses(const fs::path& path, int iter) {
  std::vector<std::string> keep;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (keep.empty() || std::stoi(line.substr(0, line.find(','))) <= iter) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (keep.empty()) keep.push_back(kLossHeader);
  for (const auto& l : keep) out << l << '\n';
}

std::string iter_tag(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", iter);
  return buf;
}

}  // namespace

void Trainer::write_roi_history(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << rois_to_json(rois_).dump(2) << '\n';
}

int Trainer::run(const fs::path& out, int stop_at) {
  const int end = stop_at < 0 ? cfg_.max_iters : std::min(stop_at, cfg_.max_iters);
  int snapshots = 0;
  int at = iter_;
  try {
    fs::create_directories(out / "checkpoints");
    const fs::path losses = out / "losses.csv";
    if (iter_ == 0) {
      std::ofstream(losses, std::ios::trunc) << kLossHeader << '\n';
    } else {
      truncate_losses(losses, iter_);
    }
    std::ofstream csv(losses, std::ios::app);
    if (!csv) throw Error("cannot write " + losses.string());
    while (iter_ < end) {
      const StepLog log = train_step();
      at = iter_;
      csv << loss_row(log, cfg_.loss) << '\n';
      csv.flush();
      if (iter_ % cfg_.val_interval != 0) continue;
      const Validation v = validate();
      if (cfg_.snapshots) {
        const fs::path dir = out / "snapshots" / ("iter_" + iter_tag(iter_));
        for (const auto& [key, pred] : v.predictions) {
          std::string name = key;
          std::replace(name.begin(), name.end(), '/', '_');
          write_ply(dir / (name + ".ply"), pred.cloud, pred.labels);
        }
      }
      ++snapshots;
      save(out / "checkpoints" / ("iter_" + iter_tag(iter_) + ".ckpt"));
      write_roi_history(out / "roi_history.json");
    }
    if (iter_ == cfg_.max_iters) save(out / "model.ckpt");
    write_roi_history(out / "roi_history.json");
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(at + 1) + ": " + e.what());
  } catch (const ContractError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("iteration " + std::to_string(at) + ": " + e.what());
  }
  return snapshots;
}

void Trainer::save(const fs::path& path) const {
  Checkpoint ck = snapshot_params(net_.params());
  adam_.save(ck);
  ck.meta["iter"] = iter_;
  ck.meta["config"] = to_json(cfg_);
  ck.meta["rois"] = rois_to_json(rois_);
  save_checkpoint(path, ck);
}

void Trainer::resume(const fs::path& checkpoint) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  restore_params(net_.params(), ck);
  adam_.load(ck, net_.params());
  iter_ = ck.meta.value("iter", 0);
  if (iter_ < 0 || iter_ > cfg_.max_iters) throw FormatError("checkpoint iteration outside the configured run");
  if (ck.meta.contains("rois")) {
    for (auto& [key, t] : rois_from_json(ck.meta["rois"])) {
      if (!rois_.count(key)) throw FormatError("checkpoint ROI for unknown side " + key);
      rois_[key] = std::move(t);
    }
  }
}

}  // namespace smc
