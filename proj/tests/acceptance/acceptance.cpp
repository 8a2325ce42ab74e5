// SPDX-License-Identifier: Apache-2.0
// Acceptance driver: one [PASS]/[FAIL] line per criterion. Exit status 0 only
// when every selected criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "../common/grad_suite.hpp"
#include "../common/oracles.hpp"
#include "CLI11.hpp"
#include "json.hpp"
#include "smc/config.hpp"
#include "smc/edges.hpp"
#include "smc/fusion.hpp"
#include "smc/inference.hpp"
#include "smc/losses.hpp"
#include "smc/metrics.hpp"
#include "smc/phantom.hpp"
#include "smc/reconstruct.hpp"
#include "smc/trainer.hpp"

namespace fs = std::filesystem;
using namespace smc;
using smc::testing::Rng;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "NOT ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Tensor one_hot(const PointLabels& y, int classes) {
  std::vector<double> v(y.size() * classes, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) v[i * classes + y[i]] = 1.0;
  return Tensor::from({y.size(), static_cast<std::size_t>(classes)}, v);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

SegMask box_mask(Dims d, Index3 lo, Index3 hi) {
  SegMask m{Grid<std::uint8_t>(d, 0), 2, {}};
  for (int i = lo[0]; i <= hi[0]; ++i)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int k = lo[2]; k <= hi[2]; ++k) m.labels(i, j, k) = 1;
  return m;
}

// ---------------------------------------------------------------- 1 .. 7

Outcome autodiff() {
  Outcome o;
  const auto cases = smc::testing::run_grad_suite(2024);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    if (c.max_rel_err >= worst) {
      worst = c.max_rel_err;
      worst_name = c.name;
    }
  }
  std::set<std::string> names;
  for (const auto& c : cases) names.insert(c.name);
  o.require(names.count("lovasz_softmax") && names.count("distill_loss_two_scales"), "suite covers Lovasz and KL");
  o.require(worst < 1e-4, std::to_string(cases.size()) + " ops, max rel err " + fmt("%.2e", worst) + " (" +
                              worst_name + ") < 1e-4");
  return o;
}

Outcome lovasz() {
  Outcome o;
  double hard = 0.0;
  // Every ground truth and every prediction over 6 binary points.
  for (int g = 0; g < 64; ++g) {
    PointLabels y(6);
    for (int i = 0; i < 6; ++i) y[i] = (g >> i) & 1;
    for (int bits = 0; bits < 64; ++bits) {
      PointLabels pred(6);
      for (int i = 0; i < 6; ++i) pred[i] = (bits >> i) & 1;
      hard = std::max(hard, std::abs(lovasz_softmax(one_hot(pred, 2), y).item() -
                                     smc::testing::hard_jaccard_loss(pred, y, 2)));
    }
  }
  o.require(hard < 1e-12, "hard patterns max err " + fmt("%.1e", hard));
  Rng rng(11);
  double frac = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const int c = 2 + trial % 3;
    const Tensor p = smc::testing::random_probs(n, c, rng);
    PointLabels y(n);
    std::uniform_int_distribution<int> lab(0, c - 1);
    for (auto& v : y) v = lab(rng);
    frac = std::max(frac, std::abs(lovasz_softmax(p, y).item() - smc::testing::lovasz_reference(values(p), y, c)));
  }
  o.require(frac < 1e-12, "fractional vs reference max err " + fmt("%.1e", frac));
  return o;
}

Outcome distillation() {
  Outcome o;
  Rng rng(12);
  double min_v = 1e300, ref_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor t = smc::testing::random_probs(4, 3, rng), s = smc::testing::random_probs(4, 3, rng);
    const double v = distill_loss({t}, {s}).item();
    min_v = std::min(min_v, v);
    ref_err = std::max(ref_err, std::abs(v - smc::testing::kl_reference(values(t), values(s), 3)));
  }
  o.require(min_v > 0.0, "1000 random pairs min " + fmt("%.3e", min_v) + " > 0");
  o.require(ref_err < 1e-12, "reference err " + fmt("%.1e", ref_err));
  const Tensor p = smc::testing::random_probs(9, 2, rng);
  o.require(distill_loss({p, p}, {p, p}).item() == 0.0, "equal pairs give exactly 0");

  Tensor tl = smc::testing::random_param({6, 2}, rng), sl = smc::testing::random_param({6, 2}, rng);
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(distill_loss({softmax_rows(tl)}, {softmax_rows(sl)}));
  double teacher = 0.0, student = 0.0;
  if (tl.has_grad())
    for (double g : tl.grad()) teacher = std::max(teacher, std::abs(g));
  if (sl.has_grad())
    for (double g : sl.grad()) student = std::max(student, std::abs(g));
  o.require(teacher == 0.0 && student > 0.0, "teacher grad exactly 0, student grad " + fmt("%.2e", student));
  return o;
}

Outcome edge_fidelity() {
  Outcome o;
  EdgeMap maps[2];
  int i = 0;
  for (auto style : {PhantomStyle::ct_like, PhantomStyle::mri_like}) {
    const PhantomCase ball = make_ball_phantom({64, 64, 64}, 20.0, style, 5);
    maps[i] = detect_edges(ball.volume);
    const double f = smc::testing::sphere_fidelity(maps[i], {31.5, 31.5, 31.5}, 20.0, 1.5);
    o.require(f >= 0.90, to_string(style) + " within 1.5 vox " + fmt("%.3f", f) + " >= 0.90");
    ++i;
  }
  const double ab = smc::testing::dilated_overlap(maps[0], maps[1]);
  const double ba = smc::testing::dilated_overlap(maps[1], maps[0]);
  o.require(std::min(ab, ba) >= 0.70, "cross-style overlap " + fmt("%.3f", ab) + "/" + fmt("%.3f", ba) + " >= 0.70");
  return o;
}

Outcome round_trip() {
  Outcome o;
  Rng rng(13);
  const Dims d{64, 64, 64};
  const Vec3 c{31.5, 31.5, 31.5};
  const auto p = smc::testing::sphere_points(20000, c, 20.0, rng);
  const Reconstruction rec = reconstruct_points(p, d);
  const double dc = dice(rec.mask, smc::testing::ball_mask(d, c, 20.0));
  o.require(dc >= 0.95, "Dice " + fmt("%.4f", dc) + " >= 0.95");
  const int chi = rec.mesh.empty() ? -1 : euler_characteristic(rec.mesh);
  o.require(chi == 2, "Euler characteristic " + std::to_string(chi) + " (alpha " + fmt("%.3f", rec.alpha) + ")");
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  Rng rng(14);
  std::uniform_int_distribution<int> side(3, 16);
  std::uniform_real_distribution<double> sp(0.5, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    SegMask a{Grid<std::uint8_t>(d, 0), 2, {}}, b = a;
    std::bernoulli_distribution pa(0.2), pb(0.3);
    for (auto& v : a.labels.values()) v = pa(rng);
    for (auto& v : b.labels.values()) v = pb(rng);
    a.labels(0, 0, 0) = b.labels(d.h - 1, d.w - 1, d.d - 1) = 1;
    const Spacing s{sp(rng), sp(rng), sp(rng)};
    worst = std::max(worst, std::abs(assd(a, b, s) - smc::testing::assd_bruteforce(a.labels, b.labels, s)));
  }
  o.require(worst < 1e-9, "ASSD vs brute force max err " + fmt("%.1e", worst));

  const Dims d{12, 12, 12};
  const SegMask cube = box_mask(d, {1, 1, 1}, {2, 2, 2});
  const SegMask empty{Grid<std::uint8_t>(d, 0), 2, {}};
  bool hand = dice(cube, cube) == 1.0 && dice(cube, box_mask(d, {6, 6, 6}, {7, 7, 7})) == 0.0 &&
              dice(cube, box_mask(d, {2, 1, 1}, {3, 2, 2})) == 0.5 && dice(empty, empty) == 1.0;
  SegMask v1 = empty, v2 = empty;
  v1.labels(2, 5, 5) = 1;
  v2.labels(5, 5, 5) = 1;
  hand = hand && assd(cube, cube) == 0.0 && assd(v1, v2, {1, 1, 1}) == 3.0;
  const SegMask big = box_mask(d, {0, 0, 0}, {7, 7, 7});
  hand = hand && bbox_iou(big, big) == 1.0 && bbox_iou(big, box_mask(d, {0, 0, 0}, {3, 3, 3})) == 0.125 &&
         bbox_iou(cube, box_mask(d, {8, 8, 8}, {9, 9, 9})) == 0.0;
  o.require(hand, "Dice/ASSD/Bbox-IoU hand cases exact");
  return o;
}

Outcome structural_constraint() {
  Outcome o;
  BackboneConfig cfg;
  cfg.scales = 3;
  cfg.image_channels = {4, 8, 8};
  cfg.point_channels = {4, 8, 8};
  cfg.decoder_dim = 8;
  const SmcNet net(cfg, 21);
  const PhantomCase ph = make_ball_phantom({32, 32, 32}, 10.0, PhantomStyle::ct_like, 3);
  const EdgeMap e = detect_edges(ph.volume);
  PointCloud pc = edge_voxels(e, Roi::full(ph.volume.dims()));
  Volume noise = ph.volume;
  Rng rng(22);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : noise.voxels.values()) v = n(rng);
  const NetOutput a = net.forward(ph.volume, pc), b = net.forward(noise, pc);
  o.require(values(a.p_pt) == values(b.p_pt), "P^pt bit-identical under a noise volume (" +
                                                  std::to_string(pc.size()) + " points)");
  o.require(values(a.p_img) != values(b.p_img), "P^img does change");
  return o;
}

// ---------------------------------------------------------------- 8 .. 11

struct TrainedRun {
  fs::path dir;
  EvalRun target;        // P^pt readout
  EvalRun target_image;  // P^img readout
  EvalRun holdout, holdout_image;
  std::map<std::string, RoiTrack> rois;
  double train_cpu = 0.0, eval_cpu = 0.0;
};

struct Setup {
  nlohmann::json cfg;
  fs::path work;
  std::vector<SideItem> source, target_train, target_eval, holdout;
  TrainConfig source_only, uda;
};

// A section is an inline object or a config file path relative to the bundle.
TrainConfig config_section(const nlohmann::json& j, const fs::path& bundle) {
  nlohmann::json body = j;
  if (j.is_string()) {
    std::ifstream in(bundle.parent_path() / j.get<std::string>());
    if (!in) throw std::runtime_error("cannot read " + j.get<std::string>());
    in >> body;
  }
  const std::string base = body.value("profile", "desk");
  body.erase("profile");
  TrainConfig c = config_from_json(body, profile(base));
  c.validate();
  return c;
}

void load_data(Setup& s) {
  SplitOptions opt;
  const auto& split = s.cfg.at("split");
  opt.n_source = split.value("source", 8);
  opt.n_target = split.value("target", 4);
  opt.n_holdout = split.value("holdout", 4);
  opt.seed = split.value("seed", 7);
  const auto manifest = read_manifest(generate_split(s.work / "data", opt));
  s.source = load_side_items(manifest, "source", s.uda.edges, true);
  s.target_train = load_side_items(manifest, "target", s.uda.edges, false);
  s.target_eval = load_side_items(manifest, "target", s.uda.edges, true);
  s.holdout = load_side_items(manifest, "holdout", s.uda.edges, true);
}

TrainedRun train_and_eval(const Setup& s, const TrainConfig& cfg, const std::string& name, bool holdout) {
  TrainedRun r;
  r.dir = s.work / name;
  fs::remove_all(r.dir);
  const bool uda = cfg.mode == TrainMode::uda;
  Trainer tr(cfg, s.source, uda ? s.target_train : std::vector<SideItem>{});
  const double t0 = cpu_seconds();
  tr.run(r.dir);
  r.train_cpu = cpu_seconds() - t0;
  r.rois = tr.rois();

  InferenceOptions io;
  io.chunk = static_cast<std::size_t>(cfg.points);
  // Source-only never sees the target, so it samples full sides there.
  const auto rois = uda ? tr.current_rois("target") : std::map<std::string, Roi>{};
  const double t1 = cpu_seconds();
  io.readout = Readout::point;
  r.target = evaluate_items(tr.net(), s.target_eval, io, rois);
  if (holdout) r.holdout = evaluate_items(tr.net(), s.holdout, io);
  io.readout = Readout::image;
  r.target_image = evaluate_items(tr.net(), s.target_eval, io);
  if (holdout) r.holdout_image = evaluate_items(tr.net(), s.holdout, io);
  r.eval_cpu = cpu_seconds() - t1;
  write_report_json(r.dir / "target_report.json", r.target.report);
  return r;
}

std::vector<std::vector<double>> read_losses(const fs::path& csv, std::vector<std::string>& header) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  header.clear();
  for (std::stringstream ss(line); std::getline(ss, line, ',');) header.push_back(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

Outcome uda_trend(const TrainedRun& so, const TrainedRun& uda) {
  Outcome o;
  const double hold = so.holdout.report.mean_dice();
  o.require(hold >= 0.85 && so.train_cpu <= 15 * 60.0, "(a) source-only holdout Dice " + fmt("%.4f", hold) +
                                                          " >= 0.85 in " + fmt("%.1f", so.train_cpu / 60) +
                                                          " CPU-min <= 15");
  const double so_t = so.target.report.mean_dice(), uda_t = uda.target.report.mean_dice();
  o.require(uda_t >= so_t + 0.05, "(b) target Dice UDA " + fmt("%.4f", uda_t) + " >= source-only " +
                                      fmt("%.4f", so_t) + " + 0.05");
  const double drop_pt = hold - so_t;
  const double drop_img = so.holdout_image.report.mean_dice() - so.target_image.report.mean_dice();
  o.require(drop_img > drop_pt, "(c) source-only holdout->target drop: image " + fmt("%.4f", drop_img) +
                                    " > point " + fmt("%.4f", drop_pt));
  const double total = so.train_cpu + so.eval_cpu + uda.train_cpu + uda.eval_cpu;
  o.require(total <= 45 * 60.0, "full run " + fmt("%.1f", total / 60) + " CPU-min <= 45");
  return o;
}

Outcome progressive_roi(const TrainedRun& uda) {
  Outcome o;
  PointCloud pc;
  pc.source_dims = {200, 200, 200};
  pc.coords = {{100, 100, 100}, {150, 150, 150}};
  const Roi prev{{0, 0, 0}, {199, 199, 199}};
  const RoiUpdate u = update_progressive_roi(pc, {1, 1}, prev, RoiRule::gradual, 10);
  o.require(u.roi.lo[0] == 10, "gap 100 -> face at " + std::to_string(u.roi.lo[0]));

  int events = 0;
  bool monotone = true, contains = true;
  for (const auto& [key, track] : uda.rois) {
    if (track.domain != "target") continue;
    double prev_volume = 1e300;
    Roi last{{0, 0, 0}, {1 << 20, 1 << 20, 1 << 20}};
    for (const auto& e : track.history) {
      ++events;
      const double v = static_cast<double>(e.roi.volume());
      monotone = monotone && v <= prev_volume && last.contains(e.roi);
      if (e.bbox) contains = contains && e.roi.contains(*e.bbox);
      prev_volume = v;
      last = e.roi;
    }
  }
  o.require(events > 0, std::to_string(events) + " target ROI events");
  o.require(monotone, "ROI volume non-increasing");
  o.require(contains, "ROI contains predicted foreground bbox");
  return o;
}

Outcome composition(const TrainedRun& uda) {
  Outcome o;
  // Direct: random inputs through source_loss / target_loss.
  Rng rng(15);
  double worst = 0.0;
  const LossWeights w;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 8 + trial;
    LossInputs in;
    in.p_pt = smc::testing::random_probs(n, 2, rng);
    in.p_img = smc::testing::random_probs(n, 2, rng);
    for (int l = 0; l < 4; ++l) {
      in.s_fuse.push_back(smc::testing::random_probs(n, 2, rng));
      in.s_pt.push_back(smc::testing::random_probs(n, 2, rng));
    }
    in.l_xm = distill_loss(in.s_fuse, in.s_pt);
    PointLabels y(n);
    std::bernoulli_distribution b(0.4);
    for (auto& v : y) v = b(rng);
    y[0] = 0;
    y[1] = 1;
    const SourceLoss s = source_loss(in, y, class_frequencies(y, 2), w);
    worst = std::max(worst, rel_err(s.value, s.seg + w.distill_ratio * s.xm));
    worst = std::max(worst, rel_err(s.seg, s.seg_pt + s.seg_img + w.lambda_s1 * s.seg_fuse + w.lambda_s2 * s.seg_spt));
    const TargetLoss t = target_loss(in, w);
    worst = std::max(worst, rel_err(t.value, w.lambda_t * (t.seg + w.distill_ratio * t.xm)));
    worst = std::max(worst, rel_err(t.seg, t.seg_img + w.lambda_1 * t.seg_fuse + w.lambda_2 * t.seg_spt));
  }
  o.require(worst < 1e-12, "direct recomposition rel err " + fmt("%.1e", worst));

  // From the training log.
  std::vector<std::string> header;
  const auto rows = read_losses(uda.dir / "losses.csv", header);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  double log_worst = 0.0;
  bool weights = !rows.empty();
  int targets = 0;
  for (const auto& r : rows) {
    auto v = [&](const char* k) { return r.at(col.at(k)); };
    weights = weights && v("distill_ratio") == 0.05 && v("lambda_t") == 0.01;
    targets += v("t_kept") > 0;
    const double seg_s = v("s_seg_pt") + v("s_seg_img") + v("lambda_s1") * v("s_seg_fuse") + v("lambda_s2") * v("s_seg_spt");
    const double seg_t = v("t_seg_img") + v("lambda_1") * v("t_seg_fuse") + v("lambda_2") * v("t_seg_spt");
    log_worst = std::max(log_worst, rel_err(v("s_seg"), seg_s));
    log_worst = std::max(log_worst, rel_err(v("loss_s"), v("s_seg") + v("distill_ratio") * v("s_xm")));
    if (v("t_kept") > 0) {
      log_worst = std::max(log_worst, rel_err(v("t_seg"), seg_t));
      log_worst = std::max(log_worst, rel_err(v("loss_t"), v("lambda_t") * (v("t_seg") + v("distill_ratio") * v("t_xm"))));
    }
    log_worst = std::max(log_worst, rel_err(v("loss"), v("loss_s") + v("loss_t")));
  }
  o.require(log_worst < 1e-12, std::to_string(rows.size()) + " logged rows (" + std::to_string(targets) +
                                   " with target terms) rel err " + fmt("%.1e", log_worst));
  o.require(weights && targets > 0, "log records distill_ratio 0.05 and lambda_t 0.01");
  return o;
}

Outcome determinism(const TrainedRun& a, const TrainedRun& b) {
  Outcome o;
  const std::string la = slurp(a.dir / "losses.csv"), lb = slurp(b.dir / "losses.csv");
  o.require(!la.empty() && la == lb, "losses.csv identical (" + std::to_string(la.size()) + " bytes)");
  const std::string ra = slurp(a.dir / "target_report.json"), rb = slurp(b.dir / "target_report.json");
  o.require(!ra.empty() && ra == rb, "final report identical (mean Dice " + fmt("%.4f", a.target.report.mean_dice()) +
                                         ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path work = "acceptance_work", config;
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--config", config, "training configs for criteria 8-11")->required()->check(CLI::ExistingFile);
  app.add_option("--only", only, "criteria to run (default all)");
  CLI11_PARSE(app, argc, argv);

  auto selected = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  int failed = 0;
  auto report = [&](int n, const std::string& title, const std::function<Outcome()>& fn) {
    if (!selected(n)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", n, title.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
    failed += !o.pass;
  };
  auto timed = [](double limit, std::function<Outcome()> fn) {
    return [limit, fn] {
      const auto t0 = std::chrono::steady_clock::now();
      Outcome o = fn();
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      o.require(s < limit, "time " + fmt("%.1f", s) + "s < " + fmt("%.0f", limit) + "s");
      return o;
    };
  };

  report(1, "autodiff", timed(120, autodiff));
  report(2, "lovasz oracle", timed(10, lovasz));
  report(3, "distillation", timed(10, distillation));
  report(4, "edge fidelity", timed(30, edge_fidelity));
  report(5, "reconstruction round trip", timed(60, round_trip));
  report(6, "metric oracles", timed(30, metric_oracles));
  report(7, "structural constraint", timed(10, structural_constraint));

  if (selected(8) || selected(9) || selected(10) || selected(11)) {
    Setup s;
    s.work = work;
    fs::create_directories(work);
    std::ifstream(config) >> s.cfg;
    std::optional<TrainedRun> so, uda, uda2;
    try {
      s.source_only = config_section(s.cfg.at("source_only"), config);
      s.uda = config_section(s.cfg.at("uda"), config);
      load_data(s);
      if (selected(8)) so = train_and_eval(s, s.source_only, "source_only", true);
      uda = train_and_eval(s, s.uda, "uda", false);
      if (selected(11)) uda2 = train_and_eval(s, s.uda, "uda_repeat", false);
    } catch (const std::exception& e) {
      std::printf("training failed: %s\n", e.what());
    }
    auto need = [](const std::optional<TrainedRun>& r) -> const TrainedRun& {
      if (!r) throw std::runtime_error("training run unavailable");
      return *r;
    };
    report(8, "UDA trend", [&] { return uda_trend(need(so), need(uda)); });
    report(9, "progressive ROI", [&] { return progressive_roi(need(uda)); });
    report(10, "composition audit", [&] { return composition(need(uda)); });
    report(11, "determinism", [&] { return determinism(need(uda), need(uda2)); });
  }
  std::printf("%s: %d criterion failures\n", failed ? "FAILED" : "PASSED", failed);
  return failed ? 1 : 0;
}
