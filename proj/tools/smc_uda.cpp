// SPDX-License-Identifier: Apache-2.0
// smc-uda: phantom generation, edge extraction, sampling, training,
// evaluation, reconstruction and report tables. See docs/cli.md.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smc/config.hpp"
#include "smc/dataset.hpp"
#include "smc/inference.hpp"
#include "smc/phantom.hpp"
#include "smc/points.hpp"
#include "smc/reconstruct.hpp"
#include "smc/trainer.hpp"

#ifndef SMC_VERSION
#define SMC_VERSION "0.0.0-unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smc;

namespace {

struct Context {
  std::vector<std::string> argv;
  std::string command;
  fs::path out;
  std::string config_path;
  std::uint64_t seed = 0;
};

/// Written before any other output of a subcommand.
void write_manifest(const Context& ctx, const json& effective) {
  fs::create_directories(ctx.out);
  const json m = {{"format", "smc-run"},
                  {"command", ctx.command},
                  {"argv", ctx.argv},
                  {"config", ctx.config_path},
                  {"seed", ctx.seed},
                  {"out", ctx.out.string()},
                  {"version", SMC_VERSION},
                  {"effective", effective}};
  std::ofstream f(ctx.out / "run_manifest.json");
  if (!f) throw Error("cannot write " + (ctx.out / "run_manifest.json").string());
  f << m.dump(2) << '\n';
}

Roi parse_roi(const std::string& s, const Dims& dims) {
  if (s.empty() || s == "full") return Roi::full(dims);
  Roi r;
  int v[6];
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d,%d,%d,%d,%d,%d%c", &v[0], &v[1], &v[2], &v[3], &v[4], &v[5], &tail) != 6) {
    throw ParameterError("--roi expects lo_h,lo_w,lo_d,hi_h,hi_w,hi_d or 'full'");
  }
  r.lo = {v[0], v[1], v[2]};
  r.hi = {v[3], v[4], v[5]};
  if (!r.valid_in(dims)) throw ParameterError("--roi lies outside the volume");
  return r;
}

EdgeParams edge_params(double sigma, double k, double fraction, double noise) {
  EdgeParams p;
  p.sigma = sigma;
  p.k = k;
  p.floor_fraction = fraction;
  p.noise_factor = noise;
  if (!(p.sigma > 0.0) || !(p.k > 1.0) || p.floor_fraction < 0.0 || p.noise_factor < 0.0) {
    throw ParameterError("edge parameters need sigma > 0, k > 1 and non-negative floors");
  }
  return p;
}

struct LoadedModel {
  TrainConfig cfg;
  SmcNet net;
  json rois;
};

LoadedModel load_model(const fs::path& ckpt_path) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  if (!ck.meta.contains("config")) throw FormatError(ckpt_path.string() + " carries no training config");
  TrainConfig cfg = config_from_json(ck.meta["config"], TrainConfig{});
  LoadedModel m{cfg, SmcNet(cfg.backbone, cfg.init_seed), ck.meta.value("rois", json::object())};
  restore_params(m.net.params(), ck);
  return m;
}

void write_eval_outputs(const fs::path& out, const std::vector<SideItem>& items, const EvalRun& run) {
  write_report_csv(out / "report.csv", run.report);
  write_report_json(out / "report.json", run.report);
  json sides = json::object();
  for (std::size_t i = 0; i < items.size(); i += 2) {
    SidePair<SegMask> pair;
    for (int s = 0; s < 2; ++s) {
      const SidePrediction& p = run.sides.at(items[i + s].key());
      (s == 0 ? pair.left : pair.right) = p.mask;
      sides[items[i + s].key()] = {{"foreground_points", static_cast<std::int64_t>(std::count_if(
                                                              p.cloud.labels.begin(), p.cloud.labels.end(),
                                                              [](int l) { return l != 0; }))},
                                   {"alpha", p.recon ? json(p.recon->alpha) : json(nullptr)},
                                   {"failure", p.failure}};
    }
    pair.right_offset = pair.left.dims().w;
    write_mask(join_sides(pair), out / "pred" / (items[i].case_id + ".smask"));
  }
  std::ofstream(out / "sides.json") << sides.dump(2) << '\n';
}

int run_phantom(const Context& ctx, SplitOptions opt) {
  write_manifest(ctx, {{"n_source", opt.n_source},
                       {"n_target", opt.n_target},
                       {"n_holdout", opt.n_holdout},
                       {"seed", opt.seed},
                       {"side", {opt.side.h, opt.side.w, opt.side.d}}});
  const fs::path manifest = generate_split(ctx.out, opt);
  std::cout << "wrote " << manifest.string() << '\n';
  return 0;
}

int run_edge(const Context& ctx, const fs::path& input, const EdgeParams& p, bool normalize) {
  write_manifest(ctx, {{"input", input.string()},
                       {"sigma", p.sigma},
                       {"k", p.k},
                       {"floor_fraction", p.floor_fraction},
                       {"noise_factor", p.noise_factor},
                       {"normalize", normalize}});
  Volume v = read_volume(input);
  if (normalize) v = normalize_intensity(v);
  const Field r = dog_response(v, p.sigma, p.k);
  const double floor = edge_floor(v, r, p);
  const EdgeMap e = extract_edges(r, floor);
  write_mask(e.as_mask(v.spacing), ctx.out / "edges.smask");
  const json stats = {{"edge_voxels", e.count()}, {"floor", floor}, {"voxels", v.dims().count()}};
  std::ofstream(ctx.out / "edges.json") << stats.dump(2) << '\n';
  std::cout << e.count() << " edge voxels (floor " << floor << ")\n";
  return 0;
}

int run_sample(const Context& ctx, const fs::path& edges_path, const std::string& mask_path, std::size_t n,
               const std::string& roi_text, int dilate) {
  write_manifest(ctx, {{"edges", edges_path.string()},
                       {"mask", mask_path},
                       {"n", n},
                       {"seed", ctx.seed},
                       {"roi", roi_text},
                       {"dilate", dilate}});
  const EdgeMap e = EdgeMap::from_mask(read_mask(edges_path));
  const Roi roi = parse_roi(roi_text, e.dims());
  Rng rng(ctx.seed);
  const PointCloud pc = sample_edge_points(e, roi, n, rng);
  PointLabels labels(pc.size(), 0);
  if (!mask_path.empty()) labels = label_points(pc, read_mask(mask_path), dilate);
  write_ply(ctx.out / "points.ply", pc, labels);
  std::cout << pc.size() << " points" << (pc.with_replacement ? " (with replacement)" : "") << '\n';
  return 0;
}

int run_train(const Context& ctx, TrainConfig cfg, const fs::path& data, const std::string& resume) {
  write_manifest(ctx, {{"data", data.string()}, {"resume", resume}, {"config", to_json(cfg)}});
  const DatasetManifest m = read_manifest(data);
  auto source = load_side_items(m, "source", cfg.edges, true);
  auto target = cfg.mode == TrainMode::uda ? load_side_items(m, "target", cfg.edges, false) : std::vector<SideItem>{};
  Trainer trainer(cfg, std::move(source), std::move(target));
  if (!resume.empty()) trainer.resume(resume);
  const int snaps = trainer.run(ctx.out);
  std::cout << "trained to iteration " << trainer.iteration() << ", " << snaps << " validation snapshots\n";
  return 0;
}

int run_eval(const Context& ctx, const fs::path& ckpt, const fs::path& data, const std::string& domain,
             const std::string& readout, bool full_roi) {
  LoadedModel model = load_model(ckpt);
  write_manifest(ctx, {{"checkpoint", ckpt.string()},
                       {"data", data.string()},
                       {"domain", domain},
                       {"readout", readout},
                       {"full_roi", full_roi},
                       {"config", to_json(model.cfg)}});
  InferenceOptions opt;
  opt.chunk = static_cast<std::size_t>(model.cfg.points);
  opt.readout = parse_readout(readout);
  opt.seed = stream_seed(model.cfg.seed, 0, 99);
  const DatasetManifest m = read_manifest(data);
  const auto items = load_side_items(m, domain, model.cfg.edges, true);
  if (items.empty()) throw ParameterError("no cases in domain '" + domain + "'");
  std::map<std::string, Roi> rois;
  if (!full_roi && model.rois.contains("tracks")) {
    for (const auto& [key, t] : rois_from_json(model.rois)) {
      if (t.domain == "target" && domain == "target") rois[key] = t.roi;
    }
  }
  const EvalRun run = evaluate_items(model.net, items, opt, rois);
  write_eval_outputs(ctx.out, items, run);
  std::printf("mean Dice %.4f  Bbox-IoU %.4f\n", run.report.mean_dice(), run.report.mean_bbox_iou());
  return 0;
}

int run_reconstruct(const Context& ctx, const fs::path& snapshot, const std::string& alpha_text, int retries) {
  ReconstructOptions opt;
  if (alpha_text != "auto") {
    try {
      opt.alpha = std::stod(alpha_text);
    } catch (const std::exception&) {
      throw ParameterError("--alpha expects a positive number or 'auto'");
    }
    if (!(opt.alpha > 0.0)) throw ParameterError("--alpha expects a positive number or 'auto'");
  }
  opt.retries = retries;
  write_manifest(ctx, {{"snapshot", snapshot.string()}, {"alpha", alpha_text}, {"retries", retries}});
  const LabeledCloud lc = read_ply(snapshot);
  const auto fg = foreground_points(lc.cloud, lc.labels);
  const Reconstruction r = reconstruct_points(fg, lc.cloud.source_dims, opt);
  const std::string stem = snapshot.stem().string();
  write_obj(ctx.out / (stem + ".obj"), r.mesh);
  write_mask(r.mask, ctx.out / (stem + ".smask"));
  const json info = {{"alpha", r.alpha},
                     {"attempts", r.attempts},
                     {"faces", r.mesh.faces.size()},
                     {"euler_characteristic", euler_characteristic(r.mesh)},
                     {"foreground_points", fg.size()},
                     {"solid_voxels", r.mask.foreground_count()}};
  std::ofstream(ctx.out / (stem + ".json")) << info.dump(2) << '\n';
  std::cout << "alpha " << r.alpha << ", " << r.mesh.faces.size() << " faces, " << r.mask.foreground_count()
            << " voxels\n";
  return 0;
}

std::optional<double> maybe(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

int run_report(const Context& ctx, const std::vector<std::string>& inputs, const std::vector<std::string>& names) {
  write_manifest(ctx, {{"inputs", inputs}, {"names", names}});
  if (!names.empty() && names.size() != inputs.size()) throw ParameterError("--name must be given once per --input");
  std::ofstream csv(ctx.out / "summary.csv");
  std::ofstream md(ctx.out / "summary.md");
  csv << "run,cases,dice_mean,assd_mean,bbox_iou_mean\n";
  md << "| run | cases | Dice | ASSD (mm) | Bbox-IoU |\n|---|---|---|---|---|\n";
  char buf[256];
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    fs::path p = inputs[i];
    if (fs::is_directory(p)) p /= "report.json";
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError("malformed report " + p.string() + ": " + e.what());
    }
    const json& mean = j.at("mean");
    const std::string name = names.empty() ? p.parent_path().filename().string() : names[i];
    const auto assd = maybe(mean, "assd");
    const std::string assd_s = assd ? std::to_string(*assd) : "undefined";
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%s,%.6f\n", name.c_str(), j.at("cases").size(),
                  mean.at("dice").get<double>(), assd_s.c_str(), mean.at("bbox_iou").get<double>());
    csv << buf;
    std::snprintf(buf, sizeof buf, "| %s | %zu | %.2f%% | %s | %.2f%% |\n", name.c_str(), j.at("cases").size(),
                  100.0 * mean.at("dice").get<double>(), assd ? (std::to_string(*assd).substr(0, 5)).c_str() : "-",
                  100.0 * mean.at("bbox_iou").get<double>());
    md << buf;
  }
  std::cout << "wrote " << (ctx.out / "summary.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-constrained domain adaptation for volumetric kidney segmentation"};
  app.set_version_flag("--version", std::string(SMC_VERSION));
  app.require_subcommand(1);

  Context ctx;
  for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
  std::string out;

  // phantom gen
  auto* phantom = app.add_subcommand("phantom", "Synthetic dual-domain phantoms");
  phantom->require_subcommand(1);
  auto* gen = phantom->add_subcommand("gen", "Generate a source/target split with manifest.json");
  SplitOptions split;
  std::vector<int> side_dims{64, 64, 64};
  gen->add_option("--source", split.n_source, "ct_like cases with masks")->check(CLI::PositiveNumber);
  gen->add_option("--target", split.n_target, "mri_like cases, masks for evaluation only")->check(CLI::PositiveNumber);
  gen->add_option("--holdout", split.n_holdout, "extra ct_like evaluation cases")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", split.seed, "split seed");
  gen->add_option("--side", side_dims, "H W D of one side (case width is 2 W)")->expected(3);
  gen->add_option("--out", out, "output directory")->required();

  // edge
  auto* edge = app.add_subcommand("edge", "DoG zero-crossing edge map of a volume");
  std::string edge_input;
  double sigma = 1.5, kratio = 1.6, fraction = 0.05, noise = 3.0;
  bool normalize = true;
  edge->add_option("--input", edge_input, "volume stem (.svol)")->required();
  edge->add_option("--sigma", sigma, "inner Gaussian sigma");
  edge->add_option("--k", kratio, "outer / inner sigma ratio");
  edge->add_option("--floor-fraction", fraction, "floor as a fraction of p99 |DoG|");
  edge->add_option("--noise-factor", noise, "floor in noise standard deviations");
  edge->add_flag("!--no-normalize", normalize, "skip percentile intensity normalisation");
  edge->add_option("--out", out, "output directory")->required();

  // sample
  auto* sample = app.add_subcommand("sample", "Sample an edge point cloud (PLY)");
  std::string sample_edges, sample_mask, roi_text = "full";
  std::size_t n_points = 8192;
  int dilate = 1;
  std::uint64_t sample_seed = 0;
  sample->add_option("--edges", sample_edges, "edge map stem (.smask)")->required();
  sample->add_option("--mask", sample_mask, "segmentation mask stem for labels");
  sample->add_option("--n", n_points, "number of points")->check(CLI::PositiveNumber);
  sample->add_option("--roi", roi_text, "lo_h,lo_w,lo_d,hi_h,hi_w,hi_d or full");
  sample->add_option("--dilate", dilate, "label dilation radius")->check(CLI::NonNegativeNumber);
  sample->add_option("--seed", sample_seed, "sampling seed");
  sample->add_option("--out", out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train source-only or with domain adaptation");
  std::string config_path, data_path, mode, resume;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> max_iters, val_interval, points;
  train->add_option("--config", config_path, "JSON run config (see configs/)");
  train->add_option("--data", data_path, "dataset manifest.json")->required();
  train->add_option("--mode", mode, "source-only or uda")->check(CLI::IsMember({"source-only", "uda"}));
  train->add_option("--seed", train_seed, "overrides config seed");
  train->add_option("--max-iters", max_iters, "overrides config max_iters");
  train->add_option("--val-interval", val_interval, "overrides config val_interval");
  train->add_option("--points", points, "overrides config points");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--out", out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Predict, reconstruct and score a domain");
  std::string ckpt_path, eval_data, domain = "target", readout = "point";
  bool full_roi = false;
  eval->add_option("--checkpoint", ckpt_path, "model checkpoint (model.ckpt)")->required();
  eval->add_option("--data", eval_data, "dataset manifest.json")->required();
  eval->add_option("--domain", domain, "source, target or holdout")->check(CLI::IsMember({"source", "target", "holdout"}));
  eval->add_option("--readout", readout, "point (P^pt) or image (P^img)")->check(CLI::IsMember({"point", "image"}));
  eval->add_flag("--full-roi", full_roi, "ignore the target ROIs stored in the checkpoint");
  eval->add_option("--out", out, "output directory")->required();

  // reconstruct
  auto* recon = app.add_subcommand("reconstruct", "Alpha-shape mesh and filled mask from a labelled PLY");
  std::string snapshot, alpha = "auto";
  int retries = 3;
  recon->add_option("--snapshot", snapshot, "labelled point cloud (.ply)")->required();
  recon->add_option("--alpha", alpha, "alpha radius or auto");
  recon->add_option("--retries", retries, "alpha doublings on failure")->check(CLI::NonNegativeNumber);
  recon->add_option("--out", out, "output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "Summary table over eval reports");
  std::vector<std::string> inputs, names;
  report->add_option("--input", inputs, "report.json or eval directory (repeatable)")->required();
  report->add_option("--name", names, "row name per input (repeatable)");
  report->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  ctx.out = out;
  try {
    if (gen->parsed()) {
      ctx.command = "phantom gen";
      ctx.seed = split.seed;
      split.side = Dims{side_dims[0], side_dims[1], side_dims[2]};
      return run_phantom(ctx, split);
    }
    if (edge->parsed()) {
      ctx.command = "edge";
      return run_edge(ctx, edge_input, edge_params(sigma, kratio, fraction, noise), normalize);
    }
    if (sample->parsed()) {
      ctx.command = "sample";
      ctx.seed = sample_seed;
      return run_sample(ctx, sample_edges, sample_mask, n_points, roi_text, dilate);
    }
    if (train->parsed()) {
      ctx.command = "train";
      ctx.config_path = config_path;
      TrainConfig cfg = config_path.empty() ? desk_profile() : load_config(config_path);
      if (!mode.empty()) cfg.mode = parse_mode(mode);
      if (train_seed) cfg.seed = *train_seed;
      if (max_iters) cfg.max_iters = *max_iters;
      if (val_interval) cfg.val_interval = *val_interval;
      if (points) cfg.points = *points;
      if (max_iters) {
        // Milestones beyond a shortened run are dropped rather than rejected.
        std::erase_if(cfg.milestones, [&](int m) { return m >= cfg.max_iters; });
        cfg.val_interval = std::min(cfg.val_interval, cfg.max_iters);
      }
      cfg.validate();
      ctx.seed = cfg.seed;
      return run_train(ctx, cfg, data_path, resume);
    }
    if (eval->parsed()) {
      ctx.command = "eval";
      return run_eval(ctx, ckpt_path, eval_data, domain, readout, full_roi);
    }
    if (recon->parsed()) {
      ctx.command = "reconstruct";
      return run_reconstruct(ctx, snapshot, alpha, retries);
    }
    if (report->parsed()) {
      ctx.command = "report";
      return run_report(ctx, inputs, names);
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::cerr << app.help();
  return 1;
}
