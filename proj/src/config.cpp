// SPDX-License-Identifier: Apache-2.0
#include "smc/config.hpp"

#include <fstream>
#include <set>

namespace smc {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ParameterError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ParameterError("config: unknown key '" + where + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(std::string("config: wrong type for '") + key + "'");
  }
}

}  // namespace

json to_json(const TrainConfig& c) {
  const auto& b = c.backbone;
  const auto& l = c.loss;
  return {
      {"mode", to_string(c.mode)},
      {"max_iters", c.max_iters},
      {"val_interval", c.val_interval},
      {"batch_source", c.batch_source},
      {"batch_target", c.batch_target},
      {"base_lr", c.base_lr},
      {"milestones", c.milestones},
      {"decay", c.decay},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"seed", c.seed},
      {"init_seed", c.init_seed},
      {"points", c.points},
      {"loss",
       {{"lambda_s1", l.lambda_s1},
        {"lambda_s2", l.lambda_s2},
        {"lambda_1", l.lambda_1},
        {"lambda_2", l.lambda_2},
        {"lambda_t", l.lambda_t},
        {"distill_ratio", l.distill_ratio}}},
      {"tau", c.tau},
      {"label_dilate", c.label_dilate},
      {"roi_rule", to_string(c.roi_rule)},
      {"roi_divisor", c.roi_divisor},
      {"source_roi", c.source_roi},
      {"snapshots", c.snapshots},
      {"backbone",
       {{"scales", b.scales},
        {"image_channels", b.image_channels},
        {"point_channels", b.point_channels},
        {"decoder_dim", b.decoder_dim},
        {"classes", b.classes},
        {"image_blocks", b.image_blocks},
        {"image_input_stride", b.image_input_stride}}},
      {"edges",
       {{"sigma", c.edges.sigma},
        {"k", c.edges.k},
        {"floor_fraction", c.edges.floor_fraction},
        {"noise_factor", c.edges.noise_factor}}},
  };
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  check_keys(j,
             {"profile", "mode", "max_iters", "val_interval", "batch_source", "batch_target", "base_lr", "milestones",
              "decay", "adam", "seed", "init_seed", "points", "loss", "tau", "label_dilate", "roi_rule",
              "roi_divisor", "source_roi", "snapshots", "backbone", "edges"},
             "");
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("roi_rule")) c.roi_rule = parse_roi_rule(j.at("roi_rule").get<std::string>());
  read(j, "max_iters", c.max_iters);
  read(j, "val_interval", c.val_interval);
  read(j, "batch_source", c.batch_source);
  read(j, "batch_target", c.batch_target);
  read(j, "base_lr", c.base_lr);
  read(j, "milestones", c.milestones);
  read(j, "decay", c.decay);
  read(j, "seed", c.seed);
  read(j, "init_seed", c.init_seed);
  read(j, "points", c.points);
  read(j, "tau", c.tau);
  read(j, "label_dilate", c.label_dilate);
  read(j, "roi_divisor", c.roi_divisor);
  read(j, "source_roi", c.source_roi);
  read(j, "snapshots", c.snapshots);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    check_keys(a, {"beta1", "beta2", "eps"}, "adam.");
    read(a, "beta1", c.adam.beta1);
    read(a, "beta2", c.adam.beta2);
    read(a, "eps", c.adam.eps);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, {"lambda_s1", "lambda_s2", "lambda_1", "lambda_2", "lambda_t", "distill_ratio"}, "loss.");
    read(l, "lambda_s1", c.loss.lambda_s1);
    read(l, "lambda_s2", c.loss.lambda_s2);
    read(l, "lambda_1", c.loss.lambda_1);
    read(l, "lambda_2", c.loss.lambda_2);
    read(l, "lambda_t", c.loss.lambda_t);
    read(l, "distill_ratio", c.loss.distill_ratio);
  }
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    check_keys(b,
               {"scales", "image_channels", "point_channels", "decoder_dim", "classes", "image_blocks",
                "image_input_stride"},
               "backbone.");
    read(b, "scales", c.backbone.scales);
    read(b, "image_channels", c.backbone.image_channels);
    read(b, "point_channels", c.backbone.point_channels);
    read(b, "decoder_dim", c.backbone.decoder_dim);
    read(b, "classes", c.backbone.classes);
    read(b, "image_blocks", c.backbone.image_blocks);
    read(b, "image_input_stride", c.backbone.image_input_stride);
  }
  if (j.contains("edges")) {
    const json& e = j.at("edges");
    check_keys(e, {"sigma", "k", "floor_fraction", "noise_factor"}, "edges.");
    read(e, "sigma", c.edges.sigma);
    read(e, "k", c.edges.k);
    read(e, "floor_fraction", c.edges.floor_fraction);
    read(e, "noise_factor", c.edges.noise_factor);
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParameterError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  const std::string base = j.is_object() && j.contains("profile") ? j.at("profile").get<std::string>() : "desk";
  return config_from_json(j, profile(base));
}

}  // namespace smc
