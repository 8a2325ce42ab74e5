// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "smc/tensor.hpp"

namespace smc {

/// Ordered name -> parameter registry. Iteration order is name order, which
/// fixes the layout of checkpoints and the optimizer's update order.
class ParamSet {
 public:
  /// Registers a new parameter leaf; names must be unique.
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

struct CheckpointEntry {
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::map<std::string, CheckpointEntry> tensors;
  nlohmann::json meta = nlohmann::json::object();
};

/// Layout: u64 little-endian manifest byte length, the JSON manifest
/// {"format":"smc-ckpt","version":1,"tensors":[{"name","shape","offset"}],"meta":{}},
/// then the payload of little-endian float64 values. Offsets are byte offsets
/// into the payload.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot_params(const ParamSet& params);
/// Copies values into existing parameters; every parameter must be present
/// with a matching shape.
void restore_params(ParamSet& params, const Checkpoint& ckpt, const std::string& prefix = "");

}  // namespace smc
