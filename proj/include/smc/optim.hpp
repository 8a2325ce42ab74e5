// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "smc/checkpoint.hpp"

namespace smc {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a ParamSet, applied in parameter-name order.
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  /// One update with the gradients currently stored on the parameters.
  /// Parameters that never received a gradient are left untouched.
  void step(ParamSet& params, double lr);

  long steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

  /// Moments are stored as "<prefix>m.<name>" / "<prefix>v.<name>".
  void save(Checkpoint& ckpt, const std::string& prefix = "adam.") const;
  void load(const Checkpoint& ckpt, const ParamSet& params, const std::string& prefix = "adam.");

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamOptions opt_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace smc
