// SPDX-License-Identifier: Apache-2.0
#include "smc/optim.hpp"

#include <cmath>

#include "smc/error.hpp"

namespace smc {

void Adam::step(ParamSet& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto x = p.mutable_data();
    Moments& s = state_[name];
    if (s.m.empty()) {
      s.m.assign(x.size(), 0.0);
      s.v.assign(x.size(), 0.0);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      s.m[i] = opt_.beta1 * s.m[i] + (1.0 - opt_.beta1) * g[i];
      s.v[i] = opt_.beta2 * s.v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      x[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + opt_.eps);
    }
  }
}

void Adam::save(Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& [name, s] : state_) {
    const Shape shape{s.m.size()};
    ckpt.tensors[prefix + "m." + name] = {shape, s.m};
    ckpt.tensors[prefix + "v." + name] = {shape, s.v};
  }
  ckpt.meta["adam"] = {{"t", t_}, {"beta1", opt_.beta1}, {"beta2", opt_.beta2}, {"eps", opt_.eps}};
}

void Adam::load(const Checkpoint& ckpt, const ParamSet& params, const std::string& prefix) {
  state_.clear();
  t_ = ckpt.meta.contains("adam") ? ckpt.meta["adam"].value("t", 0L) : 0L;
  for (const auto& [name, p] : params) {
    const auto m = ckpt.tensors.find(prefix + "m." + name);
    const auto v = ckpt.tensors.find(prefix + "v." + name);
    if (m == ckpt.tensors.end() && v == ckpt.tensors.end()) continue;
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end() || m->second.values.size() != p.numel() ||
        v->second.values.size() != p.numel()) {
      throw FormatError("checkpoint: inconsistent Adam moments for " + name);
    }
    state_[name] = {m->second.values, v->second.values};
  }
}

}  // namespace smc
