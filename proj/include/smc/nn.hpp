// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>
#include <string>

#include "smc/checkpoint.hpp"
#include "smc/tensor.hpp"

namespace smc {

using Rng = std::mt19937_64;

/// He-uniform weights, zero bias.
std::vector<double> he_uniform(std::size_t count, std::size_t fan_in, Rng& rng, double gain = 1.0);

/// Row-wise affine map: x [N, in] -> [N, out].
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [in, out]
  Tensor bias;    // [1, out]
};

/// Linear -> ReLU -> Linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;

  Linear first, second;
};

/// 3x3x3 convolution parameters usable densely or on a sparse active set.
class Conv3 {
 public:
  Conv3() = default;
  Conv3(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng, int stride = 1);
  Tensor dense(const Tensor& x) const;
  Tensor sparse(const Tensor& x, const std::shared_ptr<const SparseNeighbors>& nbr) const;

  Tensor kernel;  // [27, in, out]
  Tensor bias;    // [out]
  int stride = 1;
};

}  // namespace smc
