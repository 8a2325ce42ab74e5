// SPDX-License-Identifier: Apache-2.0
#include "smc/nn.hpp"

#include <cmath>

namespace smc {

std::vector<double> he_uniform(std::size_t count, std::size_t fan_in, Rng& rng, double gain) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(count);
  for (auto& v : w) v = u(rng);
  return w;
}

Linear::Linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(params.add(name + ".w", {in, out}, he_uniform(in * out, in, rng))),
      bias(params.add(name + ".b", {1, out}, std::vector<double>(out, 0.0))) {}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), broadcast_rows(bias, x.rows())); }

Mlp::Mlp(ParamSet& params, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : first(params, name + ".l1", in, hidden, rng), second(params, name + ".l2", hidden, out, rng) {}

Tensor Mlp::operator()(const Tensor& x) const { return second(relu(first(x))); }

Conv3::Conv3(ParamSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng, int stride_)
    : kernel(params.add(name + ".k", {27, in, out}, he_uniform(27 * in * out, 27 * in, rng))),
      bias(params.add(name + ".b", {out}, std::vector<double>(out, 0.0))),
      stride(stride_) {}

Tensor Conv3::dense(const Tensor& x) const { return conv3_dense(x, kernel, bias, stride); }

Tensor Conv3::sparse(const Tensor& x, const std::shared_ptr<const SparseNeighbors>& nbr) const {
  return sparse_conv3(x, nbr, kernel, bias);
}

}  // namespace smc
