// SPDX-License-Identifier: Apache-2.0
#include "grad_suite.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>

#include "oracles.hpp"
#include "smc/fusion.hpp"
#include "smc/losses.hpp"
#include "smc/nn.hpp"
#include "smc/points.hpp"

namespace smc::testing {

namespace {

/// sum(w .* y) for a fixed random w of y's shape.
class Weigher {
 public:
  explicit Weigher(Rng& rng) : rng_(rng) {}
  Tensor operator()(const Tensor& y) {
    auto it = cache_.find(y.numel());
    if (it == cache_.end()) it = cache_.emplace(y.numel(), uniform(y.numel(), rng_, 0.5, 1.5)).first;
    return sum(mul(y, Tensor::from(y.shape(), it->second)));
  }

 private:
  Rng& rng_;
  std::map<std::size_t, std::vector<double>> cache_;
};

/// Values with |x| in [0.2, 1] so ReLU kinks and sort ties stay clear of eps.
Tensor away_from_zero(Shape shape, Rng& rng) {
  auto v = uniform(shape_numel(shape), rng, 0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& x : v) x = sign(rng) ? x : -x;
  return Tensor::parameter(std::move(shape), std::move(v));
}

std::shared_ptr<const SparseNeighbors> random_active_set(Rng& rng, std::size_t& rows) {
  PointCloud pc;
  pc.source_dims = {6, 6, 6};
  std::bernoulli_distribution on(0.35);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k)
        if (on(rng)) pc.coords.push_back({i, j, k});
  const SparseGrid g = voxelize_points(pc, 1);
  rows = g.rows();
  return g.neighbors();
}

}  // namespace

std::vector<GradCase> run_grad_suite(std::uint64_t seed) {
  Rng rng(seed);
  Weigher w(rng);
  std::vector<GradCase> out;
  auto check = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f, Tensor x) {
    out.push_back({name, grad_check(f, x, 1e-5)});
  };

  const Tensor c34 = Tensor::from({3, 4}, uniform(12, rng));
  check("add", [&](const Tensor& x) { return w(add(x, c34)); }, random_param({3, 4}, rng));
  check("add_self", [&](const Tensor& x) { return w(add(x, x)); }, random_param({3, 4}, rng));
  check("sub", [&](const Tensor& x) { return w(sub(c34, x)); }, random_param({3, 4}, rng));
  check("mul", [&](const Tensor& x) { return w(mul(x, c34)); }, random_param({3, 4}, rng));
  check("mul_self", [&](const Tensor& x) { return w(mul(x, x)); }, random_param({3, 4}, rng));
  check("mul_scalar_tensor", [&](const Tensor& x) { return w(mul(Tensor::scalar(1.7), x)); },
        random_param({3, 4}, rng));
  check("mul_tensor_by_param_scalar", [&](const Tensor& x) { return w(mul(c34, x)); }, random_param({1}, rng));
  check("scale", [&](const Tensor& x) { return w(scale(x, -2.5)); }, random_param({3, 4}, rng));
  check("add_scalar", [&](const Tensor& x) { return w(add_scalar(x, 0.3)); }, random_param({3, 4}, rng));
  check("relu", [&](const Tensor& x) { return w(relu(x)); }, away_from_zero({4, 5}, rng));
  check("sigmoid", [&](const Tensor& x) { return w(sigmoid(x)); }, random_param({4, 5}, rng, -3, 3));
  check("log_floor", [&](const Tensor& x) { return w(log_floor(x, 1e-12)); }, random_param({4, 5}, rng, 0.1, 2.0));
  {
    std::vector<std::uint8_t> mask(12);
    std::bernoulli_distribution b(0.5);
    for (auto& m : mask) m = b(rng);
    check("select", [&, mask](const Tensor& x) { return w(select(mask, x, mul(x, x))); }, random_param({3, 4}, rng));
  }
  const Tensor c43 = Tensor::from({4, 3}, uniform(12, rng));
  check("reshape", [&](const Tensor& x) { return w(mul(reshape(x, {4, 3}), c43)); }, random_param({3, 4}, rng));
  const Tensor b45 = Tensor::from({4, 5}, uniform(20, rng));
  const Tensor a23 = Tensor::from({2, 3}, uniform(6, rng));
  check("matmul_left", [&](const Tensor& x) { return w(matmul(x, b45)); }, random_param({3, 4}, rng));
  check("matmul_right", [&](const Tensor& x) { return w(matmul(a23, x)); }, random_param({3, 4}, rng));
  check("concat_cols", [&](const Tensor& x) {
          const Tensor parts[] = {x, mul(x, x), c34};
          return w(concat_cols(parts));
        },
        random_param({3, 4}, rng));
  check("softmax_rows", [&](const Tensor& x) { return w(softmax_rows(x)); }, random_param({4, 3}, rng, -2, 2));
  check("log_softmax_rows", [&](const Tensor& x) { return w(log_softmax_rows(x)); }, random_param({4, 3}, rng, -2, 2));
  {
    const std::vector<std::int64_t> idx{2, 0, 2, 1, 2, 0};
    check("gather_rows", [&, idx](const Tensor& x) { return w(gather_rows(x, idx)); }, random_param({3, 4}, rng));
    check("scatter_add_rows", [&, idx](const Tensor& x) { return w(scatter_add_rows(x, idx, 4)); },
          random_param({6, 2}, rng));
  }
  check("broadcast_rows", [&](const Tensor& x) { return w(broadcast_rows(x, 5)); }, random_param({1, 3}, rng));
  check("sum", [&](const Tensor& x) { return mul(sum(x), sum(x)); }, random_param({3, 4}, rng));
  check("mean", [&](const Tensor& x) { return mul(mean(x), mean(x)); }, random_param({3, 4}, rng));
  {
    // Distinct values spaced well beyond eps keep the permutation fixed.
    std::vector<double> v(10);
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), rng);
    for (auto& x : v) x = 0.1 * x + 0.01;
    check("sort_desc", [&](const Tensor& x) { return w(sort_desc(x).values); }, Tensor::parameter({10}, v));
  }

  for (int stride : {1, 2}) {
    const std::string s = "_s" + std::to_string(stride);
    const Tensor img = Tensor::from({5, 4, 3, 2}, uniform(120, rng));
    const Tensor ker = Tensor::from({27, 2, 3}, uniform(162, rng));
    const Tensor bias = Tensor::from({3}, uniform(3, rng));
    check("conv3_dense_input" + s, [&](const Tensor& x) { return w(conv3_dense(x, ker, bias, stride)); },
          random_param({5, 4, 3, 2}, rng));
    check("conv3_dense_kernel" + s, [&](const Tensor& x) { return w(conv3_dense(img, x, bias, stride)); },
          random_param({27, 2, 3}, rng));
    check("conv3_dense_bias" + s, [&](const Tensor& x) { return w(conv3_dense(img, ker, x, stride)); },
          random_param({3}, rng));
  }
  {
    std::size_t rows = 0;
    const auto nbr = random_active_set(rng, rows);
    const Tensor feat = Tensor::from({rows, 2}, uniform(rows * 2, rng));
    const Tensor ker = Tensor::from({27, 2, 3}, uniform(162, rng));
    const Tensor bias = Tensor::from({3}, uniform(3, rng));
    check("sparse_conv3_input", [&](const Tensor& x) { return w(sparse_conv3(x, nbr, ker, bias)); },
          random_param({rows, 2}, rng));
    check("sparse_conv3_kernel", [&](const Tensor& x) { return w(sparse_conv3(feat, nbr, x, bias)); },
          random_param({27, 2, 3}, rng));
    check("sparse_conv3_bias", [&](const Tensor& x) { return w(sparse_conv3(feat, nbr, ker, x)); },
          random_param({3}, rng));
  }

  {
    ParamSet ps;
    Rng init(seed + 1);
    Linear lin(ps, "lin", 4, 3, init);
    Mlp mlp(ps, "mlp", 4, 5, 2, init);
    check("linear", [&](const Tensor& x) { return w(lin(x)); }, random_param({6, 4}, rng));
    check("mlp", [&](const Tensor& x) { return w(mlp(x)); }, random_param({6, 4}, rng));
    FusionBlock fb(ps, "fb", 3, 2, init);
    const Tensor pt = Tensor::from({5, 3}, uniform(15, rng));
    check("fusion_fuse_e", [&](const Tensor& x) { return w(fb.fuse_scale(x, pt).fuse_e); }, random_param({5, 3}, rng));
    check("fusion_pt_e", [&](const Tensor& x) { return w(fb.fuse_scale(pt, x).pt_e); }, random_param({5, 3}, rng));
    check("fusion_scores", [&](const Tensor& x) {
            const auto f = fb.fuse_scale(x, pt);
            const auto s = fb.scale_scores(f.fuse_e, f.pt_e);
            return add(w(s.fuse), w(s.pt));
          },
          random_param({5, 3}, rng));
  }

  {
    const PointLabels y{0, 1, 1, 0, 1, 0, 0, 1};
    check("lovasz_softmax", [&](const Tensor& x) { return lovasz_softmax(softmax_rows(x), y); },
          random_param({8, 2}, rng, -2, 2));
    const auto f = class_frequencies(y, 2);
    check("weighted_ce", [&](const Tensor& x) { return weighted_ce(softmax_rows(x), y, f); },
          random_param({8, 2}, rng, -2, 2));
    const PointLabels y3{0, 2, 1, 2, 2, 0};
    check("lovasz_softmax_3class", [&](const Tensor& x) { return lovasz_softmax(softmax_rows(x), y3); },
          random_param({6, 3}, rng, -2, 2));
  }
  {
    const Tensor q = random_probs(6, 3, rng);
    const Tensor t1 = random_probs(6, 3, rng);
    check("kl_const_target", [&](const Tensor& x) { return distill_loss({q}, {softmax_rows(x)}); },
          random_param({6, 3}, rng, -2, 2));
    check("distill_loss_two_scales", [&](const Tensor& x) {
            return distill_loss({q, t1}, {softmax_rows(x), softmax_rows(scale(x, 0.5))});
          },
          random_param({6, 3}, rng, -2, 2));
  }
  return out;
}

}  // namespace smc::testing
