// SPDX-License-Identifier: Apache-2.0
#include "smc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "smc/error.hpp"

namespace smc {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  std::vector<double> pending;  // scratch used during one backward pass
  bool requires_grad = false;
  bool leaf = true;
  const Tape* tape = nullptr;
};

struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

struct TensorAccess {
  static const ImplPtr& impl(const Tensor& t) { return t.impl_; }
  static Tensor wrap(ImplPtr p) { return Tensor(std::move(p)); }
};

namespace {

thread_local Tape* g_current_tape = nullptr;

const ImplPtr& impl_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("use of an undefined tensor");
  return TensorAccess::impl(t);
}

ImplPtr make_impl(Shape shape, std::vector<double> data) {
  auto p = std::make_shared<TensorImpl>();
  p->shape = std::move(shape);
  p->data = std::move(data);
  return p;
}

// Pending-gradient buffer of an input, or nullptr when it takes no gradient.
double* pend(const ImplPtr& p) {
  if (!p->requires_grad) return nullptr;
  if (p->pending.empty()) p->pending.assign(p->data.size(), 0.0);
  return p->pending.data();
}

/// Wraps a freshly computed value, recording it on the active tape when any
/// input carries gradient.
Tensor finish(const char* op, Shape shape, std::vector<double> data, std::vector<ImplPtr> inputs,
              std::function<void(Node&)> backward) {
  auto out = make_impl(std::move(shape), std::move(data));
  Tape* tape = Tape::current();
  const bool needs = tape != nullptr && std::any_of(inputs.begin(), inputs.end(),
                                                    [](const ImplPtr& p) { return p->requires_grad; });
  if (needs) {
    out->requires_grad = true;
    out->leaf = false;
    out->tape = tape;
    Node node;
    node.op = op;
    node.inputs = std::move(inputs);
    node.output = out;
    node.backward = std::move(backward);
    tape->record(std::move(node));
  }
  return TensorAccess::wrap(out);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

enum class Broadcast { kNone, kLeftScalar, kRightScalar };

Broadcast elementwise_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.numel() == 1) return Broadcast::kLeftScalar;
  if (b.numel() == 1) return Broadcast::kRightScalar;
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

template <class Fwd, class Da, class Db>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const Broadcast bc = elementwise_shape(a, b, op);
  const auto& pa = impl_of(a);
  const auto& pb = impl_of(b);
  const Shape shape = bc == Broadcast::kLeftScalar ? pb->shape : pa->shape;
  const std::size_t n = shape_numel(shape);
  const std::size_t sa = bc == Broadcast::kLeftScalar ? 0 : 1;
  const std::size_t sb = bc == Broadcast::kRightScalar ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa->data[i * sa], pb->data[i * sb]);
  return finish(op, shape, std::move(out), {pa, pb}, [n, sa, sb, da, db](Node& node) {
    const auto& A = node.inputs[0];
    const auto& B = node.inputs[1];
    const double* g = node.output->pending.data();
    if (double* ga = pend(A)) {
      for (std::size_t i = 0; i < n; ++i) ga[i * sa] += da(A->data[i * sa], B->data[i * sb]) * g[i];
    }
    if (double* gb = pend(B)) {
      for (std::size_t i = 0; i < n; ++i) gb[i * sb] += db(A->data[i * sa], B->data[i * sb]) * g[i];
    }
  });
}

template <class Fwd, class Dx>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Dx dx) {
  const auto& px = impl_of(x);
  std::vector<double> out(px->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(px->data[i]);
  return finish(op, px->shape, std::move(out), {px}, [dx](Node& node) {
    const auto& X = node.inputs[0];
    double* gx = pend(X);
    if (!gx) return;
    const double* g = node.output->pending.data();
    const double* y = node.output->data.data();
    for (std::size_t i = 0; i < X->data.size(); ++i) gx[i] += dx(X->data[i], y[i]) * g[i];
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Shapes

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(shape));
  }
  return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl_of(*this)->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_of(*this)->data.size(); }
std::size_t Tensor::rows() const { return dim(0); }
std::size_t Tensor::cols() const { return dim(1); }
std::span<const double> Tensor::data() const { return impl_of(*this)->data; }
std::span<double> Tensor::mutable_data() { return impl_of(*this)->data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return impl_of(*this)->requires_grad; }
bool Tensor::is_leaf() const { return impl_of(*this)->leaf; }
bool Tensor::has_grad() const { return !impl_of(*this)->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_of(*this)->grad; }
void Tensor::zero_grad() { impl_of(*this)->grad.clear(); }

Tensor Tensor::detach() const {
  const auto& p = impl_of(*this);
  return Tensor(make_impl(p->shape, p->data));
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() = default;
Tape::~Tape() = default;

Tape::Scope::Scope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

std::size_t Tape::size() const { return nodes_.size(); }

void Tape::record(Node node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  const auto& root = impl_of(loss);
  if (root->data.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(root->shape));
  }
  if (!root->requires_grad || (!root->leaf && root->tape != this)) {
    throw ContractError("backward: loss is not attached to this tape");
  }
  root->pending.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->pending.empty()) continue;
    it->backward(*it);
  }
  // Fold this pass's gradients into the accumulated slots.
  auto fold = [](const ImplPtr& p) {
    if (p->pending.empty()) return;
    if (p->grad.empty()) {
      p->grad.swap(p->pending);
    } else {
      for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += p->pending[i];
    }
    p->pending.clear();
  };
  fold(root);
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) fold(in);
    fold(node.output);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_floor(const Tensor& x, double floor) {
  return unary(
      "log", x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor select(std::span<const std::uint8_t> mask, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || mask.size() != a.numel()) {
    throw DimensionError("select: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                         " with mask of " + std::to_string(mask.size()));
  }
  const auto& pa = impl_of(a);
  const auto& pb = impl_of(b);
  auto m = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  std::vector<double> out(pa->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*m)[i] ? pa->data[i] : pb->data[i];
  return finish("select", pa->shape, std::move(out), {pa, pb}, [m](Node& node) {
    const double* g = node.output->pending.data();
    double* ga = pend(node.inputs[0]);
    double* gb = pend(node.inputs[1]);
    for (std::size_t i = 0; i < m->size(); ++i) {
      if ((*m)[i]) {
        if (ga) ga[i] += g[i];
      } else if (gb) {
        gb[i] += g[i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  const auto& px = impl_of(x);
  if (shape_numel(shape) != px->data.size()) {
    throw DimensionError("reshape: " + shape_str(px->shape) + " -> " + shape_str(shape));
  }
  return finish("reshape", std::move(shape), px->data, {px}, [](Node& node) {
    double* gx = pend(node.inputs[0]);
    if (!gx) return;
    const auto& g = node.output->pending;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Rank-2

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto& pa = impl_of(a);
  const auto& pb = impl_of(b);
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * m;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = pa->data[i * k + t];
      const double* brow = pb->data.data() + t * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return finish("matmul", {n, m}, std::move(out), {pa, pb}, [n, k, m](Node& node) {
    const auto& A = node.inputs[0];
    const auto& B = node.inputs[1];
    const double* g = node.output->pending.data();
    if (double* ga = pend(A)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * m;
        for (std::size_t t = 0; t < k; ++t) {
          const double* brow = B->data.data() + t * m;
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
          ga[i * k + t] += acc;
        }
      }
    }
    if (double* gb = pend(B)) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * m;
        for (std::size_t t = 0; t < k; ++t) {
          const double av = A->data[i * k + t];
          double* gbrow = gb + t * m;
          for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::vector<ImplPtr> inputs;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat");
    if (p.rows() != n) throw DimensionError("concat: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
    inputs.push_back(impl_of(p));
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& src = inputs[q]->data;
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(src.data() + i * widths[q], widths[q], out.data() + i * total + offset);
    }
    offset += widths[q];
  }
  return finish("concat", {n, total}, std::move(out), std::move(inputs), [n, total, widths](Node& node) {
    const double* g = node.output->pending.data();
    std::size_t off = 0;
    for (std::size_t q = 0; q < widths.size(); ++q) {
      if (double* gq = pend(node.inputs[q])) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < widths[q]; ++j) gq[i * widths[q] + j] += g[i * total + off + j];
        }
      }
      off += widths[q];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax");
  const std::size_t n = x.rows(), c = x.cols();
  if (c == 0) throw DimensionError("softmax: invalid axis (empty rows)");
  const auto& px = impl_of(x);
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = px->data.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return finish("softmax", {n, c}, std::move(out), {px}, [n, c](Node& node) {
    double* gx = pend(node.inputs[0]);
    if (!gx) return;
    const double* g = node.output->pending.data();
    const double* y = node.output->data.data();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank(x, 2, "log_softmax");
  const std::size_t n = x.rows(), c = x.cols();
  if (c == 0) throw DimensionError("log_softmax: invalid axis (empty rows)");
  const auto& px = impl_of(x);
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = px->data.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return finish("log_softmax", {n, c}, std::move(out), {px}, [n, c](Node& node) {
    double* gx = pend(node.inputs[0]);
    if (!gx) return;
    const double* g = node.output->pending.data();
    const double* y = node.output->data.data();
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] - std::exp(y[i * c + j]) * gs;
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index) {
  if (x.rank() < 1) throw DimensionError("gather_rows: rank-0 input");
  const std::size_t m = x.dim(0);
  const std::size_t c = m == 0 ? 0 : x.numel() / m;
  const auto& px = impl_of(x);
  auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
  std::vector<double> out(idx->size() * c);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const std::int64_t r = (*idx)[i];
    if (r < 0 || static_cast<std::size_t>(r) >= m) {
      throw ContractError("gather_rows: index " + std::to_string(r) + " outside " + std::to_string(m) + " rows");
    }
    std::copy_n(px->data.data() + r * c, c, out.data() + i * c);
  }
  Shape shape = px->shape;
  shape[0] = idx->size();
  return finish("gather_rows", std::move(shape), std::move(out), {px}, [idx, c](Node& node) {
    double* gx = pend(node.inputs[0]);
    if (!gx) return;
    const double* g = node.output->pending.data();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      double* dst = gx + (*idx)[i] * c;
      const double* src = g + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Tensor scatter_add_rows(const Tensor& x, std::span<const std::int64_t> index, std::size_t out_rows) {
  require_rank(x, 2, "scatter_add");
  const std::size_t n = x.rows(), c = x.cols();
  if (index.size() != n) throw DimensionError("scatter_add: index length differs from rows");
  const auto& px = impl_of(x);
  auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
  std::vector<double> out(out_rows * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t r = (*idx)[i];
    if (r < 0 || static_cast<std::size_t>(r) >= out_rows) {
      throw ContractError("scatter_add: index " + std::to_string(r) + " outside " + std::to_string(out_rows));
    }
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += px->data[i * c + j];
  }
  return finish("scatter_add", {out_rows, c}, std::move(out), {px}, [idx, c](Node& node) {
    double* gx = pend(node.inputs[0]);
    if (!gx) return;
    const double* g = node.output->pending.data();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[(*idx)[i] * c + j];
    }
  });
}

Tensor broadcast_rows(const Tensor& row, std::size_t n) {
  Tensor r = row.rank() == 1 ? reshape(row, {1, row.numel()}) : row;
  if (r.rank() != 2 || r.rows() != 1) throw DimensionError("broadcast_rows: expected a single row");
  const std::vector<std::int64_t> zeros(n, 0);
  return gather_rows(r, zeros);
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  const auto& px = impl_of(x);
  const double s = std::accumulate(px->data.begin(), px->data.end(), 0.0);
  return finish("sum", {1}, {s}, {px}, [](Node& node) {
    double* gx = pend(node.inputs[0]);
    if (!gx) return;
    const double g = node.output->pending[0];
    for (std::size_t i = 0; i < node.inputs[0]->data.size(); ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

SortResult sort_desc(const Tensor& x) {
  const auto d = x.data();
  std::vector<std::int64_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::int64_t i, std::int64_t j) { return d[i] > d[j]; });
  Tensor flat = x.rank() == 1 ? x : reshape(x, {x.numel()});
  return {gather_rows(flat, perm), std::move(perm)};
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv3_dense(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride) {
  require_rank(x, 4, "dense_conv3");
  require_rank(kernel, 3, "dense_conv3");
  if (stride < 1) throw ContractError("dense_conv3: stride must be >= 1");
  const int H = static_cast<int>(x.dim(0)), W = static_cast<int>(x.dim(1)), D = static_cast<int>(x.dim(2));
  const std::size_t ci = x.dim(3);
  if (kernel.dim(0) != 27 || kernel.dim(1) != ci) {
    throw DimensionError("dense_conv3: kernel " + shape_str(kernel.shape()) + " for input " + shape_str(x.shape()));
  }
  const std::size_t co = kernel.dim(2);
  if (bias.numel() != co) throw DimensionError("dense_conv3: bias length differs from output channels");
  const int Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride, Do = (D + stride - 1) / stride;
  const auto& px = impl_of(x);
  const auto& pk = impl_of(kernel);
  const auto& pb = impl_of(bias);

  std::vector<double> out(static_cast<std::size_t>(Ho) * Wo * Do * co);
  for (int ox = 0; ox < Ho; ++ox) {
    for (int oy = 0; oy < Wo; ++oy) {
      for (int oz = 0; oz < Do; ++oz) {
        double* orow = out.data() + ((static_cast<std::size_t>(ox) * Wo + oy) * Do + oz) * co;
        std::copy_n(pb->data.data(), co, orow);
        for (int dx = -1; dx <= 1; ++dx) {
          const int ix = ox * stride + dx;
          if (ix < 0 || ix >= H) continue;
          for (int dy = -1; dy <= 1; ++dy) {
            const int iy = oy * stride + dy;
            if (iy < 0 || iy >= W) continue;
            for (int dz = -1; dz <= 1; ++dz) {
              const int iz = oz * stride + dz;
              if (iz < 0 || iz >= D) continue;
              const double* irow = px->data.data() + ((static_cast<std::size_t>(ix) * W + iy) * D + iz) * ci;
              const double* k = pk->data.data() + conv_tap(dx, dy, dz) * ci * co;
              for (std::size_t a = 0; a < ci; ++a) {
                const double v = irow[a];
                const double* krow = k + a * co;
                for (std::size_t b = 0; b < co; ++b) orow[b] += v * krow[b];
              }
            }
          }
        }
      }
    }
  }
  return finish(
      "dense_conv3", {static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo), static_cast<std::size_t>(Do), co},
      std::move(out), {px, pk, pb}, [=](Node& node) {
        const auto& X = node.inputs[0];
        const auto& K = node.inputs[1];
        double* gx = pend(X);
        double* gk = pend(K);
        double* gb = pend(node.inputs[2]);
        const double* g = node.output->pending.data();
        for (int ox = 0; ox < Ho; ++ox) {
          for (int oy = 0; oy < Wo; ++oy) {
            for (int oz = 0; oz < Do; ++oz) {
              const double* grow = g + ((static_cast<std::size_t>(ox) * Wo + oy) * Do + oz) * co;
              if (gb) {
                for (std::size_t b = 0; b < co; ++b) gb[b] += grow[b];
              }
              for (int dx = -1; dx <= 1; ++dx) {
                const int ix = ox * stride + dx;
                if (ix < 0 || ix >= H) continue;
                for (int dy = -1; dy <= 1; ++dy) {
                  const int iy = oy * stride + dy;
                  if (iy < 0 || iy >= W) continue;
                  for (int dz = -1; dz <= 1; ++dz) {
                    const int iz = oz * stride + dz;
                    if (iz < 0 || iz >= D) continue;
                    const std::size_t ioff = ((static_cast<std::size_t>(ix) * W + iy) * D + iz) * ci;
                    const std::size_t koff = conv_tap(dx, dy, dz) * ci * co;
                    const double* irow = X->data.data() + ioff;
                    const double* k = K->data.data() + koff;
                    for (std::size_t a = 0; a < ci; ++a) {
                      const double* krow = k + a * co;
                      if (gx) {
                        double acc = 0.0;
                        for (std::size_t b = 0; b < co; ++b) acc += grow[b] * krow[b];
                        gx[ioff + a] += acc;
                      }
                      if (gk) {
                        const double v = irow[a];
                        double* gkrow = gk + koff + a * co;
                        for (std::size_t b = 0; b < co; ++b) gkrow[b] += v * grow[b];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor sparse_conv3(const Tensor& x, std::shared_ptr<const SparseNeighbors> nbr, const Tensor& kernel,
                    const Tensor& bias) {
  require_rank(x, 2, "sparse_conv3");
  require_rank(kernel, 3, "sparse_conv3");
  if (!nbr) throw ContractError("sparse_conv3: missing neighbour table");
  const std::size_t m = x.rows(), ci = x.cols();
  if (nbr->rows != m || nbr->index.size() != m * 27) {
    throw DimensionError("sparse_conv3: neighbour table covers " + std::to_string(nbr->rows) + " rows, features " +
                         std::to_string(m));
  }
  if (kernel.dim(0) != 27 || kernel.dim(1) != ci) {
    throw DimensionError("sparse_conv3: channel mismatch, kernel " + shape_str(kernel.shape()) + " for features " +
                         shape_str(x.shape()));
  }
  const std::size_t co = kernel.dim(2);
  if (bias.numel() != co) throw DimensionError("sparse_conv3: bias length differs from output channels");
  const auto& px = impl_of(x);
  const auto& pk = impl_of(kernel);
  const auto& pb = impl_of(bias);
  std::vector<double> out(m * co);
  for (std::size_t r = 0; r < m; ++r) {
    double* orow = out.data() + r * co;
    std::copy_n(pb->data.data(), co, orow);
    for (int t = 0; t < 27; ++t) {
      const std::int32_t s = nbr->index[r * 27 + t];
      if (s < 0) continue;
      const double* irow = px->data.data() + static_cast<std::size_t>(s) * ci;
      const double* k = pk->data.data() + t * ci * co;
      for (std::size_t a = 0; a < ci; ++a) {
        const double v = irow[a];
        const double* krow = k + a * co;
        for (std::size_t b = 0; b < co; ++b) orow[b] += v * krow[b];
      }
    }
  }
  return finish("sparse_conv3", {m, co}, std::move(out), {px, pk, pb}, [nbr, m, ci, co](Node& node) {
    const auto& X = node.inputs[0];
    const auto& K = node.inputs[1];
    double* gx = pend(X);
    double* gk = pend(K);
    double* gb = pend(node.inputs[2]);
    const double* g = node.output->pending.data();
    for (std::size_t r = 0; r < m; ++r) {
      const double* grow = g + r * co;
      if (gb) {
        for (std::size_t b = 0; b < co; ++b) gb[b] += grow[b];
      }
      for (int t = 0; t < 27; ++t) {
        const std::int32_t s = nbr->index[r * 27 + t];
        if (s < 0) continue;
        const std::size_t ioff = static_cast<std::size_t>(s) * ci;
        const double* k = K->data.data() + t * ci * co;
        for (std::size_t a = 0; a < ci; ++a) {
          const double* krow = k + a * co;
          if (gx) {
            double acc = 0.0;
            for (std::size_t b = 0; b < co; ++b) acc += grow[b] * krow[b];
            gx[ioff + a] += acc;
          }
          if (gk) {
            const double v = X->data[ioff + a];
            double* gkrow = gk + t * ci * co + a * co;
            for (std::size_t b = 0; b < co; ++b) gkrow[b] += v * grow[b];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient check

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  if (!(eps > 0.0)) throw ParameterError("grad_check: eps must be positive");
  if (!x.requires_grad() || !x.is_leaf()) throw ContractError("grad_check: x must be a parameter leaf");
  auto check_finite = [](const Tensor& y) {
    const double v = y.item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite forward value");
    return v;
  };
  x.zero_grad();
  std::vector<double> analytic(x.numel(), 0.0);
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = f(x);
    check_finite(y);
    if (y.requires_grad()) {
      tape.backward(y);
      if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    }
  }
  x.zero_grad();
  auto values = x.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double fp = check_finite(f(x));
    values[i] = saved - eps;
    const double fm = check_finite(f(x));
    values[i] = saved;
    const double central = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - central) / std::max(1e-8, std::abs(central)));
  }
  return worst;
}

}  // namespace smc
