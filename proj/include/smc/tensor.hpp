// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace smc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

class Tape;

/// Dense row-major tensor of doubles with an optional reverse-mode tape link.
///
/// Tensors are cheap handles: copies share storage. Values produced by ops
/// while a Tape is active (and with at least one gradient-carrying input) are
/// recorded on that tape; otherwise ops run forward only.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf tensor that accumulates gradients across backward passes.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::size_t rows() const;  // first dim of a rank-2 tensor
  std::size_t cols() const;  // second dim of a rank-2 tensor

  std::span<const double> data() const;
  /// Direct write access, intended for leaves (optimizers, finite differences).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  /// Accumulated gradient; empty span when none has been written yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// Copy of the values that never receives gradient.
  Tensor detach() const;

  const detail::TensorImpl* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend struct TensorAccess;
};

/// Append-only record of differentiable operations for one step.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Makes `tape` the recording target of the calling thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* current();

  /// Propagates d(loss)/d(.) to every recorded ancestor. Gradients add onto
  /// whatever is already stored until zero_grad().
  void backward(const Tensor& loss);

  std::size_t size() const;

  void record(detail::Node node);

 private:
  std::vector<detail::Node> nodes_;
};

/// Neighbour table for submanifold 3x3x3 convolution over an active set.
/// `index[row * 27 + tap]` is the active row at that offset or -1.
struct SparseNeighbors {
  std::size_t rows = 0;
  std::vector<std::int32_t> index;
};

/// Tap enumeration shared by dense and sparse 3x3x3 kernels.
constexpr int conv_tap(int dx, int dy, int dz) { return ((dx + 1) * 3 + (dy + 1)) * 3 + (dz + 1); }

struct SortResult {
  Tensor values;                    // x[perm], differentiable
  std::vector<std::int64_t> perm;   // constant in backward
};

// Elementwise. Shapes must match exactly, except that either side may have a
// single element (scalar x tensor).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// log(max(x, floor)); gradient is zero where the floor is active.
Tensor log_floor(const Tensor& x, double floor);
/// mask[i] ? a[i] : b[i]
Tensor select(std::span<const std::uint8_t> mask, const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);

// Rank-2.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index);
Tensor scatter_add_rows(const Tensor& x, std::span<const std::int64_t> index, std::size_t out_rows);
/// Repeats a [1, C] (or [C]) row n times via gather_rows.
Tensor broadcast_rows(const Tensor& row, std::size_t n);

// Reductions to a single element.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Descending sort of a flat tensor; ties keep input order.
SortResult sort_desc(const Tensor& x);

/// 3x3x3 convolution on a channels-last grid [H, W, D, Cin] with zero padding.
/// kernel [27, Cin, Cout], bias [Cout]; output [ceil(H/s), ceil(W/s), ceil(D/s), Cout].
Tensor conv3_dense(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride = 1);

/// Submanifold 3x3x3 convolution: features [M, Cin] over an active set
/// described by `nbr`; output [M, Cout] on the same active set.
Tensor sparse_conv3(const Tensor& x, std::shared_ptr<const SparseNeighbors> nbr, const Tensor& kernel,
                    const Tensor& bias);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// Max over elements of |autodiff - central difference| / max(1e-8, |central difference|).
/// `x` must be a parameter leaf; its values are restored on return.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace smc
