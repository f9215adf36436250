#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/rng.hpp"

namespace dancegen {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node;
using NodePtr = std::shared_ptr<Node>;
}  // namespace detail

/// Dense float64 row-major tensor participating in reverse-mode automatic
/// differentiation.  A Tensor is a shared handle to a node in the record of
/// operations built during a forward pass; backward(loss) walks that record
/// in reverse and accumulates gradients on every leaf created with
/// requires_grad.  Data buffers are treated as immutable once an operation
/// has consumed them; only leaves may be rewritten between passes (this is
/// how optimizers apply updates).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double value, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const;
  int dim(int i) const;
  std::int64_t numel() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  /// Leaf tensors only: direct access for initialization and optimizer
  /// updates between passes.
  std::vector<double>& mutable_data();
  /// Accumulated gradient; reads as zeros before any backward pass.
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<int> idx) const;

  /// Copy of the values as a fresh leaf detached from the record.
  Tensor detach() const;

  detail::Node* node() const { return n_.get(); }
  const detail::NodePtr& node_ptr() const { return n_; }

  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

 private:
  detail::NodePtr n_;
};

// -------------------- elementwise operations --------------------
// Binary forms accept equal shapes or equal-rank shapes where either
// operand has extent 1 along a dimension (that operand is broadcast).

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// -------------------- reductions and structure --------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis0(const Tensor& a);
Tensor select(const Tensor& a, std::int64_t flat_index);
Tensor reshape(const Tensor& a, Shape s);
Tensor concat_axis0(const Tensor& a, const Tensor& b);

// -------------------- contractions --------------------

/// Generalized contraction: sums products over the given (axis of a,
/// axis of b) pairs.  Output axes are the free axes of a followed by the
/// free axes of b; with no free axes the result is a scalar of shape {1}.
Tensor tensordot(const Tensor& a, const Tensor& b,
                 const std::vector<std::pair<int, int>>& axes);

// -------------------- convolutions --------------------
// Feature maps are (C, T, V): channels, time steps, graph vertices.
// Kernels act along T only and never mix vertices.

/// x: (C_in, T, V), w: (C_out, C_in, k_t), bias: (C_out) or undefined.
/// T_out = floor((T + 2*pad_t - k_t) / stride_t) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride_t, int pad_t);

/// x: (C_in, T, V), w: (C_in, C_out, k_t), bias: (C_out) or undefined.
/// T_out = (T - 1) * stride_t - 2*pad_t + k_t.
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                         int stride_t, int pad_t);

// -------------------- normalization and regularization --------------------

/// Running statistics for batch normalization, one entry per channel.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  void init(int channels) {
    running_mean.assign(static_cast<std::size_t>(channels), 0.0);
    running_var.assign(static_cast<std::size_t>(channels), 1.0);
  }
};

/// Per-channel normalization of x: (C, T, V) over the (T, V) extent.
/// Training mode normalizes with current statistics and folds them into
/// the running estimates; evaluation mode uses the running estimates.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training,
                  double momentum = 0.9, double eps = 1e-5);

/// Inverted dropout: training mode zeroes each element with probability p
/// and scales survivors by 1/(1-p); evaluation mode is the identity.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

/// table: (S, C).  Returns (C, T, 1) where column t is table row rows[t].
/// Gradients accumulate into the selected rows.
Tensor embed_rows(const Tensor& table, const std::vector<int>& rows);

// -------------------- backward --------------------

/// Reverse-mode sweep from a scalar loss.  Gradients of every node reachable
/// in the loss's record are overwritten by this call; leaves outside the
/// record keep (or lazily read as) zero gradients.
void backward(const Tensor& loss);

// -------------------- parameters --------------------

/// Named trainable leaf.  The handle shares storage with the model that owns
/// it, so optimizer updates through `tensor` are seen by the model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<Parameter>;

/// Named view of a non-trainable float64 buffer (e.g. running statistics)
/// that must survive checkpoint round trips.
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

using BufferList = std::vector<NamedBuffer>;

/// Fills a leaf with U(-limit, limit), limit = sqrt(1 / fan_in).
void init_uniform_fan_in(Tensor& t, int fan_in, Rng& rng);
/// Fills a leaf with N(0, 1) draws.
void init_normal(Tensor& t, Rng& rng);

}  // namespace dancegen
