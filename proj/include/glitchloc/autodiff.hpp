#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

// Reverse-mode differentiable arrays. The graph is built per forward pass
// (define-by-run) and freed when the last Array handle drops; backward from
// a scalar root fills gradients by the chain rule. All values are doubles.
namespace glitchloc::ad {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct Node;
class BackwardCtx;

using BackwardFn = std::function<void(Node&, BackwardCtx&)>;

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // filled by backward (direct mode)
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  std::uint64_t id = 0;
  bool requires_grad = false;
  bool is_param = false;
};

/// Collects gradients of parameter leaves without touching the shared
/// leaf nodes, so independent graphs over the same parameters can run
/// backward on separate threads.
class GradSink {
 public:
  std::vector<double>& buffer(const Node& n);
  const std::vector<double>* find(const Node& n) const;
  void clear() { grads_.clear(); }

 private:
  std::unordered_map<const Node*, std::vector<double>> grads_;
};

class BackwardCtx {
 public:
  explicit BackwardCtx(GradSink* sink) : sink_(sink) {}
  std::vector<double>& grad_of(Node& n);

 private:
  GradSink* sink_;
};

/// Handle to one node of the computation graph. Copies share the node.
class Array {
 public:
  Array() = default;

  /// Leaf that does not take gradients (inputs, labels, masks).
  static Array constant(Shape shape, std::vector<double> values);
  static Array full(Shape shape, double value);
  static Array zeros(Shape shape);
  static Array scalar_value(double value);
  /// Trainable leaf; receives grad on backward.
  static Array param(Shape shape, std::vector<double> values);

  static Array wrap(std::shared_ptr<Node> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return node_->values.size(); }
  std::span<const double> values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  double scalar() const;
  double at(int i) const { return node_->values.at(static_cast<std::size_t>(i)); }
  double at(int r, int c) const;
  /// Empty until backward has reached this node.
  std::span<const double> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t node_id() const { return node_->id; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Array(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// ---- op suite -------------------------------------------------------------
// Shapes must conform per op; mismatches throw std::invalid_argument naming
// the op and the offending shapes.

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array div(const Array& a, const Array& b);
Array add_scalar(const Array& a, double c);
Array mul_scalar(const Array& a, double c);

/// {M,K} x {K,N} -> {M,N}
Array matmul(const Array& a, const Array& b);

/// x {C,T}, w {O,C,K}, b {O} -> {O, T + 2*pad - K + 1}. pad < 0 means
/// "same" padding (K-1)/2 for odd K.
Array conv1d(const Array& x, const Array& w, const Array& b, int pad = -1);

/// 2-D concatenation along axis 0 (rows) or 1 (columns).
Array concat(const std::vector<Array>& parts, int axis);
Array slice_rows(const Array& x, int row0, int row1);
Array transpose(const Array& x);
/// {1,T} -> {n,T}
Array tile_rows(const Array& x, int n);
/// {C,1} -> {C,n}
Array tile_cols(const Array& x, int n);

Array sigmoid(const Array& x);
Array softplus(const Array& x);
Array relu(const Array& x);
/// Softmax along axis 0 (per column) or axis 1 (per row) of a 2-D array.
Array softmax(const Array& x, int axis);
/// Normalizes each column of a {C,T} array over its channels (zero mean,
/// unit variance, eps 1e-5). No learned affine.
Array layer_norm_channels(const Array& x);

Array sum_all(const Array& x);
Array mean_all(const Array& x);
/// {C,T} -> {1,T}, mean over channels.
Array mean_rows(const Array& x);
/// {C,T} -> {1,T}, per-column l2 norm over channels.
Array l2norm_channels(const Array& x);

/// Elementwise (a-b)^2.
Array squared_error(const Array& a, const Array& b);
/// Elementwise binary cross-entropy; predictions are clamped to
/// [1e-7, 1-1e-7] before the logs. Target is treated as constant.
Array bce(const Array& pred, const Array& target);

/// Seeds d(root)/d(root)=1 and accumulates gradients into every reachable
/// node's grad buffer. Root must be scalar.
void backward(const Array& root);
/// Same, but parameter-leaf gradients go to the sink instead of the shared
/// leaf nodes (thread-safe across graphs that share parameters).
void backward(const Array& root, GradSink& sink);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> per_parameter;  // max relative error per input array
};

/// Central finite differences vs analytic gradients for a scalar-valued
/// function of parameter arrays. Relative error metric:
/// |a-n| / max(|a|, |n|, 1e-8). Throws on non-finite outputs.
GradCheckReport grad_check(const std::function<Array(const std::vector<Array>&)>& fn,
                           std::vector<Array> point, double epsilon);

}  // namespace glitchloc::ad
