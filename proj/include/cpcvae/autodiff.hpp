#pragma once

// Reverse-mode automatic differentiation on an explicit tape.
//
// A Tape owns every value computed during one forward pass. Tensors are
// lightweight handles (tape pointer + node index). Nodes are appended in
// evaluation order, so walking the node array backwards is a valid reverse
// topological order and each node is visited exactly once.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cpcvae::ad {

#ifdef CPCVAE_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Persistent trainable array. Lives outside any tape; a tape references it
/// through a leaf node and accumulates into `grad` after backward.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;

  Parameter() = default;
  Parameter(std::string name, Shape shape, Scalar fill = Scalar(0));

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;
  bool requires_grad() const;

  std::span<const Scalar> data() const;
  /// Gradient buffer populated by Tape::backward.
  std::span<const Scalar> grad() const;
  std::vector<Scalar> to_vector() const;

  /// Value of a one-element tensor.
  Scalar item() const;
  Scalar operator[](std::size_t flat) const { return data()[flat]; }
  Scalar at(std::size_t row, std::size_t col) const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using BackwardFn = std::function<void(Tape&, std::size_t self)>;

class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  /// With grad disabled, parameters enter as constants and no backward
  /// closures are recorded.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Tensor constant(Shape shape, std::vector<Scalar> value);
  Tensor constant(Scalar value);
  Tensor zeros(Shape shape);
  Tensor full(Shape shape, Scalar value);
  /// Leaf that receives a gradient.
  Tensor variable(Shape shape, std::vector<Scalar> value);
  /// Leaf bound to a persistent parameter; repeated calls return the same node.
  Tensor param(Parameter& p);

  /// Appends a node computed outside the built-in primitives. `backward`
  /// is only kept when at least one input requires a gradient.
  Tensor record(Shape shape, std::vector<Scalar> value,
                std::span<const Tensor> inputs, BackwardFn backward);

  /// Propagates d(loss)/d(node) to every node that requires a gradient and
  /// adds leaf gradients into their bound Parameter::grad. A tape can be
  /// differentiated once; a second call throws std::logic_error.
  void backward(const Tensor& loss);
  bool backward_done() const { return backward_done_; }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Drops every node; outstanding Tensor handles become dangling.
  void clear();

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

// ---- elementwise -------------------------------------------------------
// Binary ops accept equal shapes, or a one-element tensor against any shape.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor log_add_exp(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, Scalar c);
Tensor add_scalar(const Tensor& x, Scalar c);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor erf(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Scalar slope = Scalar(0.01));
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// max(x, floor); gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& x, Scalar floor);

inline constexpr Scalar kLeakySlope = Scalar(0.01);

// ---- linear algebra and reductions ---------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis, bool keepdims = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdims = false);
/// log(sum(exp(x))) along `axis`, shifted by the max for stability.
Tensor logsumexp(const Tensor& x, std::size_t axis, bool keepdims = false);

// ---- structural ----------------------------------------------------------

/// Expands size-1 dimensions (or missing leading dimensions) to `shape`.
Tensor broadcast_to(const Tensor& x, Shape shape);
Tensor reshape(const Tensor& x, Shape shape);
/// Rows [begin, end) (axis 0) or columns [begin, end) (axis 1) of a matrix.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
/// Copy of the value with no gradient path.
Tensor detach(const Tensor& x);

/// Row-wise log-softmax / softmax of a matrix.
Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, Scalar c) { return scale(x, c); }
inline Tensor operator*(Scalar c, const Tensor& x) { return scale(x, c); }
inline Tensor operator+(const Tensor& x, Scalar c) { return add_scalar(x, c); }
inline Tensor operator-(const Tensor& x, Scalar c) { return add_scalar(x, -c); }

}  // namespace cpcvae::ad
