#include "cpcvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "cpcvae/errors.hpp"

namespace cpcvae::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Parameter::Parameter(std::string name_, Shape shape_, Scalar fill)
    : name(std::move(name_)), shape(std::move(shape_)) {
  value.assign(numel(shape), fill);
  grad.assign(value.size(), Scalar(0));
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), Scalar(0)); }

// ---- Tensor --------------------------------------------------------------

Tape& Tensor::tape() const {
  if (!tape_) throw std::logic_error("use of an empty Tensor handle");
  return *tape_;
}

const Shape& Tensor::shape() const { return tape().node(id_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(s));
  return s[axis];
}

std::size_t Tensor::size() const { return tape().node(id_).value.size(); }

bool Tensor::requires_grad() const { return tape().node(id_).requires_grad; }

std::span<const Scalar> Tensor::data() const { return tape().node(id_).value; }

std::span<const Scalar> Tensor::grad() const {
  const auto& n = tape().node(id_);
  if (n.grad.size() != n.value.size())
    throw std::logic_error("tensor has no gradient (backward not run or requires_grad false)");
  return n.grad;
}

std::vector<Scalar> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

Scalar Tensor::item() const {
  if (size() != 1)
    throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return data()[0];
}

Scalar Tensor::at(std::size_t row, std::size_t col) const {
  const auto& s = shape();
  if (s.size() != 2) throw DimensionError("at(row, col) on shape " + to_string(s));
  return data()[row * s[1] + col];
}

// ---- Tape ----------------------------------------------------------------

Tensor Tape::constant(Shape shape, std::vector<Scalar> value) {
  if (numel(shape) != value.size())
    throw DimensionError("constant: shape " + to_string(shape) + " does not hold " +
                         std::to_string(value.size()) + " values");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Scalar value) { return constant({}, {value}); }

Tensor Tape::zeros(Shape shape) { return full(std::move(shape), Scalar(0)); }

Tensor Tape::full(Shape shape, Scalar value) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<Scalar>(n, value));
}

Tensor Tape::variable(Shape shape, std::vector<Scalar> value) {
  Tensor t = constant(std::move(shape), std::move(value));
  nodes_[t.id()].requires_grad = grad_enabled_;
  return t;
}

Tensor Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Tensor(this, it->second);
  Tensor t = constant(p.shape, p.value);
  auto& n = nodes_[t.id()];
  n.requires_grad = grad_enabled_;
  n.param = &p;
  param_nodes_.emplace(&p, t.id());
  return t;
}

Tensor Tape::record(Shape shape, std::vector<Scalar> value, std::span<const Tensor> inputs,
                    BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw std::logic_error("tensors from different tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Tensor t = constant(std::move(shape), std::move(value));
  if (needs && grad_enabled_) {
    auto& n = nodes_[t.id()];
    n.requires_grad = true;
    n.backward = std::move(backward);
  }
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (&loss.tape() != this) throw std::logic_error("loss belongs to a different tape");
  if (backward_done_) throw std::logic_error("backward already run on this tape");
  if (loss.size() != 1)
    throw DimensionError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  backward_done_ = true;
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad.assign(n.value.size(), Scalar(0));
  auto& root = nodes_[loss.id()];
  if (!root.requires_grad) {
    for (auto& n : nodes_)
      if (n.param) n.grad.assign(n.value.size(), Scalar(0));
    return;
  }
  root.grad[0] = Scalar(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward) n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    auto& pg = n.param->grad;
    if (pg.size() != n.grad.size()) pg.assign(n.grad.size(), Scalar(0));
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
  backward_done_ = false;
}

// ---- helpers -------------------------------------------------------------

namespace {

Tape& same_tape(const Tensor& a, const Tensor& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("tensors from different tapes");
  return a.tape();
}

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  auto& tape = x.tape();
  auto xv = x.data();
  std::vector<Scalar> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return tape.record(x.shape(), std::move(out), in, [xi, df](Tape& t, std::size_t self) {
    auto& xn = t.node(xi);
    if (!xn.requires_grad) return;
    const auto& s = t.node(self);
    for (std::size_t i = 0; i < s.grad.size(); ++i)
      xn.grad[i] += s.grad[i] * df(xn.value[i], s.value[i]);
  });
}

// da(a, b, y) and db(a, b, y) give local partials.
template <class F, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto& tape = same_tape(a, b);
  const auto na = a.size(), nb = b.size();
  Shape shape;
  if (a.shape() == b.shape()) {
    shape = a.shape();
  } else if (nb == 1) {
    shape = a.shape();
  } else if (na == 1) {
    shape = b.shape();
  } else {
    throw DimensionError(std::string(name) + ": incompatible shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  const std::size_t n = numel(shape);
  const bool sa = na == 1 && n != 1, sb = nb == 1 && n != 1;
  auto av = a.data(), bv = b.data();
  std::vector<Scalar> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  const std::size_t ai = a.id(), bi = b.id();
  Tensor in[] = {a, b};
  return tape.record(std::move(shape), std::move(out), in,
                     [ai, bi, sa, sb, da, db](Tape& t, std::size_t self) {
                       auto& an = t.node(ai);
                       auto& bn = t.node(bi);
                       const auto& s = t.node(self);
                       for (std::size_t i = 0; i < s.grad.size(); ++i) {
                         const Scalar x = an.value[sa ? 0 : i], y = bn.value[sb ? 0 : i];
                         if (an.requires_grad) an.grad[sa ? 0 : i] += s.grad[i] * da(x, y, s.value[i]);
                         if (bn.requires_grad) bn.grad[sb ? 0 : i] += s.grad[i] * db(x, y, s.value[i]);
                       }
                     });
}

Scalar softplus_value(Scalar x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Scalar sigmoid_value(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

struct Strides {
  std::size_t outer, extent, inner;
};

Strides axis_strides(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape));
  Strides s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  if (s.extent == 0) throw DimensionError("reduction over empty axis of shape " + to_string(shape));
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdims) {
  Shape out = shape;
  if (keepdims)
    out[axis] = 1;
  else
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

void require_matrix(const char* name, const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError(std::string(name) + " expects a matrix, got shape " + to_string(x.shape()));
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](Scalar x, Scalar y) { return x + y; },
      [](Scalar, Scalar, Scalar) { return Scalar(1); }, [](Scalar, Scalar, Scalar) { return Scalar(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](Scalar x, Scalar y) { return x - y; },
      [](Scalar, Scalar, Scalar) { return Scalar(1); }, [](Scalar, Scalar, Scalar) { return Scalar(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](Scalar x, Scalar y) { return x * y; },
      [](Scalar, Scalar y, Scalar) { return y; }, [](Scalar x, Scalar, Scalar) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (Scalar v : b.data())
    if (v == Scalar(0)) throw DomainError("div: division by zero");
  return binary(
      "div", a, b, [](Scalar x, Scalar y) { return x / y; },
      [](Scalar, Scalar y, Scalar) { return Scalar(1) / y; },
      [](Scalar, Scalar y, Scalar out) { return -out / y; });
}

Tensor log_add_exp(const Tensor& a, const Tensor& b) {
  return binary(
      "log_add_exp", a, b,
      [](Scalar x, Scalar y) {
        const Scalar m = std::max(x, y);
        if (m == -std::numeric_limits<Scalar>::infinity()) return m;
        return m + std::log(std::exp(x - m) + std::exp(y - m));
      },
      [](Scalar x, Scalar, Scalar out) { return std::exp(x - out); },
      [](Scalar, Scalar y, Scalar out) { return std::exp(y - out); });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](Scalar v) { return -v; }, [](Scalar, Scalar) { return Scalar(-1); });
}

Tensor scale(const Tensor& x, Scalar c) {
  return unary(x, [c](Scalar v) { return c * v; }, [c](Scalar, Scalar) { return c; });
}

Tensor add_scalar(const Tensor& x, Scalar c) {
  return unary(x, [c](Scalar v) { return v + c; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](Scalar v) { return std::tanh(v); },
               [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary(x, softplus_value, [](Scalar v, Scalar) { return sigmoid_value(v); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, sigmoid_value, [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](Scalar v) { return std::exp(v); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& x) {
  for (Scalar v : x.data())
    if (!(v > Scalar(0))) throw DomainError("log of non-positive value " + std::to_string(v));
  return unary(x, [](Scalar v) { return std::log(v); }, [](Scalar v, Scalar) { return Scalar(1) / v; });
}

Tensor erf(const Tensor& x) {
  return unary(x, [](Scalar v) { return std::erf(v); },
               [](Scalar v, Scalar) {
                 return Scalar(2) / std::sqrt(std::numbers::pi_v<Scalar>) * std::exp(-v * v);
               });
}

Tensor leaky_relu(const Tensor& x, Scalar slope) {
  return unary(x, [slope](Scalar v) { return v > 0 ? v : slope * v; },
               [slope](Scalar v, Scalar) { return v > 0 ? Scalar(1) : slope; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return Scalar(2) * v; });
}

Tensor sqrt(const Tensor& x) {
  for (Scalar v : x.data())
    if (!(v > Scalar(0))) throw DomainError("sqrt of non-positive value " + std::to_string(v));
  return unary(x, [](Scalar v) { return std::sqrt(v); },
               [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

Tensor clamp_min(const Tensor& x, Scalar floor) {
  return unary(x, [floor](Scalar v) { return v < floor ? floor : v; },
               [floor](Scalar v, Scalar) { return v < floor ? Scalar(0) : Scalar(1); });
}

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto& tape = same_tape(a, b);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " do not align");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto av = a.data(), bv = b.data();
  std::vector<Scalar> out(m * n, Scalar(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar aip = av[i * k + p];
      const Scalar* brow = bv.data() + p * n;
      Scalar* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  const std::size_t ai = a.id(), bi = b.id();
  Tensor in[] = {a, b};
  return tape.record({m, n}, std::move(out), in, [ai, bi, m, k, n](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    auto& an = t.node(ai);
    auto& bn = t.node(bi);
    if (an.requires_grad) {
      // dA = G · Bᵀ
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          Scalar acc = 0;
          const Scalar* grow = g.data() + i * n;
          const Scalar* brow = bn.value.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          an.grad[i * k + p] += acc;
        }
    }
    if (bn.requires_grad) {
      // dB = Aᵀ · G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const Scalar aip = an.value[i * k + p];
          const Scalar* grow = g.data() + i * n;
          Scalar* brow = bn.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    }
  });
}

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("sum of empty tensor");
  Scalar acc = 0;
  for (Scalar v : x.data()) acc += v;
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return x.tape().record({}, {acc}, in, [xi](Tape& t, std::size_t self) {
    auto& xn = t.node(xi);
    if (!xn.requires_grad) return;
    const Scalar g = t.node(self).grad[0];
    for (auto& v : xn.grad) v += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdims) {
  const auto st = axis_strides(x.shape(), axis);
  auto xv = x.data();
  std::vector<Scalar> out(st.outer * st.inner, Scalar(0));
  for (std::size_t o = 0; o < st.outer; ++o)
    for (std::size_t a = 0; a < st.extent; ++a)
      for (std::size_t i = 0; i < st.inner; ++i)
        out[o * st.inner + i] += xv[(o * st.extent + a) * st.inner + i];
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return x.tape().record(reduced_shape(x.shape(), axis, keepdims), std::move(out), in,
                         [xi, st](Tape& t, std::size_t self) {
                           auto& xn = t.node(xi);
                           if (!xn.requires_grad) return;
                           const auto& g = t.node(self).grad;
                           for (std::size_t o = 0; o < st.outer; ++o)
                             for (std::size_t a = 0; a < st.extent; ++a)
                               for (std::size_t i = 0; i < st.inner; ++i)
                                 xn.grad[(o * st.extent + a) * st.inner + i] += g[o * st.inner + i];
                         });
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdims) {
  const auto extent = axis_strides(x.shape(), axis).extent;
  return scale(sum(x, axis, keepdims), Scalar(1) / static_cast<Scalar>(extent));
}

Tensor logsumexp(const Tensor& x, std::size_t axis, bool keepdims) {
  const auto st = axis_strides(x.shape(), axis);
  auto xv = x.data();
  std::vector<Scalar> out(st.outer * st.inner);
  for (std::size_t o = 0; o < st.outer; ++o)
    for (std::size_t i = 0; i < st.inner; ++i) {
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      for (std::size_t a = 0; a < st.extent; ++a) m = std::max(m, xv[(o * st.extent + a) * st.inner + i]);
      Scalar acc = 0;
      if (std::isfinite(m))
        for (std::size_t a = 0; a < st.extent; ++a) acc += std::exp(xv[(o * st.extent + a) * st.inner + i] - m);
      out[o * st.inner + i] = std::isfinite(m) ? m + std::log(acc) : m;
    }
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return x.tape().record(reduced_shape(x.shape(), axis, keepdims), std::move(out), in,
                         [xi, st](Tape& t, std::size_t self) {
                           auto& xn = t.node(xi);
                           if (!xn.requires_grad) return;
                           const auto& s = t.node(self);
                           for (std::size_t o = 0; o < st.outer; ++o)
                             for (std::size_t a = 0; a < st.extent; ++a)
                               for (std::size_t i = 0; i < st.inner; ++i) {
                                 const std::size_t k = (o * st.extent + a) * st.inner + i;
                                 const std::size_t r = o * st.inner + i;
                                 xn.grad[k] += s.grad[r] * std::exp(xn.value[k] - s.value[r]);
                               }
                         });
}

// ---- structural ----------------------------------------------------------

Tensor broadcast_to(const Tensor& x, Shape shape) {
  Shape src = x.shape();
  if (src.size() > shape.size())
    throw DimensionError("broadcast_to: cannot broadcast " + to_string(src) + " to " + to_string(shape));
  src.insert(src.begin(), shape.size() - src.size(), 1);
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (src[d] != shape[d] && src[d] != 1)
      throw DimensionError("broadcast_to: cannot broadcast " + to_string(x.shape()) + " to " +
                           to_string(shape));
  const std::size_t n = numel(shape), rank = shape.size();
  // Map every output index to its source index.
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> src_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) src_stride[d - 1] = src_stride[d] * src[d];
  std::vector<std::size_t> coord(rank, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < rank; ++d) s += (src[d] == 1 ? 0 : coord[d]) * src_stride[d];
    index[k] = s;
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < shape[d]) break;
      coord[d] = 0;
    }
  }
  auto xv = x.data();
  std::vector<Scalar> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = xv[index[k]];
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return x.tape().record(shape, std::move(out), in, [xi, index = std::move(index)](Tape& t, std::size_t self) {
    auto& xn = t.node(xi);
    if (!xn.requires_grad) return;
    const auto& g = t.node(self).grad;
    for (std::size_t k = 0; k < g.size(); ++k) xn.grad[index[k]] += g[k];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return x.tape().record(shape, x.to_vector(), in, [xi](Tape& t, std::size_t self) {
    auto& xn = t.node(xi);
    if (!xn.requires_grad) return;
    const auto& g = t.node(self).grad;
    for (std::size_t k = 0; k < g.size(); ++k) xn.grad[k] += g[k];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_matrix("slice", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (axis > 1 || begin > end || end > x.dim(axis))
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of shape " + to_string(x.shape()));
  const std::size_t r0 = axis == 0 ? begin : 0, r1 = axis == 0 ? end : rows;
  const std::size_t c0 = axis == 1 ? begin : 0, c1 = axis == 1 ? end : cols;
  auto xv = x.data();
  std::vector<Scalar> out;
  out.reserve((r1 - r0) * (c1 - c0));
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) out.push_back(xv[r * cols + c]);
  const std::size_t xi = x.id();
  Tensor in[] = {x};
  return x.tape().record({r1 - r0, c1 - c0}, std::move(out), in,
                         [xi, r0, r1, c0, c1, cols](Tape& t, std::size_t self) {
                           auto& xn = t.node(xi);
                           if (!xn.requires_grad) return;
                           const auto& g = t.node(self).grad;
                           std::size_t k = 0;
                           for (std::size_t r = r0; r < r1; ++r)
                             for (std::size_t c = c0; c < c1; ++c) xn.grad[r * cols + c] += g[k++];
                         });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis > 1) throw DimensionError("concat axis must be 0 or 1");
  auto& tape = parts[0].tape();
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    require_matrix("concat", p);
    if (axis == 0) {
      if (cols == 0 && rows == 0) cols = p.dim(1);
      if (p.dim(1) != cols)
        throw DimensionError("concat rows: column mismatch at shape " + to_string(p.shape()));
      rows += p.dim(0);
    } else {
      if (cols == 0 && rows == 0) rows = p.dim(0);
      if (p.dim(0) != rows)
        throw DimensionError("concat cols: row mismatch at shape " + to_string(p.shape()));
      cols += p.dim(1);
    }
  }
  std::vector<Scalar> out(rows * cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    auto pv = p.data();
    const std::size_t pr = p.dim(0), pc = p.dim(1);
    for (std::size_t r = 0; r < pr; ++r)
      for (std::size_t c = 0; c < pc; ++c) {
        const std::size_t orow = axis == 0 ? off + r : r, ocol = axis == 1 ? off + c : c;
        out[orow * cols + ocol] = pv[r * pc + c];
      }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += axis == 0 ? pr : pc;
  }
  return tape.record({rows, cols}, std::move(out), parts,
                     [ids, offsets, axis, cols](Tape& t, std::size_t self) {
                       const auto& g = t.node(self).grad;
                       for (std::size_t q = 0; q < ids.size(); ++q) {
                         auto& pn = t.node(ids[q]);
                         if (!pn.requires_grad) continue;
                         const std::size_t pr = pn.shape[0], pc = pn.shape[1];
                         for (std::size_t r = 0; r < pr; ++r)
                           for (std::size_t c = 0; c < pc; ++c) {
                             const std::size_t orow = axis == 0 ? offsets[q] + r : r;
                             const std::size_t ocol = axis == 1 ? offsets[q] + c : c;
                             pn.grad[r * pc + c] += g[orow * cols + ocol];
                           }
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor detach(const Tensor& x) { return x.tape().constant(x.shape(), x.to_vector()); }

Tensor log_softmax(const Tensor& logits) {
  require_matrix("log_softmax", logits);
  return logits - broadcast_to(logsumexp(logits, 1, true), logits.shape());
}

Tensor softmax(const Tensor& logits) { return exp(log_softmax(logits)); }

}  // namespace cpcvae::ad
