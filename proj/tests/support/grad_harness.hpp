#pragma once

// Compares tape gradients with central differences for a function of one or
// more input tensors. The scalar probed is sum(f(inputs) * r) for a fixed
// random r, so every output coordinate contributes.

#include <functional>
#include <random>
#include <vector>

#include "cpcvae/autodiff.hpp"
#include "cpcvae/gradcheck.hpp"

namespace harness {

using cpcvae::ad::Scalar;
using cpcvae::ad::Shape;
using cpcvae::ad::Tape;
using cpcvae::ad::Tensor;
using Op = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// `ratio` <= 1 means |analytic - numeric| <= rtol |numeric| + atol everywhere.
struct GradReport {
  double ratio = 0;
  std::size_t coordinates = 0;
};

inline GradReport check_gradient(const Op& op, const std::vector<Shape>& shapes,
                                 const std::vector<std::vector<double>>& values, std::uint64_t seed,
                                 double rtol = 1e-4, double atol = 1e-7, double h = 1e-6) {
  std::vector<double> flat;
  for (const auto& v : values) flat.insert(flat.end(), v.begin(), v.end());

  auto unpack = [&](std::span<const double> x, Tape& tape, bool vars) {
    std::vector<Tensor> ins;
    std::size_t off = 0;
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      const std::size_t n = cpcvae::ad::numel(shapes[k]);
      std::vector<Scalar> v(x.begin() + static_cast<std::ptrdiff_t>(off),
                            x.begin() + static_cast<std::ptrdiff_t>(off + n));
      ins.push_back(vars ? tape.variable(shapes[k], v) : tape.constant(shapes[k], v));
      off += n;
    }
    return ins;
  };

  std::vector<double> weights;
  auto probe = [&](Tape& tape, const std::vector<Tensor>& ins) {
    auto out = op(tape, ins);
    if (weights.empty()) {
      std::mt19937_64 eng(seed);
      std::uniform_real_distribution<double> u(0.5, 1.5);
      weights.resize(out.size());
      for (auto& w : weights) w = u(eng);
    }
    auto r = tape.constant(out.shape(), std::vector<Scalar>(weights.begin(), weights.end()));
    return cpcvae::ad::sum(cpcvae::ad::mul(out, r));
  };

  Tape tape;
  auto ins = unpack(flat, tape, true);
  auto loss = probe(tape, ins);
  tape.backward(loss);
  std::vector<double> analytic;
  for (const auto& t : ins) {
    auto g = t.grad();
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  auto f = [&](std::span<const double> x) {
    Tape t(false);
    return static_cast<double>(probe(t, unpack(x, t, false)).item());
  };
  const auto numeric = cpcvae::finite_difference_gradient(f, flat, h);
  return {cpcvae::max_tolerance_ratio(analytic, numeric, rtol, atol), flat.size()};
}

/// Same comparison over model parameters. `objective` must draw all of its
/// randomness from a stream it seeds itself, so every evaluation sees the
/// same noise.
inline GradReport check_parameter_gradient(const std::vector<cpcvae::ad::Parameter*>& params,
                                           const std::function<Tensor(Tape&)>& objective, double rtol = 1e-3,
                                           double atol = 1e-7, double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(objective(tape));
  }
  std::vector<double> analytic, numeric;
  for (auto* p : params) {
    analytic.insert(analytic.end(), p->grad.begin(), p->grad.end());
    for (auto& v : p->value) {
      const Scalar orig = v;
      v = orig + h;
      Tape up(false);
      const double f_up = objective(up).item();
      v = orig - h;
      Tape down(false);
      const double f_down = objective(down).item();
      v = orig;
      numeric.push_back((f_up - f_down) / (2 * h));
    }
  }
  return {cpcvae::max_tolerance_ratio(analytic, numeric, rtol, atol), analytic.size()};
}

inline std::vector<double> uniform_values(std::mt19937_64& eng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(eng);
  return v;
}

}  // namespace harness
