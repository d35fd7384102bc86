#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpcvae/autodiff.hpp"

namespace cpcvae {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected ADAM on a fixed parameter list. Parameters hold gradients
/// of a loss to minimize; callers maximizing an objective differentiate its
/// negation.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ad::Parameter*> params, AdamOptions opts);

  /// One update from the current Parameter::grad buffers. A non-finite
  /// gradient throws NumericalError naming the parameter, before any update.
  void step();

  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  std::uint64_t steps() const { return t_; }

  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  std::vector<ad::Parameter*> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace cpcvae
