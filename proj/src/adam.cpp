#include "cpcvae/adam.hpp"

#include <cmath>

#include "cpcvae/errors.hpp"

namespace cpcvae {

Adam::Adam(std::vector<ad::Parameter*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  for (const auto* p : params_) {
    if (p->grad.size() != p->value.size())
      throw DimensionError("gradient of '" + p->name + "' does not match its shape");
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      if (!std::isfinite(static_cast<double>(p->grad[i])))
        throw NumericalError("non-finite gradient in parameter '" + p->name + "' at index " + std::to_string(i));
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p.value[i] = static_cast<ad::Scalar>(p.value[i] - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
    }
  }
}

void Adam::restore(std::uint64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw DimensionError("optimizer state does not match the parameter list");
  for (std::size_t k = 0; k < params_.size(); ++k)
    if (m[k].size() != params_[k]->size() || v[k].size() != params_[k]->size())
      throw DimensionError("optimizer moments for '" + params_[k]->name + "' have the wrong size");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace cpcvae
