#include "cpcvae/nn.hpp"

#include <cmath>

#include "cpcvae/errors.hpp"

namespace cpcvae {

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

ad::Tensor activate(const ad::Tensor& x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return ad::tanh(x);
    case Activation::softplus: return ad::softplus(x);
    case Activation::leaky_relu: return ad::leaky_relu(x, ad::kLeakySlope);
    case Activation::sigmoid: return ad::sigmoid(x);
  }
  return x;
}

void MlpSpec::validate() const {
  if (widths.size() < 3) throw ConfigError("MLP needs at least one hidden layer");
  for (auto w : widths)
    if (w == 0) throw ConfigError("MLP layer widths must be positive");
}

Mlp::Mlp(const std::string& name, MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    const std::size_t fan_in = spec_.widths[l], fan_out = spec_.widths[l + 1];
    ad::Parameter w(name + ".w" + std::to_string(l), {fan_in, fan_out});
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.value) v = static_cast<ad::Scalar>((2.0 * rng.uniform() - 1.0) * limit);
    weights_.push_back(std::move(w));
    biases_.emplace_back(name + ".b" + std::to_string(l), ad::Shape{1, fan_out});
  }
}

ad::Tensor Mlp::forward(ad::Tape& tape, const ad::Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != spec_.input_dim())
    throw DimensionError("MLP expects input width " + std::to_string(spec_.input_dim()) + ", got shape " +
                         ad::to_string(x.shape()));
  ad::Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto pre = ad::matmul(h, tape.param(weights_[l]));
    pre = ad::add(pre, ad::broadcast_to(tape.param(biases_[l]), pre.shape()));
    h = l + 1 < weights_.size() ? activate(pre, spec_.activation) : pre;
  }
  return h;
}

std::vector<ad::Parameter*> Mlp::parameters() {
  std::vector<ad::Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const ad::Parameter*> Mlp::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const ad::Parameter*> Mlp::weights() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& w : weights_) out.push_back(&w);
  return out;
}

}  // namespace cpcvae
