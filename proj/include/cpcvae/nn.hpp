#pragma once

#include <string>
#include <vector>

#include "cpcvae/autodiff.hpp"
#include "cpcvae/rng.hpp"

namespace cpcvae {

enum class Activation { identity, tanh, softplus, leaky_relu, sigmoid };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
ad::Tensor activate(const ad::Tensor& x, Activation a);

/// Layer widths of a fully-connected network, input first and output last.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::softplus;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  /// Throws ConfigError unless there is at least one hidden layer and all widths are positive.
  void validate() const;
};

/// Affine layers with the hidden activation between them; the last layer is linear.
class Mlp {
 public:
  Mlp() = default;
  /// Glorot-uniform weights, zero biases.
  Mlp(const std::string& name, MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  /// Weight matrices only (biases excluded).
  std::vector<const ad::Parameter*> weights() const;

  ad::Parameter& weight(std::size_t layer) { return weights_[layer]; }
  ad::Parameter& bias(std::size_t layer) { return biases_[layer]; }
  std::size_t num_layers() const { return weights_.size(); }

 private:
  MlpSpec spec_;
  std::vector<ad::Parameter> weights_;
  std::vector<ad::Parameter> biases_;
};

}  // namespace cpcvae
