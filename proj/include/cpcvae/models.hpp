#pragma once

// Generative-model assemblies: the VAE family used by PC and CPC training,
// with optional spatial-transformer decoding, and a common interface the
// trainer uses for evaluation and checkpointing.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpcvae/autodiff.hpp"
#include "cpcvae/distributions.hpp"
#include "cpcvae/nn.hpp"
#include "cpcvae/rng.hpp"
#include "cpcvae/spatial.hpp"

namespace cpcvae {

enum class LikelihoodKind { normal, noise_normal, bernoulli };

LikelihoodKind parse_likelihood(const std::string& name);
std::string to_string(LikelihoodKind k);
/// Parameter maps emitted per pixel: 2 for normal, 3 for Noise-Normal, 1 for Bernoulli.
std::size_t likelihood_arity(LikelihoodKind k);

inline constexpr double kDecoderStdFloor = 1e-4;

/// Decoded likelihood parameters for a batch, each [B, D].
/// normal: (mean, std); noise_normal: (rho, mu, sigma); bernoulli: (logits).
struct LikelihoodParams {
  LikelihoodKind kind = LikelihoodKind::normal;
  std::vector<Tensor> maps;

  /// Builds squashed parameters from raw decoder heads.
  static LikelihoodParams from_raw(LikelihoodKind kind, const std::vector<Tensor>& raw);
};

/// Per-row log p(x | params), shape [B]. Features live in [-1, 1]; the
/// Bernoulli likelihood reads them as (x + 1) / 2.
Tensor likelihood_log_prob(const LikelihoodParams& p, const Tensor& x);
/// Reparameterized draw x ~ p(x | params). Bernoulli draws carry no gradient.
Tensor likelihood_sample(const LikelihoodParams& p, Rng& rng);
/// Point summary of the likelihood (mean, or mu for Noise-Normal), for display.
Tensor likelihood_location(const LikelihoodParams& p);

/// Common surface for evaluation, sampling and checkpointing.
class ModelBase {
 public:
  virtual ~ModelBase() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t num_classes() const = 0;

  /// Class probabilities [B, L] from a grad-free forward pass.
  virtual std::vector<double> predict_proba(std::span<const double> x, std::size_t rows, std::size_t num_mc,
                                            Rng& rng) = 0;

  virtual std::vector<ad::Parameter*> parameters() = 0;
  std::vector<const ad::Parameter*> parameters() const;

  void zero_grad();
  std::size_t num_parameters() const;
};

struct VaeConfig {
  std::size_t input_dim = 2;
  std::size_t latent_dim = 2;
  std::size_t num_classes = 2;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};
  std::vector<std::size_t> predictor_hidden{128};
  Activation activation = Activation::softplus;
  LikelihoodKind likelihood = LikelihoodKind::normal;
  /// Present for image models whose decoder draws on a padded canvas.
  std::optional<SpatialConfig> spatial;
  std::size_t image_height = 0, image_width = 0;

  void validate() const;
};

/// VAE with Gaussian posterior q(z|x), likelihood p(x|z) and a predictor
/// head y_w(z) over the latent code.
class VaeModel : public ModelBase {
 public:
  VaeModel(VaeConfig cfg, Rng& rng);

  const VaeConfig& config() const { return cfg_; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t num_classes() const override { return cfg_.num_classes; }
  std::size_t latent_dim() const { return cfg_.latent_dim; }
  bool spatial() const { return cfg_.spatial.has_value(); }
  /// Width of the predictor input: z, or z_* when the spatial flag restricts it.
  std::size_t predictor_input_dim() const;

  /// q(z|x): mean and softplus std, each [B, C].
  DiagonalGaussian encode(ad::Tape& tape, const Tensor& x);
  /// Likelihood parameters [B, D] for codes z [B, C].
  LikelihoodParams decode(ad::Tape& tape, const Tensor& z);
  /// Canvas-space parameters before warping (spatial models only), each [B, canvas].
  LikelihoodParams decode_canvas(ad::Tape& tape, const Tensor& z);
  const CanvasGeometry& canvas() const { return canvas_; }

  /// Predictor logits [B, L] for codes z [B, C].
  Tensor predictor_logits(ad::Tape& tape, const Tensor& z);

  /// Per-row MC estimate of E_q[log p(x|z)] - beta * KL(q || N(0, I)), shape [B].
  /// `z_out`, when given, receives the first posterior draw.
  Tensor elbo_rows(ad::Tape& tape, const Tensor& x, double beta, std::size_t num_mc, Rng& rng,
                   Tensor* z_out = nullptr);
  /// Same estimate from an already computed posterior q(z|x).
  Tensor elbo_rows(ad::Tape& tape, const DiagonalGaussian& q, const Tensor& x, double beta, std::size_t num_mc,
                   Rng& rng, Tensor* z_out = nullptr);
  /// Mean of elbo_rows over the batch.
  Tensor elbo(ad::Tape& tape, const Tensor& x, double beta, std::size_t num_mc, Rng& rng);

  /// Average of softmax(y_w(z)) over num_mc posterior draws, [B, L].
  Tensor predict_label(ad::Tape& tape, const Tensor& x, std::size_t num_mc, Rng& rng);
  std::vector<double> predict_proba(std::span<const double> x, std::size_t rows, std::size_t num_mc,
                                    Rng& rng) override;

  std::vector<ad::Parameter*> parameters() override;
  std::vector<ad::Parameter*> vae_parameters();
  std::vector<ad::Parameter*> predictor_parameters();
  /// Weight matrices of the predictor, the target of the l2 regularizer.
  std::vector<const ad::Parameter*> predictor_weights() const;

  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  Mlp& predictor() { return predictor_; }

 private:
  std::vector<Tensor> split_heads(const Tensor& raw, std::size_t heads, std::size_t width) const;

  VaeConfig cfg_;
  CanvasGeometry canvas_;
  Mlp encoder_, decoder_, predictor_;
};

}  // namespace cpcvae
