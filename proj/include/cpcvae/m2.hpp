#pragma once

// The M2 semi-supervised VAE baseline: label y is a latent class variable,
// marginalized exactly on unlabeled data.

#include <vector>

#include "cpcvae/models.hpp"

namespace cpcvae {

struct M2Config {
  std::size_t input_dim = 2;
  std::size_t latent_dim = 2;
  std::size_t num_classes = 2;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};
  std::vector<std::size_t> discriminator_hidden{64, 64};
  Activation activation = Activation::softplus;
  LikelihoodKind likelihood = LikelihoodKind::normal;
  /// Class prior pi; empty means uniform.
  std::vector<double> class_prior;

  void validate() const;
};

/// Generative model p(y) p(z) p(x|y,z) with inference networks q(y|x) and
/// q(z|x,y). The three networks are separate so the discriminator only sees
/// labeled data through the alpha term.
class M2Model : public ModelBase {
 public:
  M2Model(M2Config cfg, Rng& rng);

  const M2Config& config() const { return cfg_; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t num_classes() const override { return cfg_.num_classes; }
  const std::vector<double>& log_prior() const { return log_prior_; }
  void set_log_prior(std::vector<double> log_prior);

  /// Discriminator logits for q(y|x), [B, L].
  Tensor discriminator_logits(ad::Tape& tape, const Tensor& x);
  /// q(z|x,y) for the given labels.
  DiagonalGaussian encode(ad::Tape& tape, const Tensor& x, std::span<const int> labels);
  LikelihoodParams decode(ad::Tape& tape, const Tensor& z, std::span<const int> labels);

  /// Per-row L^S(x, y) = E_q[log p(x|y,z)] - KL(q(z|x,y) || p(z)) + log pi_y, shape [B].
  Tensor supervised_bound_rows(ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                               std::size_t num_mc, Rng& rng);
  /// Per-row L^U(x): exact sum over all L classes, shape [B].
  Tensor unsupervised_bound_rows(ad::Tape& tape, const Tensor& x, std::size_t num_mc, Rng& rng);

  std::vector<double> predict_proba(std::span<const double> x, std::size_t rows, std::size_t num_mc,
                                    Rng& rng) override;
  std::vector<ad::Parameter*> parameters() override;
  std::vector<ad::Parameter*> discriminator_parameters() { return discriminator_.parameters(); }

  /// Number of example rows passed through the decoder since the last reset.
  std::size_t decoder_calls() const { return decoder_calls_; }
  void reset_decoder_calls() { decoder_calls_ = 0; }

 private:
  M2Config cfg_;
  std::vector<double> log_prior_;
  Mlp discriminator_, encoder_, decoder_;
  std::size_t decoder_calls_ = 0;
};

/// sum_y q(y|x) (L^S(x, y) - log q(y|x)) per row, given L^S as a [B, L]
/// matrix and discriminator logits [B, L].
Tensor m2_unsupervised_from_supervised(const Tensor& supervised, const Tensor& logits);

/// Scalar means over the batch.
Tensor m2_supervised_bound(M2Model& m2, ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                           std::size_t num_mc, Rng& rng);
Tensor m2_unsupervised_bound(M2Model& m2, ad::Tape& tape, const Tensor& x, std::size_t num_mc, Rng& rng);

}  // namespace cpcvae
