#pragma once

// Training objectives for the VAE family and M2. Every objective is a scalar
// to maximize. Batch sums are taken as per-set means: ELBO over all rows,
// prediction and labeled-consistency terms over labeled rows, unlabeled
// terms over unlabeled rows.

#include <span>
#include <vector>

#include "cpcvae/m2.hpp"
#include "cpcvae/models.hpp"

namespace cpcvae {

struct ConstraintMultipliers {
  double lambda = 25.0;
  double gamma = 4.25 * 25.0;
  double agg_weight = 0.1 * 25.0;
  double l2_weight = 1.0;
  double entropy_weight = 0.5 * 25.0;
  double beta = 1.0;

  /// Throws ConfigError unless all weights are finite and nonnegative and beta > 0.
  void validate() const;
};

struct ConsistencyOptions {
  /// Block gradients through the reconstruction x_bar.
  bool stop_gradient_xbar = false;
};

/// Scalar objective plus the value of each term it was assembled from.
struct ObjectiveTerms {
  Tensor total;
  double elbo = 0;
  double prediction = 0;
  double consistency_unlabeled = 0;
  double consistency_labeled = 0;
  double aggregate = 0;
  double l2 = 0;       // ||w||^2, unweighted
  double entropy = 0;  // mean predictive entropy, unweighted
  // M2 terms
  double log_q_labeled = 0;
  double supervised_bound = 0;
  double unsupervised_bound = 0;
};

/// Mean categorical cross-entropy of logits [B, L] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Per-row -sum_y p(y) log softmax(logits)_y for probability rows p.
Tensor soft_cross_entropy_rows(const Tensor& target_probs, const Tensor& logits);

/// P(x, y) = E_q(z|x)[CE(y, y_w(z))], averaged over num_mc draws and the batch.
Tensor prediction_loss(VaeModel& model, ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                       std::size_t num_mc, Rng& rng);

/// Logits pair (y_w(z), y_w(z_bar)) from the nested draw z ~ q(z|x),
/// x_bar ~ p(x|z), z_bar ~ q(z|x_bar). Spatial models decode with z_t
/// drawn from the prior.
struct ConsistencyLogits {
  Tensor outer;
  Tensor inner;
};
ConsistencyLogits consistency_logits(VaeModel& model, ad::Tape& tape, const DiagonalGaussian& q, Rng& rng,
                                     const ConsistencyOptions& opts);

/// C^U: mean over rows of H(y_w(z), y_w(z_bar)).
Tensor consistency_unlabeled(VaeModel& model, ad::Tape& tape, const Tensor& x, Rng& rng,
                             const ConsistencyOptions& opts = {});
/// C^S: mean over rows of CE(y, y_w(z_bar)).
Tensor consistency_labeled(VaeModel& model, ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                           Rng& rng, const ConsistencyOptions& opts = {});

inline constexpr double kAggregateClamp = 1e-12;

/// H(pi, m) = -sum_y pi_y log max(m_y, 1e-12) for a mean prediction m of
/// shape [L] or [1, L].
Tensor aggregate_consistency(const Tensor& mean_prediction, std::span<const double> pi);
/// Number of aggregate-consistency entries clamped so far in this process.
std::size_t aggregate_clamp_events();

/// l2_weight * ||w||^2 + entropy_weight * mean_rows H(probs).
Tensor predictor_regularizers(ad::Tape& tape, std::span<ad::Parameter* const> weights, const Tensor& probs,
                              double l2_weight, double entropy_weight);

/// ELBO - lambda * P over the concatenated batch [labeled; unlabeled].
ObjectiveTerms pc_objective(VaeModel& model, ad::Tape& tape, const Tensor& x_unlabeled, const Tensor& x_labeled,
                            std::span<const int> labels, const ConstraintMultipliers& mult, Rng& rng,
                            std::size_t num_mc = 1);

/// ((((ELBO - lambda P) - gamma (C^U + C^S)) - agg * l_A) - l2 * ||w||^2) - ent * H.
/// Draws for the ELBO come first, so with gamma = agg = l2 = ent = 0 the
/// result equals pc_objective bitwise on the same stream. The nested
/// consistency draws use `consistency_rng` when given, which leaves `rng`
/// advancing exactly as it would under pc_objective.
ObjectiveTerms cpc_objective(VaeModel& model, ad::Tape& tape, const Tensor& x_unlabeled, const Tensor& x_labeled,
                             std::span<const int> labels, const ConstraintMultipliers& mult,
                             std::span<const double> pi, Rng& rng, const ConsistencyOptions& opts = {},
                             std::size_t num_mc = 1, Rng* consistency_rng = nullptr);

/// -(CE(y, y_w(z)) + l2 * ||w||^2) with z ~ q(z|x) detached, so only the
/// predictor receives gradients. Second phase of the VAE-then-MLP baseline.
ObjectiveTerms predictor_objective(VaeModel& model, ad::Tape& tape, const Tensor& x_labeled,
                                   std::span<const int> labels, double l2_weight, Rng& rng);

/// (alpha * log q(y|x) + lambda * L^S) over labeled rows plus L^U over unlabeled rows.
ObjectiveTerms m2_objective(M2Model& m2, ad::Tape& tape, const Tensor& x_labeled, std::span<const int> labels,
                            const Tensor& x_unlabeled, double alpha, double lambda, Rng& rng,
                            std::size_t num_mc = 1);

}  // namespace cpcvae
