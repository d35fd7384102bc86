#include "cpcvae/objectives.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "cpcvae/errors.hpp"

namespace cpcvae {

void ConstraintMultipliers::validate() const {
  const double weights[] = {lambda, gamma, agg_weight, l2_weight, entropy_weight};
  for (double w : weights)
    if (!std::isfinite(w) || w < 0) throw ConfigError("constraint multipliers must be finite and nonnegative");
  if (!std::isfinite(beta) || !(beta > 0)) throw ConfigError("beta must be finite and positive");
}

Tensor soft_cross_entropy_rows(const Tensor& target_probs, const Tensor& logits) {
  if (target_probs.shape() != logits.shape())
    throw DimensionError("soft cross-entropy: " + ad::to_string(target_probs.shape()) + " vs " +
                         ad::to_string(logits.shape()));
  return ad::neg(ad::sum(ad::mul(target_probs, ad::log_softmax(logits)), 1));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return ad::neg(ad::mean(categorical_log_prob(CategoricalDist{logits}, labels)));
}

Tensor prediction_loss(VaeModel& model, ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                       std::size_t num_mc, Rng& rng) {
  if (num_mc == 0) throw DomainError("num_mc must be at least 1");
  auto q = model.encode(tape, x);
  Tensor acc;
  for (std::size_t m = 0; m < num_mc; ++m) {
    auto loss = cross_entropy(model.predictor_logits(tape, gaussian_rsample(q, rng)), labels);
    acc = m == 0 ? loss : ad::add(acc, loss);
  }
  return num_mc > 1 ? ad::scale(acc, Scalar(1.0 / static_cast<double>(num_mc))) : acc;
}

ConsistencyLogits consistency_logits(VaeModel& model, ad::Tape& tape, const DiagonalGaussian& q, Rng& rng,
                                     const ConsistencyOptions& opts) {
  auto z = gaussian_rsample(q, rng);
  Tensor z_decode = z;
  if (model.spatial()) {
    const std::size_t batch = z.dim(0);
    auto draws = rng.normals(batch * kTransformDims);
    auto z_t = tape.constant({batch, kTransformDims}, std::vector<Scalar>(draws.begin(), draws.end()));
    z_decode = ad::concat({z_t, ad::slice(z, 1, kTransformDims, model.latent_dim())}, 1);
  }
  auto x_bar = likelihood_sample(model.decode(tape, z_decode), rng);
  if (opts.stop_gradient_xbar) x_bar = ad::detach(x_bar);
  auto z_bar = gaussian_rsample(model.encode(tape, x_bar), rng);
  return {model.predictor_logits(tape, z), model.predictor_logits(tape, z_bar)};
}

Tensor consistency_unlabeled(VaeModel& model, ad::Tape& tape, const Tensor& x, Rng& rng,
                             const ConsistencyOptions& opts) {
  auto logits = consistency_logits(model, tape, model.encode(tape, x), rng, opts);
  return ad::mean(soft_cross_entropy_rows(ad::softmax(logits.outer), logits.inner));
}

Tensor consistency_labeled(VaeModel& model, ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                           Rng& rng, const ConsistencyOptions& opts) {
  auto logits = consistency_logits(model, tape, model.encode(tape, x), rng, opts);
  return cross_entropy(logits.inner, labels);
}

namespace {
std::atomic<std::size_t> g_clamp_events{0};
}

std::size_t aggregate_clamp_events() { return g_clamp_events.load(); }

Tensor aggregate_consistency(const Tensor& mean_prediction, std::span<const double> pi) {
  if (mean_prediction.size() != pi.size())
    throw DimensionError("aggregate consistency: prediction " + ad::to_string(mean_prediction.shape()) +
                         " vs target of " + std::to_string(pi.size()) + " classes");
  for (Scalar v : mean_prediction.data())
    if (v < Scalar(kAggregateClamp)) ++g_clamp_events;
  auto target = mean_prediction.tape().constant(mean_prediction.shape(), std::vector<Scalar>(pi.begin(), pi.end()));
  auto log_m = ad::log(ad::clamp_min(mean_prediction, Scalar(kAggregateClamp)));
  return ad::neg(ad::sum(ad::mul(target, log_m)));
}

namespace {

Tensor squared_norm(ad::Tape& tape, std::span<ad::Parameter* const> weights) {
  Tensor total = tape.constant(Scalar(0));
  for (auto* w : weights) total = ad::add(total, ad::sum(ad::square(tape.param(*w))));
  return total;
}

Tensor mean_entropy(const Tensor& logits) {
  return ad::mean(soft_cross_entropy_rows(ad::softmax(logits), logits));
}

std::vector<ad::Parameter*> predictor_weight_params(VaeModel& model) {
  std::vector<ad::Parameter*> out;
  for (std::size_t l = 0; l < model.predictor().num_layers(); ++l) out.push_back(&model.predictor().weight(l));
  return out;
}

Tensor stack_rows(const Tensor& first, const Tensor& second) {
  if (first.dim(0) == 0) return second;
  if (second.dim(0) == 0) return first;
  return ad::concat({first, second}, 0);
}

void check_pair(const Tensor& x_labeled, std::span<const int> labels, const Tensor& x_unlabeled) {
  if (x_labeled.rank() != 2 || x_unlabeled.rank() != 2 || x_labeled.dim(1) != x_unlabeled.dim(1))
    throw DimensionError("labeled " + ad::to_string(x_labeled.shape()) + " and unlabeled " +
                         ad::to_string(x_unlabeled.shape()) + " batches disagree");
  if (x_labeled.dim(0) != labels.size())
    throw DimensionError(std::to_string(labels.size()) + " labels for " + std::to_string(x_labeled.dim(0)) +
                         " labeled rows");
  if (x_labeled.dim(0) + x_unlabeled.dim(0) == 0) throw DimensionError("empty batch");
}

// Shared front half of PC and CPC: encoder, one decoder pass and the predictor
// on the ELBO draw.
struct FrontHalf {
  DiagonalGaussian q;
  Tensor elbo, logits, prediction;
  std::size_t num_labeled = 0;
};

FrontHalf front_half(VaeModel& model, ad::Tape& tape, const Tensor& x_unlabeled, const Tensor& x_labeled,
                     std::span<const int> labels, double beta, Rng& rng, std::size_t num_mc) {
  check_pair(x_labeled, labels, x_unlabeled);
  FrontHalf f;
  f.num_labeled = labels.size();
  auto x = stack_rows(x_labeled, x_unlabeled);
  f.q = model.encode(tape, x);
  Tensor z;
  f.elbo = ad::mean(model.elbo_rows(tape, f.q, x, beta, num_mc, rng, &z));
  f.logits = model.predictor_logits(tape, z);
  f.prediction = f.num_labeled > 0 ? cross_entropy(ad::slice(f.logits, 0, 0, f.num_labeled), labels)
                                   : tape.constant(Scalar(0));
  return f;
}

}  // namespace

Tensor predictor_regularizers(ad::Tape& tape, std::span<ad::Parameter* const> weights, const Tensor& probs,
                              double l2_weight, double entropy_weight) {
  auto ent = ad::mean(ad::neg(ad::sum(ad::mul(probs, ad::log(ad::clamp_min(probs, std::numeric_limits<Scalar>::min()))), 1)));
  return ad::add(ad::scale(squared_norm(tape, weights), Scalar(l2_weight)), ad::scale(ent, Scalar(entropy_weight)));
}

ObjectiveTerms pc_objective(VaeModel& model, ad::Tape& tape, const Tensor& x_unlabeled, const Tensor& x_labeled,
                            std::span<const int> labels, const ConstraintMultipliers& mult, Rng& rng,
                            std::size_t num_mc) {
  auto f = front_half(model, tape, x_unlabeled, x_labeled, labels, mult.beta, rng, num_mc);
  ObjectiveTerms t;
  t.total = ad::sub(f.elbo, ad::scale(f.prediction, Scalar(mult.lambda)));
  t.elbo = f.elbo.item();
  t.prediction = f.prediction.item();
  return t;
}

ObjectiveTerms cpc_objective(VaeModel& model, ad::Tape& tape, const Tensor& x_unlabeled, const Tensor& x_labeled,
                             std::span<const int> labels, const ConstraintMultipliers& mult,
                             std::span<const double> pi, Rng& rng, const ConsistencyOptions& opts,
                             std::size_t num_mc, Rng* consistency_rng) {
  auto f = front_half(model, tape, x_unlabeled, x_labeled, labels, mult.beta, rng, num_mc);
  const std::size_t nl = f.num_labeled, nu = x_unlabeled.dim(0), batch = nl + nu;
  auto zero = tape.constant(Scalar(0));

  auto cons = consistency_logits(model, tape, f.q, consistency_rng ? *consistency_rng : rng, opts);
  Tensor cu = zero, cs = zero, agg = zero, ent = zero;
  if (nu > 0) {
    auto outer_u = ad::slice(cons.outer, 0, nl, batch), inner_u = ad::slice(cons.inner, 0, nl, batch);
    cu = ad::mean(soft_cross_entropy_rows(ad::softmax(outer_u), inner_u));
    auto logits_u = ad::slice(f.logits, 0, nl, batch);
    agg = aggregate_consistency(ad::mean(ad::softmax(logits_u), 0), pi);
    ent = mean_entropy(logits_u);
  }
  if (nl > 0) cs = cross_entropy(ad::slice(cons.inner, 0, 0, nl), labels);
  auto weights = predictor_weight_params(model);
  auto l2 = squared_norm(tape, weights);

  auto total = ad::sub(f.elbo, ad::scale(f.prediction, Scalar(mult.lambda)));
  total = ad::sub(total, ad::scale(ad::add(cu, cs), Scalar(mult.gamma)));
  total = ad::sub(total, ad::scale(agg, Scalar(mult.agg_weight)));
  total = ad::sub(total, ad::scale(l2, Scalar(mult.l2_weight)));
  total = ad::sub(total, ad::scale(ent, Scalar(mult.entropy_weight)));

  ObjectiveTerms t;
  t.total = total;
  t.elbo = f.elbo.item();
  t.prediction = f.prediction.item();
  t.consistency_unlabeled = cu.item();
  t.consistency_labeled = cs.item();
  t.aggregate = agg.item();
  t.l2 = l2.item();
  t.entropy = ent.item();
  return t;
}

ObjectiveTerms predictor_objective(VaeModel& model, ad::Tape& tape, const Tensor& x_labeled,
                                   std::span<const int> labels, double l2_weight, Rng& rng) {
  auto z = ad::detach(gaussian_rsample(model.encode(tape, x_labeled), rng));
  auto ce = cross_entropy(model.predictor_logits(tape, z), labels);
  auto l2 = squared_norm(tape, predictor_weight_params(model));
  ObjectiveTerms t;
  t.total = ad::neg(ad::add(ce, ad::scale(l2, Scalar(l2_weight))));
  t.prediction = ce.item();
  t.l2 = l2.item();
  return t;
}

ObjectiveTerms m2_objective(M2Model& m2, ad::Tape& tape, const Tensor& x_labeled, std::span<const int> labels,
                            const Tensor& x_unlabeled, double alpha, double lambda, Rng& rng,
                            std::size_t num_mc) {
  check_pair(x_labeled, labels, x_unlabeled);
  auto zero = tape.constant(Scalar(0));
  Tensor labeled = zero, unlabeled = zero, log_q = zero, ls = zero;
  if (!labels.empty()) {
    ls = m2_supervised_bound(m2, tape, x_labeled, labels, num_mc, rng);
    labeled = ad::scale(ls, Scalar(lambda));
    // With alpha = 0 the discriminator stays off the labeled tape entirely.
    if (alpha != 0) {
      log_q = ad::mean(categorical_log_prob(CategoricalDist{m2.discriminator_logits(tape, x_labeled)}, labels));
      labeled = ad::add(ad::scale(log_q, Scalar(alpha)), labeled);
    }
  }
  if (x_unlabeled.dim(0) > 0) unlabeled = m2_unsupervised_bound(m2, tape, x_unlabeled, num_mc, rng);
  ObjectiveTerms t;
  t.total = ad::add(labeled, unlabeled);
  t.log_q_labeled = log_q.item();
  t.supervised_bound = ls.item();
  t.unsupervised_bound = unlabeled.item();
  return t;
}

}  // namespace cpcvae
