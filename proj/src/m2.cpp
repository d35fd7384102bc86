#include "cpcvae/m2.hpp"

#include <cmath>

#include "cpcvae/errors.hpp"

namespace cpcvae {

void M2Config::validate() const {
  if (input_dim == 0 || latent_dim == 0) throw ConfigError("input and latent dims must be positive");
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (!class_prior.empty()) {
    if (class_prior.size() != num_classes) throw ConfigError("class prior length must equal num_classes");
    double total = 0;
    for (double p : class_prior) {
      if (!(p > 0)) throw ConfigError("class prior entries must be positive");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("class prior must sum to 1");
  }
}

namespace {

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

M2Model::M2Model(M2Config cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t L = cfg_.num_classes, C = cfg_.latent_dim;
  if (cfg_.class_prior.empty()) {
    log_prior_.assign(L, -std::log(static_cast<double>(L)));
  } else {
    for (double p : cfg_.class_prior) log_prior_.push_back(std::log(p));
  }
  discriminator_ = Mlp("m2.disc", {widths(cfg_.input_dim, cfg_.discriminator_hidden, L), cfg_.activation}, rng);
  encoder_ = Mlp("m2.enc", {widths(cfg_.input_dim + L, cfg_.encoder_hidden, 2 * C), cfg_.activation}, rng);
  decoder_ = Mlp("m2.dec",
                 {widths(C + L, cfg_.decoder_hidden, likelihood_arity(cfg_.likelihood) * cfg_.input_dim),
                  cfg_.activation},
                 rng);
}

void M2Model::set_log_prior(std::vector<double> log_prior) {
  if (log_prior.size() != cfg_.num_classes) throw DimensionError("log prior length must equal num_classes");
  log_prior_ = std::move(log_prior);
}

Tensor M2Model::discriminator_logits(ad::Tape& tape, const Tensor& x) { return discriminator_.forward(tape, x); }

DiagonalGaussian M2Model::encode(ad::Tape& tape, const Tensor& x, std::span<const int> labels) {
  if (x.rank() != 2 || x.dim(0) != labels.size())
    throw DimensionError("m2 encode: " + std::to_string(labels.size()) + " labels for data " +
                         ad::to_string(x.shape()));
  auto raw = encoder_.forward(tape, ad::concat({x, one_hot(tape, labels, cfg_.num_classes)}, 1));
  const std::size_t c = cfg_.latent_dim;
  return {ad::slice(raw, 1, 0, c), ad::softplus(ad::slice(raw, 1, c, 2 * c))};
}

LikelihoodParams M2Model::decode(ad::Tape& tape, const Tensor& z, std::span<const int> labels) {
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim || z.dim(0) != labels.size())
    throw DimensionError("m2 decode: codes " + ad::to_string(z.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  decoder_calls_ += labels.size();
  auto raw = decoder_.forward(tape, ad::concat({z, one_hot(tape, labels, cfg_.num_classes)}, 1));
  std::vector<Tensor> heads;
  const std::size_t d = cfg_.input_dim;
  for (std::size_t h = 0; h < likelihood_arity(cfg_.likelihood); ++h)
    heads.push_back(ad::slice(raw, 1, h * d, (h + 1) * d));
  return LikelihoodParams::from_raw(cfg_.likelihood, heads);
}

Tensor M2Model::supervised_bound_rows(ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                                      std::size_t num_mc, Rng& rng) {
  if (num_mc == 0) throw DomainError("num_mc must be at least 1");
  auto q = encode(tape, x, labels);
  Tensor recon;
  for (std::size_t m = 0; m < num_mc; ++m) {
    auto lp = likelihood_log_prob(decode(tape, gaussian_rsample(q, rng), labels), x);
    recon = m == 0 ? lp : ad::add(recon, lp);
  }
  if (num_mc > 1) recon = ad::scale(recon, Scalar(1.0 / static_cast<double>(num_mc)));
  std::vector<Scalar> prior(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) prior[i] = Scalar(log_prior_[static_cast<std::size_t>(labels[i])]);
  auto log_py = tape.constant({labels.size()}, std::move(prior));
  return ad::add(ad::sub(recon, gaussian_kl_to_std_normal(q)), log_py);
}

Tensor m2_unsupervised_from_supervised(const Tensor& supervised, const Tensor& logits) {
  if (supervised.shape() != logits.shape() || logits.rank() != 2)
    throw DimensionError("L^U needs matching [B, L] inputs, got " + ad::to_string(supervised.shape()) + " and " +
                         ad::to_string(logits.shape()));
  auto log_q = ad::log_softmax(logits);
  auto q = ad::exp(log_q);
  return ad::sum(ad::mul(q, ad::sub(supervised, log_q)), 1);
}

Tensor M2Model::unsupervised_bound_rows(ad::Tape& tape, const Tensor& x, std::size_t num_mc, Rng& rng) {
  const std::size_t batch = x.dim(0);
  std::vector<Tensor> columns;
  for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
    std::vector<int> labels(batch, static_cast<int>(k));
    columns.push_back(ad::reshape(supervised_bound_rows(tape, x, labels, num_mc, rng), {batch, 1}));
  }
  return m2_unsupervised_from_supervised(ad::concat(columns, 1), discriminator_logits(tape, x));
}

std::vector<double> M2Model::predict_proba(std::span<const double> x, std::size_t rows, std::size_t, Rng&) {
  ad::Tape tape(false);
  auto xt = tape.constant({rows, cfg_.input_dim}, std::vector<Scalar>(x.begin(), x.end()));
  auto probs = ad::softmax(discriminator_logits(tape, xt)).to_vector();
  return {probs.begin(), probs.end()};
}

std::vector<ad::Parameter*> M2Model::parameters() {
  std::vector<ad::Parameter*> out;
  for (Mlp* net : {&discriminator_, &encoder_, &decoder_}) {
    auto p = net->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Tensor m2_supervised_bound(M2Model& m2, ad::Tape& tape, const Tensor& x, std::span<const int> labels,
                           std::size_t num_mc, Rng& rng) {
  return ad::mean(m2.supervised_bound_rows(tape, x, labels, num_mc, rng));
}

Tensor m2_unsupervised_bound(M2Model& m2, ad::Tape& tape, const Tensor& x, std::size_t num_mc, Rng& rng) {
  return ad::mean(m2.unsupervised_bound_rows(tape, x, num_mc, rng));
}

}  // namespace cpcvae
