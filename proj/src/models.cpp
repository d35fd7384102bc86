#include "cpcvae/models.hpp"

#include <cmath>

#include "cpcvae/errors.hpp"

namespace cpcvae {

LikelihoodKind parse_likelihood(const std::string& name) {
  if (name == "normal") return LikelihoodKind::normal;
  if (name == "noise_normal") return LikelihoodKind::noise_normal;
  if (name == "bernoulli") return LikelihoodKind::bernoulli;
  throw ConfigError("unknown likelihood '" + name + "'");
}

std::string to_string(LikelihoodKind k) {
  switch (k) {
    case LikelihoodKind::normal: return "normal";
    case LikelihoodKind::noise_normal: return "noise_normal";
    case LikelihoodKind::bernoulli: return "bernoulli";
  }
  return "?";
}

std::size_t likelihood_arity(LikelihoodKind k) {
  switch (k) {
    case LikelihoodKind::normal: return 2;
    case LikelihoodKind::noise_normal: return 3;
    case LikelihoodKind::bernoulli: return 1;
  }
  return 0;
}

LikelihoodParams LikelihoodParams::from_raw(LikelihoodKind kind, const std::vector<Tensor>& raw) {
  if (raw.size() != likelihood_arity(kind))
    throw DimensionError(to_string(kind) + " likelihood needs " + std::to_string(likelihood_arity(kind)) +
                         " heads, got " + std::to_string(raw.size()));
  LikelihoodParams p;
  p.kind = kind;
  switch (kind) {
    case LikelihoodKind::normal:
      p.maps = {raw[0], ad::add_scalar(ad::softplus(raw[1]), Scalar(kDecoderStdFloor))};
      break;
    case LikelihoodKind::noise_normal: {
      auto nn = NoiseNormalParams::squash(raw[0], raw[1], raw[2]);
      p.maps = {nn.rho, nn.mu, nn.sigma};
      break;
    }
    case LikelihoodKind::bernoulli:
      p.maps = {raw[0]};
      break;
  }
  return p;
}

namespace {

void check_maps(const LikelihoodParams& p) {
  if (p.maps.size() != likelihood_arity(p.kind))
    throw DimensionError("likelihood parameters have the wrong number of maps");
}

}  // namespace

Tensor likelihood_log_prob(const LikelihoodParams& p, const Tensor& x) {
  check_maps(p);
  if (x.shape() != p.maps[0].shape())
    throw DimensionError("likelihood_log_prob: data " + ad::to_string(x.shape()) + " vs parameters " +
                         ad::to_string(p.maps[0].shape()));
  switch (p.kind) {
    case LikelihoodKind::normal:
      return normal_log_prob(p.maps[0], p.maps[1], x);
    case LikelihoodKind::noise_normal:
      return noise_normal_log_prob(NoiseNormalParams{p.maps[0], p.maps[1], p.maps[2]}, x);
    case LikelihoodKind::bernoulli: {
      auto unit = ad::add_scalar(ad::scale(x, Scalar(0.5)), Scalar(0.5));
      return bernoulli_log_prob(BernoulliDist{p.maps[0]}, unit);
    }
  }
  return {};
}

Tensor likelihood_sample(const LikelihoodParams& p, Rng& rng) {
  check_maps(p);
  const Tensor& first = p.maps[0];
  auto& tape = first.tape();
  switch (p.kind) {
    case LikelihoodKind::normal: {
      auto draws = rng.normals(first.size());
      auto eps = tape.constant(first.shape(), std::vector<Scalar>(draws.begin(), draws.end()));
      return ad::add(p.maps[0], ad::mul(p.maps[1], eps));
    }
    case LikelihoodKind::noise_normal: {
      auto u = rng.uniforms(first.size());
      return noise_normal_rsample(NoiseNormalParams{p.maps[0], p.maps[1], p.maps[2]}, u);
    }
    case LikelihoodKind::bernoulli: {
      std::vector<Scalar> out(first.size());
      auto logits = first.data();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
        out[i] = rng.uniform() < prob ? Scalar(1) : Scalar(-1);
      }
      return tape.constant(first.shape(), std::move(out));
    }
  }
  return {};
}

Tensor likelihood_location(const LikelihoodParams& p) {
  check_maps(p);
  switch (p.kind) {
    case LikelihoodKind::normal: return p.maps[0];
    case LikelihoodKind::noise_normal: return p.maps[1];
    case LikelihoodKind::bernoulli:
      return ad::add_scalar(ad::scale(ad::sigmoid(p.maps[0]), Scalar(2)), Scalar(-1));
  }
  return {};
}

std::vector<const ad::Parameter*> ModelBase::parameters() const {
  auto mut = const_cast<ModelBase*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void ModelBase::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::size_t ModelBase::num_parameters() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

void VaeConfig::validate() const {
  if (input_dim == 0 || latent_dim == 0) throw ConfigError("input and latent dims must be positive");
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (spatial) {
    spatial->validate();
    if (latent_dim <= kTransformDims)
      throw ConfigError("spatial models need latent_dim > 6 (6 transform dims plus appearance)");
    if (image_height * image_width != input_dim)
      throw ConfigError("spatial models need image_height * image_width == input_dim");
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

VaeModel::VaeModel(VaeConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t heads = likelihood_arity(cfg_.likelihood);
  std::size_t decoder_in = cfg_.latent_dim, decoder_width = cfg_.input_dim;
  if (cfg_.spatial) {
    canvas_ = CanvasGeometry::for_image(cfg_.image_height, cfg_.image_width, *cfg_.spatial);
    decoder_in = cfg_.latent_dim - kTransformDims;
    decoder_width = canvas_.canvas_size();
  }
  encoder_ = Mlp("enc", {widths(cfg_.input_dim, cfg_.encoder_hidden, 2 * cfg_.latent_dim), cfg_.activation}, rng);
  decoder_ = Mlp("dec", {widths(decoder_in, cfg_.decoder_hidden, heads * decoder_width), cfg_.activation}, rng);
  predictor_ = Mlp("pred", {widths(predictor_input_dim(), cfg_.predictor_hidden, cfg_.num_classes), cfg_.activation},
                   rng);
}

std::size_t VaeModel::predictor_input_dim() const {
  if (cfg_.spatial && cfg_.spatial->predictor_appearance_only) return cfg_.latent_dim - kTransformDims;
  return cfg_.latent_dim;
}

DiagonalGaussian VaeModel::encode(ad::Tape& tape, const Tensor& x) {
  auto raw = encoder_.forward(tape, x);
  const std::size_t c = cfg_.latent_dim;
  return {ad::slice(raw, 1, 0, c), ad::softplus(ad::slice(raw, 1, c, 2 * c))};
}

std::vector<Tensor> VaeModel::split_heads(const Tensor& raw, std::size_t heads, std::size_t width) const {
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < heads; ++h) out.push_back(ad::slice(raw, 1, h * width, (h + 1) * width));
  return out;
}

LikelihoodParams VaeModel::decode_canvas(ad::Tape& tape, const Tensor& z) {
  if (!cfg_.spatial) throw std::logic_error("decode_canvas needs a spatial model");
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim)
    throw DimensionError("decode expects codes of width " + std::to_string(cfg_.latent_dim) + ", got " +
                         ad::to_string(z.shape()));
  auto appearance = ad::slice(z, 1, kTransformDims, cfg_.latent_dim);
  auto raw = decoder_.forward(tape, appearance);
  return LikelihoodParams::from_raw(cfg_.likelihood,
                                    split_heads(raw, likelihood_arity(cfg_.likelihood), canvas_.canvas_size()));
}

LikelihoodParams VaeModel::decode(ad::Tape& tape, const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim)
    throw DimensionError("decode expects codes of width " + std::to_string(cfg_.latent_dim) + ", got " +
                         ad::to_string(z.shape()));
  if (!cfg_.spatial) {
    auto raw = decoder_.forward(tape, z);
    return LikelihoodParams::from_raw(cfg_.likelihood,
                                      split_heads(raw, likelihood_arity(cfg_.likelihood), cfg_.input_dim));
  }
  auto canvas = decode_canvas(tape, z);
  auto z_t = ad::slice(z, 1, 0, kTransformDims);
  // Scale maps are interpolated as variances.
  const bool has_scale = cfg_.likelihood != LikelihoodKind::bernoulli;
  const std::size_t scale_map = cfg_.likelihood == LikelihoodKind::normal ? 1 : 2;
  LikelihoodParams out;
  out.kind = canvas.kind;
  for (std::size_t k = 0; k < canvas.maps.size(); ++k) {
    if (has_scale && k == scale_map) {
      auto var = spatial_transform(ad::square(canvas.maps[k]), z_t, *cfg_.spatial, canvas_);
      out.maps.push_back(ad::sqrt(var));
    } else {
      out.maps.push_back(spatial_transform(canvas.maps[k], z_t, *cfg_.spatial, canvas_));
    }
  }
  return out;
}

Tensor VaeModel::predictor_logits(ad::Tape& tape, const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim)
    throw DimensionError("predictor expects codes of width " + std::to_string(cfg_.latent_dim) + ", got " +
                         ad::to_string(z.shape()));
  if (predictor_input_dim() != cfg_.latent_dim)
    return predictor_.forward(tape, ad::slice(z, 1, kTransformDims, cfg_.latent_dim));
  return predictor_.forward(tape, z);
}

Tensor VaeModel::elbo_rows(ad::Tape& tape, const Tensor& x, double beta, std::size_t num_mc, Rng& rng,
                           Tensor* z_out) {
  return elbo_rows(tape, encode(tape, x), x, beta, num_mc, rng, z_out);
}

Tensor VaeModel::elbo_rows(ad::Tape& tape, const DiagonalGaussian& q, const Tensor& x, double beta,
                           std::size_t num_mc, Rng& rng, Tensor* z_out) {
  if (num_mc == 0) throw DomainError("num_mc must be at least 1");
  Tensor recon;
  for (std::size_t m = 0; m < num_mc; ++m) {
    auto z = gaussian_rsample(q, rng);
    if (m == 0 && z_out) *z_out = z;
    auto lp = likelihood_log_prob(decode(tape, z), x);
    recon = m == 0 ? lp : ad::add(recon, lp);
  }
  if (num_mc > 1) recon = ad::scale(recon, Scalar(1.0 / static_cast<double>(num_mc)));
  return ad::sub(recon, ad::scale(gaussian_kl_to_std_normal(q), Scalar(beta)));
}

Tensor VaeModel::elbo(ad::Tape& tape, const Tensor& x, double beta, std::size_t num_mc, Rng& rng) {
  return ad::mean(elbo_rows(tape, x, beta, num_mc, rng));
}

Tensor VaeModel::predict_label(ad::Tape& tape, const Tensor& x, std::size_t num_mc, Rng& rng) {
  if (num_mc == 0) throw DomainError("num_mc must be at least 1");
  auto q = encode(tape, x);
  Tensor acc;
  for (std::size_t m = 0; m < num_mc; ++m) {
    auto p = ad::softmax(predictor_logits(tape, gaussian_rsample(q, rng)));
    acc = m == 0 ? p : ad::add(acc, p);
  }
  return num_mc > 1 ? ad::scale(acc, Scalar(1.0 / static_cast<double>(num_mc))) : acc;
}

std::vector<double> VaeModel::predict_proba(std::span<const double> x, std::size_t rows, std::size_t num_mc,
                                            Rng& rng) {
  ad::Tape tape(false);
  auto xt = tape.constant({rows, cfg_.input_dim}, std::vector<Scalar>(x.begin(), x.end()));
  auto probs = predict_label(tape, xt, num_mc, rng).to_vector();
  return {probs.begin(), probs.end()};
}

std::vector<ad::Parameter*> VaeModel::vae_parameters() {
  auto out = encoder_.parameters();
  auto dec = decoder_.parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

std::vector<ad::Parameter*> VaeModel::predictor_parameters() { return predictor_.parameters(); }

std::vector<ad::Parameter*> VaeModel::parameters() {
  auto out = vae_parameters();
  auto pred = predictor_parameters();
  out.insert(out.end(), pred.begin(), pred.end());
  return out;
}

std::vector<const ad::Parameter*> VaeModel::predictor_weights() const { return predictor_.weights(); }

}  // namespace cpcvae
