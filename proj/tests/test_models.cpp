#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cpcvae/errors.hpp"
#include "cpcvae/models.hpp"
#include "support/grad_harness.hpp"
#include "support/oracles.hpp"

using namespace cpcvae;
using ad::Tape;
using ad::Tensor;

namespace {

VaeConfig tiny_config(LikelihoodKind kind = LikelihoodKind::normal) {
  VaeConfig c;
  c.input_dim = 2;
  c.latent_dim = 2;
  c.num_classes = 2;
  c.encoder_hidden = {4};
  c.decoder_hidden = {4};
  c.predictor_hidden = {4};
  c.likelihood = kind;
  return c;
}

void fill(ad::Parameter& p, std::vector<double> v) {
  ASSERT_EQ(p.size(), v.size()) << p.name;
  std::copy(v.begin(), v.end(), p.value.begin());
}

// 1-D latent, 1-D feature, identity activations: q(z|x) = N(a x + c, v) and
// p(x|z) = N(w z + b, s^2), so the ELBO has a closed form.
struct LinearToy {
  VaeModel model;
  explicit LinearToy(Rng& rng) : model(config(), rng) {}

  static VaeConfig config() {
    VaeConfig c;
    c.input_dim = c.latent_dim = 1;
    c.num_classes = 2;
    c.encoder_hidden = c.decoder_hidden = c.predictor_hidden = {1};
    c.activation = Activation::identity;
    return c;
  }

  void set(const oracle::LinearGaussian& g, double a, double c, double v) {
    fill(model.encoder().weight(0), {1});
    fill(model.encoder().bias(0), {0});
    fill(model.encoder().weight(1), {a, 0});
    fill(model.encoder().bias(1), {c, oracle::softplus_inverse(std::sqrt(v))});
    fill(model.decoder().weight(0), {1});
    fill(model.decoder().bias(0), {0});
    fill(model.decoder().weight(1), {g.w, 0});
    fill(model.decoder().bias(1), {g.b, oracle::softplus_inverse(g.s - kDecoderStdFloor)});
  }

  // Mean and standard error of the per-row ELBO estimate at x.
  std::pair<double, double> estimate(double x, std::size_t rows, std::uint64_t seed) {
    Tape t(false);
    Rng rng(seed);
    auto xs = t.constant({rows, 1}, std::vector<ad::Scalar>(rows, x));
    const auto e = model.elbo_rows(t, xs, 1.0, 1, rng).to_vector();
    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(rows);
    double ss = 0;
    for (double v : e) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(rows - 1) / static_cast<double>(rows))};
  }
};

}  // namespace

TEST(Encode, ZeroWeightsGiveBiasPosterior) {
  Rng rng(1);
  VaeModel m(tiny_config(), rng);
  auto& last = m.encoder().weight(m.encoder().num_layers() - 1);
  std::fill(last.value.begin(), last.value.end(), 0);
  fill(m.encoder().bias(m.encoder().num_layers() - 1), {0.3, -0.2, 0.5, -1.0});
  Tape t;
  auto q = m.encode(t, t.constant({3, 2}, {1, 2, 3, 4, 5, 6}));
  ASSERT_EQ(q.mean.shape(), (ad::Shape{3, 2}));
  ASSERT_EQ(q.std.shape(), (ad::Shape{3, 2}));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_DOUBLE_EQ(q.mean.at(r, 0), 0.3);
    EXPECT_DOUBLE_EQ(q.mean.at(r, 1), -0.2);
    EXPECT_NEAR(q.std.at(r, 0), std::log1p(std::exp(0.5)), 1e-12);
    EXPECT_NEAR(q.std.at(r, 1), std::log1p(std::exp(-1.0)), 1e-12);
  }
}

TEST(Encode, WrongWidthThrows) {
  Rng rng(1);
  VaeModel m(tiny_config(), rng);
  Tape t;
  EXPECT_THROW(m.encode(t, t.zeros({2, 3})), DimensionError);
}

TEST(Encode, MeanGradientMatchesFiniteDifferences) {
  Rng rng(2);
  VaeModel m(tiny_config(), rng);
  std::mt19937_64 eng(2);
  const auto x = harness::uniform_values(eng, 10, -1, 1);
  auto objective = [&](Tape& t) { return ad::sum(m.encode(t, t.constant({5, 2}, {x.begin(), x.end()})).mean); };
  const auto r = harness::check_parameter_gradient({&m.encoder().weight(0)}, objective, 1e-4);
  EXPECT_LE(r.ratio, 1.0);
}

TEST(Decode, ArityAndRanges) {
  Rng rng(3);
  std::mt19937_64 eng(3);
  for (auto kind : {LikelihoodKind::normal, LikelihoodKind::noise_normal, LikelihoodKind::bernoulli}) {
    VaeModel m(tiny_config(kind), rng);
    Tape t;
    const auto p = m.decode(t, t.constant({7, 2}, harness::uniform_values(eng, 14, -3, 3)));
    ASSERT_EQ(p.maps.size(), likelihood_arity(kind));
    for (const auto& map : p.maps) EXPECT_EQ(map.shape(), (ad::Shape{7, 2}));
    if (kind == LikelihoodKind::normal)
      for (auto s : p.maps[1].data()) EXPECT_GT(s, 0);
    if (kind == LikelihoodKind::noise_normal)
      for (std::size_t i = 0; i < 14; ++i) {
        EXPECT_GT(p.maps[0][i], 0);
        EXPECT_LT(p.maps[0][i], 1);
        EXPECT_GT(p.maps[1][i], -1);
        EXPECT_LT(p.maps[1][i], 1);
        EXPECT_GT(p.maps[2][i], 0);
      }
  }
}

TEST(Decode, FiniteOnUnitCube) {
  Rng rng(4);
  std::mt19937_64 eng(4);
  for (auto kind : {LikelihoodKind::normal, LikelihoodKind::noise_normal}) {
    VaeModel m(tiny_config(kind), rng);
    Tape t;
    auto q = m.encode(t, t.constant({50, 2}, harness::uniform_values(eng, 100, -1, 1)));
    for (const auto& map : m.decode(t, q.mean).maps)
      for (auto v : map.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Elbo, LinearGaussianExactPosteriorAttainsEvidence) {
  const oracle::LinearGaussian g{1.5, 0.2, 0.7};
  const double x = 1.1;
  Rng rng(5);
  LinearToy toy(rng);
  const double denom = g.w * g.w + g.s * g.s;
  toy.set(g, g.w / denom, -g.w * g.b / denom, g.posterior_var());
  const auto [mean, se] = toy.estimate(x, 10000, 9);
  EXPECT_LE(std::abs(mean - g.log_evidence(x)), 3 * se);
}

TEST(Elbo, LinearGaussianBoundGapMatchesClosedForm) {
  const oracle::LinearGaussian g{1.5, 0.2, 0.7};
  const double x = 1.1, m = g.posterior_mean(x) + 0.4, v = 1.8 * g.posterior_var();
  Rng rng(6);
  LinearToy toy(rng);
  toy.set(g, 0, m, v);
  const auto [mean, se] = toy.estimate(x, 10000, 10);
  const double exact = g.elbo(x, m, v);
  const double gap = g.log_evidence(x) - exact;
  EXPECT_GT(gap, 0);
  EXPECT_LT(mean, g.log_evidence(x));
  EXPECT_LE(std::abs((g.log_evidence(x) - mean) - gap), 3 * se);
}

TEST(Elbo, BetaZeroWithConstantDecoderIsPlainLikelihood) {
  const oracle::LinearGaussian g{0.0, 0.3, 0.9};
  Rng rng(7);
  LinearToy toy(rng);
  toy.set(g, 0.5, 0.1, 0.4);
  Tape t(false);
  Rng draw(1);
  const auto e = toy.model.elbo_rows(t, t.constant({20, 1}, std::vector<ad::Scalar>(20, -0.4)), 0.0, 1, draw);
  const double expected = -0.5 * std::log(2 * std::numbers::pi * 0.81) - (0.7 * 0.7) / (2 * 0.81);
  for (auto v : e.data()) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Elbo, GradientMatchesFiniteDifferencesWithCommonNoise) {
  Rng init(8);
  VaeModel m(tiny_config(), init);
  std::mt19937_64 eng(8);
  const auto x = harness::uniform_values(eng, 12, -1, 1);
  auto objective = [&](Tape& t) {
    Rng rng(42);
    return m.elbo(t, t.constant({6, 2}, {x.begin(), x.end()}), 1.0, 2, rng);
  };
  const auto r = harness::check_parameter_gradient(m.vae_parameters(), objective);
  EXPECT_LE(r.ratio, 1.0);
  EXPECT_GT(r.coordinates, 50u);
}

TEST(Elbo, BatchOrderDoesNotMatterBeyondNoise) {
  Rng init(9);
  VaeModel m(tiny_config(), init);
  std::mt19937_64 eng(9);
  const std::size_t rows = 400;
  auto x = harness::uniform_values(eng, 2 * rows, -1, 1);
  auto estimate = [&](const std::vector<double>& data, std::uint64_t seed) {
    Tape t(false);
    Rng rng(seed);
    return m.elbo(t, t.constant({rows, 2}, {data.begin(), data.end()}), 1.0, 64, rng).item();
  };
  std::vector<double> flipped(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(2 * (rows - 1 - r)), 2,
                flipped.begin() + static_cast<std::ptrdiff_t>(2 * r));
  EXPECT_NEAR(estimate(x, 1), estimate(flipped, 2), 0.05);
}

TEST(PredictLabel, ConstantLogitsGiveUniform) {
  Rng init(10);
  auto cfg = tiny_config();
  cfg.num_classes = 4;
  VaeModel m(cfg, init);
  auto& last = m.predictor().weight(m.predictor().num_layers() - 1);
  std::fill(last.value.begin(), last.value.end(), 0);
  Tape t;
  Rng rng(1);
  auto p = m.predict_label(t, t.constant({3, 2}, {0.1, 0.2, -0.5, 0.9, 0.3, 0.3}), 4, rng);
  for (auto v : p.data()) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(PredictLabel, RowsSumToOne) {
  Rng init(11);
  VaeModel m(tiny_config(), init);
  std::mt19937_64 eng(11);
  Rng rng(2);
  const auto probs = m.predict_proba(harness::uniform_values(eng, 20, -1, 1), 10, 8, rng);
  for (std::size_t r = 0; r < 10; ++r) EXPECT_NEAR(probs[2 * r] + probs[2 * r + 1], 1.0, 1e-9);
}

TEST(PredictLabel, DegeneratePosteriorUsesMean) {
  Rng init(12);
  VaeModel m(tiny_config(), init);
  auto& last = m.encoder().bias(m.encoder().num_layers() - 1);
  auto& w = m.encoder().weight(m.encoder().num_layers() - 1);
  // Zero the std head and push its bias far negative: softplus(-60) ~ 1e-26.
  for (std::size_t i = 0; i < w.shape[0]; ++i)
    for (std::size_t j = 2; j < 4; ++j) w.value[i * 4 + j] = 0;
  last.value[2] = last.value[3] = -60;
  Tape t;
  Rng rng(3);
  auto x = t.constant({2, 2}, {0.4, -0.1, -0.7, 0.8});
  auto p = m.predict_label(t, x, 1, rng);
  auto direct = ad::softmax(m.predictor_logits(t, m.encode(t, x).mean));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], direct[i], 1e-12);
}

TEST(VaeConfigCheck, ArityFollowsLikelihood) {
  EXPECT_EQ(likelihood_arity(LikelihoodKind::normal), 2u);
  EXPECT_EQ(likelihood_arity(LikelihoodKind::noise_normal), 3u);
  EXPECT_EQ(likelihood_arity(LikelihoodKind::bernoulli), 1u);
  EXPECT_THROW(parse_likelihood("poisson"), ConfigError);
}
