#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpcvae/data.hpp"
#include "cpcvae/errors.hpp"
#include "cpcvae/objectives.hpp"
#include "support/grad_harness.hpp"

using namespace cpcvae;
using ad::Tape;
using ad::Tensor;

namespace {

VaeConfig toy(LikelihoodKind kind = LikelihoodKind::normal, std::size_t classes = 2) {
  VaeConfig c;
  c.input_dim = 2;
  c.latent_dim = 2;
  c.num_classes = classes;
  c.encoder_hidden = c.decoder_hidden = c.predictor_hidden = {4};
  c.likelihood = kind;
  return c;
}

void zero_last_weight(Mlp& net) {
  auto& w = net.weight(net.num_layers() - 1);
  std::fill(w.value.begin(), w.value.end(), 0);
}

void set_bias(Mlp& net, std::vector<double> b) {
  auto& p = net.bias(net.num_layers() - 1);
  ASSERT_EQ(p.size(), b.size());
  std::copy(b.begin(), b.end(), p.value.begin());
}

double entropy(std::vector<double> logits) {
  double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
  for (double l : logits) z += std::exp(l - mx);
  double h = 0;
  for (double l : logits) {
    const double lp = l - mx - std::log(z);
    h -= std::exp(lp) * lp;
  }
  return h;
}

// Identity-activation autoencoder that copies x through z (posterior std
// ~1e-26, decoder std at its 1e-4 floor).
VaeModel copying_model(Rng& rng) {
  auto c = toy();
  c.encoder_hidden = c.decoder_hidden = {2};
  c.activation = Activation::identity;
  VaeModel m(c, rng);
  for (Mlp* net : {&m.encoder(), &m.decoder()}) {
    auto& w0 = net->weight(0);
    std::fill(w0.value.begin(), w0.value.end(), 0);
    w0.value[0] = w0.value[3] = 1;
    std::fill(net->bias(0).value.begin(), net->bias(0).value.end(), 0);
    auto& w1 = net->weight(1);
    std::fill(w1.value.begin(), w1.value.end(), 0);
    w1.value[0] = w1.value[5] = 1;  // [2, 4]: identity into the mean head
    set_bias(*net, {0, 0, -60, -60});
  }
  return m;
}

struct Batch {
  std::vector<ad::Scalar> xl, xu;
  std::vector<int> y;
};

Batch moon_batch(std::size_t nl, std::size_t nu, std::uint64_t seed) {
  const auto moons = make_half_moons(2 * (nl + nu), 0.1, seed);
  Batch b;
  for (std::size_t i = 0; i < nl; ++i) {
    const std::size_t r = 2 * i + (i % 2);
    b.xl.insert(b.xl.end(), moons.x.row(r).begin(), moons.x.row(r).end());
    b.y.push_back(moons.y[r]);
  }
  for (std::size_t i = 0; i < nu; ++i) {
    const auto row = moons.x.row(2 * (nl + i));
    b.xu.insert(b.xu.end(), row.begin(), row.end());
  }
  return b;
}

ConstraintMultipliers zeros() {
  ConstraintMultipliers m;
  m.lambda = m.gamma = m.agg_weight = m.l2_weight = m.entropy_weight = 0;
  return m;
}

const std::vector<double> kUniform2{0.5, 0.5};

}  // namespace

TEST(CrossEntropy, OneHotAndUniform) {
  Tape t;
  const std::vector<int> y{2, 0};
  EXPECT_NEAR(cross_entropy(t.constant({2, 3}, {-80, -80, 80, 80, -80, -80}), y).item(), 0.0, 1e-12);
  std::vector<int> y10{7};
  EXPECT_NEAR(cross_entropy(t.zeros({1, 10}), y10).item(), std::log(10.0), 1e-12);
}

TEST(PredictionLoss, EncoderGradientMatchesFiniteDifferences) {
  Rng init(1);
  VaeModel m(toy(), init);
  const auto b = moon_batch(4, 0, 1);
  auto objective = [&](Tape& t) {
    Rng rng(7);
    return prediction_loss(m, t, t.constant({4, 2}, b.xl), b.y, 2, rng);
  };
  const auto r = harness::check_parameter_gradient(m.encoder().parameters(), objective);
  EXPECT_LE(r.ratio, 1.0);
  double norm = 0;
  for (auto* p : m.encoder().parameters())
    for (auto g : p->grad) norm += g * g;
  EXPECT_GT(norm, 0);
}

TEST(PcObjective, LambdaZeroIsTheElbo) {
  Rng init(2);
  VaeModel m(toy(), init);
  const auto b = moon_batch(3, 5, 2);
  auto mult = zeros();
  Tape t;
  Rng r1(4), r2(4);
  auto xl = t.constant({3, 2}, b.xl), xu = t.constant({5, 2}, b.xu);
  const auto pc = pc_objective(m, t, xu, xl, b.y, mult, r1);
  const auto elbo = m.elbo(t, ad::concat({xl, xu}, 0), 1.0, 1, r2);
  EXPECT_EQ(pc.total.item(), elbo.item());
}

TEST(PcObjective, GapIsLinearInLambda) {
  Rng init(3);
  VaeModel m(toy(), init);
  const auto b = moon_batch(3, 5, 3);
  auto mult = zeros();
  Tape t;
  auto xl = t.constant({3, 2}, b.xl), xu = t.constant({5, 2}, b.xu);
  auto run = [&](double lambda) {
    mult.lambda = lambda;
    Rng rng(9);
    const auto terms = pc_objective(m, t, xu, xl, b.y, mult, rng);
    return terms.elbo - terms.total.item();
  };
  EXPECT_NEAR(run(2.0), 2 * run(1.0), 1e-12);
  EXPECT_GT(run(1.0), 0);
}

TEST(ConsistencyUnlabeled, ConstantPredictorGivesItsEntropy) {
  Rng init(4);
  VaeModel m(toy(LikelihoodKind::normal, 3), init);
  zero_last_weight(m.predictor());
  set_bias(m.predictor(), {0.2, -0.4, 1.1});
  Tape t;
  Rng rng(1);
  const auto b = moon_batch(0, 6, 4);
  EXPECT_NEAR(consistency_unlabeled(m, t, t.constant({6, 2}, b.xu), rng).item(), entropy({0.2, -0.4, 1.1}), 1e-12);
}

TEST(ConsistencyUnlabeled, ConfidentAgreementIsZero) {
  Rng init(5);
  VaeModel m(toy(), init);
  zero_last_weight(m.predictor());
  set_bias(m.predictor(), {50, -50});
  Tape t;
  Rng rng(2);
  const auto b = moon_batch(0, 6, 5);
  EXPECT_NEAR(consistency_unlabeled(m, t, t.constant({6, 2}, b.xu), rng).item(), 0.0, 1e-12);
}

TEST(ConsistencyUnlabeled, CopyingAutoencoderGivesPredictionEntropy) {
  Rng init(6);
  auto m = copying_model(init);
  Tape t;
  Rng rng(3);
  const auto b = moon_batch(0, 8, 6);
  auto x = t.constant({8, 2}, b.xu);
  const double cu = consistency_unlabeled(m, t, x, rng).item();
  const auto logits = m.predictor_logits(t, x).to_vector();
  double expected = 0;
  for (std::size_t r = 0; r < 8; ++r) expected += entropy({logits[2 * r], logits[2 * r + 1]}) / 8;
  EXPECT_NEAR(cu, expected, 1e-3);
}

TEST(ConsistencyLabeled, OneHotUniformAndCopyLimit) {
  Rng init(7);
  VaeModel m(toy(LikelihoodKind::normal, 10), init);
  zero_last_weight(m.predictor());
  Tape t;
  Rng rng(4);
  const std::vector<int> y{3, 9};
  auto x = t.constant({2, 2}, {0.1, 0.2, 0.3, 0.4});
  EXPECT_NEAR(consistency_labeled(m, t, x, y, rng).item(), std::log(10.0), 1e-12);
  std::vector<double> bias(10, -60);
  bias[3] = 60;
  set_bias(m.predictor(), bias);
  const std::vector<int> y3{3, 3};
  Tape t2;  // parameter leaves are captured once per tape
  EXPECT_NEAR(consistency_labeled(m, t2, t2.constant({2, 2}, {0.1, 0.2, 0.3, 0.4}), y3, rng).item(), 0.0, 1e-12);

  Rng init2(8);
  auto copy = copying_model(init2);
  const auto b = moon_batch(6, 0, 8);
  auto xl = t.constant({6, 2}, b.xl);
  Rng r1(5), r2(6);
  EXPECT_NEAR(consistency_labeled(copy, t, xl, b.y, r1).item(), prediction_loss(copy, t, xl, b.y, 1, r2).item(),
              1e-3);
}

TEST(Aggregate, HandValuesAndClamp) {
  Tape t;
  EXPECT_NEAR(aggregate_consistency(t.constant({2}, {0.75, 0.25}), kUniform2).item(), 0.836988, 1e-6);
  const std::vector<double> pi10(10, 0.1);
  EXPECT_NEAR(aggregate_consistency(t.full({10}, 0.1), pi10).item(), std::log(10.0), 1e-12);
  const auto before = aggregate_clamp_events();
  const double collapsed = aggregate_consistency(t.constant({1, 2}, {1.0, 0.0}), kUniform2).item();
  EXPECT_GE(collapsed, 0.5 * std::log(1e12) - 1e-9);
  EXPECT_GT(aggregate_clamp_events(), before);
  EXPECT_THROW(aggregate_consistency(t.constant({3}, {0.2, 0.3, 0.5}), kUniform2), DimensionError);
}

TEST(Aggregate, GibbsInequality) {
  std::mt19937_64 eng(9);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pi(4), m(4);
    double sp = 0, sm = 0;
    for (int k = 0; k < 4; ++k) sp += pi[k] = u(eng), sm += m[k] = u(eng);
    double h = 0;
    for (int k = 0; k < 4; ++k) {
      pi[k] /= sp;
      m[k] /= sm;
      h -= pi[k] * std::log(pi[k]);
    }
    Tape t;
    EXPECT_GE(aggregate_consistency(t.constant({4}, {m.begin(), m.end()}), pi).item(), h - 1e-12);
    EXPECT_NEAR(aggregate_consistency(t.constant({4}, {pi.begin(), pi.end()}), pi).item(), h, 1e-12);
  }
}

TEST(Aggregate, GradientMatchesFiniteDifferences) {
  std::mt19937_64 eng(10);
  const std::vector<double> pi{0.2, 0.3, 0.5};
  const harness::Op op = [&](Tape&, const std::vector<Tensor>& in) {
    return aggregate_consistency(ad::mean(ad::softmax(in[0]), 0), pi);
  };
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = harness::check_gradient(op, {{5, 3}}, {harness::uniform_values(eng, 15, -2, 2)},
                                           static_cast<std::uint64_t>(trial));
    EXPECT_LE(r.ratio, 1.0);
  }
}

TEST(Regularizers, HandValues) {
  Tape t;
  ad::Parameter w("w", {1, 1}, 2.0);
  std::vector<ad::Parameter*> ws{&w};
  EXPECT_NEAR(predictor_regularizers(t, ws, t.constant({1, 2}, {1, 0}), 1.0, 1.0).item(), 4.0, 1e-12);
  w.value[0] = 0;
  Tape t2;
  EXPECT_NEAR(predictor_regularizers(t2, ws, t2.constant({2, 2}, {1, 0, 0, 1}), 1.0, 1.0).item(), 0.0, 1e-12);
  EXPECT_NEAR(predictor_regularizers(t, ws, t.full({3, 10}, 0.1), 0.0, 1.0).item(), std::log(10.0), 1e-12);
}

TEST(CpcObjective, ReducesToPcWhenExtraTermsVanish) {
  Rng init(11);
  VaeModel m(toy(), init);
  const auto b = moon_batch(3, 5, 11);
  auto mult = zeros();
  mult.lambda = 25;
  Tape t;
  auto xl = t.constant({3, 2}, b.xl), xu = t.constant({5, 2}, b.xu);
  Rng r1(12), r2(12);
  const auto pc = pc_objective(m, t, xu, xl, b.y, mult, r1);
  const auto cpc = cpc_objective(m, t, xu, xl, b.y, mult, kUniform2, r2);
  EXPECT_EQ(pc.total.item(), cpc.total.item());
  mult.lambda = 0;
  Rng r3(12);
  EXPECT_EQ(cpc_objective(m, t, xu, xl, b.y, mult, kUniform2, r3).total.item(), pc.elbo);
}

TEST(CpcObjective, TermsCombineLinearly) {
  Rng init(13);
  VaeModel m(toy(), init);
  const auto b = moon_batch(4, 4, 13);
  Tape t;
  auto xl = t.constant({4, 2}, b.xl), xu = t.constant({4, 2}, b.xu);
  ConstraintMultipliers mult;
  Rng r1(14), r2(14);
  const auto full = cpc_objective(m, t, xu, xl, b.y, mult, kUniform2, r1);
  const auto base = cpc_objective(m, t, xu, xl, b.y, zeros(), kUniform2, r2);
  const double assembled = base.total.item() - mult.lambda * full.prediction -
                           mult.gamma * (full.consistency_unlabeled + full.consistency_labeled) -
                           mult.agg_weight * full.aggregate - mult.l2_weight * full.l2 -
                           mult.entropy_weight * full.entropy;
  EXPECT_NEAR(full.total.item(), assembled, 1e-9);
  EXPECT_EQ(full.elbo, base.elbo);
  for (double v : {full.prediction, full.consistency_unlabeled, full.consistency_labeled, full.aggregate, full.l2,
                   full.entropy})
    EXPECT_GE(v, 0);
}

TEST(CpcObjective, GradientMatchesFiniteDifferences) {
  for (auto kind : {LikelihoodKind::normal, LikelihoodKind::noise_normal}) {
    Rng init(15);
    VaeModel m(toy(kind), init);
    // Noise-Normal needs data inside [-1, 1].
    std::mt19937_64 eng(15);
    Batch b{harness::uniform_values(eng, 4, -0.9, 0.9), harness::uniform_values(eng, 6, -0.9, 0.9), {0, 1}};
    ConstraintMultipliers mult;
    auto objective = [&](Tape& t) {
      Rng rng(21);
      return cpc_objective(m, t, t.constant({3, 2}, b.xu), t.constant({2, 2}, b.xl), b.y, mult, kUniform2, rng)
          .total;
    };
    const auto r = harness::check_parameter_gradient(m.parameters(), objective);
    EXPECT_LE(r.ratio, 1.0) << to_string(kind);
  }
}

TEST(CpcObjective, FiniteWithNonzeroGradientAtInit) {
  Rng init(16);
  VaeModel m(VaeConfig{}, init);
  const auto b = moon_batch(32, 32, 16);
  Tape t;
  Rng rng(1);
  const auto terms = cpc_objective(m, t, t.constant({32, 2}, b.xu), t.constant({32, 2}, b.xl), b.y,
                                   ConstraintMultipliers{}, kUniform2, rng);
  ASSERT_TRUE(std::isfinite(terms.total.item()));
  m.zero_grad();
  t.backward(terms.total);
  double norm = 0;
  for (auto* p : m.parameters())
    for (auto g : p->grad) norm += g * g;
  EXPECT_GT(norm, 0);
}

TEST(PredictorObjective, EncoderAndDecoderGetNoGradient) {
  Rng init(17);
  VaeModel m(toy(), init);
  const auto b = moon_batch(4, 0, 17);
  Tape t;
  Rng rng(1);
  const auto terms = predictor_objective(m, t, t.constant({4, 2}, b.xl), b.y, 1.0, rng);
  m.zero_grad();
  t.backward(terms.total);
  for (auto* p : m.vae_parameters())
    for (auto g : p->grad) EXPECT_EQ(g, 0.0) << p->name;
  double norm = 0;
  for (auto* p : m.predictor_parameters())
    for (auto g : p->grad) norm += g * g;
  EXPECT_GT(norm, 0);
}

TEST(Multipliers, ValidateRejectsNegativeOrBadBeta) {
  ConstraintMultipliers m;
  m.gamma = -1;
  EXPECT_THROW(m.validate(), ConfigError);
  m = {};
  m.beta = 0;
  EXPECT_THROW(m.validate(), ConfigError);
  m = {};
  EXPECT_NO_THROW(m.validate());
}
