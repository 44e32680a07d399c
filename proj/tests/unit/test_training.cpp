#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "diffqg/autodiff.hpp"
#include "diffqg/training.hpp"
#include "fixtures.hpp"

using namespace diffqg;

namespace {

TrainConfig adam_cfg(double lr = 1e-4) {
  TrainConfig c;
  c.lr = lr;
  return c;
}

/// One layer, 1x1 kernel: θ = {w, b}.
CnnParams scalar_net(double w, double b) {
  CnnParams p = fixtures::small_cnn(0, 1, 1, 1);
  p.layers[0].weights = {w};
  p.layers[0].bias = {b};
  return p;
}

struct TinyData {
  std::vector<SampleSet> sets;
  Dynamics les;
};

/// Two short filtered-DNS trajectories on 32² → 16² (δ = 2).
TinyData tiny_data(int states = 11) {
  TinyData d;
  Dynamics dns;
  dns.params = {5e-3, 2e-2, 5e-3};
  const FilterSpec spec = FilterSpec::make(32, 2);
  for (std::uint64_t seed : {3u, 4u}) {
    const Trajectory tr = simulate({fixtures::random_state(Grid(32), seed, 10, 2.0), 0.0}, 2 * (states - 1), dns, 2);
    d.sets.push_back(extract_samples(tr, spec, "seed" + std::to_string(seed)));
  }
  d.les = dns;
  d.les.params.dt = 2 * dns.params.dt;
  return d;
}

std::vector<const Sample*> pointers(const SampleSet& s) {
  std::vector<const Sample*> out;
  for (const Sample& x : s.samples) out.push_back(&x);
  return out;
}

}  // namespace

// --- Adam ------------------------------------------------------------------------------

TEST(Adam, FirstStepFromZero) {
  CnnParams p = scalar_net(0.0, 0.0);
  AdamState s = AdamState::for_params(p);
  const TrainConfig cfg = adam_cfg();
  ASSERT_TRUE(adam_update(p, {{1.0}, {1.0}}, s, cfg));
  // m̂ = 1, v̂ = 1: Δθ = −lr / (1 + eps).
  const double expect = -1e-4 / (1.0 + 1e-8);
  EXPECT_DOUBLE_EQ(p.layers[0].weights[0], expect);
  EXPECT_NEAR(p.layers[0].weights[0], -1.0e-4, 1e-11);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientLeavesThetaUnchanged) {
  CnnParams p = scalar_net(0.3, -0.2);
  AdamState s = AdamState::for_params(p);
  ASSERT_TRUE(adam_update(p, {{0.0}, {0.0}}, s, adam_cfg()));
  EXPECT_EQ(p.layers[0].weights[0], 0.3);
  EXPECT_EQ(p.layers[0].bias[0], -0.2);
}

TEST(Adam, TwoStepsMatchHandComputation) {
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g1 = 2.0, g2 = -0.5;
  double theta = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }
  CnnParams p = scalar_net(0.7, 0.0);
  AdamState s = AdamState::for_params(p);
  adam_update(p, {{g1}, {0.0}}, s, adam_cfg(lr));
  adam_update(p, {{g2}, {0.0}}, s, adam_cfg(lr));
  EXPECT_NEAR(p.layers[0].weights[0], theta, 1e-15);
  // Constant gradients give constant steps of −lr/(1+eps).
  CnnParams q = scalar_net(0.0, 0.0);
  AdamState sq = AdamState::for_params(q);
  adam_update(q, {{1.0}, {1.0}}, sq, adam_cfg(lr));
  adam_update(q, {{1.0}, {1.0}}, sq, adam_cfg(lr));
  EXPECT_NEAR(q.layers[0].weights[0], -2 * lr / (1 + eps), 1e-15);
}

TEST(Adam, NonFiniteGradientIsSkipped) {
  CnnParams p = scalar_net(0.3, 0.1);
  AdamState s = AdamState::for_params(p);
  adam_update(p, {{1.0}, {1.0}}, s, adam_cfg());
  const CnnParams before = p;
  const AdamState sb = s;
  EXPECT_FALSE(adam_update(p, {{std::numeric_limits<double>::quiet_NaN()}, {1.0}}, s, adam_cfg()));
  EXPECT_TRUE(p == before);
  EXPECT_EQ(s.step, sb.step);
  EXPECT_EQ(s.m, sb.m);
}

// --- a priori loss ------------------------------------------------------------------------

TEST(AprioriLoss, PerfectModelGivesZero) {
  const CnnParams p = fixtures::small_cnn(5);
  const Normalization norm{2.0, 0.3};
  const Grid g(16);
  std::vector<Sample> samples;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const SpectralField w = fixtures::random_state(g, s, 6);
    samples.push_back({w, cnn_eval(to_real(w), p, norm), 0.0});
  }
  const std::vector<const Sample*> batch{&samples[0], &samples[1], &samples[2]};
  const LossResult r = apriori_loss(p, norm, batch);
  EXPECT_LT(r.value, 1e-28);
  for (const auto& t : r.grad) {
    for (double x : t) EXPECT_LT(std::abs(x), 1e-13);
  }
}

TEST(AprioriLoss, ZeroModelGivesMeanSquareResidual) {
  CnnParams p = fixtures::small_cnn(5);
  for (auto* t : p.tensors()) std::fill(t->begin(), t->end(), 0.0);
  const Grid g(16);
  const Sample a{fixtures::random_state(g, 1), fixtures::random_state(g, 2), 0.0};
  const Sample b{fixtures::random_state(g, 3), fixtures::random_state(g, 4), 0.0};
  const std::vector<const Sample*> batch{&a, &b};
  const double expect = 0.5 * (to_real(a.residual).mean_square() + to_real(b.residual).mean_square());
  EXPECT_NEAR(apriori_loss(p, {}, batch, false).value, expect, 1e-15 * expect);
}

TEST(AprioriLoss, HandArithmeticOnSmallGrid) {
  // M = rs·(w·ω/ωs + b) pointwise for a single 1x1 layer.
  const double w = 0.8, b = -0.1, ws = 2.0, rs = 0.5;
  const Grid g(8);
  const RealField om = fixtures::random_field(g, 6, 3);
  const RealField res = fixtures::random_field(g, 7, 3);
  const Sample s{to_spectral(om), to_spectral(res), 0.0};
  double mse = 0.0, dw = 0.0, db = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = to_real(s.omega_bar).values()[i] / ws;
    const double e = to_real(s.residual).values()[i] - rs * (w * x + b);
    mse += e * e;
    dw += -2.0 * e * rs * x;
    db += -2.0 * e * rs;
  }
  const double m = static_cast<double>(g.size());
  const std::vector<const Sample*> batch{&s};
  const LossResult r = apriori_loss(scalar_net(w, b), {ws, rs}, batch);
  EXPECT_NEAR(r.value, mse / m, 1e-14);
  EXPECT_NEAR(r.grad[0][0], dw / m, 1e-13);
  EXPECT_NEAR(r.grad[1][0], db / m, 1e-13);
}

TEST(AprioriLoss, GradientMatchesFiniteDifferences) {
  const TinyData d = tiny_data(4);
  const Normalization norm = compute_normalization(d.sets);
  CnnParams p = fixtures::small_cnn(9);
  const auto batch = pointers(d.sets[0]);
  const LossResult r = apriori_loss(p, norm, batch);
  std::vector<double> flat;
  for (const auto& t : r.grad) flat.insert(flat.end(), t.begin(), t.end());
  auto f = [&](std::span<const double> theta) {
    CnnParams q = p;
    fixtures::unflatten(q, theta);
    return apriori_loss(q, norm, batch, false).value;
  };
  // A small step keeps central differences clear of ReLU kinks; the loss is
  // O(1e5) here, so roundoff puts the floor near 1e-5.
  ad::GradCheckOptions opts;
  opts.max_coordinates = 60;
  opts.epsilon = 1e-7;
  const ad::GradCheckReport rep = ad::grad_check(f, fixtures::flatten(p), flat, opts);
  EXPECT_LE(rep.max_rel_err, 1e-5) << "worst " << rep.worst_index << ": fd " << rep.worst_fd << ", ad " << rep.worst_ad;
}

// --- a posteriori loss ----------------------------------------------------------------------

TEST(AposterioriLoss, OwnRolloutAsTargetGivesZero) {
  const Grid g(16);
  const Dynamics les = fixtures::small_les_dynamics();
  const CnnParams p = fixtures::small_cnn(2);
  const Normalization norm{1.0, 0.1};
  Dynamics with_net = les;
  with_net.closure = std::make_shared<ClosureModel>(ClosureModel::cnn(p, norm));
  const Trajectory tr = simulate({fixtures::random_state(g, 5, 6), 0.4}, 3, with_net, 1);
  std::vector<Sample> window;
  for (const QGState& s : tr.states) window.push_back({s.omega_hat, SpectralField(g), s.t});
  const LossResult r = aposteriori_loss(p, norm, window, les);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.value, 0.0);
  for (const auto& t : r.grad) {
    for (double x : t) EXPECT_EQ(x, 0.0);
  }
}

TEST(AposterioriLoss, SingleStepZeroClosureMatchesScriptedStep) {
  const Grid g(16);
  const Dynamics les = fixtures::small_les_dynamics();
  CnnParams p = fixtures::small_cnn(2);
  for (auto* t : p.tensors()) std::fill(t->begin(), t->end(), 0.0);
  const std::vector<Sample> window = fixtures::synthetic_window(g, les, 2, 8);
  // Independent single step: hand-assembled RK4 on the closure-free rhs.
  const QGState s0{window[0].omega_bar, window[0].t};
  const double dt = les.params.dt;
  const SpectralField k1 = rhs(s0, les);
  const SpectralField k2 = rhs({s0.omega_hat + 0.5 * dt * k1, s0.t + 0.5 * dt}, les);
  const SpectralField k3 = rhs({s0.omega_hat + 0.5 * dt * k2, s0.t + 0.5 * dt}, les);
  const SpectralField k4 = rhs({s0.omega_hat + dt * k3, s0.t + dt}, les);
  const SpectralField next = s0.omega_hat + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  const RealField diff = to_real(next - window[1].omega_bar);
  const LossResult r = aposteriori_loss(p, {}, window, les, false);
  EXPECT_NEAR(r.value, diff.mean_square(), 1e-12 * diff.mean_square());
  EXPECT_GT(r.value, 0.0);
}

TEST(AposterioriLoss, NonNegativeForAnyTheta) {
  const Grid g(16);
  const Dynamics les = fixtures::small_les_dynamics();
  const std::vector<Sample> window = fixtures::synthetic_window(g, les, 4, 3);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const LossResult r = aposteriori_loss(fixtures::small_cnn(seed), {1.0, 0.5}, window, les, false);
    EXPECT_GE(r.value, 0.0);
  }
}

TEST(AposterioriLoss, DivergenceSkipsGradient) {
  const Grid g(16);
  const Dynamics les = fixtures::small_les_dynamics();
  const std::vector<Sample> window = fixtures::synthetic_window(g, les, 4, 3);
  CnnParams p = fixtures::small_cnn(1);
  for (double& w : p.layers[0].weights) w *= 1e5;
  for (double& w : p.layers[1].weights) w *= 1e5;
  const LossResult r = aposteriori_loss(p, {1.0, 1.0}, window, les);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.grad.empty());
  EXPECT_NE(r.diagnostic.find("diverged"), std::string::npos);
}

TEST(AposterioriLoss, RejectsSpacingMismatch) {
  const Grid g(16);
  const std::vector<Sample> window = fixtures::synthetic_window(g, fixtures::small_les_dynamics(), 3, 3);
  EXPECT_THROW(aposteriori_loss(fixtures::small_cnn(1), {}, window, fixtures::small_les_dynamics(2e-2)),
               std::invalid_argument);
  EXPECT_THROW(aposteriori_loss(fixtures::small_cnn(1), {}, std::span(window).first(1), fixtures::small_les_dynamics()),
               std::invalid_argument);
}

// --- windows and normalization --------------------------------------------------------------

TEST(Windows, StrideNAndNoSegmentCrossing) {
  std::vector<SampleSet> sets(2);
  const Grid g(8);
  for (int i = 0; i < 11; ++i) sets[0].samples.push_back({SpectralField(g), SpectralField(g), 0.1 * i});
  for (int i = 0; i < 13; ++i) sets[1].samples.push_back({SpectralField(g), SpectralField(g), 0.1 * i});
  const std::vector<Window> w = make_windows(sets, 5);
  ASSERT_EQ(w.size(), 4u);
  for (const Window& x : w) {
    EXPECT_EQ(x.length, 6u);
    EXPECT_LE(x.start + x.length, sets[x.segment].size());
  }
  EXPECT_EQ(w[1].start, 5u);
  EXPECT_EQ(w[2].segment, 1u);
  EXPECT_EQ(w[3].start, 5u);
  EXPECT_EQ(make_windows(sets, 1).size(), 10u + 12u);
  EXPECT_TRUE(make_windows(sets, 30).empty());
}

TEST(Normalization, StandardDeviations) {
  const Grid g(8);
  std::vector<SampleSet> sets(1);
  SpectralField w(g), r(g);
  w.mode(1, 0) = 1.5;
  w.mode(-1, 0) = 1.5;  // 3 cos x: std 3/√2
  r.mode(0, 2) = 0.25;
  r.mode(0, -2) = 0.25;  // 0.5 cos 2y: std 0.5/√2
  sets[0].samples.push_back({w, r, 0.0});
  sets[0].samples.push_back({w, r, 0.1});
  const Normalization n = compute_normalization(sets);
  EXPECT_NEAR(n.omega_scale, 3.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(n.residual_scale, 0.5 / std::sqrt(2.0), 1e-14);
  sets[0].samples = {{SpectralField(g), SpectralField(g), 0.0}};
  const Normalization z = compute_normalization(sets);
  EXPECT_EQ(z.omega_scale, 1.0);
  EXPECT_EQ(z.residual_scale, 1.0);
}

// --- train -------------------------------------------------------------------------------------

TEST(Train, AprioriSingleBatchImproves) {
  const TinyData d = tiny_data();
  TrainConfig cfg;
  cfg.strategy = Strategy::apriori;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.lr = 1e-3;
  cfg.arch = {2, 4, 3};
  cfg.seed = 11;
  const TrainReport r = train(cfg, d.sets, d.les);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.epochs[0].loss));
  EXPECT_LT(r.first_batch_after, r.first_batch_before);
  EXPECT_FALSE(r.aborted);
}

TEST(Train, DeterministicUnderSeed) {
  const TinyData d = tiny_data();
  TrainConfig cfg;
  cfg.strategy = Strategy::aposteriori;
  cfg.n_rollout = 2;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.arch = {2, 4, 3};
  cfg.seed = 5;
  const TrainReport a = train(cfg, d.sets, d.les), b = train(cfg, d.sets, d.les);
  ASSERT_EQ(a.epochs.size(), 3u);
  for (std::size_t i = 0; i < a.epochs.size(); ++i) EXPECT_EQ(a.epochs[i].loss, b.epochs[i].loss);
  EXPECT_TRUE(a.params == b.params);
  cfg.n_rollout = 1;
  EXPECT_FALSE(train(cfg, d.sets, d.les).params == a.params);
}

TEST(Train, CallbackSeesEveryEpoch) {
  const TinyData d = tiny_data();
  TrainConfig cfg;
  cfg.strategy = Strategy::apriori;
  cfg.epochs = 3;
  cfg.arch = {2, 4, 3};
  cfg.items_per_epoch = 5;
  int calls = 0;
  train(cfg, d.sets, d.les, [&](const EpochRecord& r) { EXPECT_EQ(r.epoch, ++calls); });
  EXPECT_EQ(calls, 3);
}

TEST(Train, AllDivergedEpochAborts) {
  TinyData d = tiny_data(4);
  // Blow the data up so every rollout violates the CFL limit.
  for (SampleSet& s : d.sets) {
    for (Sample& x : s.samples) x.omega_bar = 1e4 * x.omega_bar;
  }
  TrainConfig cfg;
  cfg.strategy = Strategy::aposteriori;
  cfg.n_rollout = 3;
  cfg.epochs = 2;
  cfg.arch = {2, 4, 3};
  const TrainReport r = train(cfg, d.sets, d.les);
  EXPECT_TRUE(r.aborted);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_EQ(r.epochs[0].diverged_count, 2);
  EXPECT_FALSE(r.message.empty());
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.n_rollout = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_strategy("apriori"), Strategy::apriori);
  EXPECT_THROW(parse_strategy("both"), std::invalid_argument);
}
