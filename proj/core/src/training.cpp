#include "diffqg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

#include "diffqg/autodiff.hpp"
#include "diffqg/diagnostics.hpp"

namespace diffqg {

const char* to_string(Strategy s) { return s == Strategy::apriori ? "apriori" : "aposteriori"; }

Strategy parse_strategy(const std::string& name) {
  if (name == "apriori") return Strategy::apriori;
  if (name == "aposteriori") return Strategy::aposteriori;
  throw std::invalid_argument("unknown training strategy '" + name + "' (expected apriori or aposteriori)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (n_rollout < 1) throw std::invalid_argument("n_rollout must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (items_per_epoch < 0) throw std::invalid_argument("items_per_epoch must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be > 0");
  arch.validate();
}

GradientSet zero_gradients(const CnnParams& params) {
  GradientSet g;
  for (const auto* t : params.tensors()) g.emplace_back(t->size(), 0.0);
  return g;
}

bool all_finite(const GradientSet& g) {
  for (const auto& t : g) {
    for (double x : t) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

AdamState AdamState::for_params(const CnnParams& params) {
  AdamState s;
  s.m = zero_gradients(params);
  s.v = zero_gradients(params);
  return s;
}

bool adam_update(CnnParams& theta, const GradientSet& g, AdamState& state, const TrainConfig& cfg) {
  auto tensors = theta.tensors();
  if (g.size() != tensors.size() || state.m.size() != tensors.size() || state.v.size() != tensors.size()) {
    throw std::invalid_argument("adam_update: tensor count mismatch");
  }
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    if (g[t].size() != tensors[t]->size() || state.m[t].size() != g[t].size() || state.v[t].size() != g[t].size()) {
      throw std::invalid_argument("adam_update: tensor " + std::to_string(t) + " shape mismatch");
    }
  }
  if (!all_finite(g)) return false;

  const long step = state.step + 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& p = *tensors[t];
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[t][i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[t][i] * g[t][i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
  state.step = step;
  return true;
}

using ad::TapeAlgebra;

namespace {

struct RecordedParams {
  std::vector<TapeAlgebra::Layer> layers;
  std::vector<ad::Var> leaves;  // tensors() order
};

RecordedParams record_params(ad::Tape& tape, const CnnParams& theta) {
  RecordedParams r;
  for (const ConvLayer& l : theta.layers) {
    const ad::Var w = tape.leaf(ad::Value::of_real(l.weights), ad::LeafRole::parameter);
    const ad::Var b = tape.leaf(ad::Value::of_real(l.bias), ad::LeafRole::parameter);
    r.layers.push_back({w, b, l.in_channels, l.out_channels, l.kernel});
    r.leaves.push_back(w);
    r.leaves.push_back(b);
  }
  return r;
}

void accumulate(GradientSet& acc, const ad::Gradients& g, const RecordedParams& p, double weight) {
  for (std::size_t t = 0; t < p.leaves.size(); ++t) {
    const auto& src = g.real(p.leaves[t]);
    for (std::size_t i = 0; i < src.size(); ++i) acc[t][i] += weight * src[i];
  }
}

}  // namespace

LossResult apriori_loss(const CnnParams& theta, const Normalization& norm, std::span<const Sample* const> batch,
                        bool with_gradient) {
  if (batch.empty()) throw std::invalid_argument("apriori_loss: empty batch");
  norm.validate();
  LossResult out;
  if (with_gradient) out.grad = zero_gradients(theta);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Sample* s : batch) {
    const Grid& g = s->omega_bar.grid();
    ad::Tape tape;
    TapeAlgebra alg(tape, g);
    const RecordedParams p = record_params(tape, theta);
    const auto omega = alg.constant(std::vector<cplx>(s->omega_bar.coeffs().begin(), s->omega_bar.coeffs().end()));
    const auto input = alg.scale(alg.to_real(omega), 1.0 / norm.omega_scale);
    const auto prediction = alg.scale(cnn_forward(alg, input, p.layers), norm.residual_scale);
    const auto target = alg.constant_real(to_real(s->residual).data());
    const auto loss = alg.mean_square(alg.sub(target, prediction));
    const double value = tape.value(loss).real[0];
    if (!std::isfinite(value)) {
      out.diverged = true;
      out.diagnostic = "non-finite network output at t = " + std::to_string(s->t);
      out.value = std::numeric_limits<double>::quiet_NaN();
      out.grad.clear();
      return out;
    }
    out.value += w * value;
    if (with_gradient) accumulate(out.grad, tape.backward(loss), p, w);
  }
  return out;
}

LossResult aposteriori_loss(const CnnParams& theta, const Normalization& norm, std::span<const Sample> window,
                            const Dynamics& les, bool with_gradient) {
  if (window.size() < 2) throw std::invalid_argument("aposteriori_loss: window needs at least 2 samples");
  norm.validate();
  const Grid& g = window.front().omega_bar.grid();
  const double dt = les.params.dt;
  for (std::size_t i = 1; i < window.size(); ++i) {
    const double spacing = window[i].t - window[i - 1].t;
    if (std::abs(spacing - dt) > 1e-9 * std::max(1.0, std::abs(window[i].t))) {
      throw std::invalid_argument("aposteriori_loss: sample spacing " + std::to_string(spacing) +
                                  " does not match the LES time step " + std::to_string(dt));
    }
  }
  Dynamics dyn = les;
  dyn.closure.reset();

  ad::Tape tape;
  TapeAlgebra alg(tape, g);
  const RecordedParams p = record_params(tape, theta);
  auto closure = [&](TapeAlgebra& a, const ad::Var& w) -> std::optional<ad::Var> {
    return cnn_closure_of(a, w, p.layers, norm);
  };

  const auto& c0 = window.front().omega_bar.coeffs();
  ad::Var omega = alg.constant(std::vector<cplx>(c0.begin(), c0.end()));
  const double reference = total_enstrophy(window.front().omega_bar);
  const std::size_t n_steps = window.size() - 1;
  std::vector<ad::Var> errors;
  double t = window.front().t;
  LossResult out;
  for (std::size_t i = 1; i <= n_steps; ++i) {
    omega = rk4_step_of(alg, omega, t, dyn, closure);
    t += dt;
    const ad::Value& state = tape.value(omega);
    const QGState probe{SpectralField(g, state.spec), t};
    const StabilityStatus status = stability_check(probe, reference);
    if (!status.ok()) {
      out.diverged = true;
      out.value = std::numeric_limits<double>::quiet_NaN();
      out.diagnostic = std::string("rollout diverged (") + to_string(status.cause) + ") at t = " + std::to_string(t);
      return out;
    }
    const auto target = alg.constant_real(to_real(window[i].omega_bar).data());
    errors.push_back(alg.mean_square(alg.sub(alg.to_real(omega), target)));
  }
  const double inv_n = 1.0 / static_cast<double>(n_steps);
  ad::Var loss = errors.front();
  if (n_steps > 1) {
    std::vector<double> coeffs(n_steps, inv_n);
    loss = tape.apply(ad::op_lincomb(std::move(coeffs)), errors);
  } else {
    loss = alg.scale(loss, inv_n);
  }
  out.value = tape.value(loss).real[0];
  if (!std::isfinite(out.value)) {
    out.diverged = true;
    out.diagnostic = "non-finite rollout loss";
    return out;
  }
  if (with_gradient) {
    out.grad = zero_gradients(theta);
    accumulate(out.grad, tape.backward(loss), p, 1.0);
  }
  return out;
}

std::vector<Window> make_windows(std::span<const SampleSet> data, int n_rollout) {
  if (n_rollout < 1) throw std::invalid_argument("make_windows: n_rollout must be >= 1");
  const auto n = static_cast<std::size_t>(n_rollout);
  std::vector<Window> out;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::size_t len = data[s].size();
    for (std::size_t start = 0; start + n < len; start += n) out.push_back({s, start, n + 1});
  }
  return out;
}

Normalization compute_normalization(std::span<const SampleSet> data) {
  double sw = 0.0, sw2 = 0.0, sr = 0.0, sr2 = 0.0;
  std::size_t count = 0;
  for (const SampleSet& set : data) {
    for (const Sample& s : set.samples) {
      const RealField w = to_real(s.omega_bar);
      const RealField r = to_real(s.residual);
      for (std::size_t i = 0; i < w.values().size(); ++i) {
        sw += w.values()[i];
        sw2 += w.values()[i] * w.values()[i];
        sr += r.values()[i];
        sr2 += r.values()[i] * r.values()[i];
      }
      count += w.values().size();
    }
  }
  Normalization n;
  if (count == 0) return n;
  const double c = static_cast<double>(count);
  const auto stddev = [c](double s, double s2) {
    const double var = s2 / c - (s / c) * (s / c);
    const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    return std::isfinite(sd) && sd > 0.0 ? sd : 1.0;
  };
  n.omega_scale = stddev(sw, sw2);
  n.residual_scale = stddev(sr, sr2);
  return n;
}

namespace {

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::span<const SampleSet> data, const Dynamics& les)
      : cfg_(cfg), data_(data), les_(les) {
    if (cfg_.strategy == Strategy::aposteriori) {
      windows_ = make_windows(data_, cfg_.n_rollout);
    } else {
      for (std::size_t s = 0; s < data_.size(); ++s) {
        for (std::size_t i = 0; i < data_[s].size(); ++i) windows_.push_back({s, i, 1});
      }
    }
    if (windows_.empty()) {
      throw std::invalid_argument(cfg_.strategy == Strategy::aposteriori
                                      ? "training data too short for rollout windows of N = " +
                                            std::to_string(cfg_.n_rollout)
                                      : std::string("training data has no samples"));
    }
  }

  std::size_t item_count() const { return windows_.size(); }

  std::vector<std::size_t> order(std::mt19937_64& rng) const {
    std::vector<std::size_t> idx(windows_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    if (cfg_.items_per_epoch > 0 && static_cast<std::size_t>(cfg_.items_per_epoch) < idx.size()) {
      idx.resize(static_cast<std::size_t>(cfg_.items_per_epoch));
    }
    return idx;
  }

  /// Mean loss and gradient over the non-diverged items of a batch.
  struct BatchResult {
    double loss_sum = 0.0;
    int ok = 0;
    int diverged = 0;
    GradientSet grad;
  };

  BatchResult batch(const CnnParams& theta, const Normalization& norm, std::span<const std::size_t> items,
                    bool with_gradient) const {
    BatchResult r;
    if (with_gradient) r.grad = zero_gradients(theta);
    for (std::size_t idx : items) {
      const Window& w = windows_[idx];
      const auto& samples = data_[w.segment].samples;
      LossResult l;
      if (cfg_.strategy == Strategy::apriori) {
        const Sample* s = &samples[w.start];
        l = apriori_loss(theta, norm, std::span<const Sample* const>(&s, 1), with_gradient);
      } else {
        l = aposteriori_loss(theta, norm, std::span<const Sample>(samples).subspan(w.start, w.length), les_,
                             with_gradient);
      }
      if (l.diverged) {
        ++r.diverged;
        continue;
      }
      ++r.ok;
      r.loss_sum += l.value;
      if (with_gradient) {
        for (std::size_t t = 0; t < r.grad.size(); ++t) {
          for (std::size_t i = 0; i < r.grad[t].size(); ++i) r.grad[t][i] += l.grad[t][i];
        }
      }
    }
    if (with_gradient && r.ok > 0) {
      const double inv = 1.0 / r.ok;
      for (auto& t : r.grad) {
        for (double& x : t) x *= inv;
      }
    }
    return r;
  }

 private:
  const TrainConfig& cfg_;
  std::span<const SampleSet> data_;
  const Dynamics& les_;
  std::vector<Window> windows_;
};

}  // namespace

TrainReport train(const TrainConfig& cfg, std::span<const SampleSet> data, const Dynamics& les,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: no training data");
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  TrainReport report;
  report.norm = compute_normalization(data);
  report.params = cnn_init(cfg.arch, cfg.seed);
  // Start from the zero closure: a random output layer acts as random forcing
  // and can destabilize the LES before training has corrected it.
  ConvLayer& out = report.params.layers.back();
  std::fill(out.weights.begin(), out.weights.end(), 0.0);
  std::fill(out.bias.begin(), out.bias.end(), 0.0);
  const Trainer trainer(cfg, data, les);
  AdamState adam = AdamState::for_params(report.params);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t_epoch = clock::now();
    const std::vector<std::size_t> items = trainer.order(rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    int ok = 0;
    for (std::size_t b = 0; b < items.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(items.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(items.data() + b, e - b);
      auto r = trainer.batch(report.params, report.norm, batch, true);
      rec.diverged_count += r.diverged;
      ok += r.ok;
      loss_sum += r.loss_sum;
      const bool first = epoch == 1 && b == 0;
      if (first) report.first_batch_before = r.ok > 0 ? r.loss_sum / r.ok : std::numeric_limits<double>::quiet_NaN();
      if (r.ok == 0 || !adam_update(report.params, r.grad, adam, cfg)) ++rec.skipped_updates;
      if (first) {
        const auto after = trainer.batch(report.params, report.norm, batch, false);
        report.first_batch_after =
            after.ok > 0 ? after.loss_sum / after.ok : std::numeric_limits<double>::quiet_NaN();
      }
    }
    rec.loss = ok > 0 ? loss_sum / ok : std::numeric_limits<double>::quiet_NaN();
    rec.wall_time = std::chrono::duration<double>(clock::now() - t_epoch).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (ok == 0) {
      report.aborted = true;
      report.message = "every item diverged in epoch " + std::to_string(epoch);
      break;
    }
  }
  report.wall_time = std::chrono::duration<double>(clock::now() - t_start).count();
  return report;
}

}  // namespace diffqg
