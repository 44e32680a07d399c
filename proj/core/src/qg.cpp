#include "diffqg/qg.hpp"

#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "diffqg/closures.hpp"
#include "diffqg/diagnostics.hpp"

namespace diffqg {

void QGParams::validate() const {
  if (!(nu >= 0.0)) throw std::invalid_argument("viscosity must be >= 0");
  if (!(mu >= 0.0)) throw std::invalid_argument("drag must be >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be > 0");
}

void ForcingParams::validate() const {
  if (!(amplitude > 0.0)) throw std::invalid_argument("forcing amplitude must be > 0");
  if (k_f < 1) throw std::invalid_argument("forcing wavenumber must be >= 1");
}

RealField forcing_field(double t, const Grid& grid, const ForcingParams& fp) {
  const double phase_y = fp.phase_scale * std::sin(fp.freq_a * t);
  const double phase_x = fp.phase_scale * std::sin(fp.freq_b * t);
  const double k = fp.k_f;
  return RealField::from_function(grid, [&](double x, double y) {
    return fp.amplitude * (std::cos(k * y + phase_y) - std::cos(k * x + phase_x));
  });
}

std::vector<cplx> forcing_coefficients(double t, const Grid& grid, const ForcingParams& fp) {
  if (2 * fp.k_f >= grid.n()) throw std::invalid_argument("forcing wavenumber not resolved by the grid");
  std::vector<cplx> c(grid.size(), cplx(0.0, 0.0));
  const double phase_y = fp.phase_scale * std::sin(fp.freq_a * t);
  const double phase_x = fp.phase_scale * std::sin(fp.freq_b * t);
  const double half = 0.5 * fp.amplitude;
  // cos(k y + φ) = ½ e^{iφ} e^{iky} + ½ e^{-iφ} e^{-iky}
  c[grid.mode_index(0, fp.k_f)] += half * std::polar(1.0, phase_y);
  c[grid.mode_index(0, -fp.k_f)] += half * std::polar(1.0, -phase_y);
  c[grid.mode_index(fp.k_f, 0)] -= half * std::polar(1.0, phase_x);
  c[grid.mode_index(-fp.k_f, 0)] -= half * std::polar(1.0, -phase_x);
  return c;
}

namespace {

// Closure callback for the plain algebra: evaluates the model on the stage state.
struct ValueClosure {
  const ClosureModel* model;

  std::optional<ValueAlgebra::Spec> operator()(ValueAlgebra& alg, const ValueAlgebra::Spec& w) const {
    if (model == nullptr || !model->contributes()) return std::nullopt;
    return model->eval(SpectralField(alg.grid(), w)).data();
  }
};

}  // namespace

SpectralField rhs(const QGState& state, const Dynamics& dyn) {
  const Grid& g = state.omega_hat.grid();
  ValueAlgebra alg(g);
  const auto term = ValueClosure{dyn.closure.get()}(alg, state.omega_hat.data());
  return SpectralField(g, tendency_of(alg, state.omega_hat.data(), state.t, dyn, term ? &*term : nullptr));
}

QGState step_rk4(const QGState& state, const Dynamics& dyn) {
  const Grid& g = state.omega_hat.grid();
  ValueAlgebra alg(g);
  auto next = rk4_step_of(alg, state.omega_hat.data(), state.t, dyn, ValueClosure{dyn.closure.get()});
  return {SpectralField(g, std::move(next)), state.t + dyn.params.dt};
}

QGState random_shell_state(const Grid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> amplitude(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  SpectralField w(grid);
  const int n = grid.n();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int kx = grid.kx()[i];
    const int ky = grid.ky()[i];
    // Draw once per ±k pair, from the upper half plane.
    if (ky < 0 || (ky == 0 && kx <= 0) || kx == -n / 2 || ky == -n / 2) continue;
    const double k = std::sqrt(grid.k2()[i]);
    if (k < 3.5 || k > 4.5) continue;
    const cplx c = std::polar(amplitude(rng), phase(rng));
    w.coeffs()[i] = c;
    w.coeffs()[grid.conjugate_index(i)] = std::conj(c);
  }
  return {std::move(w), 0.0};
}

QGState spinup(const Grid& grid, const Dynamics& dyn, std::uint64_t seed, double duration,
               const StateObserver& observe, int observe_every) {
  if (!(duration >= 0.0)) throw std::invalid_argument("spin-up duration must be >= 0");
  if (observe_every < 1) throw std::invalid_argument("spin-up observation interval must be >= 1");
  dyn.params.validate();
  QGState state = random_shell_state(grid, seed);
  const auto steps = static_cast<long>(std::llround(duration / dyn.params.dt));
  StabilityMonitor monitor(total_enstrophy(state.omega_hat));
  if (observe) observe(state);
  for (long s = 1; s <= steps; ++s) {
    state = step_rk4(state, dyn);
    if (!monitor.observe(state).ok()) {
      std::ostringstream msg;
      msg << "spin-up diverged (" << to_string(monitor.status().cause) << ") at t = " << state.t;
      throw NumericalError(msg.str());
    }
    if (observe && s % observe_every == 0) observe(state);
  }
  return state;
}

RunResult integrate(const QGState& initial, int n_steps, const Dynamics& dyn, int store_cadence,
                    const StateObserver& observe) {
  if (n_steps < 0) throw std::invalid_argument("integrate: n_steps must be >= 0");
  if (store_cadence < 1) throw std::invalid_argument("integrate: store cadence must be >= 1");
  dyn.params.validate();

  RunResult r{initial, {}, 0};
  StabilityMonitor monitor(total_enstrophy(initial.omega_hat));
  if (observe) observe(initial);
  for (int s = 1; s <= n_steps; ++s) {
    std::optional<QGState> next;
    try {
      next = step_rk4(r.final_state, dyn);
    } catch (const NumericalError&) {
      // A closure that cannot evaluate its input counts as a non-finite step.
      r.status = {StabilityState::diverged, DivergenceCause::non_finite, r.final_state.t + dyn.params.dt};
      return r;
    }
    if (!monitor.observe(*next).ok()) {
      r.status = monitor.status();
      return r;
    }
    r.final_state = std::move(*next);
    r.steps_completed = s;
    if (observe && s % store_cadence == 0) observe(r.final_state);
  }
  return r;
}

Trajectory simulate(const QGState& initial, int n_steps, const Dynamics& dyn, int store_cadence) {
  if (n_steps < 1) throw std::invalid_argument("simulate: n_steps must be >= 1");
  Trajectory traj;
  traj.cadence = store_cadence;
  traj.dt = dyn.params.dt;
  const RunResult r =
      integrate(initial, n_steps, dyn, store_cadence, [&](const QGState& s) { traj.states.push_back(s); });
  if (!r.status.ok()) {
    traj.truncated = true;
    std::ostringstream msg;
    msg << "diverged (" << to_string(r.status.cause) << ") at step " << r.steps_completed + 1
        << ", t = " << r.status.t_event;
    traj.diagnostic = msg.str();
  }
  return traj;
}

}  // namespace diffqg
