#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "diffqg/diagnostics.hpp"
#include "diffqg/spectral.hpp"

namespace diffqg {

class ClosureModel;

struct QGParams {
  double nu = 1.02e-5;  // viscosity
  double mu = 2.0e-2;   // linear drag
  double dt = 1.0e-4;

  void validate() const;
};

/// F = C_F [cos(k_f y + s·sin(a t)) − cos(k_f x + s·sin(b t))].
struct ForcingParams {
  double amplitude = std::sqrt(6.0);
  int k_f = 4;
  double freq_a = 1.4;
  double freq_b = 1.5;
  double phase_scale = std::numbers::pi;

  void validate() const;
};

struct QGState {
  SpectralField omega_hat;
  double t = 0.0;
};

/// Everything that defines the right-hand side besides the state.
struct Dynamics {
  QGParams params;
  std::optional<ForcingParams> forcing = ForcingParams{};
  /// Null means no closure term.
  std::shared_ptr<const ClosureModel> closure;
};

struct Trajectory {
  std::vector<QGState> states;
  int cadence = 1;
  double dt = 0.0;
  bool truncated = false;
  /// Set when the run stopped early.
  std::string diagnostic;
};

RealField forcing_field(double t, const Grid& grid, const ForcingParams& fp);
/// Exact Fourier coefficients of forcing_field (four modes at |k| = k_f).
std::vector<cplx> forcing_coefficients(double t, const Grid& grid, const ForcingParams& fp);

/// Closure-free part of the tendency, written against a field algebra. The
/// closure term, when given, is appended as the last summand.
template <class Alg>
typename Alg::Spec tendency_of(Alg& alg, const typename Alg::Spec& omega, double t, const Dynamics& dyn,
                               const typename Alg::Spec* closure_term) {
  const auto psi = alg.diag(omega, SpectralOp::inverse_laplacian);
  const auto advection = jacobian_of(alg, psi, omega);
  const auto diffusion = alg.diag(omega, SpectralOp::laplacian);
  const QGParams& p = dyn.params;
  if (dyn.forcing) {
    const auto forcing = alg.constant(forcing_coefficients(t, alg.grid(), *dyn.forcing));
    if (closure_term) {
      return alg.lincomb({{-1.0, advection}, {p.nu, diffusion}, {-p.mu, omega}, {1.0, forcing}, {1.0, *closure_term}});
    }
    return alg.lincomb({{-1.0, advection}, {p.nu, diffusion}, {-p.mu, omega}, {1.0, forcing}});
  }
  if (closure_term) {
    return alg.lincomb({{-1.0, advection}, {p.nu, diffusion}, {-p.mu, omega}, {1.0, *closure_term}});
  }
  return alg.lincomb({{-1.0, advection}, {p.nu, diffusion}, {-p.mu, omega}});
}

/// Classical RK4 step. `closure(alg, omega)` returns std::optional<Spec>.
template <class Alg, class ClosureFn>
typename Alg::Spec rk4_step_of(Alg& alg, const typename Alg::Spec& y, double t, const Dynamics& dyn,
                               ClosureFn&& closure) {
  const double dt = dyn.params.dt;
  auto rhs = [&](const typename Alg::Spec& w, double time) {
    auto term = closure(alg, w);
    return tendency_of(alg, w, time, dyn, term ? &*term : nullptr);
  };
  const auto k1 = rhs(y, t);
  const auto k2 = rhs(alg.lincomb({{1.0, y}, {0.5 * dt, k1}}), t + 0.5 * dt);
  const auto k3 = rhs(alg.lincomb({{1.0, y}, {0.5 * dt, k2}}), t + 0.5 * dt);
  const auto k4 = rhs(alg.lincomb({{1.0, y}, {dt, k3}}), t + dt);
  return alg.lincomb({{1.0, y}, {dt / 6.0, k1}, {dt / 3.0, k2}, {dt / 3.0, k3}, {dt / 6.0, k4}});
}

/// ∂tω = −J(ψ,ω) + ν∇²ω − μω + F (+ closure).
SpectralField rhs(const QGState& state, const Dynamics& dyn);
/// Advances by dyn.params.dt. A non-finite result is returned as is; callers
/// check it with stability_check.
QGState step_rk4(const QGState& state, const Dynamics& dyn);

/// Random phases, unit-variance amplitudes on the shell 3.5 ≤ |k| ≤ 4.5.
QGState random_shell_state(const Grid& grid, std::uint64_t seed);
using StateObserver = std::function<void(const QGState&)>;

/// Integrates the random shell state for `duration` time units. Throws
/// NumericalError naming the failing time on divergence. `observe`, when
/// set, sees every observe_every-th state including the first.
QGState spinup(const Grid& grid, const Dynamics& dyn, std::uint64_t seed, double duration,
               const StateObserver& observe = {}, int observe_every = 1);

struct RunResult {
  QGState final_state;
  StabilityStatus status;
  int steps_completed = 0;
};

/// Runs up to n_steps RK4 steps, handing the initial state and every
/// store_cadence-th state to `observe`. Stops at the first divergence, which
/// includes a closure raising NumericalError; final_state is then the last
/// good state.
RunResult integrate(const QGState& initial, int n_steps, const Dynamics& dyn, int store_cadence,
                    const StateObserver& observe);

/// Runs n_steps RK4 steps storing every store_cadence-th state (including the
/// initial one). Stops early on divergence and marks the result truncated.
Trajectory simulate(const QGState& initial, int n_steps, const Dynamics& dyn, int store_cadence);

}  // namespace diffqg
