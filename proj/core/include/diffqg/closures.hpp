#pragma once

#include <cstdint>
#include <iterator>
#include <memory>
#include <variant>
#include <vector>

#include "diffqg/kernels.hpp"
#include "diffqg/spectral.hpp"

namespace diffqg {

// --- convolutional closure ------------------------------------------------------

struct CnnArchitecture {
  int depth = 10;
  int width = 64;
  int kernel = 5;

  /// Channel count at every layer boundary: 1, width, ..., width, 1.
  std::vector<int> channels() const;
  void validate() const;
};

struct ConvLayer {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 5;
  std::vector<double> weights;  // [out, in, k, k], row-major
  std::vector<double> bias;     // [out]

  kernels::ConvShape shape(int n) const { return {in_channels, out_channels, kernel, n}; }
};

/// The network parameters θ.
struct CnnParams {
  std::vector<ConvLayer> layers;

  CnnArchitecture architecture() const;
  std::size_t parameter_count() const;
  /// Checks the architecture invariants and finiteness of every weight.
  void validate() const;

  /// Tensors in layer order: w0, b0, w1, b1, ...
  std::vector<std::vector<double>*> tensors();
  std::vector<const std::vector<double>*> tensors() const;

  friend bool operator==(const CnnParams&, const CnnParams&);
};

/// Standard deviations used to scale network input and output.
struct Normalization {
  double omega_scale = 1.0;
  double residual_scale = 1.0;

  void validate() const;
};

/// Uniform weights in ±√(1/(in·k²)), zero biases.
CnnParams cnn_init(const CnnArchitecture& arch, std::uint64_t seed);

template <class Alg, class LayerRange>
typename Alg::Real cnn_forward(Alg& alg, typename Alg::Real x, const LayerRange& layers) {
  const auto depth = static_cast<std::size_t>(std::size(layers));
  std::size_t l = 0;
  for (const auto& layer : layers) {
    x = alg.conv(x, layer);
    if (++l < depth) x = alg.relu(x);
  }
  return x;
}

/// ω̂ → M_NN(ω̄) in spectral form: normalize, run the network, rescale.
template <class Alg, class LayerRange>
typename Alg::Spec cnn_closure_of(Alg& alg, const typename Alg::Spec& omega, const LayerRange& layers,
                                  const Normalization& norm) {
  auto input = alg.scale(alg.to_real(omega), 1.0 / norm.omega_scale);
  auto output = cnn_forward(alg, std::move(input), layers);
  return alg.to_spectral(alg.scale(output, norm.residual_scale));
}

/// Evaluates the network on a real-space LES vorticity field. Throws
/// NumericalError when activations become non-finite.
SpectralField cnn_eval(const RealField& omega_bar, const CnnParams& params, const Normalization& norm);
/// Raw network output (before rescaling) for a normalized input.
RealField cnn_apply(const RealField& input, const CnnParams& params);

// --- dynamic Smagorinsky ------------------------------------------------------------

struct SmagorinskyOptions {
  /// Test-filter width relative to the grid filter.
  double test_filter_ratio = 2.0;
  bool clip = true;
  /// Below this ⟨M·M⟩ the coefficient is set to zero.
  double denominator_floor = 1e-14;
};

struct SmagorinskyResult {
  SpectralField tendency;
  double coefficient = 0.0;  // C_s²
  /// ⟨ω̄·R⟩, non-positive when clipping is on.
  double transfer = 0.0;
};

/// |S̄| = sqrt(4ψ_xy² + (ψ_xx − ψ_yy)²).
RealField strain_rate_magnitude(const SpectralField& psi_hat);
/// R = ∇·(C_s² Δ² |S̄| ∇ω̄) for a given coefficient, Δ the grid spacing.
SpectralField smagorinsky_tendency(const SpectralField& omega_hat, double cs2);
/// Coefficient from the Germano identity, least-squares averaged over the domain.
double dynamic_coefficient(const SpectralField& omega_hat, const SmagorinskyOptions& opts = {});
SmagorinskyResult smagorinsky_dynamic(const SpectralField& omega_hat, const SmagorinskyOptions& opts = {});
SpectralField smagorinsky_dynamic_eval(const SpectralField& omega_hat);

SpectralField zero_eval(const SpectralField& omega_hat);

// --- closure model ------------------------------------------------------------------

enum class ClosureKind { zero, smagorinsky_dynamic, cnn };

const char* to_string(ClosureKind kind);

/// Polymorphic subgrid model mapping an LES state to a tendency contribution.
class ClosureModel {
 public:
  struct Zero {};
  struct Smagorinsky {
    SmagorinskyOptions options;
  };
  struct Cnn {
    CnnParams params;
    Normalization norm;
  };

  static ClosureModel zero() { return ClosureModel(Zero{}); }
  static ClosureModel smagorinsky(SmagorinskyOptions opts = {}) { return ClosureModel(Smagorinsky{opts}); }
  static ClosureModel cnn(CnnParams params, Normalization norm);

  ClosureKind kind() const;
  /// False for the zero closure, whose term is omitted from the tendency.
  bool contributes() const { return kind() != ClosureKind::zero; }

  SpectralField eval(const SpectralField& omega_hat) const;

  const Cnn* as_cnn() const { return std::get_if<Cnn>(&model_); }

 private:
  using Model = std::variant<Zero, Smagorinsky, Cnn>;
  explicit ClosureModel(Model m) : model_(std::move(m)) {}

  Model model_;
};

}  // namespace diffqg
