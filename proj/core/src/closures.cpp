#include "diffqg/closures.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "diffqg/coarse.hpp"

namespace diffqg {

// --- CNN ------------------------------------------------------------------------

std::vector<int> CnnArchitecture::channels() const {
  std::vector<int> c(static_cast<std::size_t>(depth) + 1, width);
  c.front() = 1;
  c.back() = 1;
  return c;
}

void CnnArchitecture::validate() const {
  if (depth < 1) throw std::invalid_argument("CNN depth must be >= 1");
  if (width < 1) throw std::invalid_argument("CNN width must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("CNN kernel size must be odd and positive");
}

CnnArchitecture CnnParams::architecture() const {
  CnnArchitecture a;
  a.depth = static_cast<int>(layers.size());
  a.width = layers.size() > 1 ? layers.front().out_channels : 1;
  a.kernel = layers.empty() ? 0 : layers.front().kernel;
  return a;
}

std::size_t CnnParams::parameter_count() const {
  std::size_t total = 0;
  for (const ConvLayer& l : layers) total += l.weights.size() + l.bias.size();
  return total;
}

void CnnParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("CNN has no layers");
  if (layers.front().in_channels != 1) throw std::invalid_argument("first CNN layer must take 1 input channel");
  if (layers.back().out_channels != 1) throw std::invalid_argument("last CNN layer must produce 1 channel");
  const int width = layers.size() > 1 ? layers.front().out_channels : 1;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const ConvLayer& layer = layers[l];
    if (l > 0 && layer.in_channels != layers[l - 1].out_channels) {
      throw std::invalid_argument("CNN layer " + std::to_string(l) + " input channels do not match previous output");
    }
    if (l + 1 < layers.size() && layer.out_channels != width) {
      throw std::invalid_argument("CNN hidden widths must all equal " + std::to_string(width));
    }
    if (layer.kernel != layers.front().kernel) throw std::invalid_argument("CNN kernel sizes differ between layers");
    if (layer.weights.size() != layer.shape(0).weight_count() ||
        layer.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
      throw std::invalid_argument("CNN layer " + std::to_string(l) + " tensor sizes do not match its shape");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
      throw std::invalid_argument("CNN layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

std::vector<std::vector<double>*> CnnParams::tensors() {
  std::vector<std::vector<double>*> out;
  for (ConvLayer& l : layers) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const std::vector<double>*> CnnParams::tensors() const {
  std::vector<const std::vector<double>*> out;
  for (const ConvLayer& l : layers) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

bool operator==(const CnnParams& a, const CnnParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const ConvLayer& x = a.layers[l];
    const ConvLayer& y = b.layers[l];
    if (x.in_channels != y.in_channels || x.out_channels != y.out_channels || x.kernel != y.kernel ||
        x.weights != y.weights || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

void Normalization::validate() const {
  if (!(omega_scale > 0.0) || !(residual_scale > 0.0) || !std::isfinite(omega_scale) ||
      !std::isfinite(residual_scale)) {
    throw std::invalid_argument("normalization scales must be finite and positive");
  }
}

CnnParams cnn_init(const CnnArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  const std::vector<int> ch = arch.channels();
  CnnParams p;
  p.layers.reserve(static_cast<std::size_t>(arch.depth));
  for (int l = 0; l < arch.depth; ++l) {
    ConvLayer layer;
    layer.in_channels = ch[l];
    layer.out_channels = ch[l + 1];
    layer.kernel = arch.kernel;
    const double bound = std::sqrt(1.0 / (static_cast<double>(layer.in_channels) * arch.kernel * arch.kernel));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weights.resize(layer.shape(0).weight_count());
    for (double& w : layer.weights) w = dist(rng);
    layer.bias.assign(static_cast<std::size_t>(layer.out_channels), 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

SpectralField cnn_eval(const RealField& omega_bar, const CnnParams& params, const Normalization& norm) {
  norm.validate();
  const Grid& g = omega_bar.grid();
  ValueAlgebra alg(g);
  auto input = alg.scale(omega_bar.data(), 1.0 / norm.omega_scale);
  auto output = alg.scale(cnn_forward(alg, std::move(input), params.layers), norm.residual_scale);
  if (!std::all_of(output.begin(), output.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericalError("cnn_eval: non-finite activations");
  }
  return SpectralField(g, alg.to_spectral(output));
}

RealField cnn_apply(const RealField& input, const CnnParams& params) {
  ValueAlgebra alg(input.grid());
  return RealField(input.grid(), cnn_forward(alg, input.data(), params.layers));
}

// --- dynamic Smagorinsky ------------------------------------------------------------

namespace {

RealField real_product(const RealField& a, const RealField& b) {
  RealField out(a.grid());
  kernels::mul(a.values(), b.values(), out.values());
  return out;
}

RealField test_filter(const RealField& f, double k_cut) { return to_real(cutoff_filter(to_spectral(f), k_cut)); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

RealField strain_rate_magnitude(const SpectralField& psi_hat) {
  const RealField pxx = to_real(derivative(psi_hat, Axis::x, 2));
  const RealField pyy = to_real(derivative(psi_hat, Axis::y, 2));
  const RealField pxy = to_real(derivative(derivative(psi_hat, Axis::x), Axis::y));
  RealField out(psi_hat.grid());
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double shear = pxx.values()[i] - pyy.values()[i];
    const double cross = 2.0 * pxy.values()[i];
    o[i] = std::sqrt(shear * shear + cross * cross);
  }
  return out;
}

SpectralField smagorinsky_tendency(const SpectralField& omega_hat, double cs2) {
  const Grid& g = omega_hat.grid();
  if (cs2 == 0.0) return SpectralField(g);
  const double delta = g.spacing();
  RealField nu_e = strain_rate_magnitude(inv_laplacian(omega_hat));
  for (double& v : nu_e.values()) v *= cs2 * delta * delta;
  const RealField flux_x = real_product(nu_e, to_real(derivative(omega_hat, Axis::x)));
  const RealField flux_y = real_product(nu_e, to_real(derivative(omega_hat, Axis::y)));
  return derivative(to_spectral(flux_x), Axis::x) + derivative(to_spectral(flux_y), Axis::y);
}

double dynamic_coefficient(const SpectralField& omega_hat, const SmagorinskyOptions& opts) {
  const Grid& g = omega_hat.grid();
  const double delta = g.spacing();
  const double k_test = 0.5 * g.n() / opts.test_filter_ratio;

  const SpectralField psi_hat = inv_laplacian(omega_hat);
  const RealField omega = to_real(omega_hat);
  const auto [u, v] = velocity(psi_hat);
  const RealField omega_x = to_real(derivative(omega_hat, Axis::x));
  const RealField omega_y = to_real(derivative(omega_hat, Axis::y));
  const RealField strain = strain_rate_magnitude(psi_hat);

  const SpectralField omega_t_hat = cutoff_filter(omega_hat, k_test);
  const SpectralField psi_t_hat = cutoff_filter(psi_hat, k_test);
  const RealField omega_t = to_real(omega_t_hat);
  const auto [u_t, v_t] = velocity(psi_t_hat);
  const RealField omega_t_x = to_real(derivative(omega_t_hat, Axis::x));
  const RealField omega_t_y = to_real(derivative(omega_t_hat, Axis::y));
  const RealField strain_t = strain_rate_magnitude(psi_t_hat);

  const RealField uw_t = test_filter(real_product(u, omega), k_test);
  const RealField vw_t = test_filter(real_product(v, omega), k_test);
  const RealField s_wx_t = test_filter(real_product(strain, omega_x), k_test);
  const RealField s_wy_t = test_filter(real_product(strain, omega_y), k_test);

  const double d2 = delta * delta;
  const double td2 = opts.test_filter_ratio * opts.test_filter_ratio * d2;
  std::vector<double> num(g.size());
  std::vector<double> den(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double lx = uw_t.values()[i] - u_t.values()[i] * omega_t.values()[i];
    const double ly = vw_t.values()[i] - v_t.values()[i] * omega_t.values()[i];
    const double mx = d2 * s_wx_t.values()[i] - td2 * strain_t.values()[i] * omega_t_x.values()[i];
    const double my = d2 * s_wy_t.values()[i] - td2 * strain_t.values()[i] * omega_t_y.values()[i];
    num[i] = lx * mx + ly * my;
    den[i] = mx * mx + my * my;
  }
  const double mm = mean_of(den);
  if (!(mm >= opts.denominator_floor)) return 0.0;
  const double cs2 = mean_of(num) / mm;
  return opts.clip ? std::max(cs2, 0.0) : cs2;
}

SmagorinskyResult smagorinsky_dynamic(const SpectralField& omega_hat, const SmagorinskyOptions& opts) {
  SmagorinskyResult r{SpectralField(omega_hat.grid()), 0.0, 0.0};
  r.coefficient = dynamic_coefficient(omega_hat, opts);
  r.tendency = smagorinsky_tendency(omega_hat, r.coefficient);
  double transfer = 0.0;
  const auto w = omega_hat.coeffs();
  const auto t = r.tendency.coeffs();
  for (std::size_t i = 0; i < w.size(); ++i) transfer += (std::conj(w[i]) * t[i]).real();
  r.transfer = transfer;
  return r;
}

SpectralField smagorinsky_dynamic_eval(const SpectralField& omega_hat) {
  return smagorinsky_dynamic(omega_hat).tendency;
}

SpectralField zero_eval(const SpectralField& omega_hat) { return SpectralField(omega_hat.grid()); }

// --- ClosureModel -----------------------------------------------------------------

const char* to_string(ClosureKind kind) {
  switch (kind) {
    case ClosureKind::zero: return "zero";
    case ClosureKind::smagorinsky_dynamic: return "smagorinsky_dynamic";
    case ClosureKind::cnn: return "cnn";
  }
  return "unknown";
}

ClosureModel ClosureModel::cnn(CnnParams params, Normalization norm) {
  params.validate();
  norm.validate();
  return ClosureModel(Cnn{std::move(params), norm});
}

ClosureKind ClosureModel::kind() const {
  switch (model_.index()) {
    case 0: return ClosureKind::zero;
    case 1: return ClosureKind::smagorinsky_dynamic;
    default: return ClosureKind::cnn;
  }
}

SpectralField ClosureModel::eval(const SpectralField& omega_hat) const {
  struct Visitor {
    const SpectralField& w;
    SpectralField operator()(const Zero&) const { return zero_eval(w); }
    SpectralField operator()(const Smagorinsky& s) const { return smagorinsky_dynamic(w, s.options).tendency; }
    SpectralField operator()(const Cnn& c) const { return cnn_eval(to_real(w), c.params, c.norm); }
  };
  return std::visit(Visitor{omega_hat}, model_);
}

}  // namespace diffqg
