#include "diffqg/kernels.hpp"

#include <fftw3.h>

#include <Eigen/Core>
#include <algorithm>
#include <cassert>
#include <map>
#include <mutex>
#include <stdexcept>

namespace diffqg::kernels {

namespace {

struct Plans {
  fftw_plan forward = nullptr;       // c2c
  fftw_plan forward_real = nullptr;  // r2c
  fftw_plan backward_real = nullptr; // c2r
};

// Per-thread aligned scratch for one grid size.
struct Workspace {
  explicit Workspace(int n)
      : count(static_cast<std::size_t>(n) * n),
        half(static_cast<std::size_t>(n) * (n / 2 + 1)),
        in(fftw_alloc_complex(count)),
        out(fftw_alloc_complex(count)),
        real(fftw_alloc_real(count)),
        spec(fftw_alloc_complex(half)) {
    if (in == nullptr || out == nullptr || real == nullptr || spec == nullptr) throw std::bad_alloc();
  }
  ~Workspace() {
    fftw_free(in);
    fftw_free(out);
    fftw_free(real);
    fftw_free(spec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  std::size_t count;
  std::size_t half;
  fftw_complex* in;
  fftw_complex* out;
  double* real;
  fftw_complex* spec;  // n × (n/2 + 1) half spectrum
};

Workspace& workspace(int n) {
  thread_local std::map<int, std::unique_ptr<Workspace>> spaces;
  auto& slot = spaces[n];
  if (!slot) slot = std::make_unique<Workspace>(n);
  return *slot;
}

// Plans are created once per size under a lock (FFTW planning is not
// thread-safe) and executed through the new-array interface, which is.
// FFTW_ESTIMATE keeps the chosen algorithm, and hence the rounding, fixed
// from run to run.
const Plans& plans(int n) {
  static std::mutex mutex;
  static std::map<int, Plans> cache;
  std::lock_guard lock(mutex);
  auto [it, inserted] = cache.try_emplace(n);
  if (inserted) {
    Workspace& ws = workspace(n);
    it->second.forward = fftw_plan_dft_2d(n, n, ws.in, ws.out, FFTW_FORWARD, FFTW_ESTIMATE);
    it->second.forward_real = fftw_plan_dft_r2c_2d(n, n, ws.real, ws.spec, FFTW_ESTIMATE);
    it->second.backward_real = fftw_plan_dft_c2r_2d(n, n, ws.spec, ws.real, FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
  }
  return it->second;
}

inline cplx* as_cplx(fftw_complex* p) { return reinterpret_cast<cplx*>(p); }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;
using StridedConst = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using Strided = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;

constexpr std::size_t kPixelBlock = 4096;

inline int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// Pixel blocks are whole grid rows [y0, y0 + rows).
struct RowBlock {
  int y0;
  int rows;
  std::size_t count(int n) const { return static_cast<std::size_t>(rows) * n; }
};

int rows_per_block(int n) { return std::max(1, static_cast<int>(kPixelBlock) / n); }

// col[(c, dy, dx)][(y - y0) * n + x] = input[c][(y + dy - h) mod n][(x + dx - h) mod n]
void im2col(const ConvShape& s, std::span<const double> input, RowBlock b, std::vector<double>& col) {
  const int n = s.n;
  const int k = s.kernel;
  const int h = k / 2;
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  const std::size_t count = b.count(n);
  col.resize(static_cast<std::size_t>(s.in_channels) * k * k * count);
  std::size_t row = 0;
  for (int c = 0; c < s.in_channels; ++c) {
    const double* src = input.data() + c * plane;
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx, ++row) {
        double* dst = col.data() + row * count;
        const int shift = wrap(dx - h, n);
        for (int y = b.y0; y < b.y0 + b.rows; ++y) {
          const double* line = src + static_cast<std::size_t>(wrap(y + dy - h, n)) * n;
          double* out = dst + static_cast<std::size_t>(y - b.y0) * n;
          const int head = n - shift;
          std::copy(line + shift, line + n, out);
          std::copy(line, line + shift, out + head);
        }
      }
    }
  }
}

void col2im_add(const ConvShape& s, const std::vector<double>& col, RowBlock b, std::span<double> grad_input) {
  const int n = s.n;
  const int k = s.kernel;
  const int h = k / 2;
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  const std::size_t count = b.count(n);
  std::size_t row = 0;
  for (int c = 0; c < s.in_channels; ++c) {
    double* dst = grad_input.data() + c * plane;
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx, ++row) {
        const double* src = col.data() + row * count;
        const int shift = wrap(dx - h, n);
        const int head = n - shift;
        for (int y = b.y0; y < b.y0 + b.rows; ++y) {
          double* line = dst + static_cast<std::size_t>(wrap(y + dy - h, n)) * n;
          const double* in = src + static_cast<std::size_t>(y - b.y0) * n;
          for (int x = 0; x < head; ++x) line[shift + x] += in[x];
          for (int x = 0; x < shift; ++x) line[x] += in[head + x];
        }
      }
    }
  }
}

}  // namespace

void forward_dft(int n, std::span<const double> in, std::span<cplx> out, double scale) {
  [[maybe_unused]] const std::size_t count = static_cast<std::size_t>(n) * n;
  assert(in.size() == count && out.size() == count);
  const Plans& p = plans(n);
  Workspace& ws = workspace(n);
  std::copy(in.begin(), in.end(), ws.real);
  fftw_execute_dft_r2c(p.forward_real, ws.real, ws.spec);
  // Expand the half spectrum using c(-k) = conj(c(k)).
  const int h = n / 2 + 1;
  const cplx* half = as_cplx(ws.spec);
  for (int iy = 0; iy < n; ++iy) {
    const cplx* row = half + static_cast<std::size_t>(iy) * h;
    const cplx* mirror = half + static_cast<std::size_t>(iy == 0 ? 0 : n - iy) * h;
    cplx* dst = out.data() + static_cast<std::size_t>(iy) * n;
    for (int ix = 0; ix < h; ++ix) dst[ix] = cplx(row[ix].real() * scale, row[ix].imag() * scale);
    for (int ix = h; ix < n; ++ix) dst[ix] = cplx(mirror[n - ix].real() * scale, -mirror[n - ix].imag() * scale);
  }
}

void forward_dft(int n, std::span<const cplx> in, std::span<cplx> out, double scale) {
  const std::size_t count = static_cast<std::size_t>(n) * n;
  assert(in.size() == count && out.size() == count);
  const Plans& p = plans(n);
  Workspace& ws = workspace(n);
  std::copy(in.begin(), in.end(), as_cplx(ws.in));
  fftw_execute_dft(p.forward, ws.in, ws.out);
  const cplx* res = as_cplx(ws.out);
  for (std::size_t i = 0; i < count; ++i) out[i] = res[i] * scale;
}

// Re(IDFT(c)) = IDFT(H(c)) with H(c)(k) = (c(k) + conj(c(-k)))/2, so the
// Hermitian part is handed to the real-output transform. For Hermitian input
// H is the identity in floating point as well.
void inverse_dft_real(int n, std::span<const cplx> in, std::span<double> out, double scale) {
  const std::size_t count = static_cast<std::size_t>(n) * n;
  assert(in.size() == count && out.size() == count);
  const Plans& p = plans(n);
  Workspace& ws = workspace(n);
  const int h = n / 2 + 1;
  cplx* half = as_cplx(ws.spec);
  for (int iy = 0; iy < n; ++iy) {
    const cplx* row = in.data() + static_cast<std::size_t>(iy) * n;
    const cplx* mirror = in.data() + static_cast<std::size_t>(iy == 0 ? 0 : n - iy) * n;
    cplx* dst = half + static_cast<std::size_t>(iy) * h;
    for (int ix = 0; ix < h; ++ix) {
      const cplx a = row[ix];
      const cplx b = mirror[ix == 0 ? 0 : n - ix];
      dst[ix] = cplx(0.5 * (a.real() + b.real()), 0.5 * (a.imag() - b.imag()));
    }
  }
  fftw_execute_dft_c2r(p.backward_real, ws.spec, ws.real);
  for (std::size_t i = 0; i < count; ++i) out[i] = ws.real[i] * scale;
}

// Complex products are written out to avoid the Annex G NaN-recovery path of
// std::complex multiplication.
void diag_mul(std::span<const cplx> factor, std::span<const cplx> in, std::span<cplx> out) {
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double a = factor[i].real(), b = factor[i].imag();
    const double c = in[i].real(), d = in[i].imag();
    out[i] = cplx(a * c - b * d, a * d + b * c);
  }
}

void diag_mul(std::span<const double> factor, std::span<const cplx> in, std::span<cplx> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = factor[i] * in[i];
}

void diag_mul_conj(std::span<const cplx> factor, std::span<const cplx> in, std::span<cplx> out) {
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double a = factor[i].real(), b = -factor[i].imag();
    const double c = in[i].real(), d = in[i].imag();
    out[i] = cplx(a * c - b * d, a * d + b * c);
  }
}

void lincomb(std::span<const double> coeffs, std::span<const cplx* const> inputs, std::span<cplx> out) {
  assert(coeffs.size() == inputs.size() && !inputs.empty());
  const cplx* first = inputs[0];
  const double c0 = coeffs[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * first[i];
  for (std::size_t j = 1; j < inputs.size(); ++j) {
    const cplx* x = inputs[j];
    const double c = coeffs[j];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * x[i];
  }
}

void lincomb(std::span<const double> coeffs, std::span<const double* const> inputs, std::span<double> out) {
  assert(coeffs.size() == inputs.size() && !inputs.empty());
  const double* first = inputs[0];
  const double c0 = coeffs[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * first[i];
  for (std::size_t j = 1; j < inputs.size(); ++j) {
    const double* x = inputs[j];
    const double c = coeffs[j];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * x[i];
  }
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
}

void scale(std::span<const double> a, double s, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
}

void relu(std::span<const double> a, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weights,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t plane = static_cast<std::size_t>(s.n) * s.n;
  const auto rows = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
  assert(input.size() == plane * s.in_channels);
  assert(output.size() == plane * s.out_channels);
  assert(weights.size() == s.weight_count() && bias.size() == static_cast<std::size_t>(s.out_channels));

  MapConst w(weights.data(), s.out_channels, rows);
  std::vector<double> col;
  const int step = rows_per_block(s.n);
  for (int y0 = 0; y0 < s.n; y0 += step) {
    const RowBlock b{y0, std::min(step, s.n - y0)};
    const std::size_t count = b.count(s.n);
    const std::size_t p0 = static_cast<std::size_t>(y0) * s.n;
    im2col(s, input, b, col);
    MapConst c(col.data(), rows, static_cast<Eigen::Index>(count));
    Strided out(output.data() + p0, s.out_channels, static_cast<Eigen::Index>(count),
                Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
    out.noalias() = w * c;
  }
  for (int o = 0; o < s.out_channels; ++o) {
    double* dst = output.data() + o * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] += bias[o];
  }
}

void conv2d_backward(const ConvShape& s, std::span<const double> input, std::span<const double> weights,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weights, std::span<double> grad_bias) {
  const std::size_t plane = static_cast<std::size_t>(s.n) * s.n;
  const auto rows = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;

  if (!grad_bias.empty()) {
    for (int o = 0; o < s.out_channels; ++o) {
      const double* g = grad_output.data() + o * plane;
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += g[p];
      grad_bias[o] += acc;
    }
  }
  if (grad_input.empty() && grad_weights.empty()) return;

  MapConst w(weights.data(), s.out_channels, rows);
  std::vector<double> col;
  std::vector<double> dcol;
  const int step = rows_per_block(s.n);
  for (int y0 = 0; y0 < s.n; y0 += step) {
    const RowBlock b{y0, std::min(step, s.n - y0)};
    const std::size_t count = b.count(s.n);
    const std::size_t p0 = static_cast<std::size_t>(y0) * s.n;
    StridedConst g(grad_output.data() + p0, s.out_channels, static_cast<Eigen::Index>(count),
                   Eigen::OuterStride<>(static_cast<Eigen::Index>(plane)));
    if (!grad_weights.empty()) {
      im2col(s, input, b, col);
      MapConst c(col.data(), rows, static_cast<Eigen::Index>(count));
      Map gw(grad_weights.data(), s.out_channels, rows);
      gw.noalias() += g * c.transpose();
    }
    if (!grad_input.empty()) {
      dcol.resize(static_cast<std::size_t>(rows) * count);
      Map dc(dcol.data(), rows, static_cast<Eigen::Index>(count));
      dc.noalias() = w.transpose() * g;
      col2im_add(s, dcol, b, grad_input);
    }
  }
}

}  // namespace diffqg::kernels
