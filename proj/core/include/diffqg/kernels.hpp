#pragma once

// Raw numeric kernels shared by the plain field API and the recording tape.
// Both paths call exactly these functions so their results agree bitwise.

#include <cstddef>
#include <initializer_list>
#include <span>

#include "diffqg/grid.hpp"

namespace diffqg::kernels {

/// Forward DFT of an n×n real array, scaled by `scale` (1/n² gives the
/// mean-preserving convention used throughout).
void forward_dft(int n, std::span<const double> in, std::span<cplx> out, double scale);
/// Forward DFT of a complex array (no Hermitian assumption).
void forward_dft(int n, std::span<const cplx> in, std::span<cplx> out, double scale);
/// Unnormalized inverse DFT, keeping the real part.
void inverse_dft_real(int n, std::span<const cplx> in, std::span<double> out, double scale);

void diag_mul(std::span<const cplx> factor, std::span<const cplx> in, std::span<cplx> out);
void diag_mul(std::span<const double> factor, std::span<const cplx> in, std::span<cplx> out);
/// out = factor̄ ⊙ in, the adjoint of diag_mul under the real inner product.
void diag_mul_conj(std::span<const cplx> factor, std::span<const cplx> in, std::span<cplx> out);

/// out = Σ coeffs[j] * inputs[j], accumulated left to right.
void lincomb(std::span<const double> coeffs, std::span<const cplx* const> inputs, std::span<cplx> out);
void lincomb(std::span<const double> coeffs, std::span<const double* const> inputs, std::span<double> out);

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out);
void scale(std::span<const double> a, double s, std::span<double> out);
void relu(std::span<const double> a, std::span<double> out);

/// Shape of one periodic 2-D convolution layer.
struct ConvShape {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 5;
  int n = 0;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

/// Cross-correlation with circular padding; input [in, n, n], weights
/// [out, in, k, k] row-major, output [out, n, n]. Output pixel (y, x) reads
/// input pixel (y + dy - k/2, x + dx - k/2) wrapped, for tap (dy, dx).
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weights,
                    std::span<const double> bias, std::span<double> output);

/// Accumulates the cotangents of input, weights and bias. Any target span
/// may be empty to skip that cotangent.
void conv2d_backward(const ConvShape& s, std::span<const double> input, std::span<const double> weights,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weights, std::span<double> grad_bias);

}  // namespace diffqg::kernels
