#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "diffqg/spectral.hpp"
#include "fixtures.hpp"

using namespace diffqg;
using fixtures::max_abs;
using fixtures::max_abs_diff;
using fixtures::rel_err;

namespace {

RealField sampled(int n, double (*f)(double, double)) { return RealField::from_function(Grid(n), f); }

}  // namespace

// --- transforms ---------------------------------------------------------------------

TEST(Transform, ZeroFieldHasZeroCoefficients) {
  const SpectralField fh = to_spectral(RealField(Grid(16)));
  for (cplx c : fh.coeffs()) EXPECT_EQ(c, cplx(0.0));
  const RealField f = to_real(SpectralField(Grid(16)));
  for (double x : f.values()) EXPECT_EQ(x, 0.0);
}

TEST(Transform, SingleCosineHasTwoHalfCoefficients) {
  const SpectralField fh = to_spectral(sampled(64, [](double x, double) { return std::cos(3 * x); }));
  const Grid& g = fh.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool on = g.ky()[i] == 0 && std::abs(g.kx()[i]) == 3;
    EXPECT_NEAR(std::abs(fh.coeffs()[i]), on ? 0.5 : 0.0, 1e-15) << g.kx()[i] << "," << g.ky()[i];
  }
  EXPECT_NEAR(fh.mode(3, 0).real(), 0.5, 1e-15);
}

TEST(Transform, HalfCoefficientPairGivesCosine) {
  SpectralField fh(Grid(16));
  fh.mode(1, 0) = 0.5;
  fh.mode(-1, 0) = 0.5;
  const RealField f = to_real(fh);
  const RealField expect = RealField::from_function(Grid(16), [](double x, double) { return std::cos(x); });
  EXPECT_LT(max_abs_diff(f.values(), expect.values()), 1e-15);
}

TEST(Transform, RoundTripOnAllSizes) {
  for (int n : {16, 32, 64, 128, 256}) {
    const RealField f = fixtures::noise_field(Grid(n), 11 + n);
    EXPECT_LT(rel_err(to_real(to_spectral(f)), f), 1e-12) << n;
  }
}

TEST(Transform, ParsevalMeanSquareEqualsPower) {
  for (int n : {16, 32, 64, 128, 256}) {
    const RealField f = fixtures::noise_field(Grid(n), 3 + n);
    const SpectralField fh = to_spectral(f);
    EXPECT_NEAR(fh.power(), f.mean_square(), 1e-12 * f.mean_square()) << n;
    EXPECT_NEAR(fh.coeffs()[0].real(), f.mean(), 1e-14);
  }
}

TEST(Transform, ForwardOutputIsHermitian) {
  const SpectralField fh = to_spectral(fixtures::noise_field(Grid(32), 5));
  EXPECT_LT(fh.hermitian_defect(), 1e-15);
  EXPECT_TRUE(fh.is_hermitian());
}

TEST(Transform, HermitianInputLeavesNoImaginaryResidue) {
  // Build arbitrary Hermitian coefficients and compare the fast inverse with a
  // direct complex synthesis whose imaginary part is the residue.
  const Grid g(16);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  SpectralField fh(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t j = g.conjugate_index(i);
    if (j < i) continue;
    cplx c{normal(rng), normal(rng)};
    if (j == i) c = c.real();
    fh.coeffs()[i] = c;
    fh.coeffs()[j] = std::conj(c);
  }
  ASSERT_TRUE(fh.is_hermitian());
  const RealField f = to_real(fh);
  double max_imag = 0.0, max_diff = 0.0;
  for (int iy = 0; iy < 16; ++iy) {
    for (int ix = 0; ix < 16; ++ix) {
      // Extended precision keeps the oracle's own roundoff out of the residue.
      std::complex<long double> s = 0.0L;
      for (std::size_t m = 0; m < g.size(); ++m) {
        // Wavenumbers taken modulo n so the Nyquist terms are exact exponentials.
        const long double ph = 2.0L * std::numbers::pi_v<long double> * ((m % 16) * ix + (m / 16) * iy) / 16.0L;
        const std::complex<long double> c(fh.coeffs()[m].real(), fh.coeffs()[m].imag());
        s += c * std::polar(1.0L, ph);
      }
      max_imag = std::max(max_imag, static_cast<double>(std::abs(s.imag())));
      max_diff = std::max(max_diff, static_cast<double>(std::abs(s.real() - f.at(ix, iy))));
    }
  }
  EXPECT_LT(max_imag, 1e-13);
  EXPECT_LT(max_diff, 1e-12);
}

TEST(Transform, RejectsNonFiniteAndNonHermitian) {
  RealField f(Grid(16));
  f.at(2, 3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(to_spectral(f), std::invalid_argument);
  SpectralField fh(Grid(16));
  fh.mode(2, 1) = cplx(1.0, 1.0);
  EXPECT_THROW(to_real(fh), std::invalid_argument);
}

// --- derivatives and Poisson --------------------------------------------------------

TEST(Derivative, AnalyticCosine) {
  for (int n : {16, 64, 256}) {
    const SpectralField fh = to_spectral(sampled(n, [](double x, double) { return std::cos(3 * x); }));
    const RealField dx = to_real(derivative(fh, Axis::x));
    const RealField dxx = to_real(derivative(fh, Axis::x, 2));
    const RealField dy = to_real(derivative(fh, Axis::y));
    const Grid g(n);
    EXPECT_LT(rel_err(dx, RealField::from_function(g, [](double x, double) { return -3 * std::sin(3 * x); })), 1e-12);
    EXPECT_LT(rel_err(dxx, RealField::from_function(g, [](double x, double) { return -9 * std::cos(3 * x); })), 1e-12);
    EXPECT_LT(max_abs(dy.values()), 1e-14);
  }
}

TEST(Derivative, OddOrderDropsNyquist) {
  SpectralField fh(Grid(16));
  fh.mode(-8, 0) = 1.0;
  EXPECT_EQ(derivative(fh, Axis::x).mode(-8, 0), cplx(0.0));
  EXPECT_EQ(derivative(fh, Axis::x, 2).mode(-8, 0), cplx(-64.0));
  EXPECT_TRUE(derivative(fh, Axis::x).is_hermitian());
}

TEST(Laplacian, AnalyticCases) {
  const SpectralField c = to_spectral(sampled(32, [](double x, double) { return std::cos(3 * x); }));
  const RealField lap = to_real(laplacian(c));
  EXPECT_LT(rel_err(lap, RealField::from_function(Grid(32), [](double x, double) { return -9 * std::cos(3 * x); })),
            1e-12);
  const SpectralField k = to_spectral(sampled(32, [](double, double) { return 2.5; }));
  EXPECT_LT(max_abs(to_real(laplacian(k)).values()), 1e-15);
  SpectralField m(Grid(32));
  m.mode(3, 4) = 1.0;
  m.mode(-3, -4) = 1.0;
  EXPECT_EQ(laplacian(m).mode(3, 4), cplx(-25.0));
}

TEST(InverseLaplacian, AnalyticCasesAndGauge) {
  const SpectralField c = to_spectral(sampled(32, [](double x, double) { return std::cos(3 * x); }));
  const RealField psi = to_real(inv_laplacian(c));
  EXPECT_LT(rel_err(psi, RealField::from_function(Grid(32), [](double x, double) { return -std::cos(3 * x) / 9; })),
            1e-12);
  SpectralField m(Grid(32));
  m.mode(3, 4) = 1.0;
  m.mode(-3, -4) = 1.0;
  EXPECT_NEAR(inv_laplacian(m).mode(3, 4).real(), -1.0 / 25.0, 1e-17);
  const SpectralField k = to_spectral(sampled(32, [](double, double) { return 4.0; }));
  EXPECT_LT(max_abs(to_real(inv_laplacian(k)).values()), 1e-15);
}

TEST(InverseLaplacian, InvertsLaplacianOnZeroMeanFields) {
  for (int n : {16, 64, 256}) {
    SpectralField fh = to_spectral(fixtures::random_field(Grid(n), 21, 6));
    fh.coeffs()[0] = 0.0;
    const RealField back = to_real(laplacian(inv_laplacian(fh)));
    EXPECT_LT(rel_err(back, to_real(fh)), 1e-12) << n;
  }
}

// --- Jacobian and velocity ----------------------------------------------------------

TEST(Jacobian, SinXSinY) {
  const SpectralField psi = to_spectral(sampled(64, [](double x, double) { return std::sin(x); }));
  const SpectralField om = to_spectral(sampled(64, [](double, double y) { return std::sin(y); }));
  const RealField j = to_real(jacobian(psi, om));
  const RealField expect = sampled(64, [](double x, double y) { return std::cos(x) * std::cos(y); });
  EXPECT_LT(rel_err(j, expect), 1e-12);
}

TEST(Jacobian, ParallelGradientsGiveZero) {
  SpectralField om(Grid(32));
  om.mode(3, 2) = cplx(0.4, -0.3);
  om.mode(-3, -2) = std::conj(om.mode(3, 2));
  EXPECT_LT(max_abs(to_real(jacobian(inv_laplacian(om), om)).values()), 1e-14);
}

TEST(Jacobian, MatchesFineGridQuadratureTruncated) {
  // Band-limited inputs: the product computed on a 2x grid is alias free, so
  // its truncation is the exact dealiased Jacobian.
  const Grid g(32), fine(64);
  const SpectralField a = fixtures::random_state(g, 41, 10);
  const SpectralField b = fixtures::random_state(g, 42, 10);
  const SpectralField af = resample(a, fine), bf = resample(b, fine);
  const RealField ax = to_real(derivative(af, Axis::x)), ay = to_real(derivative(af, Axis::y));
  const RealField bx = to_real(derivative(bf, Axis::x)), by = to_real(derivative(bf, Axis::y));
  RealField prod(fine);
  for (std::size_t i = 0; i < fine.size(); ++i) {
    prod.values()[i] = ax.values()[i] * by.values()[i] - ay.values()[i] * bx.values()[i];
  }
  const SpectralField oracle = dealias(resample(to_spectral(prod), g));
  const SpectralField j = jacobian(a, b);
  EXPECT_LT(max_abs_diff(j.coeffs(), oracle.coeffs()), 1e-12 * std::sqrt(oracle.power()));
}

TEST(Jacobian, AntisymmetricAndConservative) {
  const Grid g(64);
  const SpectralField om = fixtures::random_state(g, 7, 20);
  const SpectralField psi = inv_laplacian(om);
  const SpectralField j = jacobian(psi, om);
  const SpectralField jr = jacobian(om, psi);
  EXPECT_LT(max_abs_diff(j.coeffs(), (-1.0 * jr).coeffs()), 1e-14 * std::sqrt(j.power()));
  // ⟨ω·J⟩ and ⟨ψ·J⟩ via Parseval.
  double wz = 0.0, pz = 0.0, scale_w = 0.0, scale_p = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    wz += (std::conj(om.coeffs()[i]) * j.coeffs()[i]).real();
    pz += (std::conj(psi.coeffs()[i]) * j.coeffs()[i]).real();
    scale_w += std::abs(om.coeffs()[i]) * std::abs(j.coeffs()[i]);
    scale_p += std::abs(psi.coeffs()[i]) * std::abs(j.coeffs()[i]);
  }
  EXPECT_LT(std::abs(wz), 1e-10 * scale_w);
  EXPECT_LT(std::abs(pz), 1e-10 * scale_p);
}

TEST(Jacobian, RejectsGridMismatch) {
  EXPECT_THROW(jacobian(SpectralField(Grid(16)), SpectralField(Grid(32))), std::invalid_argument);
}

TEST(Velocity, AnalyticStreamfunctions) {
  const auto [u1, v1] = velocity(to_spectral(sampled(32, [](double, double y) { return std::cos(y); })));
  EXPECT_LT(rel_err(u1, sampled(32, [](double, double y) { return std::sin(y); })), 1e-12);
  EXPECT_LT(max_abs(v1.values()), 1e-15);
  const auto [u2, v2] = velocity(to_spectral(sampled(32, [](double x, double) { return std::cos(x); })));
  EXPECT_LT(max_abs(u2.values()), 1e-15);
  EXPECT_LT(rel_err(v2, sampled(32, [](double x, double) { return -std::sin(x); })), 1e-12);
}

TEST(Velocity, DivergenceFree) {
  const auto [u, v] = velocity(inv_laplacian(fixtures::random_state(Grid(64), 3, 12)));
  const SpectralField div = derivative(to_spectral(u), Axis::x) + derivative(to_spectral(v), Axis::y);
  EXPECT_LT(std::sqrt(div.power()), 1e-12 * std::sqrt(to_spectral(u).power()));
}

// --- resampling and field algebra ---------------------------------------------------

TEST(Resample, ZeroPadThenTruncateIsIdentity) {
  const SpectralField a = fixtures::random_state(Grid(32), 8, 9);
  const SpectralField up = resample(a, Grid(128));
  EXPECT_TRUE(up.is_hermitian());
  EXPECT_NEAR(up.power(), a.power(), 1e-14 * a.power());
  const SpectralField back = resample(up, Grid(32));
  EXPECT_EQ(max_abs_diff(back.coeffs(), a.coeffs()), 0.0);
}

TEST(Resample, UpsampledFieldInterpolatesExactly) {
  const RealField f = fixtures::random_field(Grid(16), 2, 5);
  const RealField fine = to_real(resample(to_spectral(f), Grid(64)));
  for (int iy = 0; iy < 16; ++iy) {
    for (int ix = 0; ix < 16; ++ix) EXPECT_NEAR(fine.at(4 * ix, 4 * iy), f.at(ix, iy), 1e-12);
  }
}

TEST(ValueAlgebra, MatchesFieldFunctions) {
  const Grid g(32);
  const SpectralField om = fixtures::random_state(g, 5, 8);
  const ValueAlgebra alg(g);
  const auto j = jacobian_of(alg, inv_laplacian(om).data(), om.data());
  EXPECT_EQ(max_abs_diff(std::span<const cplx>(j), jacobian(inv_laplacian(om), om).coeffs()), 0.0);
  const auto lc = alg.lincomb({{2.0, om.data()}, {-0.5, om.data()}});
  EXPECT_LT(max_abs_diff(std::span<const cplx>(lc), (1.5 * om).coeffs()), 1e-15);
}
