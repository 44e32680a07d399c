#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "diffqg/diagnostics.hpp"
#include "diffqg/qg.hpp"
#include "fixtures.hpp"

using namespace diffqg;

namespace {

SpectralField cosine(int n, int k, double a = 1.0) {
  return to_spectral(RealField::from_function(Grid(n), [=](double x, double) { return a * std::cos(k * x); }));
}

double sum(const SpectrumSeries& s) { return std::accumulate(s.values.begin(), s.values.end(), 0.0); }

}  // namespace

TEST(Invariants, CosineAnalytic) {
  const SpectralField w = cosine(32, 3);
  EXPECT_NEAR(total_enstrophy(w), 0.25, 1e-15);
  EXPECT_NEAR(total_energy(w), 1.0 / 36.0, 1e-16);
  EXPECT_EQ(total_enstrophy(SpectralField(Grid(16))), 0.0);
  EXPECT_EQ(total_energy(SpectralField(Grid(16))), 0.0);
}

TEST(Invariants, EnstrophyMatchesRealSpaceQuadrature) {
  for (int n : {16, 64, 256}) {
    const RealField f = fixtures::noise_field(Grid(n), 40 + n);
    const double quad = 0.5 * f.mean_square();
    EXPECT_NEAR(total_enstrophy(to_spectral(f)), quad, 1e-12 * quad) << n;
  }
}

TEST(Invariants, EnergyMatchesVelocityQuadrature) {
  const SpectralField w = fixtures::random_state(Grid(64), 3, 12);
  const auto [u, v] = velocity(inv_laplacian(w));
  const double quad = 0.5 * (u.mean_square() + v.mean_square());
  EXPECT_NEAR(total_energy(w), quad, 1e-12 * quad);
}

TEST(Spectrum, BinCountAndShells) {
  EXPECT_EQ(enstrophy_spectrum(SpectralField(Grid(32))).values.size(), 17u);
  EXPECT_EQ(shell_index(3, 4, 32), 5);
  EXPECT_EQ(shell_index(1, 1, 32), 1);
  EXPECT_EQ(shell_index(2, 2, 32), 3);
  EXPECT_EQ(shell_index(-16, -16, 32), 16);
}

TEST(Spectrum, SingleModeIsExact) {
  const double a = 1.7;
  const SpectrumSeries z = enstrophy_spectrum(cosine(32, 5, a));
  for (int k = 0; k <= z.k_max(); ++k) {
    EXPECT_NEAR(z.values[k], k == 5 ? a * a / 4 : 0.0, 1e-15) << k;
  }
  const SpectrumSeries e = energy_spectrum(cosine(32, 5, a));
  EXPECT_NEAR(e.values[5], a * a / 100, 1e-15);
  EXPECT_EQ(sum(enstrophy_spectrum(SpectralField(Grid(16)))), 0.0);
}

TEST(Spectrum, BinsSumToTotals) {
  for (int n : {16, 64, 256}) {
    const SpectralField w = to_spectral(fixtures::noise_field(Grid(n), n));
    EXPECT_NEAR(sum(enstrophy_spectrum(w)), total_enstrophy(w), 1e-12 * total_enstrophy(w));
    EXPECT_NEAR(sum(energy_spectrum(w)), total_energy(w), 1e-12 * total_energy(w));
  }
}

TEST(Flux, SingleModeIsZero) {
  SpectralField w(Grid(32));
  w.mode(4, 1) = cplx(0.5, 0.1);
  w.mode(-4, -1) = std::conj(w.mode(4, 1));
  for (double v : enstrophy_flux(w, inv_laplacian(w)).values) EXPECT_LT(std::abs(v), 1e-15);
}

TEST(Flux, StartsAtZeroAndClosesAtKmax) {
  const SpectralField w = fixtures::random_state(Grid(32), 17, 10, 2.0);
  const SpectralField psi = inv_laplacian(w);
  const SpectrumSeries t = enstrophy_transfer(w, psi);
  const SpectrumSeries f = enstrophy_flux(w, psi);
  EXPECT_EQ(f.values[0], 0.0);
  double scale = 0.0;
  for (double v : t.values) scale += std::abs(v);
  ASSERT_GT(scale, 0.0);
  EXPECT_LT(std::abs(sum(t)), 1e-10 * scale);
  EXPECT_LT(std::abs(f.values.back()), 1e-10 * scale);
  EXPECT_NEAR(f.values[3], -(t.values[0] + t.values[1] + t.values[2] + t.values[3]), 1e-14 * scale);
}

TEST(Stability, Thresholds) {
  const SpectralField w = fixtures::random_state(Grid(16), 2);
  const double z = total_enstrophy(w);
  EXPECT_TRUE(stability_check({w, 0.1}, z).ok());

  SpectralField bad = w;
  bad.coeffs()[5] = std::numeric_limits<double>::quiet_NaN();
  const StabilityStatus nf = stability_check({bad, 0.3}, z);
  EXPECT_EQ(nf.state, StabilityState::diverged);
  EXPECT_EQ(nf.cause, DivergenceCause::non_finite);
  EXPECT_EQ(nf.t_event, 0.3);

  const StabilityStatus big = stability_check({1e4 * w, 0.7}, z);
  EXPECT_EQ(big.cause, DivergenceCause::norm_blowup);
  EXPECT_EQ(big.t_event, 0.7);
  EXPECT_TRUE(stability_check({9e2 * w, 0.7}, z).ok());
}

TEST(Stability, MonitorLatchesFirstEvent) {
  const SpectralField w = fixtures::random_state(Grid(16), 2);
  StabilityMonitor m(total_enstrophy(w));
  EXPECT_TRUE(m.observe({w, 0.0}).ok());
  EXPECT_FALSE(m.observe({1e5 * w, 1.0}).ok());
  EXPECT_EQ(m.observe({w, 2.0}).t_event, 1.0);
  EXPECT_EQ(to_string(m.status().cause), std::string("norm_blowup"));
}

TEST(TimeAverage, Cases) {
  const SpectrumSeries s = enstrophy_spectrum(fixtures::random_state(Grid(16), 1));
  TimeAverage one = time_average({}, s);
  EXPECT_EQ(one.mean().values, s.values);
  TimeAverage two = time_average(time_average({}, s), s);
  EXPECT_EQ(two.count(), 2);
  EXPECT_EQ(two.mean().values, s.values);
  SpectrumSeries neg = s;
  for (double& v : neg.values) v = -v;
  for (double v : time_average(time_average({}, s), neg).mean().values) EXPECT_EQ(v, 0.0);
}

TEST(TimeAverage, RejectsMismatch) {
  TimeAverage acc;
  acc.add(enstrophy_spectrum(SpectralField(Grid(16))));
  EXPECT_THROW(acc.add(enstrophy_spectrum(SpectralField(Grid(32)))), std::invalid_argument);
  EXPECT_THROW(acc.add(energy_spectrum(SpectralField(Grid(16)))), std::invalid_argument);
  EXPECT_EQ(TimeAverage{}.count(), 0);
}
