#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <cstring>

#include "ymflow/error.hpp"
#include "ymflow/grid.hpp"
#include "ymflow/params.hpp"

using namespace ymflow;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

struct ExactConstants {
  double gamma, delta;
  int hbar;
};

// Oracle: 50-digit evaluation of the closed forms.
ExactConstants exact_constants(int d) {
  const big dd = d;
  const big g = (dd - 4 - sqrt((dd - 6) * (dd - 6) - 12)) / 2;
  const big half = ((dd - 2) / 2 - g) / 2;
  const big h = floor(half);
  return {double(g), double(half - h), int(h)};
}

}  // namespace

TEST(Params, ConstantsMatchExtendedPrecision) {
  for (int d : {11, 12, 13}) {
    const auto p = derive_params(d, d == 13 ? 2 : 1, d == 13 ? 6 : 4, 0.01, 20);
    const auto ex = exact_constants(d);
    EXPECT_NEAR(p.gamma, ex.gamma, 1e-12 * ex.gamma) << d;
    EXPECT_NEAR(p.delta, ex.delta, 1e-12) << d;
    EXPECT_EQ(p.hbar, ex.hbar) << d;
  }
}

TEST(Params, FrozenValues) {
  auto p = derive_params(11, 1, 4, 0.01, 20);
  EXPECT_NEAR(p.gamma, 1.6972243623, 1e-10);
  EXPECT_EQ(p.hbar, 1);
  EXPECT_NEAR(p.delta, 0.4013878, 1e-7);
  EXPECT_EQ(p.bbk, 6);
  p = derive_params(12, 1, 4, 0.01, 20);
  EXPECT_NEAR(p.gamma, 4.0 - std::sqrt(6.0), 1e-15);
  EXPECT_EQ(p.hbar, 1);
  EXPECT_NEAR(p.delta, 0.7247449, 1e-7);
  p = derive_params(13, 2, 6, 0.01, 20);
  EXPECT_NEAR(p.gamma, 1.4586187, 1e-7);
  EXPECT_EQ(p.hbar, 2);
  EXPECT_NEAR(p.delta, 0.0206907, 1e-7);
}

TEST(Params, Invariants) {
  for (int d = 11; d <= 30; ++d) {
    const auto p = derive_params(d, 1, 4, 0.01, 20);
    EXPECT_GT(p.gamma, 1.0);
    EXPECT_LT(p.gamma, 2.0);
    EXPECT_GT(p.delta, 0.0);
    EXPECT_LT(p.delta, 1.0);
    // gamma is the smaller root of g^2 - (d-4) g + (d-2) = 0
    EXPECT_NEAR(p.gamma * p.gamma - (d - 4) * p.gamma + (d - 2), 0.0, 1e-12 * d * d);
  }
}

TEST(Params, Rejections) {
  try {
    derive_params(9, 1, 4, 0.01, 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("d must exceed 10"), std::string::npos);
  }
  EXPECT_THROW(derive_params(10, 1, 4, 0.01, 20), Error);
  EXPECT_THROW(derive_params(11, 2, 1, 0.01, 20), Error);
  EXPECT_THROW(derive_params(11, 1, 4, 0.5, 20), Error);
  EXPECT_THROW(derive_params(11, 1, 4, 0.01, 0.5), Error);
}

TEST(Params, Deterministic) {
  const auto a = derive_params(11, 1, 4, 0.01, 20), b = derive_params(11, 1, 4, 0.01, 20);
  EXPECT_EQ(std::memcmp(&a.gamma, &b.gamma, sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(&a.delta, &b.delta, sizeof(double)), 0);
}

TEST(Params, LocalizationRadii) {
  const auto p = derive_params(11, 1, 4, 0.01, 20);
  EXPECT_NEAR(p.B0(1e-2), 10.0, 1e-12);
  EXPECT_NEAR(p.B1(1e-2), std::pow(10.0, 1.01), 1e-10);
}

TEST(Grid, WeightedMeasure) {
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  EXPECT_EQ(g->size(), 2000u);
  EXPECT_DOUBLE_EQ(g->y_min(), 1e-4);
  EXPECT_DOUBLE_EQ(g->y_max(), 1e3);
  EXPECT_DOUBLE_EQ(g->y(g->one_index()), 1.0);
  const auto one = GridFunction::sample(g, [](double) { return 1.0; });
  const double exact = (std::pow(1e3, 9) - std::pow(1e-4, 9)) / 9.0;
  EXPECT_LT(std::abs(weighted_inner(one, one) - exact) / exact, 1e-8);
  for (std::size_t i = 1; i < g->size(); ++i) ASSERT_GT(g->y(i), g->y(i - 1));
}

TEST(Grid, DensityNonIncreasing) {
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  // nodes per unit y: 1/(y_{i+1}-y_i) must not increase
  for (std::size_t i = 2; i < g->size(); ++i)
    ASSERT_GE(g->y(i) - g->y(i - 1), g->y(i - 1) - g->y(i - 2));
}

TEST(Grid, InsufficientResolution) {
  try {
    build_grid(1e-4, 1e3, 50, 11);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient resolution"), std::string::npos);
  }
}

TEST(Grid, UnitIntervalInner) {
  const auto g = build_grid(1.0, 2.0, 200, 11);
  const auto one = GridFunction::sample(g, [](double) { return 1.0; });
  EXPECT_NEAR(weighted_inner(one, one), 511.0 / 9.0, 1e-10);
}

TEST(Grid, QuadratureOrder) {
  const double exact = (std::pow(1e3, 9) - std::pow(1e-4, 9)) / 9.0;
  Grading gr;
  gr.end_corrections = 2;
  double prev = 0.0;
  for (std::size_t n : {120, 239, 477}) {
    const auto g = build_grid(1e-4, 1e3, n, 11, gr);
    const auto one = GridFunction::sample(g, [](double) { return 1.0; });
    const double err = std::abs(weighted_inner(one, one) - exact) / exact;
    if (prev > 0.0) EXPECT_GT(prev / err, 4.0) << n;
    prev = err;
  }
}

TEST(Grid, InnerProductBasics) {
  const auto g = build_grid(1e-4, 1e3, 1000, 11);
  const auto f = GridFunction::sample(g, [](double y) { return std::sin(3 * std::log(y)) * chi(y / 50); });
  const auto h = GridFunction::sample(g, [](double y) { return std::exp(-y) * (1 + y); });
  EXPECT_DOUBLE_EQ(weighted_inner(f, h), weighted_inner(h, f));
  EXPECT_EQ(weighted_inner(f, GridFunction::zeros(g)), 0.0);
  const auto g2 = build_grid(1e-4, 1e3, 1000, 11);
  EXPECT_THROW(weighted_inner(f, GridFunction::zeros(g2)), Error);
}

TEST(Grid, CutoffPowerLawIntegral) {
  const int d = 11;
  const double gam = gamma_of(d), M = 20.0;
  const auto g = build_grid(1e-4, 1e3, 2000, d);
  const auto f = GridFunction::sample(g, [&](double y) { return std::pow(y, -gam) * chi(y / M); });
  // Oracle: analytic on [y_min, M] plus adaptive Gauss-Kronrod on [M, 2M].
  const double p = d - 2 - 2 * gam;
  const double inner = (std::pow(M, p) - std::pow(1e-4, p)) / p;
  const double seam = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double y) { return std::pow(y, d - 3 - 2 * gam) * std::pow(chi(y / M), 2); }, M, 2 * M, 15, 1e-14);
  const double exact = inner + seam;
  EXPECT_LT(std::abs(weighted_inner(f, f) - exact) / exact, 1e-9);
}

TEST(Grid, CutoffProperties) {
  const double M = 20.0;
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  const auto c = cutoff(g, M);
  EXPECT_EQ(chi(0.5), 1.0);
  EXPECT_EQ(chi(3.0), 0.0);
  EXPECT_GT(chi(1.5), 0.0);
  EXPECT_LT(chi(1.5), 1.0);
  double prev = 1.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double y = g->y(i);
    if (y <= M) EXPECT_EQ(c[i], 1.0);
    if (y >= 2 * M) EXPECT_EQ(c[i], 0.0);
    EXPECT_LE(c[i], prev);
    prev = c[i];
  }
  for (double x = 1e-4; x < 1.0; x += 0.01) EXPECT_TRUE(std::isfinite(smoothstep_deriv(x)));
  EXPECT_THROW(cutoff(g, 0.0), Error);
}

TEST(Grid, CutoffRefinementConvergence) {
  const double M = 20.0;
  std::vector<double> probes = {15.0, 22.0, 27.5, 31.0, 36.0, 39.9};
  std::vector<double> prev;
  for (std::size_t n : {1000, 1999, 3997}) {
    const auto g = build_grid(1e-4, 1e3, n, 11);
    const auto c = cutoff(g, M);
    std::vector<double> cur;
    for (double y : probes) cur.push_back(g->interpolate(c.span(), y));
    if (!prev.empty())
      for (std::size_t k = 0; k < probes.size(); ++k) EXPECT_LT(std::abs(cur[k] - prev[k]), 1e-6);
    prev = cur;
  }
}

TEST(Grid, LambdaOfPowerLaw) {
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  for (double a : {-3.0, 0.5, 2.0}) {
    const auto f = GridFunction::sample(g, [a](double y) { return std::pow(y, a); });
    const auto lf = g->lambda(f.span());
    const auto l2f = g->lambda2(f.span());
    for (std::size_t i = 0; i < g->size(); ++i) {
      ASSERT_NEAR(lf[i] / f[i], a, 1e-7) << i;
      const bool edge = i < 2 || i + 2 >= g->size();  // one-sided stencils
      ASSERT_NEAR(l2f[i] / f[i], a * a, edge ? 1e-5 : 1e-6) << i;
    }
  }
}

TEST(Grid, CumulativeIntegral) {
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  const auto F = GridFunction::sample(g, [](double y) { return std::pow(y, 1.5); });
  const auto c = g->cumulative(F.span(), g->one_index());
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double y = g->y(i);
    const double exact = (std::pow(y, 2.5) - 1.0) / 2.5;
    ASSERT_NEAR(c[i], exact, 1e-10 * std::max(1.0, std::abs(exact))) << y;
  }
}

TEST(Grid, Interpolation) {
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  const auto f = GridFunction::sample(g, [](double y) { return y * y / (1 + y * y); });
  for (double y : {1.234e-4, 0.37, 1.0, 7.7, 999.0}) EXPECT_NEAR(g->interpolate(f.span(), y), y * y / (1 + y * y), 1e-10);
  EXPECT_THROW(g->interpolate(f.span(), 2e3), Error);
}

TEST(Grid, PowerFitExact) {
  const auto g = build_grid(1e-4, 1e3, 2000, 11);
  const auto f = GridFunction::sample(g, [](double y) { return 3.0 / (y * y); });
  const auto fit = fit_power_law(f, 100, 1000);
  EXPECT_NEAR(fit.amplitude, 3.0, 1e-12);
  EXPECT_NEAR(fit.exponent, -2.0, 1e-13);
  auto h = f;
  h.tail_order = -2.0;
  EXPECT_TRUE(orders_consistent(h));
  h.tail_order = -3.0;
  EXPECT_FALSE(orders_consistent(h));
}
