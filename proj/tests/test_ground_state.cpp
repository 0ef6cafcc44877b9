#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>

#include "ymflow/error.hpp"
#include "ymflow/ground_state.hpp"

using namespace ymflow;
using boost::multiprecision::cpp_rational;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

using Poly = std::vector<cpp_rational>;  // coefficients in t = y^2

Poly mul(const Poly& a, const Poly& b, std::size_t keep) {
  Poly r(keep, 0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size() && i + j < keep; ++j) r[i + j] += a[i] * b[j];
  return r;
}

// y^2 (Q'' + (d-3) Q'/y) - (d-2) f(Q) for Q = sum a_k t^k, as a polynomial in t.
Poly ode_residual(const Poly& a, int d, std::size_t keep) {
  Poly r(keep, 0);
  for (std::size_t k = 0; k < a.size() && k < keep; ++k) r[k] += a[k] * int(2 * k) * int(2 * k + d - 4);
  const Poly a2 = mul(a, a, keep), a3 = mul(a2, a, keep);
  for (std::size_t k = 0; k < keep; ++k) {
    const cpp_rational q = k < a.size() ? a[k] : cpp_rational(0);
    r[k] -= cpp_rational(d - 2) * (2 * q - 3 * a2[k] + a3[k]);
  }
  return r;
}

// Oracle: solve order by order from the polynomial residual (linear in the top coefficient).
Poly exact_series(int d, int n) {
  Poly a(n + 1, 0);
  a[1] = cpp_rational(1, 2);
  for (int k = 2; k <= n; ++k) {
    a[k] = 0;
    const cpp_rational r0 = ode_residual(a, d, k + 1)[k];
    a[k] = 1;
    const cpp_rational r1 = ode_residual(a, d, k + 1)[k] - r0;
    a[k] = -r0 / r1;
  }
  return a;
}

}  // namespace

TEST(Series, LeadingCoefficientIsHalf) {
  const auto p = derive_params(11, 1, 4, 0.01, 20);
  EXPECT_EQ(origin_series(p, 4)[0], 0.5);
  EXPECT_THROW(origin_series(p, 1), Error);
}

TEST(Series, MatchesExactRationalOracle) {
  for (int d : {11, 12, 13}) {
    const auto p = derive_params(d, 1, 4, 0.01, 20);
    const auto a = origin_series(p, 6);
    const auto ex = exact_series(d, 6);
    for (int k = 1; k <= 6; ++k) {
      const double e = double(ex[k]);
      EXPECT_NEAR(a[k - 1], e, 1e-14 * std::abs(e)) << "d=" << d << " k=" << k;
    }
  }
  // frozen: a_2 = -3(d-2)/(8(d+2)) for d = 11
  EXPECT_NEAR(origin_series(derive_params(11, 1, 4, 0.01, 20), 2)[1], -27.0 / 104.0, 1e-16);
}

TEST(Series, TruncationOrder) {
  const int d = 11;
  const auto p = derive_params(d, 1, 4, 0.01, 20);
  for (int n : {2, 3}) {
    const auto a = origin_series(p, n);
    auto residual = [&](big y) {
      big Q = 0, Qy = 0, Qyy = 0;
      for (int k = 1; k <= n; ++k) {
        const big c = a[k - 1];
        Q += c * pow(y, 2 * k);
        Qy += c * 2 * k * pow(y, 2 * k - 1);
        Qyy += c * 2 * k * (2 * k - 1) * pow(y, 2 * k - 2);
      }
      return abs(-Qyy - (d - 3) * Qy / y + (d - 2) * Q * (1 - Q) * (2 - Q) / (y * y));
    };
    const double ratio = double(residual(big(1e-3)) / residual(big(0.5e-3)));
    EXPECT_NEAR(ratio, std::pow(2.0, 2 * n), 0.05 * std::pow(2.0, 2 * n)) << n;
  }
}

class GroundStateD11 : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    p = derive_params(11, 1, 4, 0.01, 20);
    g = build_grid(1e-4, 1e3, 2000, 11);
    gs = solve_ground_state(p, g);
  }
  static ModelParams p;
  static GridPtr g;
  static GroundState gs;
};
ModelParams GroundStateD11::p;
GridPtr GroundStateD11::g;
GroundState GroundStateD11::gs;

TEST_F(GroundStateD11, MonotoneInUnitInterval) {
  for (std::size_t i = 0; i < g->size(); ++i) {
    ASSERT_GT(gs.Q[i], 0.0);
    ASSERT_LT(gs.Q[i], 1.0);
    ASSERT_GT(gs.LambdaQ[i], 0.0);
    if (i) ASSERT_GT(gs.Q[i], gs.Q[i - 1]);
  }
}

TEST_F(GroundStateD11, TailExponent) {
  EXPECT_NEAR(gs.gamma_fit, p.gamma, 0.01 * p.gamma);
  EXPECT_GT(gs.alpha_fit, 0.0);
  // cross-check at two radii with a centered log-log slope
  for (double y : {200.0, 600.0}) {
    const double e = 1.05;
    const double s = std::log(g->interpolate(gs.OneMinusQ.span(), y * e) / g->interpolate(gs.OneMinusQ.span(), y / e)) /
                     std::log(e * e);
    EXPECT_NEAR(-s, p.gamma, 0.01 * p.gamma) << y;
  }
  const double r = gs.OneMinusQ[g->size() - 1] / (gs.alpha_fit * std::pow(g->y_max(), -gs.gamma_fit));
  EXPECT_NEAR(r, 1.0, 1e-3);
}

TEST_F(GroundStateD11, ScalingModeTail) {
  const auto fit = fit_tail(gs.LambdaQ, 100, 1000);
  EXPECT_NEAR(fit.exponent, -p.gamma, 0.01 * p.gamma);
  EXPECT_NEAR(fit.amplitude, gs.alpha_fit * p.gamma, 0.01 * gs.alpha_fit * p.gamma);
  EXPECT_TRUE(orders_consistent(gs.LambdaQ));
}

TEST_F(GroundStateD11, PotentialEndpoints) {
  EXPECT_NEAR(gs.V[0], 2.0, 0.05);
  EXPECT_NEAR(gs.V[g->size() - 1], -p.gamma, 0.05);
  for (std::size_t i = 0; i < g->size(); ++i) ASSERT_NEAR(gs.Z[i], (p.d - 2) * fp(gs.Q[i]), 1e-14 * p.d);
}

TEST_F(GroundStateD11, OdeResidualConverges) {
  auto rel = [&](const GroundState& s) {
    const auto res = ground_state_residual(p, s);
    const auto src = map(s.Q, [&](double y, double q) { return (p.d - 2) * f(q) / (y * y); });
    return weighted_norm(res) / weighted_norm(src);
  };
  EXPECT_LT(rel(gs), 1e-6);
  // Above the round-off floor (about 1e-11 here) the residual converges at stencil order.
  const double r1 = rel(solve_ground_state(p, build_grid(1e-4, 1e3, 400, 11)));
  const double r2 = rel(solve_ground_state(p, build_grid(1e-4, 1e3, 799, 11)));
  EXPECT_GT(r1 / r2, 4.0) << r1 << " " << r2;
}

TEST_F(GroundStateD11, ScalingConsistency) {
  const double a = 0.3;
  const auto ga = solve_ground_state(p, g, a);
  const double s = std::sqrt(2 * a);
  double worst = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double ys = g->y(i) * s;
    if (ys < g->y_min() || ys > g->y_max()) continue;
    const double q = g->interpolate(gs.Q.span(), ys);
    worst = std::max(worst, std::abs(ga.Q[i] - q) / q);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(FitTail, ExactPowerLaw) {
  const auto g = build_grid(1e-4, 1e3, 1000, 11);
  const auto f3 = GridFunction::sample(g, [](double y) { return 3.0 * std::pow(y, -2.0); });
  const auto fit = fit_tail(f3, 100, 1000);
  EXPECT_NEAR(fit.amplitude, 3.0, 1e-12);
  EXPECT_NEAR(fit.exponent, -2.0, 1e-13);
  const auto neg = GridFunction::sample(g, [](double y) { return -y; });
  EXPECT_THROW(fit_tail(neg, 100, 1000), Error);
}
