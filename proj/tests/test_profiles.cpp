#include <gtest/gtest.h>

#include <cmath>

#include "ymflow/error.hpp"
#include "ymflow/profiles.hpp"

using namespace ymflow;

class Profiles : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    // Tails of the S_k coefficients settle only past y ~ 1e3.
    ctx = new OperatorContext(make_context(derive_params(11, 1, 4, 0.01, 20), build_grid(1e-4, 1e4, 3000, 11)));
    ladder = new ProfileSet(build_profile_ladder(*ctx, 4));
    prof = new ApproximateProfile(build_sk(*ctx, *ladder, 4));
  }
  static void TearDownTestSuite() {
    delete prof;
    delete ladder;
    delete ctx;
  }
  static double max_abs(const GridFunction& f, double y_hi = 1e300) {
    double m = 0;
    for (std::size_t i = 0; i < f.size() && f.grid().y(i) <= y_hi; ++i) m = std::max(m, std::abs(f[i]));
    return m;
  }
  static OperatorContext* ctx;
  static ProfileSet* ladder;
  static ApproximateProfile* prof;
};
OperatorContext* Profiles::ctx = nullptr;
ProfileSet* Profiles::ladder = nullptr;
ApproximateProfile* Profiles::prof = nullptr;

const std::vector<double> kB = {1e-2, 3e-5, -2e-7, 5e-9};

TEST_F(Profiles, TaylorWeights) {
  const auto w = taylor_weights(*ctx, 4);
  ASSERT_EQ(w.size(), 5u);
  EXPECT_EQ(max_abs(w[4]), 0.0);
  // f = 2u - 3u^2 + u^3, so f''/2 = 3u - 3 and f'''/6 = 1.
  for (std::size_t i = 0; i < w[2].size(); i += 97) {
    const double u = ctx->gs.Q[i];
    EXPECT_NEAR(w[2][i], 3 * u - 3, 1e-12);
    EXPECT_EQ(w[3][i], 1.0);
  }
  EXPECT_LT(std::abs(w[2][w[2].size() - 1]), 1e-3);
  EXPECT_NEAR(w[2][0], -3.0, 1e-6);
}

TEST_F(Profiles, FirstCorrectionsVanishAndF2IsOneMonomial) {
  EXPECT_TRUE(prof->S[1].empty());
  EXPECT_TRUE(prof->S[0].empty());
  const auto& F2 = prof->F[2];
  ASSERT_EQ(F2.terms().size(), 1u);
  const auto& [m, f] = *F2.terms().begin();
  EXPECT_EQ(m, (MultiIndex{2, 0, 0, 0}));
  EXPECT_NEAR(origin_slope(f), 4.0, 0.2);
  EXPECT_NEAR(tail_slope(f), -ctx->params.gamma, 0.05 * ctx->params.gamma);
}

TEST_F(Profiles, HomogeneityScaling) {
  for (int k = 2; k <= 6; ++k) {
    ASSERT_EQ(prof->S[k].homogeneity(), std::optional<int>(k)) << "k=" << k;
    const auto base = prof->S[k].evaluate(kB);
    for (double mu : {0.5, 2.0}) {
      std::vector<double> bm(4);
      for (int j = 0; j < 4; ++j) bm[j] = std::pow(mu, j + 1) * kB[j];
      const auto s = prof->S[k].evaluate(bm);
      const double scale = std::pow(mu, k);
      double worst = 0;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (base[i] != 0) worst = std::max(worst, std::abs(s[i] / (scale * base[i]) - 1));
      EXPECT_LT(worst, 1e-12) << "k=" << k << " mu=" << mu;
    }
  }
}

TEST_F(Profiles, TriangularDependence) {
  for (int k = 2; k <= 6; ++k)
    for (int m = k; m <= 4; ++m) {
      EXPECT_FALSE(prof->S[k].depends_on(m)) << "k=" << k << " m=" << m;
      EXPECT_TRUE(prof->dS[k][m].empty());
    }
  EXPECT_TRUE(prof->S[3].depends_on(2));
  EXPECT_TRUE(prof->S[6].depends_on(4));
}

TEST_F(Profiles, PartialsMatchDifferences) {
  for (int k = 3; k <= 6; ++k)
    for (int j = 1; j < std::min(k, 5); ++j) {
      auto bp = kB, bm = kB;
      const double h = 1e-4 * std::abs(kB[j - 1]);
      bp[j - 1] += h;
      bm[j - 1] -= h;
      const auto fd = (1.0 / (2 * h)) * (prof->S[k].evaluate(bp) - prof->S[k].evaluate(bm));
      const auto ex = prof->dS[k][j].evaluate(kB);
      EXPECT_LT(weighted_norm(fd - ex), 1e-6 * weighted_norm(ex)) << "k=" << k << " j=" << j;
    }
}

TEST_F(Profiles, CoefficientSlopes) {
  const double g = ctx->params.gamma;
  for (int k = 2; k <= 4; ++k)
    for (const auto& [m, f] : prof->S[k].terms()) {
      EXPECT_NEAR(origin_slope(f), 2.0 * k + 2, 0.07 * (2.0 * k + 2)) << "k=" << k << " " << format_multi(m);
      const double tail = 2.0 * (k - 1) - g;
      EXPECT_NEAR(tail_slope(f), tail, 0.07 * std::abs(tail)) << "k=" << k << " " << format_multi(m);
    }
  EXPECT_LT(prof->worst_roundtrip, 1e-4);
  EXPECT_FALSE(prof->inversion_log.empty());
}

TEST_F(Profiles, AssembleAtZeroIsGroundState) {
  const std::vector<double> z(4, 0.0);
  const auto q = assemble_qb(*ctx, *prof, z);
  EXPECT_EQ(max_abs(q.Qb - ctx->gs.Q), 0.0);
  EXPECT_EQ(max_abs(q.Theta), 0.0);
}

TEST_F(Profiles, LinearResponse) {
  // (Q_b - Q - b_1 T_1)/b_1^2 -> S_2 coefficient linearly in b_1.
  const auto& s2 = prof->S[2].terms().at(MultiIndex{2, 0, 0, 0});
  std::vector<double> err;
  for (double b1 : {4e-3, 2e-3, 1e-3}) {
    const std::vector<double> b = {b1, 0, 0, 0};
    const auto q = assemble_qb(*ctx, *prof, b);
    auto r = (1.0 / (b1 * b1)) * (q.Qb - ctx->gs.Q - b1 * ladder->T[1]);
    EXPECT_LT(weighted_norm_below(r, 5.0), 2 * weighted_norm_below(s2, 5.0));
    err.push_back(weighted_norm_below(r - s2, 5.0));
  }
  EXPECT_NEAR(err[0] / err[1], 2.0, 0.2);
  EXPECT_NEAR(err[1] / err[2], 2.0, 0.2);
}

TEST_F(Profiles, ThetaSmallInsideCutoff) {
  const std::vector<double> b = {1e-3, 0, 0, 0};
  const auto q = assemble_qb(*ctx, *prof, b);
  EXPECT_LT(max_abs(q.Theta, 2 * ctx->params.B1(1e-3)), 0.05);
}

TEST_F(Profiles, LocalizationIsExact) {
  const std::vector<double> b = {1e-3, 0, 0, 0};
  const double B1 = std::pow(1e-3, -0.505);
  const auto qt = localize_qb(*ctx, *prof, b, 0.01);
  const auto qb = assemble_qb(*ctx, *prof, b).Qb;
  for (std::size_t i = 0; i < qt.size(); ++i) {
    const double y = ctx->grid->y(i);
    if (y >= 2 * B1) EXPECT_EQ(qt[i], ctx->gs.Q[i]);
    if (y <= B1) EXPECT_EQ(qt[i], qb[i]);
  }
}

TEST_F(Profiles, ScalesFromB1) {
  EXPECT_DOUBLE_EQ(ctx->params.B0(1e-2), 10.0);
  EXPECT_NEAR(ctx->params.B1(1e-2), std::pow(10.0, 1.01), 1e-12);
  const std::vector<double> b = {1e-2, 0, 0, 0};
  const auto r = residual_psi(*ctx, *prof, b, 0.01, true, 0);
  EXPECT_DOUBLE_EQ(r.B0, 10.0);
  EXPECT_NEAR(r.B1, std::pow(10.0, 1.01), 1e-12);
}

TEST_F(Profiles, ConeAndDomainErrors) {
  EXPECT_THROW(assemble_qb(*ctx, *prof, std::vector<double>{0.2, 0, 0, 0}), Error);
  EXPECT_THROW(assemble_qb(*ctx, *prof, std::vector<double>{1e-2, 1e-2, 0, 0}), Error);
  EXPECT_THROW(assemble_qb(*ctx, *prof, std::vector<double>{-1e-3, 0, 0, 0}), Error);
  EXPECT_THROW(localize_qb(*ctx, *prof, std::vector<double>{1e-9, 0, 0, 0}, 0.01), Error);
  EXPECT_THROW(build_sk(*ctx, *ladder, 5), Error);
}

TEST_F(Profiles, ResidualVanishesAtZero) {
  const std::vector<double> z(4, 0.0);
  const auto r = residual_psi(*ctx, *prof, z, 0.01, true, 1);
  EXPECT_EQ(max_abs(r.psi), 0.0);
  EXPECT_EQ(max_abs(r.psi_direct), 0.0);
  EXPECT_EQ(r.norms[1].full_weighted, 0.0);
}

TEST_F(Profiles, ResidualIsUnlocalizedInsideB0) {
  const std::vector<double> b = {1e-2, 0, 0, 0};
  const auto loc = residual_psi(*ctx, *prof, b, 0.01, true, 0);
  const auto raw = residual_psi(*ctx, *prof, b, 0.01, false, 0);
  for (std::size_t i = 0; i < loc.psi.size() && ctx->grid->y(i) <= loc.B0; ++i) EXPECT_EQ(loc.psi[i], raw.psi[i]);
}

TEST_F(Profiles, ResidualMatchesDirectOperator) {
  for (double eta : {0.01, 0.35}) {
    const std::vector<double> b = {1e-2, 0, 0, 0};
    const auto r = residual_psi(*ctx, *prof, b, eta, true, 0);
    const double Y = 2 * r.B1;
    EXPECT_LT(weighted_norm_below(r.psi - r.psi_direct, Y), 1e-3 * weighted_norm_below(r.psi, Y)) << "eta=" << eta;
  }
}

TEST_F(Profiles, ModulationLawMakesB1sQuadratic) {
  const auto bs = modulation_law(ctx->params, kB);
  const double g = ctx->params.gamma;
  EXPECT_DOUBLE_EQ(bs[0], kB[1] - (2 - g) * kB[0] * kB[0]);
  EXPECT_DOUBLE_EQ(bs[3], -(8 - g) * kB[0] * kB[3]);
  const auto r = residual_psi(*ctx, *prof, kB, 0.01, true, 0);
  EXPECT_NEAR(r.b1_s_ratio, std::abs(bs[0]) / 1e-4, 1e-12);
  EXPECT_LT(r.dropped, 1.0);
}

TEST_F(Profiles, ResidualPowerLaw) {
  const auto scan = residual_power_law(*ctx, *prof, {1e-2, std::pow(10.0, -2.5), 1e-3}, 0.35, 1);
  EXPECT_TRUE(scan.separated);
  const double delta = ctx->params.delta;
  for (int m = 0; m <= 1; ++m) {
    EXPECT_NEAR(scan.target[m], 2 * m + 4 + 2 * (1 - delta), 1e-14);
    EXPECT_NEAR(scan.slope[m], scan.target[m], 0.15 * scan.target[m]) << "m=" << m;
  }
}
