#include <gtest/gtest.h>

#include <cmath>

#include "ymflow/error.hpp"
#include "ymflow/spectral.hpp"
#include "ymflow/spline.hpp"

using namespace ymflow;

class Spectral : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ctx = new OperatorContext(make_context(derive_params(11, 1, 4, 0.01, 20), build_grid(1e-4, 1e3, 2000, 11)));
    ladder = new ProfileSet(build_profile_ladder(*ctx, 4));
    phi = new PhiM(build_phi_m(*ctx, *ladder, 4, 20));
  }
  static void TearDownTestSuite() {
    delete phi;
    delete ladder;
    delete ctx;
  }
  static OperatorContext* ctx;
  static ProfileSet* ladder;
  static PhiM* phi;
};
OperatorContext* Spectral::ctx = nullptr;
ProfileSet* Spectral::ladder = nullptr;
PhiM* Spectral::phi = nullptr;

TEST(Spline, DerivativesMatchDifferences) {
  const BSplineBasis b(0.0, 3.0, 7, 5);
  const double h = 1e-3;
  for (double t : {0.13, 0.9, 1.5, 2.71}) {
    const auto v0 = b.eval_all(t), p1 = b.eval_all(t + h), m1 = b.eval_all(t - h);
    const auto p2 = b.eval_all(t + 2 * h), m2 = b.eval_all(t - 2 * h);
    const auto d1 = b.eval_all(t, 1), d2 = b.eval_all(t, 2);
    double sum = 0.0;
    for (int j = 0; j < b.size(); ++j) {
      sum += v0[j];
      const double fd1 = (-p2[j] + 8 * p1[j] - 8 * m1[j] + m2[j]) / (12 * h);
      const double fd2 = (-p2[j] + 16 * p1[j] - 30 * v0[j] + 16 * m1[j] - m2[j]) / (12 * h * h);
      EXPECT_NEAR(d1[j], fd1, 1e-8) << "t=" << t << " j=" << j;
      EXPECT_NEAR(d2[j], fd2, 1e-6) << "t=" << t << " j=" << j;
    }
    EXPECT_NEAR(sum, 1.0, 1e-13);
  }
}

TEST_F(Spectral, LeadingCoefficientIsOne) { EXPECT_EQ(phi->c[0], 1.0); }

TEST_F(Spectral, OrthogonalToHigherProfiles) {
  const auto df = phi_m_defects(*phi, *ladder);
  EXPECT_LT(df.orthogonality, 1e-6);
  // Independent of the stored gram: mesh quadrature against T_1, where Phi_M is well resolved.
  const double t1 = weighted_inner(phi->phi, ladder->T[1]);
  EXPECT_LT(std::abs(t1) / (weighted_norm(phi->phi) * weighted_norm(ladder->T[1])), 1e-6);
}

TEST_F(Spectral, GramStructure) {
  const auto df = phi_m_defects(*phi, *ladder);
  EXPECT_LT(df.diagonal, 1e-4);
  EXPECT_LT(df.off_diagonal, 1e-4);
  for (int k = 0; k <= 4; ++k) EXPECT_NEAR(phi->gram(k, k) / phi->norm_const, k % 2 ? -1.0 : 1.0, 1e-4);
}

TEST_F(Spectral, NormalizationMatchesMeshQuadrature) {
  const auto f = cutoff(ctx->grid, 20) * ctx->gs.LambdaQ;
  EXPECT_NEAR(weighted_inner(f, ctx->gs.LambdaQ) / phi->norm_const, 1.0, 1e-8);
}

TEST_F(Spectral, PowersMatchStencilWhereResolved) {
  // With L = 1 the layer [M, 2M] carries only two derivatives of the cutoff, which the mesh resolves.
  const auto p1 = build_phi_m(*ctx, *ladder, 1, 20);
  const auto diff = apply_L(*ctx, p1.LmPhi[0]) - p1.LmPhi[1];
  EXPECT_LT(weighted_norm(diff) / weighted_norm(p1.LmPhi[1]), 1e-2);
}

TEST_F(Spectral, CoefficientGrowthInM) {
  std::vector<std::vector<double>> c;
  for (double M : {10.0, 20.0, 40.0}) c.push_back(build_phi_m(*ctx, *ladder, 4, M).c);
  for (int k = 1; k <= 4; ++k) {
    const double slope = (std::log(std::abs(c[2][k])) - std::log(std::abs(c[0][k]))) / std::log(4.0);
    EXPECT_LE(slope, 2 * k + 0.3) << "k=" << k;
  }
}

TEST_F(Spectral, RejectsBadCutoff) {
  EXPECT_THROW(build_phi_m(*ctx, *ladder, 4, 0.5), Error);
  EXPECT_THROW(build_phi_m(*ctx, *ladder, 4, 600), Error);
  EXPECT_THROW(build_phi_m(*ctx, *ladder, 5, 20), Error);
}

TEST(Hardy, SubspaceMinimumMeetsConstant) {
  const auto p = derive_params(11, 1, 4, 0.01, 20);
  const auto r = hardy_check(p, 0.0, 1e3);
  EXPECT_TRUE(r.pass);
  EXPECT_GE(r.subspace_min, 12.25 * 0.95);
  EXPECT_GE(r.min_ratio, r.subspace_min * (1 - 1e-9));
}

TEST(Hardy, ExcludedExponentRejected) {
  const auto p = derive_params(11, 1, 4, 0.01, 20);
  EXPECT_THROW(hardy_check(p, 3.5, 1e3), Error);
  EXPECT_THROW(hardy_check(p, -1.0, 1e3), Error);
}

TEST_F(Spectral, IterateAtHbarWithConstraints) {
  const int k = ctx->params.hbar;
  const auto r = coercivity_check(*ctx, *phi, Lemma::iterate, k, 0);
  EXPECT_EQ(r.status, "ok");
  EXPECT_EQ(r.samples, 200);
  EXPECT_GT(r.min_ratio, 1e-3);
  EXPECT_GT(r.subspace_min, 0.0);
  EXPECT_LE(r.max_constraint, 1e-10);
  EXPECT_TRUE(r.pass);
}

TEST_F(Spectral, IterateZeroNeedsNoConstraint) {
  const auto r = coercivity_check(*ctx, *phi, Lemma::iterate, 0, 0);
  EXPECT_EQ(r.constraint, "none");
  EXPECT_TRUE(r.pass);
}

TEST_F(Spectral, ReproducibleUnderSeed) {
  CoercivityOptions o;
  o.seed = 1234;
  o.samples = 30;
  const auto a = coercivity_check(*ctx, *phi, Lemma::L, 1, 1, 0.0, o);
  const auto b = coercivity_check(*ctx, *phi, Lemma::L, 1, 1, 0.0, o);
  EXPECT_EQ(a.seed, 1234u);
  EXPECT_EQ(a.min_ratio, b.min_ratio);
  o.seed = 99;
  const auto c = coercivity_check(*ctx, *phi, Lemma::L, 1, 1, 0.0, o);
  EXPECT_NE(a.min_ratio, c.min_ratio);
}

TEST_F(Spectral, LowerOrderLemmasPositive) {
  for (int i : {0, 1, 2}) {
    EXPECT_TRUE(coercivity_check(*ctx, *phi, Lemma::Astar, 0, i, 1.0).pass) << "Astar i=" << i;
    EXPECT_TRUE(coercivity_check(*ctx, *phi, Lemma::A, 0, i, 1.0).pass) << "A i=" << i;
    EXPECT_TRUE(coercivity_check(*ctx, *phi, Lemma::L, 1, i).pass) << "L i=" << i;
  }
}

TEST_F(Spectral, ResonantExponentRejected) {
  const double res = (11 - 2 * ctx->params.gamma - 4) / 2;
  EXPECT_THROW(coercivity_check(*ctx, *phi, Lemma::A, 0, 0, res), Error);
}

TEST_F(Spectral, UnconstrainedInputFlagged) {
  const auto u = cutoff(ctx->grid, 3) * ctx->gs.LambdaQ;
  const auto r = coercivity_evaluate(*ctx, *phi, Lemma::iterate, 1, 0, 0.0, u);
  EXPECT_EQ(r.status, "constraint not satisfied");
  EXPECT_FALSE(r.pass);
}

TEST_F(Spectral, ZeroFunctionIsTight) {
  const auto r = coercivity_evaluate(*ctx, *phi, Lemma::iterate, 0, 0, 0.0, GridFunction::zeros(ctx->grid));
  EXPECT_EQ(r.status, "zero function");
  EXPECT_TRUE(r.pass);
}
