#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ymflow/error.hpp"
#include "ymflow/pde.hpp"
#include "ymflow/samples.hpp"

using namespace ymflow;

class Pde : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ctx = new OperatorContext(make_context(derive_params(11, 1, 2, 0.01, 20), build_grid(1e-4, 1e3, 2000, 11)));
    ladder = new ProfileSet(build_profile_ladder(*ctx, 2));
    prof = new ApproximateProfile(build_sk(*ctx, *ladder, 2));
    phi = new PhiM(build_phi_m(*ctx, *ladder, 2, 20.0));
  }
  static void TearDownTestSuite() {
    delete phi;
    delete prof;
    delete ladder;
    delete ctx;
  }
  static Decomposer dec(double eta = 0.01, int Le = 1) { return Decomposer{ctx, prof, phi, Le, eta}; }
  static double max_abs(const GridFunction& f, double y_hi = 1e300) {
    double m = 0;
    for (std::size_t i = 0; i < f.size() && f.grid().y(i) <= y_hi; ++i) m = std::max(m, std::abs(f[i]));
    return m;
  }
  static OperatorContext* ctx;
  static ProfileSet* ladder;
  static ApproximateProfile* prof;
  static PhiM* phi;
};
OperatorContext* Pde::ctx = nullptr;
ProfileSet* Pde::ladder = nullptr;
ApproximateProfile* Pde::prof = nullptr;
PhiM* Pde::phi = nullptr;

TEST_F(Pde, FamilyIsTheLocalizedProfile) {
  const std::vector<double> b = {3e-3, 2e-6};
  const auto a = profile_family(dec(), b);
  const auto c = localize_qb(*ctx, *prof, b, 0.01);
  EXPECT_EQ(max_abs(a - c), 0.0);
  EXPECT_EQ(max_abs(profile_family(dec(), {0.0}) - ctx->gs.Q), 0.0);
  // Negative b_1 is allowed here, unlike the cone-checked assembly.
  EXPECT_NO_THROW(profile_family(dec(), {-1e-3}));
}

TEST_F(Pde, RescaleRoundTrip) {
  const auto u = rescale_to(ctx->gs.Q, 1.0 / 3.0, ctx->grid);
  const auto back = rescale_to(u, 3.0, ctx->grid);
  EXPECT_LT(max_abs(back - ctx->gs.Q, 300.0), 1e-9);
  EXPECT_THROW(rescale_to(u, -1.0, ctx->grid), Error);
}

TEST_F(Pde, ExtractScaledGroundState) {
  const auto u = rescale_to(ctx->gs.Q, 1.0 / 3.0, ctx->grid);  // Q(r/3)
  const auto dc = extract_decomposition(u, dec(), 2.5, {1e-3});
  ASSERT_TRUE(dc.converged);
  EXPECT_NEAR(dc.lambda, 3.0, 3e-9);
  EXPECT_NEAR(dc.b[0], 0.0, 1e-9);
  EXPECT_LT(max_abs(dc.q, 2 * phi->M), 1e-9);
}

TEST_F(Pde, ExtractSyntheticProfile) {
  const auto d = dec(1.0);
  const std::vector<double> bstar = {5e-3};
  for (double lam : {0.6, 1.7})
    for (double g : {0.8, 1.2}) {
      const auto u = rescale_to(profile_family(d, bstar), 1.0 / lam, ctx->grid);
      const auto dc = extract_decomposition(u, d, g * lam, {g * bstar[0]});
      ASSERT_TRUE(dc.converged);
      EXPECT_NEAR(dc.lambda / lam, 1.0, 1e-10) << "lambda*=" << lam;
      EXPECT_NEAR(dc.b[0] / bstar[0], 1.0, 1e-8) << "lambda*=" << lam;
      for (double r : dc.residuals) EXPECT_LT(r, 1e-10);
    }
  // Basin: half the scale and a fifth of b still lands on the same root.
  const auto u = rescale_to(profile_family(d, bstar), 1.0 / 1.7, ctx->grid);
  const auto dc = extract_decomposition(u, d, 0.85, {1e-3});
  ASSERT_TRUE(dc.converged);
  EXPECT_NEAR(dc.lambda / 1.7, 1.0, 1e-9);
  EXPECT_NEAR(dc.b[0] / bstar[0], 1.0, 1e-7);
}

TEST_F(Pde, ExtractOrthogonalBump) {
  std::mt19937_64 rng(11);
  auto g = random_bump_sum(ctx->grid, rng, 0.5, 8.0);
  // Project out span{L^i Phi_M}, i = 0, 1.
  Eigen::Matrix2d G;
  Eigen::Vector2d r;
  for (int i = 0; i < 2; ++i) {
    r[i] = weighted_inner(g, phi->LmPhi[i]);
    for (int j = 0; j < 2; ++j) G(i, j) = weighted_inner(phi->LmPhi[i], phi->LmPhi[j]);
  }
  const Eigen::Vector2d c = G.fullPivLu().solve(r);
  for (int i = 0; i < 2; ++i) g.axpy(-c[i], phi->LmPhi[i]);
  g *= 1e-4 / max_abs(g);
  // b_1 = 0 is a kink of the family (B_1 = 1/|b_1|), so sit away from it.
  const double lam = 1.4, bstar = 5e-3;
  const auto u = rescale_to(profile_family(dec(1.0), {bstar}) + g, 1.0 / lam, ctx->grid);
  const auto dc = extract_decomposition(u, dec(1.0), 1.2, {4e-3});
  ASSERT_TRUE(dc.converged);
  EXPECT_NEAR(dc.lambda, lam, 1e-8);
  EXPECT_NEAR(dc.b[0] / bstar, 1.0, 1e-5);
  EXPECT_LT(max_abs(dc.q - g, 20.0), 1e-8);
}

TEST_F(Pde, ExtractRejectsIncompleteDecomposer) {
  Decomposer bad{ctx, prof, nullptr, 1, 0.01};
  EXPECT_THROW(extract_decomposition(ctx->gs.Q, bad, 1.0, {0.0}), Error);
  EXPECT_THROW(extract_decomposition(ctx->gs.Q, dec(0.01, 3), 1.0, {0.0}), Error);
}

TEST_F(Pde, DiagnosticsOfQ) {
  const auto zero = diagnostics_q(GridFunction::zeros(ctx->grid), *ctx);
  ASSERT_EQ(zero.m_set, (std::vector<int>{1, 2, ctx->params.hbar + 2}));
  for (double e : zero.E2m) EXPECT_EQ(e, 0.0);
  for (double e : zero.lower) EXPECT_EQ(e, 0.0);
  const auto q = ctx->gs.LambdaQ * cutoff(ctx->grid, 20.0);
  const auto dq = diagnostics_q(q, *ctx, {1});
  const auto Lq = apply_L(*ctx, q);
  EXPECT_DOUBLE_EQ(dq.E2m[0], weighted_inner(Lq, Lq));
}

TEST_F(Pde, EnergyMatchesQuadrature) {
  // u = 1 - exp(-r^2), integrated independently on [y_min, y_max] in ln r.
  const double d = 11;
  auto u = GridFunction::sample(ctx->grid, [](double r) { return 1 - std::exp(-r * r); });
  auto density = [d](double x) {
    const double r = std::exp(x), a = std::exp(-r * r), ur = 2 * r * a;
    return (0.5 * ur * ur + (d - 2) / (r * r) * (-0.5 * a * a + 0.25 * a * a * a * a)) * std::pow(r, d - 2);
  };
  double err = 0;
  const double oracle = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      density, std::log(ctx->grid->y_min()), std::log(ctx->grid->y_max()), 15, 1e-14, &err);
  EXPECT_NEAR(energy(u) / oracle, 1.0, 1e-9);
}

TEST_F(Pde, EnergyOfConstantIsZero) {
  // The far-field weight r^{d-4} must not amplify round-off on u == 1.
  EXPECT_EQ(energy(GridFunction::sample(ctx->grid, [](double) { return 1.0; })), 0.0);
}

TEST_F(Pde, EnergyScaling) {
  // E(u(r/mu)) = mu^{d-4} E(u) for u - 1 supported inside the mesh.
  const auto c = cutoff(ctx->grid, 5.0);
  auto u = GridFunction::sample(ctx->grid, [](double r) { return r * r / (1 + r * r); });
  u = c * u + (GridFunction::sample(ctx->grid, [](double) { return 1.0; }) - c);
  const auto u2 = rescale_to(u, 0.5, ctx->grid);
  EXPECT_NEAR(energy(u2) / (std::pow(2.0, 7) * energy(u)), 1.0, 1e-6);
}

TEST_F(Pde, GroundStateIsStationaryPhysical) {
  SolverOptions o;
  o.record_every = 10;
  const auto r = evolve_physical(ctx->gs.Q, ctx->params, 1.0, o);
  EXPECT_EQ(r.diag.status, "t-end");
  EXPECT_LT(max_abs(r.state - ctx->gs.Q), 1e-5);
}

TEST_F(Pde, GroundStateIsStationaryRenormalized) {
  SolverOptions o;
  o.h0 = 1e-2;
  const auto r = evolve_renormalized(ctx->gs.Q, dec(), 100.0, 110.0, {0.0}, o);
  EXPECT_EQ(r.diag.status, "s-end");
  EXPECT_LT(max_abs(r.state - ctx->gs.Q), 1e-5);
  for (const auto& rec : r.diag.records) {
    EXPECT_LT(std::abs(rec.mu), 1e-8);
    EXPECT_LT(std::abs(rec.lambda - 1), 1e-7);
  }
}

TEST_F(Pde, ScaledGroundStateKeepsItsScale) {
  const auto u0 = rescale_to(ctx->gs.Q, 0.5, ctx->grid);  // Q(r/2)
  SolverOptions o;
  o.record_every = 5;
  const auto d = dec();
  const auto r = evolve_physical(u0, ctx->params, 1.0, o, &d);
  ASSERT_FALSE(r.diag.records.empty());
  EXPECT_NEAR(r.diag.records.front().lambda, 2.0, 1e-8);
  for (const auto& rec : r.diag.records) EXPECT_NEAR(rec.lambda, 2.0, 1e-5);
  EXPECT_LT(max_abs(r.state - u0), 1e-5);
}

TEST_F(Pde, EnergyDissipation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    auto u0 = ctx->gs.Q + 0.05 * random_bump_sum(ctx->grid, rng, 0.3, 20.0);
    u0 = flatten_far_field(u0, 200.0);
    SolverOptions o;
    o.record_every = 5;
    const auto r = evolve_physical(u0, ctx->params, 2.0, o);
    EXPECT_EQ(r.diag.max_energy_increase, 0.0) << "trial " << trial;
    // dE/dt = -int u_t^2 r^{d-3}, first order in the step.
    EXPECT_LT(r.diag.dissipation_defect, 1e-2) << "trial " << trial;
    EXPECT_GT(r.diag.records.back().dissipated, 0.0);
  }
}

TEST_F(Pde, ScalingCovariance) {
  // u(t, r) -> u(t / mu^2, r / mu) maps solutions to solutions.
  std::mt19937_64 rng(9);
  auto u0 = flatten_far_field(ctx->gs.Q + 0.05 * random_bump_sum(ctx->grid, rng, 0.3, 10.0), 200.0);
  const double mu = 2.0;
  const auto v0 = rescale_to(u0, 1 / mu, ctx->grid);
  SolverOptions o;
  o.tol = 1e-9;
  for (double t : {0.05, 0.2, 0.5}) {
    const auto u = evolve_physical(u0, ctx->params, t, o).state;
    const auto v = evolve_physical(v0, ctx->params, mu * mu * t, o).state;
    const auto us = rescale_to(u, 1 / mu, ctx->grid);
    EXPECT_LT(max_abs(v - us, 100.0), 1e-5) << "t=" << t;
  }
}

TEST_F(Pde, RejectsBadArguments) {
  EXPECT_THROW(evolve_renormalized(ctx->gs.Q, dec(), 10.0, 5.0, {0.0}), Error);
  EXPECT_THROW(flatten_far_field(ctx->gs.Q, 800.0), Error);
  auto bad = ctx->gs.Q;
  bad[5] = std::nan("");
  EXPECT_THROW(evolve_physical(bad, ctx->params, 1.0), Error);
}

class PdeBlowup : public Pde {
 protected:
  static void SetUpTestSuite() {
    Pde::SetUpTestSuite();
    const auto d = dec(1.0);
    const double b1 = 1e-2;
    const double s0 = 1 / ((2 - ctx->params.gamma) * b1);
    SolverOptions o;
    o.h0 = 1e-2;
    renorm = new EvolveResult(evolve_renormalized(profile_family(d, {b1}), d, s0, 1e6, {b1}, o));
    SolverOptions op;
    op.record_every = 20;
    op.stop_ratio = 1e-2;
    phys = new EvolveResult(
        evolve_physical(flatten_far_field(profile_family(d, {b1}), 250.0), ctx->params, 1e3, op, &d));
  }
  static void TearDownTestSuite() {
    delete renorm;
    delete phys;
    Pde::TearDownTestSuite();
  }
  static EvolveResult* renorm;
  static EvolveResult* phys;
};
EvolveResult* PdeBlowup::renorm = nullptr;
EvolveResult* PdeBlowup::phys = nullptr;

TEST_F(PdeBlowup, RenormalizedRunReachesStopRatio) {
  EXPECT_EQ(renorm->diag.status, "stop-ratio");
  const auto& s = renorm->traj.samples;
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i].lambda, s[i - 1].lambda);
  EXPECT_LT(renorm->diag.worst_constraint, 1e-8);
  EXPECT_LT(renorm->diag.worst_constraint_abs, 1e-14);
}

TEST_F(PdeBlowup, ScaleRateTracksB1) {
  const auto& recs = renorm->diag.records;
  const double s0 = recs.front().s;
  for (const auto& r : recs)
    if (r.s <= 10 * s0) EXPECT_NEAR(-r.mu / r.b[0], 1.0, 0.1) << "s=" << r.s;
  EXPECT_GT(recs.back().s, 5 * s0);
}

TEST_F(PdeBlowup, B1FollowsExplicitLaw) {
  // b_1 ~ c_1 / s with c_1 = 1/(2 - gamma) once the start is forgotten.
  const double c1 = 1 / (2 - ctx->params.gamma);
  const auto& r = renorm->diag.records.back();
  EXPECT_NEAR(r.b[0] * r.s / c1, 1.0, 0.02);
}

TEST_F(PdeBlowup, RateFromRenormalizedRun) {
  const auto fit = fit_blowup_rate(renorm->traj);
  EXPECT_NEAR(fit.exponent, 1 / ctx->params.gamma, 0.1 / ctx->params.gamma);
}

TEST_F(PdeBlowup, PhysicalRunDissipatesAndBlowsUp) {
  EXPECT_EQ(phys->diag.status, "stop-ratio");
  EXPECT_EQ(phys->diag.max_energy_increase, 0.0);
  EXPECT_LT(phys->diag.dissipation_defect, 1e-2);
  const auto fit = fit_blowup_rate(phys->traj);
  EXPECT_NEAR(fit.exponent, 1 / ctx->params.gamma, 0.1 / ctx->params.gamma);
}

TEST_F(PdeBlowup, FramesAgree) {
  // lambda(t) from per-step extraction against the renormalized run, on lambda >= 0.05.
  const auto& rs = renorm->traj.samples;
  std::size_t j = 1;
  int compared = 0;
  for (const auto& p : phys->traj.samples) {
    if (p.lambda < 0.05) break;
    while (j + 1 < rs.size() && rs[j].t < p.t) ++j;
    const auto &a = rs[j - 1], &b = rs[j];
    const double w = (p.t - a.t) / (b.t - a.t);
    const double lam = std::exp((1 - w) * std::log(a.lambda) + w * std::log(b.lambda));
    EXPECT_NEAR(p.lambda / lam, 1.0, 0.05) << "t=" << p.t;
    ++compared;
  }
  EXPECT_GT(compared, 20);
}
