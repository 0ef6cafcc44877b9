#include "ymflow/linops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ymflow/error.hpp"
#include "ymflow/samples.hpp"

namespace ymflow {

namespace {

// int_0^{y_0} of a sampled integrand by power-law extrapolation from the first nodes.
double below_origin(const RadialGrid& g, const std::vector<double>& F) {
  if (F[0] == 0.0) return 0.0;
  if (!(F[0] * F[1] > 0.0)) throw numerical_error("tail-divergence: integrand changes sign at the inner mesh end");
  const double a = std::log(F[1] / F[0]) / std::log(g.y(1) / g.y(0));
  if (!(a > -1.0)) throw numerical_error("tail-divergence: integrand not integrable at the origin");
  return F[0] * g.y(0) / (a + 1.0);
}

// int_{y_max}^inf by power-law extrapolation from the last nodes.
double beyond_end(const RadialGrid& g, const std::vector<double>& F) {
  const std::size_t n = g.size();
  if (F[n - 1] == 0.0) return 0.0;
  if (!(F[n - 1] * F[n - 2] > 0.0)) throw numerical_error("tail-divergence: integrand changes sign at the outer mesh end");
  const double a = std::log(F[n - 1] / F[n - 2]) / std::log(g.y(n - 1) / g.y(n - 2));
  if (!(a < -1.0)) throw numerical_error("tail-divergence: integrand does not decay at the outer mesh end");
  return -F[n - 1] * g.y(n - 1) / (a + 1.0);
}

// int_0^y F for every node.
std::vector<double> origin_cumulative(const RadialGrid& g, const std::vector<double>& F) {
  auto c = g.cumulative(F, 0);
  const double c0 = below_origin(g, F);
  for (double& x : c) x += c0;
  for (double x : c)
    if (!std::isfinite(x)) throw numerical_error("tail-divergence: non-finite cumulative integral");
  return c;
}

}  // namespace

OperatorContext make_context(const ModelParams& p, GridPtr grid) {
  OperatorContext ctx;
  ctx.params = p;
  ctx.grid = grid;
  ctx.gs = solve_ground_state(p, grid);
  const auto& V = ctx.gs.V;
  const auto& LV = ctx.gs.LambdaV;
  std::vector<double> zt(grid->size());
  for (std::size_t i = 0; i < zt.size(); ++i) zt[i] = (V[i] + 1) * (V[i] + 1) + (p.d - 4) * (V[i] + 1) - LV[i];
  ctx.Ztilde = GridFunction(grid, std::move(zt));
  compute_Gamma(ctx);
  return ctx;
}

GridFunction apply_Lambda(const OperatorContext& ctx, const GridFunction& u) {
  require_same_grid(u, ctx.gs.Q);
  return GridFunction(u.grid_ptr(), ctx.grid->lambda(u.span()));
}

GridFunction apply_A(const OperatorContext& ctx, const GridFunction& u) {
  require_same_grid(u, ctx.gs.Q);
  auto lu = ctx.grid->lambda(u.span());
  const auto& V = ctx.gs.V;
  for (std::size_t i = 0; i < lu.size(); ++i) lu[i] = (-lu[i] + V[i] * u[i]) / ctx.grid->y(i);
  return GridFunction(u.grid_ptr(), std::move(lu));
}

GridFunction apply_Astar(const OperatorContext& ctx, const GridFunction& u) {
  require_same_grid(u, ctx.gs.Q);
  auto lu = ctx.grid->lambda(u.span());
  const auto& V = ctx.gs.V;
  const double d = ctx.params.d;
  for (std::size_t i = 0; i < lu.size(); ++i) lu[i] = (lu[i] + (d - 3 + V[i]) * u[i]) / ctx.grid->y(i);
  return GridFunction(u.grid_ptr(), std::move(lu));
}

namespace {

GridFunction schrodinger(const OperatorContext& ctx, const GridFunction& u, const GridFunction& pot) {
  require_same_grid(u, ctx.gs.Q);
  const auto& g = *ctx.grid;
  const auto l1 = g.lambda(u.span());
  auto l2 = g.lambda2(u.span());
  const double d = ctx.params.d;
  for (std::size_t i = 0; i < l2.size(); ++i) {
    const double y = g.y(i);
    l2[i] = -(l2[i] + (d - 4) * l1[i] - pot[i] * u[i]) / (y * y);
  }
  return GridFunction(u.grid_ptr(), std::move(l2));
}

}  // namespace

GridFunction apply_L(const OperatorContext& ctx, const GridFunction& u) { return schrodinger(ctx, u, ctx.gs.Z); }

GridFunction apply_Ltilde(const OperatorContext& ctx, const GridFunction& u) {
  return schrodinger(ctx, u, ctx.Ztilde);
}

GridFunction apply_L_power(const OperatorContext& ctx, const GridFunction& u, int k) {
  GridFunction r = u;
  for (int i = 0; i < k; ++i) r = apply_L(ctx, r);
  return r;
}

void compute_Gamma(OperatorContext& ctx) {
  const auto& g = *ctx.grid;
  const std::size_t n = g.size();
  const auto& LQ = ctx.gs.LambdaQ;
  std::vector<double> F(n);
  for (std::size_t i = 0; i < n; ++i) F[i] = 1.0 / (std::pow(g.y(i), ctx.params.d - 3) * LQ[i] * LQ[i]);
  const auto c1 = g.cumulative(F, g.one_index());
  const auto cn = g.cumulative(F, n - 1);
  const double tail = beyond_end(g, F);
  std::vector<double> G(n), Gd(n);
  for (std::size_t i = 0; i < n; ++i) {
    G[i] = LQ[i] * c1[i];
    Gd[i] = -LQ[i] * (tail - cn[i]);
    if (!std::isfinite(G[i]) || !std::isfinite(Gd[i])) throw numerical_error("Gamma: quadrature overflow near the origin");
  }
  G[g.one_index()] = 0.0;
  ctx.Gamma = GridFunction(ctx.grid, std::move(G));
  ctx.GammaDecaying = GridFunction(ctx.grid, std::move(Gd));
  ctx.GammaDecaying.tail_order = -(ctx.params.d - 4 - ctx.params.gamma);
}

double roundtrip_residual(const OperatorContext& ctx, const GridFunction& w, const GridFunction& g) {
  // L annihilates Lambda Q; removing the far-field Lambda Q component avoids cancellation in L w.
  const auto& LQ = ctx.gs.LambdaQ;
  const std::size_t n = LQ.size();
  GridFunction wr = w;
  wr.axpy(-w[n - 1] / LQ[n - 1], LQ);
  const double gn = weighted_norm(g);
  if (gn == 0.0) return weighted_norm(apply_L(ctx, wr));
  return weighted_norm(apply_L(ctx, wr) - g) / gn;
}

GridFunction invert_L(const OperatorContext& ctx, const GridFunction& g, double tol, InversionRecord* rec) {
  require_same_grid(g, ctx.gs.Q);
  if (!g.finite()) throw numerical_error("invert_L: non-finite right-hand side");
  const auto& gr = *ctx.grid;
  const std::size_t n = gr.size();
  const auto& LQ = ctx.gs.LambdaQ;
  const int d = ctx.params.d;
  std::vector<double> F(n);
  for (std::size_t i = 0; i < n; ++i) F[i] = g[i] * LQ[i] * std::pow(gr.y(i), d - 3);
  const auto I1 = origin_cumulative(gr, F);
  for (std::size_t i = 0; i < n; ++i) F[i] = I1[i] / (std::pow(gr.y(i), d - 3) * LQ[i]) / LQ[i];  // A w / Lambda Q
  const auto I2 = origin_cumulative(gr, F);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = -LQ[i] * I2[i];
  GridFunction out(g.grid_ptr(), std::move(w));
  if (g.origin_order) out.origin_order = *g.origin_order + 1;
  if (g.tail_order) out.tail_order = *g.tail_order + 2.0;
  const double res = roundtrip_residual(ctx, out, g);
  if (rec) rec->roundtrip = res;
  if (!(res < tol))
    throw numerical_error("roundtrip-failed: ||L w - g||/||g|| = " + std::to_string(res));
  return out;
}

GridFunction invert_L_gamma(const OperatorContext& ctx, const GridFunction& g) {
  require_same_grid(g, ctx.gs.Q);
  const auto& gr = *ctx.grid;
  const std::size_t n = gr.size();
  const auto& LQ = ctx.gs.LambdaQ;
  const auto& G = ctx.GammaDecaying;
  const int d = ctx.params.d;
  std::vector<double> F1(n), F2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double wgt = std::pow(gr.y(i), d - 3);
    F1[i] = g[i] * LQ[i] * wgt;
    F2[i] = g[i] * G[i] * wgt;
  }
  const auto I1 = origin_cumulative(gr, F1);
  const auto I2 = origin_cumulative(gr, F2);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = -G[i] * I1[i] + LQ[i] * I2[i];
  return GridFunction(g.grid_ptr(), std::move(w));
}

ProfileSet build_profile_ladder(const OperatorContext& ctx, int L) {
  ProfileSet ps;
  ps.T.push_back(ctx.gs.LambdaQ);
  ps.provenance.push_back({0, 0.0});
  for (int k = 1; k <= L; ++k) {
    InversionRecord rec;
    rec.level = k;
    GridFunction Tk;
    try {
      Tk = -invert_L(ctx, ps.T.back(), 1e-4, &rec);
    } catch (const Error& e) {
      throw numerical_error("profile ladder level " + std::to_string(k) + ": " + e.what());
    }
    Tk.origin_order = k;
    Tk.tail_order = 2.0 * k - ctx.params.gamma;
    ps.T.push_back(std::move(Tk));
    ps.provenance.push_back(rec);
  }
  return ps;
}

CalculusReport operator_calculus_check(const OperatorContext& ctx, std::uint64_t seed, int samples, double y_lo,
                                       double y_hi) {
  CalculusReport r;
  r.samples = samples;
  r.seed = seed;
  std::mt19937_64 rng(seed);
  const auto& g = *ctx.grid;
  const auto& LZ = ctx.gs.LambdaZ;
  for (int s = 0; s < samples; ++s) {
    const auto u = random_bump_sum(ctx.grid, rng, y_lo, y_hi);
    const auto v = random_bump_sum(ctx.grid, rng, y_lo, y_hi);
    const auto Au = apply_A(ctx, u);
    const double lhs = weighted_inner(Au, v), rhs = weighted_inner(u, apply_Astar(ctx, v));
    r.adjointness = std::max(r.adjointness, std::abs(lhs - rhs) / (weighted_norm(Au) * weighted_norm(v)));

    const auto Lu = apply_L(ctx, u);
    r.factorization = std::max(r.factorization, weighted_norm(apply_Astar(ctx, Au) - Lu) / weighted_norm(Lu));
    const auto Ltu = apply_Ltilde(ctx, u);
    r.ltilde = std::max(r.ltilde, weighted_norm(apply_A(ctx, apply_Astar(ctx, u)) - Ltu) / weighted_norm(Ltu));

    auto expect = 2.0 * Lu;
    for (std::size_t i = 0; i < g.size(); ++i) expect[i] -= LZ[i] / (g.y(i) * g.y(i)) * u[i];
    const auto comm = apply_L(ctx, apply_Lambda(ctx, u)) - apply_Lambda(ctx, Lu);
    r.commutator = std::max(r.commutator, weighted_norm(comm - expect) / weighted_norm(2.0 * Lu));

    InversionRecord rec;
    const auto w = invert_L(ctx, v, 1.0, &rec);
    r.roundtrip = std::max(r.roundtrip, rec.roundtrip);
    r.two_pipelines = std::max(r.two_pipelines, weighted_norm(w - invert_L_gamma(ctx, v)) / weighted_norm(w));
  }
  return r;
}

}  // namespace ymflow
