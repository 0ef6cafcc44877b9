#include "ymflow/ground_state.hpp"

#include <cmath>
#include <string>

#include "ymflow/error.hpp"
#include "ymflow/ode.hpp"

namespace ymflow {

std::vector<double> origin_series(const ModelParams& p, int n_terms, double leading) {
  if (n_terms < 2) throw config_error("origin_series needs at least 2 terms");
  const double d = p.d;
  // index k stores a_k; a_0 = 0
  std::vector<double> a(n_terms + 1, 0.0);
  a[1] = leading;
  for (int k = 2; k <= n_terms; ++k) {
    double q2 = 0.0, q3 = 0.0;
    for (int i = 1; i < k; ++i) q2 += a[i] * a[k - i];
    for (int i = 1; i < k; ++i)
      for (int j = 1; i + j < k; ++j) q3 += a[i] * a[j] * a[k - i - j];
    const double indicial = 2.0 * (k - 1) * (2.0 * k + d - 2.0);
    if (indicial == 0.0) throw numerical_error("origin_series: vanishing indicial factor");
    a[k] = (d - 2.0) * (-3.0 * q2 + q3) / indicial;
  }
  return std::vector<double>(a.begin() + 1, a.end());
}

void series_eval(const std::vector<double>& a, double y, double& Q, double& LQ) {
  const double y2 = y * y;
  double pw = y2;
  Q = 0.0;
  LQ = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    Q += a[k] * pw;
    LQ += 2.0 * double(k + 1) * a[k] * pw;
    pw *= y2;
  }
}

PowerFit fit_tail(const GridFunction& f, double y_lo, double y_hi) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double y = f.grid().y(i);
    if (y >= y_lo && y <= y_hi && !(f[i] > 0.0)) throw numerical_error("fit_tail: non-positive value in window");
  }
  return fit_power_law(f, y_lo, y_hi);
}

GridFunction ground_state_residual(const ModelParams& p, const GroundState& gs) {
  // Derivatives taken of -(1-Q) so that far-field digits survive.
  const auto& g = gs.Q.grid();
  const auto& R = gs.OneMinusQ;
  auto l1 = g.lambda(R.span());
  auto l2 = g.lambda2(R.span());
  std::vector<double> r(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double y = g.y(i), Qi = gs.Q[i];
    const double fq = Qi < 0.5 ? f(Qi) : (1.0 - R[i]) * R[i] * (1.0 + R[i]);
    r[i] = ((l2[i] + (p.d - 4) * l1[i]) + (p.d - 2) * fq) / (y * y);
  }
  return GridFunction(gs.Q.grid_ptr(), std::move(r));
}

GroundState solve_ground_state(const ModelParams& p, GridPtr grid, double leading) {
  const double d = p.d;
  const auto& g = *grid;
  const std::size_t n = g.size();
  const auto a = origin_series(p, 12, leading);
  // Seed where the truncated series is exact to round-off.
  const double y_seed = 1e-3 * std::sqrt(0.5 / leading);

  // Autonomous system in x = ln y: Q_x = P, P_x = -(d-4) P + (d-2) f(Q).
  // Past Q = 1/2 the state switches to R = 1 - Q so the tolerance acts on R.
  // Extended precision keeps integrator jitter in Lambda Q below what the stencils amplify.
  using Real = long double;
  using Ode = BasicDopri5<Real>;
  const Real dd = d;
  Ode inner(
      [dd](Real, const Ode::State& s, Ode::State& ds) {
        const Real q = s[0];
        ds[0] = s[1];
        ds[1] = -(dd - 4) * s[1] + (dd - 2) * q * (1 - q) * (2 - q);
      },
      1e-16L, 1e-300L);
  Ode outer(
      [dd](Real, const Ode::State& s, Ode::State& ds) {
        const Real R = s[0];
        ds[0] = -s[1];
        ds[1] = -(dd - 4) * s[1] + (dd - 2) * (1 - R) * R * (1 + R);
      },
      1e-16L, 1e-300L);
  double Q0, P0;
  series_eval(a, y_seed, Q0, P0);
  inner.reset(std::log(Real(y_seed)), {Q0, P0}, 1e-3L);
  bool far = false;

  std::vector<double> Q(n), R(n), P(n), V(n), Z(n), LV(n), LZ(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = g.y(i);
    Real q, r, pp;
    if (y <= y_seed) {
      double qd, pd;
      series_eval(a, y, qd, pd);
      q = qd;
      r = 1 - q;
      pp = pd;
    } else if (!far) {
      inner.advance_to(std::log(Real(y)));
      q = inner.y()[0];
      r = 1 - q;
      pp = inner.y()[1];
      if (q > 0.5L) {
        far = true;
        outer.reset(std::log(Real(y)), {r, pp}, 1e-3L);
      }
    } else {
      outer.advance_to(std::log(Real(y)));
      r = outer.y()[0];
      q = 1 - r;
      pp = outer.y()[1];
    }
    if (!(q > 0 && r > 0) || !(pp > 0))
      throw numerical_error("blow-past: ground-state trajectory left (0,1) at y=" + std::to_string(y));
    const Real fq = q < 0.5L ? q * (1 - q) * (2 - q) : (1 - r) * r * (1 + r);
    const Real fpq = 2 - 6 * q + 3 * q * q;
    const Real Px = -(dd - 4) * pp + (dd - 2) * fq;
    const Real Pxx = -(dd - 4) * Px + (dd - 2) * fpq * pp;
    Q[i] = double(q);
    R[i] = double(r);
    P[i] = double(pp);
    V[i] = double(Px / pp);
    LV[i] = double((Pxx * pp - Px * Px) / (pp * pp));
    Z[i] = double((dd - 2) * fpq);
    LZ[i] = double((dd - 2) * (-6 + 6 * q) * pp);
  }

  GroundState gs;
  gs.seed_radius = y_seed;
  gs.Q = GridFunction(grid, Q);
  gs.LambdaQ = GridFunction(grid, P);
  gs.LambdaQ.origin_order = 0;
  gs.LambdaQ.tail_order = -p.gamma;
  gs.V = GridFunction(grid, V);
  gs.Z = GridFunction(grid, Z);
  gs.LambdaV = GridFunction(grid, LV);
  gs.LambdaZ = GridFunction(grid, LZ);

  gs.OneMinusQ = GridFunction(grid, R);
  const auto fit = fit_tail(gs.OneMinusQ, 0.1 * g.y_max(), g.y_max());
  if (fit.residual_se > 1e-2) throw numerical_error("tail-fit-failed: log(1-Q) not affine on the last decade");
  gs.alpha_fit = fit.amplitude;
  gs.gamma_fit = -fit.exponent;
  gs.tail_fit_se = fit.residual_se;
  return gs;
}

}  // namespace ymflow
