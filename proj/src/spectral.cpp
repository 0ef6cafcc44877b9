#include "ymflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "ymflow/error.hpp"
#include "ymflow/spline.hpp"

namespace ymflow {

namespace {

// Truncated Taylor series in x = ln y about a node.
using Jet = std::vector<long double>;

Jet jet_mul(const Jet& a, const Jet& b) {
  Jet c(a.size(), 0.0L);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; i + j < a.size(); ++j) c[i + j] += a[i] * b[j];
  return c;
}

Jet jet_recip(const Jet& a) {
  Jet c(a.size(), 0.0L);
  c[0] = 1.0L / a[0];
  for (std::size_t k = 1; k < a.size(); ++k) {
    long double s = 0.0L;
    for (std::size_t j = 1; j <= k; ++j) s += a[j] * c[k - j];
    c[k] = -s / a[0];
  }
  return c;
}

Jet jet_exp(const Jet& a) {
  Jet c(a.size(), 0.0L);
  c[0] = std::exp(a[0]);
  for (std::size_t k = 1; k < a.size(); ++k) {
    long double s = 0.0L;
    for (std::size_t j = 1; j <= k; ++j) s += (long double)j * a[j] * c[k - j];
    c[k] = s / (long double)k;
  }
  return c;
}

Jet jet_deriv(const Jet& a) {
  Jet c(a.size(), 0.0L);
  for (std::size_t k = 0; k + 1 < a.size(); ++k) c[k] = (long double)(k + 1) * a[k + 1];
  return c;
}

// Jet of R = 1 - Q about x0 from R(x0), R_x(x0): R_xx = -(d-4)R_x - (d-2)(1-R)R(1+R).
Jet ground_jet(long double d, long double R0, long double Rx0, std::size_t K) {
  Jet R(K, 0.0L);
  R[0] = R0;
  R[1] = Rx0;
  for (std::size_t k = 0; k + 2 < K; ++k) {
    Jet one_minus = R, one_plus = R;
    for (auto& c : one_minus) c = -c;
    one_minus[0] += 1.0L;
    one_plus[0] += 1.0L;
    const Jet fR = jet_mul(jet_mul(one_minus, R), one_plus);
    R[k + 2] = (-(d - 4) * (long double)(k + 1) * R[k + 1] - (d - 2) * fR[k]) / ((long double)(k + 1) * (k + 2));
  }
  return R;
}

// Re-expansion about x0 + h, truncated to K terms.
Jet jet_shift(const Jet& a, long double h, std::size_t K) {
  Jet b(K, 0.0L);
  for (std::size_t m = 0; m < K; ++m) {
    long double s = 0.0L, binom = 1.0L, hp = 1.0L;
    for (std::size_t k = m; k < a.size(); ++k) {
      s += a[k] * binom * hp;
      binom = binom * (long double)(k + 1) / (long double)(k + 1 - m);
      hp *= h;
    }
    b[m] = s;
  }
  return b;
}

// L^j(chi_M Lambda Q)(e^x0) for j = 0..n. R holds at least 2n+2 terms about x0.
// In x = ln y, L u = e^{-2x}(-u_xx - (d-4)u_x + Z u) with Z = (d-2)(3R^2 - 1).
// M = 0 drops the cutoff and gives L^j(Lambda Q), which vanishes for j >= 1.
std::vector<long double> mode_powers_at(long double d, double M, long double x0, const Jet& R, int n) {
  std::vector<long double> out(n + 1, 0.0L);
  const long double s0 = M > 0 ? std::exp(x0) / M - 1.0L : 0.5L;
  if (s0 >= 1.0L - 1.0L / 700) return out;
  if (s0 <= 1.0L / 700) {
    out[0] = -R[1];
    return out;
  }
  const std::size_t K = 2 * std::size_t(n) + 2;
  const Jet Rk(R.begin(), R.begin() + K);
  Jet Z = jet_mul(Rk, Rk);
  for (auto& c : Z) c *= 3 * (d - 2);
  Z[0] -= d - 2;
  Jet ey(K, 0.0L), em2(K, 0.0L);
  long double fa = 1.0L, fb = 1.0L;
  for (std::size_t k = 0; k < K; ++k) {
    ey[k] = std::exp(x0) * fa;
    em2[k] = std::exp(-2 * x0) * fb;
    fa /= (long double)(k + 1);
    fb *= -2.0L / (long double)(k + 1);
  }
  // chi_M = 1 - 1/(1 + exp(1/s - 1/(1-s))), s = y/M - 1.
  Jet sj = ey;
  for (auto& c : sj) c /= M;
  sj[0] -= 1.0L;
  Jet oms = sj;
  for (auto& c : oms) c = -c;
  oms[0] += 1.0L;
  Jet t = jet_recip(sj);
  const Jet t2 = jet_recip(oms);
  for (std::size_t k = 0; k < K; ++k) t[k] -= t2[k];
  Jet den = jet_exp(t);
  den[0] += 1.0L;
  Jet chi = jet_recip(den);
  for (auto& c : chi) c = -c;
  chi[0] += 1.0L;
  if (M <= 0) {
    std::fill(chi.begin(), chi.end(), 0.0L);
    chi[0] = 1.0L;
  }
  Jet u = jet_mul(chi, jet_deriv(Rk));
  for (auto& c : u) c = -c;
  out[0] = u[0];
  for (int j = 1; j <= n; ++j) {
    const Jet ux = jet_deriv(u), uxx = jet_deriv(ux);
    const Jet zu = jet_mul(Z, u);
    Jet v(K, 0.0L);
    for (std::size_t k = 0; k < K; ++k) v[k] = -uxx[k] - (d - 4) * ux[k] + zu[k];
    u = jet_mul(em2, v);
    out[j] = u[0];
  }
  return out;
}

// L^j(chi_M Lambda Q) on the mesh, j = 0..n; exact local jets, so no finite-difference amplification.
std::vector<GridFunction> cutoff_mode_powers(const OperatorContext& ctx, double M, int n) {
  const auto& g = *ctx.grid;
  const long double d = ctx.params.d;
  std::vector<GridFunction> out{cutoff(ctx.grid, M) * ctx.gs.LambdaQ};
  for (int j = 1; j <= n; ++j) out.push_back(GridFunction::zeros(ctx.grid));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const long double x0 = std::log((long double)g.y(i));
    const long double s0 = std::exp(x0) / M - 1.0L;
    if (s0 <= 1.0L / 700 || s0 >= 1.0L - 1.0L / 700) continue;
    const Jet R = ground_jet(d, ctx.gs.OneMinusQ[i], -(long double)ctx.gs.LambdaQ[i], 2 * std::size_t(n) + 2);
    const auto v = mode_powers_at(d, M, x0, R, n);
    for (int j = 1; j <= n; ++j) out[j][i] = double(v[j]);
  }
  return out;
}

// L^j(Lambda Q) for j = 1..n from node jets: round-off sized, without the stencil amplification.
std::vector<GridFunction> ground_mode_powers(const OperatorContext& ctx, int n) {
  const auto& g = *ctx.grid;
  const long double d = ctx.params.d;
  std::vector<GridFunction> out;
  for (int j = 0; j <= n; ++j) out.push_back(GridFunction::zeros(ctx.grid));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Jet R = ground_jet(d, ctx.gs.OneMinusQ[i], -(long double)ctx.gs.LambdaQ[i], 2 * std::size_t(n) + 2);
    const auto v = mode_powers_at(d, 0.0, std::log((long double)g.y(i)), R, n);
    for (int j = 0; j <= n; ++j) out[j][i] = double(v[j]);
  }
  return out;
}

// I(j, a) = <L^j(chi_M Lambda Q), G_a> for smooth G_a. The transition layer [M, 2M] is integrated in x = ln y with dense
// Gauss panels and jets re-expanded from the nearest node; the mesh rule handles y below M.
Eigen::MatrixXd cutoff_mode_moments(const OperatorContext& ctx, const std::vector<GridFunction>& G, double M, int n) {
  const auto& g = *ctx.grid;
  const long double d = ctx.params.d;
  const std::size_t iM = g.index_below(M);
  const int kmax = int(G.size()) - 1;
  Eigen::MatrixXd I = Eigen::MatrixXd::Zero(n + 1, kmax + 1);
  for (int k = 0; k <= kmax; ++k) {
    auto f = G[k] * ctx.gs.LambdaQ;
    I(0, k) = g.integrate(f.span(), 0, iM);
  }
  std::vector<double> gx, gw;
  gauss_legendre(16, gx, gw);
  const int panels = 400;
  const std::size_t K = 2 * std::size_t(n) + 2, Kx = K + 24;
  const long double xa = std::log((long double)g.y(iM)), xb = std::log(2.0L * M);
  std::vector<long double> acc((n + 1) * (kmax + 1), 0.0L);
  std::size_t node = iM;
  Jet Rnode;
  std::size_t jet_node = g.size();
  for (int c = 0; c < panels; ++c) {
    const long double x0 = xa + (xb - xa) * c / panels, x1 = xa + (xb - xa) * (c + 1) / panels;
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const long double x = 0.5L * (x0 + x1) + 0.5L * (x1 - x0) * gx[q];
      const double y = double(std::exp(x));
      while (node + 1 < g.size() && std::log((long double)g.y(node + 1)) < x) ++node;
      std::size_t near = node;
      if (node + 1 < g.size() && std::log((long double)g.y(node + 1)) - x < x - std::log((long double)g.y(node))) near = node + 1;
      if (near != jet_node) {
        Rnode = ground_jet(d, ctx.gs.OneMinusQ[near], -(long double)ctx.gs.LambdaQ[near], Kx);
        jet_node = near;
      }
      const Jet R = jet_shift(Rnode, x - std::log((long double)g.y(near)), K);
      const auto v = mode_powers_at(d, M, x, R, n);
      const long double w = 0.5L * (x1 - x0) * gw[q] * std::exp((d - 2) * x);
      for (int k = 0; k <= kmax; ++k) {
        const long double t = g.interpolate(G[k].span(), y);
        for (int j = 0; j <= n; ++j) acc[j * (kmax + 1) + k] += w * v[j] * t;
      }
    }
  }
  for (int j = 0; j <= n; ++j)
    for (int k = 0; k <= kmax; ++k) I(j, k) += double(acc[j * (kmax + 1) + k]);
  return I;
}

}  // namespace

PhiM build_phi_m(const OperatorContext& ctx, const ProfileSet& ladder, int L, double M) {
  if (int(ladder.T.size()) < L + 1) throw config_error("build_phi_m: profile ladder shallower than L");
  if (!(M >= 1.0) || 2 * M >= ctx.grid->y_max()) throw config_error("build_phi_m: M must lie in [1, y_max/2)");
  PhiM out;
  out.M = M;
  const auto Lk = cutoff_mode_powers(ctx, M, 2 * L);
  std::vector<GridFunction> G(ladder.T.begin(), ladder.T.begin() + L + 1);
  Eigen::MatrixXd I = cutoff_mode_moments(ctx, G, M, L);
  // For m > k the direct quadrature of <L^m(chi_M Lambda Q), T_k> only sees the ladder residual, which c_{m,M}
  // amplifies by up to M^{2m}; L^k T_k = (-1)^k Lambda Q is used instead.
  for (int k = 1; k <= L; ++k)
    for (int m = k + 1; m <= L; ++m) I(m, k) = (k % 2 ? -1.0 : 1.0) * I(m - k, 0);
  const double N = I(0, 0);
  if (!(std::abs(N) > 1e-300) || !std::isfinite(N))
    throw numerical_error("build_phi_m: near-zero denominator <chi_M Lambda Q, Lambda Q>");
  out.norm_const = N;
  out.c.assign(L + 1, 0.0);
  out.c[0] = 1.0;
  // <L^k(chi_M Lambda Q), T_k> = (-1)^k N up to the ladder residual; the computed value keeps <Phi_M, T_k> = 0 exact.
  for (int k = 1; k <= L; ++k) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += out.c[j] * I(j, k);
    out.c[k] = -s / I(k, k);
  }
  for (int m = 0; m <= L; ++m) {
    auto f = GridFunction::zeros(ctx.grid);
    for (int k = 0; k <= L; ++k) f.axpy(out.c[k], Lk[m + k]);
    out.LmPhi.push_back(std::move(f));
  }
  out.phi = out.LmPhi[0];
  // L^i T_k = (-1)^i T_{k-i} for i <= k and (-1)^k L^{i-k}(Lambda Q) otherwise, the latter evaluated pointwise.
  const auto LjQ = ground_mode_powers(ctx, L);
  out.gram.resize(L + 1, L + 1);
  for (int i = 0; i <= L; ++i)
    for (int k = 0; k <= L; ++k) {
      const double sign = (std::min(i, k) % 2) ? -1.0 : 1.0;
      if (i <= k) {
        double s = 0.0;
        for (int m = 0; m <= L; ++m) s += out.c[m] * I(m, k - i);
        out.gram(i, k) = sign * s;
      } else {
        out.gram(i, k) = sign * weighted_inner(LjQ[i - k], out.phi);
      }
    }
  return out;
}

PhiMDefects phi_m_defects(const PhiM& phi, const ProfileSet& ladder) {
  PhiMDefects d;
  const int L = int(phi.c.size()) - 1;
  const double N = std::abs(phi.norm_const);
  const double pn = weighted_norm(phi.phi);
  for (int k = 1; k <= L; ++k)
    d.orthogonality = std::max(d.orthogonality, std::abs(phi.gram(0, k)) / (pn * weighted_norm(ladder.T[k])));
  for (int i = 0; i <= L; ++i)
    for (int k = 0; k <= L; ++k) {
      if (i == k)
        d.diagonal = std::max(d.diagonal, std::abs(phi.gram(k, k) - (k % 2 ? -1.0 : 1.0) * phi.norm_const) / N);
      else
        d.off_diagonal = std::max(d.off_diagonal, std::abs(phi.gram(i, k)) / N);
    }
  return d;
}

std::string lemma_name(Lemma l) {
  switch (l) {
    case Lemma::hardy: return "hardy";
    case Lemma::Astar: return "Astar";
    case Lemma::A: return "A";
    case Lemma::L: return "L";
    case Lemma::iterate: return "iterate";
  }
  return "?";
}

namespace {

using Op = std::function<GridFunction(const GridFunction&)>;
using Weight = std::function<double(double)>;

struct QForm {
  std::string name;
  Op op;
  Weight w;
};

double form_value(const QForm& f, const GridFunction& u) {
  const auto v = f.op(u);
  const auto& g = u.grid();
  const auto& q = g.quad_weights();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += q[i] * f.w(g.y(i)) * v[i] * v[i];
  return s;
}

// Rows scaled by sqrt(quadrature weight * form weight): form(u) = |G c|^2.
Eigen::MatrixXd form_factor(const QForm& f, const std::vector<GridFunction>& basis) {
  const auto& g = basis.front().grid();
  const std::size_t n = g.size();
  const int J = int(basis.size());
  Eigen::MatrixXd F(n, J);
  for (int j = 0; j < J; ++j) {
    const auto v = f.op(basis[j]);
    for (std::size_t i = 0; i < n; ++i) F(i, j) = v[i];
  }
  for (std::size_t i = 0; i < n; ++i) F.row(i) *= std::sqrt(g.quad_weights()[i] * f.w(g.y(i)));
  return F;
}

// min over x of |GA x|^2 / |GB x|^2 = 1 / sigma_max(GB RA^{-1})^2 with GA = QA RA.
// The largest singular value is well conditioned, unlike the smallest generalized eigenvalue.
double min_ratio_factors(Eigen::MatrixXd GA, Eigen::MatrixXd GB) {
  for (Eigen::Index j = 0; j < GA.cols(); ++j) {
    const double s = GA.col(j).norm();
    if (s > 0) {
      GA.col(j) /= s;
      GB.col(j) /= s;
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(GA);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(GA.cols()).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd X = R.transpose().triangularView<Eigen::Lower>().solve(GB.transpose()).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
  const double smax = svd.singularValues()(0);
  return smax > 0 ? 1.0 / (smax * smax) : std::numeric_limits<double>::infinity();
}

GridFunction dy(const OperatorContext& ctx, const GridFunction& u) {
  auto l = apply_Lambda(ctx, u);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] /= ctx.grid->y(i);
  return l;
}

GridFunction dyy(const OperatorContext& ctx, const GridFunction& u) {
  const auto& g = *ctx.grid;
  auto l2 = g.lambda2(u.span());
  const auto l1 = g.lambda(u.span());
  for (std::size_t i = 0; i < l2.size(); ++i) l2[i] = (l2[i] - l1[i]) / (g.y(i) * g.y(i));
  return GridFunction(u.grid_ptr(), std::move(l2));
}

struct LemmaSetup {
  QForm lhs;
  std::vector<QForm> terms;
  std::vector<int> constraint_powers;  // m with <u, L^m Phi> = 0
  std::string parameters, constraint;
};

LemmaSetup setup_lemma(const OperatorContext& ctx, const PhiM& phi, Lemma which, int k, int i, double weight) {
  const auto& p = ctx.params;
  const double d = p.d, gam = p.gamma;
  LemmaSetup s;
  std::ostringstream ps;
  const Op id = [](const GridFunction& u) { return u; };
  const Op D1 = [&ctx](const GridFunction& u) { return dy(ctx, u); };
  const Op D2 = [&ctx](const GridFunction& u) { return dyy(ctx, u); };
  const Op opA = [&ctx](const GridFunction& u) { return apply_A(ctx, u); };
  const Op opAs = [&ctx](const GridFunction& u) { return apply_Astar(ctx, u); };
  const Op opL = [&ctx](const GridFunction& u) { return apply_L(ctx, u); };
  auto pw = [](double y, double e) { return std::pow(y, e); };
  if (i < 0 || i > 2) throw config_error("coercivity_check: i must be 0, 1 or 2");
  switch (which) {
    case Lemma::Astar: {
      const double a = weight;
      if (a < 0) throw config_error("coercivity_check: alpha must be >= 0");
      ps << "alpha=" << a << " i=" << i;
      auto w = [=](double y) { return 1.0 / (pw(y, 2 * i) * (1 + pw(y, 2 * a))); };
      s.lhs = {"|A*u|^2/(y^2i(1+y^2a))", opAs, w};
      s.terms = {{"|u'|^2/(y^2i(1+y^2a))", D1, w},
                 {"u^2/(y^(2i+2)(1+y^2a))", id, [=](double y) { return w(y) / (y * y); }}};
      break;
    }
    case Lemma::A: {
      const double pp = weight;
      if (pp < 0) throw config_error("coercivity_check: p must be >= 0");
      const double res = 2 * i + 2 * pp - (d - 2 * gam - 4);
      if (std::abs(res) < 0.1)
        throw config_error("coercivity_check: resonant exponent (|2i+2p-(d-2gamma-4)| < 0.1)");
      ps << "p=" << pp << " i=" << i;
      auto w = [=](double y) { return 1.0 / (pw(y, 2 * i) * (1 + pw(y, 2 * pp))); };
      s.lhs = {"|Au|^2/(y^2i(1+y^2p))", opA, w};
      s.terms = {{"|u'|^2/(y^2i(1+y^2p))", D1, w},
                 {"u^2/(y^(2i+2)(1+y^2p))", id, [=](double y) { return w(y) / (y * y); }}};
      if (res > 0) s.constraint_powers = {0};
      break;
    }
    case Lemma::L: {
      if (k < 0) throw config_error("coercivity_check: k must be >= 0");
      ps << "k=" << k << " i=" << i;
      auto w = [=](double y, double e) { return 1.0 / (pw(y, 2 * i) * (1 + pw(y, e))); };
      s.lhs = {"|Lu|^2/(y^2i(1+y^2k))", opL, [=](double y) { return w(y, 2 * k); }};
      s.terms = {{"|u''|^2/(y^2i(1+y^2k))", D2, [=](double y) { return w(y, 2 * k); }},
                 {"|u'|^2/(y^2i(1+y^(2k+2)))", D1, [=](double y) { return w(y, 2 * k + 2); }},
                 {"u^2/(y^(2i+2)(1+y^(2k+2)))", id, [=](double y) { return w(y, 2 * k + 2) / (y * y); }},
                 {"|Au|^2/(y^(2i+2)(1+y^2k))", opA, [=](double y) { return w(y, 2 * k) / (y * y); }},
                 {"u^2/(y^2i(1+y^(2k+4)))", id, [=](double y) { return w(y, 2 * k + 4); }}};
      if (2 * i + 2 * k > d - 2 * gam - 6) s.constraint_powers = {0};
      break;
    }
    case Lemma::iterate: {
      if (k < 0) throw config_error("coercivity_check: k must be >= 0");
      ps << "k=" << k;
      const Op Lk1 = [&ctx, k](const GridFunction& u) { return apply_L_power(ctx, u, k + 1); };
      s.lhs = {"|L^(k+1)u|^2", Lk1, [](double) { return 1.0; }};
      for (int j = 0; j <= k; ++j) {
        const Op Lj = [&ctx, j](const GridFunction& u) { return apply_L_power(ctx, u, j); };
        const double e = 4.0 * (k - j);
        s.terms.push_back({"|L^" + std::to_string(j) + "u|^2/(y^4(1+y^" + std::to_string(int(e)) + "))", Lj,
                           [=](double y) { return 1.0 / (pw(y, 4) * (1 + pw(y, e))); }});
      }
      {
        const Op ALk = [&ctx, k](const GridFunction& u) { return apply_A(ctx, apply_L_power(ctx, u, k)); };
        s.terms.push_back({"|A L^k u|^2/y^2", ALk, [](double y) { return 1.0 / (y * y); }});
      }
      for (int j = 0; j < k; ++j) {
        const Op ALj = [&ctx, j](const GridFunction& u) { return apply_A(ctx, apply_L_power(ctx, u, j)); };
        const double e = 4.0 * (k - j - 1);
        s.terms.push_back({"|A L^" + std::to_string(j) + "u|^2/(y^6(1+y^" + std::to_string(int(e)) + "))", ALj,
                           [=](double y) { return 1.0 / (pw(y, 6) * (1 + pw(y, e))); }});
      }
      for (int m = 0; m <= k - p.hbar; ++m) s.constraint_powers.push_back(m);
      break;
    }
    case Lemma::hardy:
      throw config_error("coercivity_check: use hardy_check for the Hardy inequality");
  }
  for (int m : s.constraint_powers)
    if (m >= int(phi.LmPhi.size())) throw config_error("coercivity_check: Phi_M built with too small L for the constraints");
  s.parameters = ps.str();
  if (s.constraint_powers.empty()) {
    s.constraint = "none";
  } else {
    std::ostringstream cs;
    cs << "<u, L^m Phi_M> = 0 for m = 0.." << s.constraint_powers.back() << " (M=" << phi.M << ")";
    s.constraint = cs.str();
  }
  return s;
}

double constraint_defect(const GridFunction& u, const PhiM& phi, const std::vector<int>& powers) {
  double worst = 0.0;
  const double un = weighted_norm(u);
  for (int m : powers) {
    const auto& f = phi.LmPhi[m];
    worst = std::max(worst, std::abs(weighted_inner(u, f)) / (un * weighted_norm(f)));
  }
  return worst;
}

}  // namespace

CoercivityReport coercivity_check(const OperatorContext& ctx, const PhiM& phi, Lemma which, int k, int i, double weight,
                                  const CoercivityOptions& opt) {
  const auto s = setup_lemma(ctx, phi, which, k, i, weight);
  const auto& g = *ctx.grid;
  const double y_lo = opt.y_lo > 0 ? opt.y_lo : g.y_min() * 10;
  const double y_hi = opt.y_hi > 0 ? opt.y_hi : g.y_max() / 10;
  const int deg = opt.degree > 0 ? opt.degree : (which == Lemma::iterate ? 2 * k + 5 : 5);
  const BSplineBasis bs(std::log(y_lo), std::log(y_hi), opt.intervals, deg);
  // interior functions: compactly supported in (y_lo, y_hi) with deg-1 continuous derivatives
  std::vector<GridFunction> basis;
  for (int j = deg; j < bs.size() - deg; ++j) basis.push_back(GridFunction::zeros(ctx.grid));
  if (basis.size() < 4) throw config_error("coercivity_check: spline space too small");
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double t = std::log(g.y(n));
    if (t < bs.a() || t > bs.b()) continue;
    const auto v = bs.eval_all(t);
    for (std::size_t j = 0; j < basis.size(); ++j) basis[j][n] = v[deg + j];
  }
  const int J = int(basis.size());

  CoercivityReport r;
  r.lemma = which;
  r.parameters = s.parameters;
  r.constraint = s.constraint;
  r.samples = opt.samples;
  r.seed = opt.seed;
  r.basis_size = J;
  r.target = 1e-3;

  // constraint rows and null space
  const int nc = int(s.constraint_powers.size());
  Eigen::MatrixXd C(nc, J);
  for (int c = 0; c < nc; ++c)
    for (int j = 0; j < J; ++j) C(c, j) = weighted_inner(basis[j], phi.LmPhi[s.constraint_powers[c]]);
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(J, J);
  if (nc > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv.minCoeff() > 1e-10 * sv.maxCoeff())) {
      r.status = "constraint projection failure: rank-deficient constraint Gram matrix";
      return r;
    }
    Z = svd.matrixV().rightCols(J - nc);
  }

  const Eigen::MatrixXd Gl = form_factor(s.lhs, basis) * Z;
  r.subspace_min = std::numeric_limits<double>::infinity();
  for (const auto& t : s.terms) {
    const Eigen::MatrixXd Gt = form_factor(t, basis) * Z;
    FormTerm ft;
    ft.name = t.name;
    ft.subspace_min = min_ratio_factors(Gl, Gt);
    ft.sample_min = std::numeric_limits<double>::infinity();
    r.terms.push_back(ft);
    r.subspace_min = std::min(r.subspace_min, ft.subspace_min);
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> N01;
  r.min_ratio = std::numeric_limits<double>::infinity();
  for (int smp = 0; smp < opt.samples; ++smp) {
    Eigen::VectorXd x(Z.cols());
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = N01(rng);
    const Eigen::VectorXd c = Z * x;
    GridFunction u = GridFunction::zeros(ctx.grid);
    for (int j = 0; j < J; ++j) u.axpy(c[j], basis[j]);
    if (nc > 0) r.max_constraint = std::max(r.max_constraint, constraint_defect(u, phi, s.constraint_powers));
    const double lhs = form_value(s.lhs, u);
    for (std::size_t t = 0; t < s.terms.size(); ++t) {
      const double ratio = lhs / form_value(s.terms[t], u);
      r.terms[t].sample_min = std::min(r.terms[t].sample_min, ratio);
      r.min_ratio = std::min(r.min_ratio, ratio);
    }
  }
  r.pass = r.min_ratio >= r.target && r.max_constraint <= 1e-10;
  if (r.max_constraint > 1e-10) r.status = "post-projection constraint defect above 1e-10";
  return r;
}

CoercivityReport coercivity_evaluate(const OperatorContext& ctx, const PhiM& phi, Lemma which, int k, int i,
                                     double weight, const GridFunction& u) {
  const auto s = setup_lemma(ctx, phi, which, k, i, weight);
  CoercivityReport r;
  r.lemma = which;
  r.parameters = s.parameters;
  r.constraint = s.constraint;
  r.samples = 1;
  r.target = 1e-3;
  if (std::all_of(u.values().begin(), u.values().end(), [](double v) { return v == 0.0; })) {
    // 0 >= 0: every term is tight, no ratio exists.
    r.status = "zero function";
    r.pass = true;
    return r;
  }
  if (!s.constraint_powers.empty()) {
    r.max_constraint = constraint_defect(u, phi, s.constraint_powers);
    if (r.max_constraint > 1e-10) {
      r.status = "constraint not satisfied";
      return r;
    }
  }
  const double lhs = form_value(s.lhs, u);
  r.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& t : s.terms) {
    FormTerm ft;
    ft.name = t.name;
    ft.sample_min = lhs / form_value(t, u);
    r.min_ratio = std::min(r.min_ratio, ft.sample_min);
    r.terms.push_back(ft);
  }
  r.pass = r.min_ratio >= r.target;
  return r;
}

CoercivityReport hardy_check(const ModelParams& p, double alpha, double y_max, const CoercivityOptions& opt) {
  const double d = p.d;
  if (alpha < 0) throw config_error("hardy_check: alpha must be >= 0");
  if (std::abs(alpha - (d - 4) / 2) < 1e-12) throw config_error("hardy_check: alpha = (d-4)/2 is excluded");
  if (!(y_max > 1)) throw config_error("hardy_check: y_max must exceed 1");
  const double beta = d - 4 - 2 * alpha;  // weight e^{beta t} in t = ln y
  const double constant = 0.25 * beta * beta;
  const int deg = opt.degree > 0 ? opt.degree : 5;
  const BSplineBasis bs(0.0, std::log(y_max), opt.intervals, deg);
  const int J = bs.size() - 2;  // drop the two end functions: u(1) = 0, compact support
  std::vector<double> gx, gw;
  gauss_legendre(deg + 4, gx, gw);
  const double T = std::log(y_max);
  const int nq = opt.intervals * int(gx.size());
  Eigen::MatrixXd GK(nq, J), GM(nq, J);
  for (int c = 0; c < opt.intervals; ++c) {
    const double t0 = T * c / opt.intervals, t1 = T * (c + 1) / opt.intervals;
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx[q];
      const double w = std::sqrt(0.5 * (t1 - t0) * gw[q] * std::exp(beta * t));
      const auto v = bs.eval_all(t, 0), dv = bs.eval_all(t, 1);
      const int row = c * int(gx.size()) + int(q);
      for (int a = 0; a < J; ++a) {
        GK(row, a) = w * dv[a + 1];
        GM(row, a) = w * v[a + 1];
      }
    }
  }
  CoercivityReport r;
  r.lemma = Lemma::hardy;
  {
    std::ostringstream ps;
    ps << "alpha=" << alpha << " d=" << p.d << " y_max=" << y_max << " constant=" << constant;
    r.parameters = ps.str();
  }
  r.constraint = "u(1) = 0";
  r.samples = opt.samples;
  r.seed = opt.seed;
  r.basis_size = J;
  r.target = 0.95 * constant;
  FormTerm ft;
  ft.name = "int u^2 y^(d-5-2a) dy";
  ft.subspace_min = min_ratio_factors(GK, GM);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> N01;
  ft.sample_min = std::numeric_limits<double>::infinity();
  for (int s = 0; s < opt.samples; ++s) {
    Eigen::VectorXd x(J);
    for (int j = 0; j < J; ++j) x[j] = N01(rng);
    ft.sample_min = std::min(ft.sample_min, (GK * x).squaredNorm() / (GM * x).squaredNorm());
  }
  r.terms.push_back(ft);
  r.min_ratio = ft.sample_min;
  r.subspace_min = ft.subspace_min;
  r.pass = r.subspace_min >= r.target && r.min_ratio >= r.target;
  return r;
}

}  // namespace ymflow
