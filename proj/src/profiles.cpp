#include "ymflow/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ymflow/error.hpp"

namespace ymflow {

int weight_of(const MultiIndex& m) {
  int w = 0;
  for (std::size_t k = 0; k < m.size(); ++k) w += int(k + 1) * m[k];
  return w;
}

std::string format_multi(const MultiIndex& m) {
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < m.size(); ++k) os << (k ? "," : "") << m[k];
  os << ')';
  return os.str();
}

void BPolynomial::add(const MultiIndex& m, const GridFunction& f, double s) {
  if (int(m.size()) != L_) throw config_error("BPolynomial: multi-index length mismatch");
  auto it = terms_.find(m);
  if (it == terms_.end()) {
    auto g = f;
    if (s != 1.0) g *= s;
    terms_.emplace(m, std::move(g));
  } else {
    it->second.axpy(s, f);
  }
}

BPolynomial& BPolynomial::operator+=(const BPolynomial& o) {
  for (const auto& [m, f] : o.terms_) add(m, f);
  return *this;
}

BPolynomial& BPolynomial::operator*=(double s) {
  for (auto& [m, f] : terms_) f *= s;
  return *this;
}

std::optional<int> BPolynomial::homogeneity() const {
  if (terms_.empty()) return 0;
  const int w = weight_of(terms_.begin()->first);
  for (const auto& [m, f] : terms_)
    if (weight_of(m) != w) return std::nullopt;
  return w;
}

BPolynomial BPolynomial::part(int p) const {
  BPolynomial out(grid_, L_);
  for (const auto& [m, f] : terms_)
    if (weight_of(m) == p) out.terms_.emplace(m, f);
  return out;
}

BPolynomial BPolynomial::above(int p) const {
  BPolynomial out(grid_, L_);
  for (const auto& [m, f] : terms_)
    if (weight_of(m) > p) out.terms_.emplace(m, f);
  return out;
}

GridFunction BPolynomial::evaluate(std::span<const double> b) const {
  if (int(b.size()) < L_) throw config_error("BPolynomial::evaluate: need L values of b");
  auto out = GridFunction::zeros(grid_);
  for (const auto& [m, f] : terms_) {
    double c = 1.0;
    for (int k = 0; k < L_; ++k)
      for (int r = 0; r < m[k]; ++r) c *= b[k];
    if (c != 0.0) out.axpy(c, f);
  }
  return out;
}

BPolynomial BPolynomial::derivative(int j) const {
  BPolynomial out(grid_, L_);
  for (const auto& [m, f] : terms_) {
    if (m[j - 1] == 0) continue;
    auto mm = m;
    --mm[j - 1];
    out.add(mm, f, double(m[j - 1]));
  }
  return out;
}

bool BPolynomial::depends_on(int j) const {
  return std::any_of(terms_.begin(), terms_.end(), [j](const auto& t) { return t.first[j - 1] > 0; });
}

BPolynomial BPolynomial::times_b(int j, double s) const {
  BPolynomial out(grid_, L_);
  if (j > L_) return out;  // b_{L+1} = 0
  for (const auto& [m, f] : terms_) {
    auto mm = m;
    ++mm[j - 1];
    out.add(mm, f, s);
  }
  return out;
}

BPolynomial BPolynomial::times(const GridFunction& w) const {
  return map([&](const GridFunction& f) { return f * w; });
}

BPolynomial multiply(const BPolynomial& a, const BPolynomial& b, int max_weight) {
  BPolynomial out(a.grid(), a.L());
  for (const auto& [ma, fa] : a.terms())
    for (const auto& [mb, fb] : b.terms()) {
      MultiIndex m(ma.size());
      for (std::size_t k = 0; k < m.size(); ++k) m[k] = ma[k] + mb[k];
      if (weight_of(m) > max_weight) continue;
      out.add(m, fa * fb);
    }
  return out;
}

std::vector<GridFunction> taylor_weights(const OperatorContext& ctx, int j_max) {
  const auto& Q = ctx.gs.Q;
  const auto& R = ctx.gs.OneMinusQ;
  std::vector<GridFunction> w;
  for (int j = 0; j <= j_max; ++j) {
    switch (j) {
      case 0: w.push_back(map(Q, [](double, double u) { return f(u); })); break;
      case 1: w.push_back(map(Q, [](double, double u) { return fp(u); })); break;
      case 2: w.push_back(map(R, [](double, double r) { return -3.0 * r; })); break;  // f''(Q)/2 = 3Q - 3
      case 3: w.push_back(map(Q, [](double, double) { return 1.0; })); break;
      default: w.push_back(GridFunction::zeros(ctx.grid));
    }
  }
  return w;
}

namespace {

MultiIndex unit(int L, int j) {
  MultiIndex m(L, 0);
  m[j - 1] = 1;
  return m;
}

GridFunction inv_y2(const OperatorContext& ctx, double s) {
  return GridFunction::sample(ctx.grid, [s](double y) { return s / (y * y); });
}

// E_j: weight j+1 terms left over after S_j is in place.
BPolynomial e_term(const OperatorContext& ctx, const ApproximateProfile& prof, int j) {
  const int L = prof.L;
  const double g = ctx.params.gamma;
  BPolynomial E(ctx.grid, L);
  if (j <= L) {
    MultiIndex m(L, 0);
    m[0] += 1;
    m[j - 1] += 1;
    E.add(m, apply_Lambda(ctx, prof.T[j]) - (2.0 * j - g) * prof.T[j]);
  }
  E += prof.S[j].map([&](const GridFunction& f) { return apply_Lambda(ctx, f); }).times_b(1);
  for (int i = 1; i <= L; ++i) {
    const auto& dSj = prof.dS[j][i];
    if (dSj.empty()) continue;
    E += dSj.times_b(1).times_b(i, -(2.0 * i - g));
    E += dSj.times_b(i + 1);
  }
  return E;
}

}  // namespace

ApproximateProfile build_sk(const OperatorContext& ctx, const ProfileSet& ladder, int L) {
  if (L < 1) throw config_error("build_sk: L must be >= 1");
  if (int(ladder.T.size()) < L + 1) throw config_error("build_sk: profile ladder shallower than L");
  const double g = ctx.params.gamma;
  const auto w = taylor_weights(ctx, 3);
  const auto pot = inv_y2(ctx, ctx.params.d - 2);
  ApproximateProfile prof;
  prof.L = L;
  prof.T.assign(ladder.T.begin(), ladder.T.begin() + L + 1);
  prof.S.assign(L + 3, BPolynomial(ctx.grid, L));
  prof.F.assign(L + 3, BPolynomial(ctx.grid, L));
  prof.dS.assign(L + 3, std::vector<BPolynomial>(L + 1, BPolynomial(ctx.grid, L)));

  BPolynomial theta(ctx.grid, L);
  for (int k = 1; k <= L; ++k) theta.add(unit(L, k), prof.T[k]);

  for (int k = 2; k <= L + 2; ++k) {
    // P_k: weight-k part of w2 Theta^2 + Theta^3 with Theta = sum b T + S_2..S_{k-1}.
    const auto th2 = multiply(theta, theta, k);
    const auto th3 = multiply(th2, theta, k);
    BPolynomial P = th2.part(k).times(w[2]);
    P += th3.part(k);
    BPolynomial Fk = e_term(ctx, prof, k - 1);
    Fk += P.times(pot);
    prof.F[k] = Fk;

    BPolynomial Sk(ctx.grid, L);
    for (const auto& [m, f] : Fk.terms()) {
      InversionRecord rec;
      GridFunction s;
      try {
        s = -invert_L(ctx, f, 1e-4, &rec);
      } catch (const Error& e) {
        throw numerical_error("build_sk: inversion failed at k=" + std::to_string(k) + " m=" + format_multi(m) + ": " +
                              e.what());
      }
      prof.worst_roundtrip = std::max(prof.worst_roundtrip, rec.roundtrip);
      std::ostringstream os;
      os << "k=" << k << " m=" << format_multi(m) << " roundtrip=" << rec.roundtrip;
      prof.inversion_log.push_back(os.str());
      s.origin_order = k;
      s.tail_order = 2.0 * (k - 1) - g;
      Sk.add(m, s);
    }
    prof.S[k] = Sk;
    for (int i = 1; i <= L; ++i) prof.dS[k][i] = Sk.derivative(i);
    theta += Sk;
  }

  const int top = 3 * (L + 2);
  const auto th2 = multiply(theta, theta, top);
  const auto th3 = multiply(th2, theta, top);
  auto nl = th2.above(L + 2).times(w[2]);
  nl += th3.above(L + 2);
  prof.dropped = nl.times(pot);
  prof.Psi = e_term(ctx, prof, L + 2);
  prof.Psi += prof.dropped;
  return prof;
}

void check_cone(const ModelParams& p, std::span<const double> b) {
  if (std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; })) return;
  if (b.empty() || !(b[0] > 0.0 && b[0] < p.bstar))
    throw config_error("b outside the a-priori cone: need 0 < b_1 < b* = " + std::to_string(p.bstar));
  for (std::size_t k = 1; k < b.size(); ++k)
    if (std::abs(b[k]) > kConeConstant * std::pow(b[0], double(k + 1)))
      throw config_error("b outside the a-priori cone: |b_" + std::to_string(k + 1) + "| > C b_1^" +
                         std::to_string(k + 1));
}

std::vector<double> modulation_law(const ModelParams& p, std::span<const double> b) {
  const int L = int(b.size());
  std::vector<double> bs(L);
  for (int k = 1; k <= L; ++k) bs[k - 1] = (k < L ? b[k] : 0.0) - (2.0 * k - p.gamma) * b[0] * b[k - 1];
  return bs;
}

QbParts assemble_qb(const OperatorContext& ctx, const ApproximateProfile& prof, std::span<const double> b) {
  if (int(b.size()) != prof.L) throw config_error("assemble_qb: expected L values of b");
  check_cone(ctx.params, b);
  QbParts out;
  out.Theta = GridFunction::zeros(ctx.grid);
  for (int k = 1; k <= prof.L; ++k)
    if (b[k - 1] != 0.0) out.Theta.axpy(b[k - 1], prof.T[k]);
  for (int k = 2; k <= prof.L + 2; ++k) out.Theta += prof.S[k].evaluate(b);
  out.Qb = ctx.gs.Q + out.Theta;
  return out;
}

namespace {

double require_B1(const OperatorContext& ctx, double b1, double eta) {
  const double B1 = std::pow(b1, -0.5 * (1.0 + eta));
  if (!(2.0 * B1 <= ctx.grid->y_max()))
    throw domain_error("domain too small: 2 B_1 = " + std::to_string(2 * B1) + " exceeds y_max");
  return B1;
}

double integral_below(const GridFunction& f, double Y) {
  const auto& g = f.grid();
  const std::size_t i1 = std::min(g.index_below(Y), g.size() - 1);
  return g.integrate(f.span(), 0, i1);
}

}  // namespace

GridFunction localize_qb(const OperatorContext& ctx, const ApproximateProfile& prof, std::span<const double> b,
                         double eta) {
  if (b.empty() || !(b[0] > 0.0)) throw config_error("localize_qb: b_1 must be positive");
  const double B1 = require_B1(ctx, b[0], eta);
  const auto parts = assemble_qb(ctx, prof, b);
  return ctx.gs.Q + cutoff(ctx.grid, B1) * parts.Theta;
}

ResidualReport residual_psi(const OperatorContext& ctx, const ApproximateProfile& prof, std::span<const double> b,
                            double eta, bool localize, int m_max) {
  const int L = prof.L;
  const auto& p = ctx.params;
  const auto& grid = *ctx.grid;
  ResidualReport rep;
  const auto parts = assemble_qb(ctx, prof, b);
  const auto& Theta = parts.Theta;
  const bool zero = std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; });
  const double b1 = b[0];
  const auto bs = modulation_law(p, b);
  const auto w2 = taylor_weights(ctx, 2)[2];
  const auto pot = inv_y2(ctx, p.d - 2);
  auto one = GridFunction::sample(ctx.grid, [](double) { return 1.0; });
  auto chi = one;
  auto dchi_db1 = GridFunction::zeros(ctx.grid);
  if (!zero) {
    rep.B0 = p.B0(b1);
    rep.B1 = require_B1(ctx, b1, eta);
    if (localize) {
      const double B1 = rep.B1;
      chi = cutoff(ctx.grid, B1);
      // B_1 = b_1^{-(1+eta)/2}
      dchi_db1 = GridFunction::sample(ctx.grid, [&](double y) {
        return chi_deriv(y / B1) * (y / B1) * (1.0 + eta) / (2.0 * b1);
      });
    }
  }
  rep.b1_s_ratio = zero ? 0.0 : std::abs(bs[0]) / (b1 * b1);

  // chi Psi_b + b_1 (1 - chi) Lambda Q + cutoff remainder of the nonlinearity + commutator terms.
  auto psi = chi * prof.Psi.evaluate(b);
  if (localize && !zero) {
    psi.axpy(b1, (one - chi) * ctx.gs.LambdaQ);
    const auto c2 = chi * chi - chi, c3 = chi * chi * chi - chi;
    psi += pot * (w2 * c2 * Theta * Theta + c3 * Theta * Theta * Theta);
    const double B1 = rep.B1;
    const auto lchi = GridFunction::sample(ctx.grid, [B1](double y) { return (y / B1) * chi_deriv(y / B1); });
    const auto lap_chi = GridFunction::sample(ctx.grid, [B1, d = p.d](double y) {
      const double z = y / B1;
      return (chi_deriv2(z) + (d - 3) / z * chi_deriv(z)) / (B1 * B1);
    });
    const GridFunction lth(ctx.grid, grid.lambda(Theta.span()));
    psi += Theta * (bs[0] * dchi_db1 - lap_chi + b1 * lchi);
    psi.axpy(-2.0, inv_y2(ctx, 1.0) * lchi * lth);
  }
  rep.psi = psi;

  // Same quantity straight from the flow operator; loses ~eps |b_1 Lambda Q| to cancellation.
  {
    const auto theta = chi * Theta;
    auto ds = GridFunction::zeros(ctx.grid);
    for (int k = 1; k <= L; ++k) {
      if (bs[k - 1] == 0.0) continue;
      auto dk = prof.T[k];
      for (int j = k + 1; j <= L + 2; ++j) dk += prof.dS[j][k].evaluate(b);
      ds.axpy(bs[k - 1], chi * dk);
    }
    ds.axpy(bs[0], dchi_db1 * Theta);
    auto direct = ds + apply_L(ctx, theta);
    direct.axpy(b1, ctx.gs.LambdaQ);
    direct.axpy(b1, apply_Lambda(ctx, theta));
    direct += pot * (w2 * theta * theta + theta * theta * theta);
    rep.psi_direct = direct;
  }

  if (!zero) {
    const double pn = weighted_norm_below(psi, 2 * rep.B0);
    rep.dropped = pn > 0 ? weighted_norm_below(chi * prof.dropped.evaluate(b), 2 * rep.B0) / pn : 0.0;
  }

  for (int m = 0; m <= m_max; ++m) {
    ResidualNorms n;
    n.m = m;
    const int pw = p.hbar + m + 1;
    const auto Lp = apply_L_power(ctx, psi, pw);
    const auto wt = GridFunction::sample(ctx.grid, [pw](double y) { return 1.0 / (1.0 + std::pow(y, 4.0 * pw)); });
    const auto l2 = Lp * Lp;
    const auto ww = wt * psi * psi;
    n.full_L = grid.integrate(l2.span());
    n.full_weighted = grid.integrate(ww.span());
    if (!zero) {
      n.b0_L = integral_below(l2, 2 * rep.B0);
      n.b0_weighted = integral_below(ww, 2 * rep.B0);
    }
    n.m_L = integral_below(l2, 2 * p.M);
    rep.norms.push_back(n);
  }
  return rep;
}

PowerLawScan residual_power_law(const OperatorContext& ctx, const ApproximateProfile& prof,
                                const std::vector<double>& b1, double eta, int m_max) {
  if (b1.size() < 2) throw config_error("residual_power_law: need at least two b_1 values");
  PowerLawScan out;
  out.b1 = b1;
  out.norms.assign(m_max + 1, {});
  for (double v : b1) {
    std::vector<double> b(prof.L, 0.0);
    b[0] = v;
    const auto r = residual_psi(ctx, prof, b, eta, true, m_max);
    if (2 * r.B0 > r.B1) out.separated = false;
    for (int m = 0; m <= m_max; ++m) out.norms[m].push_back(r.norms[m].b0_weighted);
  }
  for (int m = 0; m <= m_max; ++m) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(b1.size());
    for (std::size_t i = 0; i < b1.size(); ++i) {
      const double x = std::log(b1[i]), y = std::log(out.norms[m][i]);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    out.slope.push_back((n * sxy - sx * sy) / (n * sxx - sx * sx));
    out.target.push_back(2.0 * m + 4.0 + 2.0 * (1.0 - ctx.params.delta));
  }
  return out;
}

}  // namespace ymflow
