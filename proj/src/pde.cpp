#include "ymflow/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

#include "ymflow/error.hpp"

extern "C" {
void dgbtrf_(const int* m, const int* n, const int* kl, const int* ku, double* ab, const int* ldab, int* ipiv,
             int* info);
void dgbtrs_(const char* trans, const int* n, const int* kl, const int* ku, const int* nrhs, const double* ab,
             const int* ldab, const int* ipiv, double* b, const int* ldb, int* info);
}

namespace ymflow {

namespace {

constexpr int kBand = 7;

// Row i of Lambda and of the radial Laplacian (d-3)/y d/dy + d^2/dy^2 as stencil weights.
struct RowWeights {
  std::size_t start = 0;
  std::vector<double> lam, lap;
};

std::vector<RowWeights> operator_rows(const RadialGrid& g) {
  const std::size_t n = g.size();
  const double h = g.h(), d = g.d();
  std::vector<RowWeights> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Stencil& st = g.stencil(i);
    const double u = g.dlog(i), upp = g.dlog2(i), y2 = g.y(i) * g.y(i);
    RowWeights r;
    r.start = st.start;
    r.lam.resize(st.w1.size());
    r.lap.resize(st.w1.size());
    for (std::size_t j = 0; j < st.w1.size(); ++j) {
      const double l1 = st.w1[j] / (h * u);
      const double l2 = st.w2[j] / (h * h * u * u) - upp / (u * u * u) * st.w1[j] / h;
      r.lam[j] = l1;
      r.lap[j] = (l2 + (d - 4) * l1) / y2;
    }
    rows[i] = std::move(r);
  }
  return rows;
}

double apply_row(const std::vector<double>& w, std::size_t start, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * f[start + j];
  return acc;
}

// Banded LU of the linearly-implicit Euler matrix with two right-hand sides.
class BandedSystem {
 public:
  explicit BandedSystem(std::size_t n) : n_(int(n)), ld_(3 * kBand + 1), ab_(std::size_t(ld_) * n, 0.0), piv_(n) {}

  void clear() { std::fill(ab_.begin(), ab_.end(), 0.0); }
  void add(std::size_t i, std::size_t j, double v) {
    const int off = int(j) - int(i);
    if (off > kBand || -off > kBand) throw numerical_error("stencil exceeds the band");
    ab_[std::size_t(ld_) * j + std::size_t(2 * kBand + int(i) - int(j))] += v;
  }
  void factor() {
    int info = 0, kl = kBand, ku = kBand;
    dgbtrf_(&n_, &n_, &kl, &ku, ab_.data(), &ld_, piv_.data(), &info);
    if (info != 0) throw numerical_error("banded factorization failed");
  }
  void solve(std::vector<double>& rhs, int nrhs) const {
    int info = 0, kl = kBand, ku = kBand;
    const char tr = 'N';
    dgbtrs_(&tr, &n_, &kl, &ku, &nrhs, ab_.data(), &ld_, piv_.data(), rhs.data(), &n_, &info);
    if (info != 0) throw numerical_error("banded solve failed");
  }

 private:
  int n_, ld_;
  std::vector<double> ab_;
  std::vector<int> piv_;
};

// Increment dw = dA + mu dB of one linearly-implicit Euler step.
struct Increment {
  std::vector<double> dA, dB;
};

class Stepper {
 public:
  Stepper(GridPtr grid, Frame frame, double far_value)
      : g_(std::move(grid)), frame_(frame), far_(far_value), rows_(operator_rows(*g_)), sys_(g_->size()) {}

  // F_0(w) = Laplacian w - (d-2)/y^2 f(w) at interior nodes.
  std::vector<double> rhs0(const std::vector<double>& w) const {
    const std::size_t n = w.size();
    const double d = g_->d();
    std::vector<double> F(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double y = g_->y(i);
      F[i] = apply_row(rows_[i].lap, rows_[i].start, w) - (d - 2) / (y * y) * f(w[i]);
    }
    return F;
  }

  std::vector<double> lambda_of(const std::vector<double>& w) const {
    std::vector<double> out(w.size(), 0.0);
    for (std::size_t i = 1; i + 1 < w.size(); ++i) out[i] = apply_row(rows_[i].lam, rows_[i].start, w);
    return out;
  }

  Increment step(const std::vector<double>& w, double h, double mu_star) {
    const std::size_t n = w.size();
    const double d = g_->d();
    sys_.clear();
    const double rho = std::pow(g_->y(0) / g_->y(1), 2);
    sys_.add(0, 0, 1.0);
    sys_.add(0, 1, -rho);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const auto& r = rows_[i];
      const double y = g_->y(i);
      for (std::size_t j = 0; j < r.lap.size(); ++j) sys_.add(i, r.start + j, -h * (r.lap[j] + mu_star * r.lam[j]));
      sys_.add(i, i, 1.0 + h * (d - 2) / (y * y) * fp(w[i]));
    }
    const auto& last = rows_[n - 1];
    if (frame_ == Frame::renormalized) {
      sys_.add(n - 1, n - 1, 1.0);
    } else {
      for (std::size_t j = 0; j < last.lam.size(); ++j) sys_.add(n - 1, last.start + j, last.lam[j]);
    }
    sys_.factor();

    std::vector<double> rhs(2 * n, 0.0);
    const auto F = rhs0(w);
    const auto Lw = lambda_of(w);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      rhs[i] = h * F[i];
      rhs[n + i] = h * Lw[i];
    }
    rhs[0] = -(w[0] - rho * w[1]);
    if (frame_ == Frame::renormalized) rhs[n - 1] = far_ - w[n - 1];
    else rhs[n - 1] = -apply_row(last.lam, last.start, w);
    sys_.solve(rhs, 2);
    Increment inc;
    inc.dA.assign(rhs.begin(), rhs.begin() + std::ptrdiff_t(n));
    inc.dB.assign(rhs.begin() + std::ptrdiff_t(n), rhs.end());
    return inc;
  }

 private:
  GridPtr g_;
  Frame frame_;
  double far_;
  std::vector<RowWeights> rows_;
  BandedSystem sys_;
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// int_0^h lambda^2 ds with lambda = lambda_0 exp(mu s).
double time_increment(double lambda, double mu, double h) {
  const double x = 2.0 * mu * h;
  const double factor = std::abs(x) < 1e-8 ? h * (1.0 + 0.5 * x) : std::expm1(x) / (2.0 * mu);
  return lambda * lambda * factor;
}

std::vector<double> padded(const Decomposer& dec, const std::vector<double>& b) {
  std::vector<double> full(std::size_t(dec.prof->L), 0.0);
  for (std::size_t k = 0; k < b.size() && k < full.size(); ++k) full[k] = b[k];
  return full;
}

// Weighted norm over the support of Phi_M (y <= 2M).
double support_norm(const Decomposer& dec, const GridFunction& f) {
  return weighted_norm_below(f, 2.0 * dec.phi->M);
}

void check_decomposer(const Decomposer& dec) {
  if (!dec.ctx || !dec.prof || !dec.phi) throw config_error("decomposer is incomplete");
  if (dec.L_extract < 0 || dec.L_extract > dec.prof->L || dec.L_extract >= int(dec.phi->LmPhi.size()))
    throw config_error("L_extract must lie in [0, L]");
}

struct ConstraintRatios {
  std::vector<double> global, local, absolute;
  double worst(const std::vector<double>& v) const { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }
};

// |<q, L^i Phi_M>| against ||q|| on the grid, ||q|| on y <= 2M and ||w|| on y <= 2M.
ConstraintRatios constraint_ratios(const Decomposer& dec, const GridFunction& q, const GridFunction& w) {
  const double nq = weighted_norm(q), nl = support_norm(dec, q), nw = support_norm(dec, w);
  auto ratio = [](double ip, double a, double b) { return a * b > 0.0 ? std::abs(ip) / (a * b) : std::abs(ip); };
  ConstraintRatios out;
  for (int i = 0; i <= dec.L_extract; ++i) {
    const auto& phi = dec.phi->LmPhi[std::size_t(i)];
    const double ip = weighted_inner(q, phi), np = weighted_norm(phi);
    out.global.push_back(ratio(ip, nq, np));
    out.local.push_back(ratio(ip, nl, np));
    out.absolute.push_back(ratio(ip, nw, np));
  }
  return out;
}

void fill_constraints(DiagnosticRecord& rec, const ConstraintRatios& cr) {
  rec.constraint = cr.worst(cr.global);
  rec.constraint_local = cr.worst(cr.local);
  rec.constraint_abs = cr.worst(cr.absolute);
}

void summarize(Diagnostics& d) {
  for (const auto& r : d.records) {
    d.worst_constraint = std::max(d.worst_constraint, r.constraint);
    d.worst_constraint_local = std::max(d.worst_constraint_local, r.constraint_local);
    d.worst_constraint_abs = std::max(d.worst_constraint_abs, r.constraint_abs);
  }
}

double energy_density_sum(const GridFunction& u, std::vector<double>* density = nullptr) {
  const auto& g = u.grid();
  const double d = g.d();
  const auto lu = g.lambda(u.span());
  std::vector<double> e(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double y = g.y(i), r = 1.0 - u[i];
    // F(u) - F(1) = -(1-u)^2/2 + (1-u)^4/4
    e[i] = (0.5 * lu[i] * lu[i] + (d - 2) * (-0.5 * r * r + 0.25 * r * r * r * r)) / (y * y);
  }
  const double E = g.integrate(e);
  if (density) *density = std::move(e);
  return E;
}

double grad_sup(const GridFunction& u) {
  const auto& g = u.grid();
  const auto lu = g.lambda(u.span());
  double m = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(lu[i] / g.y(i)));
  return m;
}

std::vector<int> default_m_set(const ModelParams& p) { return {1, 2, p.hbar + 2}; }

std::string at_s(const std::string& what, double s) {
  std::ostringstream os;
  os.precision(17);
  os << what << " s=" << s;
  return os.str();
}

}  // namespace

GridFunction profile_family(const Decomposer& dec, const std::vector<double>& b) {
  check_decomposer(dec);
  const auto& ctx = *dec.ctx;
  const auto bf = padded(dec, b);
  auto theta = GridFunction::zeros(ctx.grid);
  for (int k = 1; k <= dec.prof->L; ++k)
    if (bf[std::size_t(k - 1)] != 0.0) theta.axpy(bf[std::size_t(k - 1)], dec.prof->T[std::size_t(k)]);
  for (int k = 2; k <= dec.prof->L + 2; ++k) theta += dec.prof->S[std::size_t(k)].evaluate(bf);
  if (bf[0] == 0.0) return ctx.gs.Q + theta;
  const double B1 = std::pow(std::abs(bf[0]), -0.5 * (1.0 + dec.eta));
  return ctx.gs.Q + cutoff(ctx.grid, B1) * theta;
}

GridFunction rescale_to(const GridFunction& u, double lambda, GridPtr target) {
  if (!(lambda > 0.0)) throw config_error("rescale: lambda must be positive");
  const auto& g = u.grid();
  std::vector<double> out(target->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = lambda * target->y(i);
    if (r < g.y_min()) out[i] = u[0] * (r / g.y_min()) * (r / g.y_min());
    else if (r > g.y_max()) out[i] = u[u.size() - 1];
    else out[i] = g.interpolate(u.span(), r);
  }
  return GridFunction(std::move(target), std::move(out));
}

Decomposition extract_decomposition(const GridFunction& u, const Decomposer& dec, double lambda_guess,
                                    const std::vector<double>& b_guess, double tol, int max_iter) {
  check_decomposer(dec);
  const int Le = dec.L_extract;
  const int N = Le + 1;
  const auto& phis = dec.phi->LmPhi;
  std::vector<double> pn(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) pn[std::size_t(i)] = weighted_norm(phis[std::size_t(i)]);

  // x = (ln lambda, b_1..b_Le)
  Eigen::VectorXd x(N);
  x[0] = std::log(lambda_guess);
  for (int k = 0; k < Le; ++k) x[k + 1] = k < int(b_guess.size()) ? b_guess[std::size_t(k)] : 0.0;

  auto residual = [&](const Eigen::VectorXd& z, double* scale = nullptr) {
    const auto w = rescale_to(u, std::exp(z[0]), dec.ctx->grid);
    std::vector<double> b(static_cast<std::size_t>(Le));
    for (int k = 0; k < Le; ++k) b[std::size_t(k)] = z[k + 1];
    const auto q = w - profile_family(dec, b);
    if (scale) *scale = support_norm(dec, w);
    Eigen::VectorXd r(N);
    for (int i = 0; i < N; ++i) r[i] = weighted_inner(q, phis[std::size_t(i)]) / pn[std::size_t(i)];
    return r;
  };

  Decomposition out;
  double scale = 0.0;
  Eigen::VectorXd r = residual(x, &scale);
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    if (r.cwiseAbs().maxCoeff() <= tol * scale) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd J(N, N);
    for (int j = 0; j < N; ++j) {
      const double hstep = j == 0 ? 1e-6 : 1e-6 * std::max(std::abs(x[j]), 1e-3);
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += hstep;
      xm[j] -= hstep;
      J.col(j) = (residual(xp) - residual(xm)) / (2 * hstep);
    }
    const Eigen::VectorXd dx = J.fullPivLu().solve(-r);
    if (!dx.allFinite()) break;
    double damp = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 12; ++ls, damp *= 0.5) {
      const Eigen::VectorXd xn = x + damp * dx;
      const Eigen::VectorXd rn = residual(xn);
      if (rn.norm() < r.norm() || rn.cwiseAbs().maxCoeff() <= tol * scale) {
        x = xn;
        r = rn;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    out.iterations = it + 1;
  }
  if (!out.converged && r.cwiseAbs().maxCoeff() <= tol * scale) out.converged = true;

  out.lambda = std::exp(x[0]);
  out.b.resize(std::size_t(Le));
  for (int k = 0; k < Le; ++k) out.b[std::size_t(k)] = x[k + 1];
  const auto w = rescale_to(u, out.lambda, dec.ctx->grid);
  out.q = w - profile_family(dec, out.b);
  const auto cr = constraint_ratios(dec, out.q, w);
  out.residuals = cr.global;
  out.local = cr.local;
  out.absolute = cr.absolute;
  return out;
}

double energy(const GridFunction& u) { return energy_density_sum(u); }

GridFunction flatten_far_field(const GridFunction& u, double r0) {
  const auto& g = u.grid();
  if (!(2.0 * r0 < g.y_max() && r0 > g.y_min())) throw config_error("flatten_far_field: need y_min < r0 < y_max / 2");
  const double u0 = g.interpolate(u.span(), r0);
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double c = chi(g.y(i) / r0);
    out[i] = c * u[i] + (1.0 - c) * u0;
  }
  return GridFunction(u.grid_ptr(), std::move(out));
}

QDiagnostics diagnostics_q(const GridFunction& q, const OperatorContext& ctx, std::vector<int> m_set) {
  require_same_grid(q, ctx.gs.Q);
  QDiagnostics out;
  out.m_set = m_set.empty() ? default_m_set(ctx.params) : std::move(m_set);
  for (int m : out.m_set) {
    const double n = weighted_norm(apply_L_power(ctx, q, m));
    out.E2m.push_back(n * n);
  }
  const auto& g = *ctx.grid;
  const auto l1 = g.lambda(q.span());
  const auto l2 = g.lambda2(q.span());
  for (int i = 0; i <= 2; ++i) {
    std::vector<double> v(q.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double y = g.y(k);
      const double dq = i == 0 ? q[k] : i == 1 ? l1[k] / y : (l2[k] - l1[k]) / (y * y);
      v[k] = dq * dq / (1.0 + std::pow(y, 2 * (2 - i)));
    }
    out.lower.push_back(g.integrate(v));
  }
  return out;
}

EvolveResult evolve_physical(const GridFunction& u0, const ModelParams& p, double t_end, const SolverOptions& opt,
                             const Decomposer* dec, std::vector<int> m_set) {
  if (!u0.finite()) throw config_error("initial data not finite");
  if (u0.grid().d() != p.d) throw config_error("grid dimension does not match d");
  if (dec) check_decomposer(*dec);
  EvolveResult res;
  res.traj.l = p.l;
  res.traj.gamma = p.gamma;
  res.traj.rtol = opt.tol;
  res.diag.m_set = std::move(m_set);
  Stepper stepper(u0.grid_ptr(), Frame::physical, 0.0);
  std::vector<double> u = u0.values();
  double t = 0.0, h = opt.h0;
  double E = energy(u0), dissipated = 0.0;
  double lambda0 = 1.0, lambda_prev = 1.0;
  std::vector<double> b_prev(dec ? std::size_t(dec->L_extract) : 0, 0.0);

  auto record = [&](double step) {
    DiagnosticRecord rec;
    rec.t = t;
    rec.s = 0.0;
    rec.energy = E;
    rec.dissipated = dissipated;
    GridFunction uf(u0.grid_ptr(), u);
    rec.grad_sup = grad_sup(uf);
    rec.step = step;
    if (dec) {
      const auto dc = extract_decomposition(uf, *dec, lambda_prev, b_prev);
      if (!dc.converged) res.traj.events.push_back("extraction-not-converged t=" + std::to_string(t));
      rec.lambda = dc.lambda;
      rec.b = dc.b;
      fill_constraints(rec, ConstraintRatios{dc.residuals, dc.local, dc.absolute});
      lambda_prev = dc.lambda;
      b_prev = dc.b;
      if (!res.diag.m_set.empty()) rec.E2m = diagnostics_q(dc.q, *dec->ctx, res.diag.m_set).E2m;
    }
    res.diag.records.push_back(rec);
    TrajectorySample smp;
    smp.s = rec.s;
    smp.t = t;
    smp.lambda = rec.lambda;
    smp.b = rec.b;
    res.traj.samples.push_back(std::move(smp));
  };
  auto snapshot = [&](std::size_t step) {
    if (!opt.on_snapshot || opt.snap_every == 0 || step % opt.snap_every != 0) return;
    const GridFunction uf(u0.grid_ptr(), u);
    Snapshot sn{step, 0.0, t, 1.0, &uf, nullptr};
    std::optional<Decomposition> dc;
    if (dec) {
      dc = extract_decomposition(uf, *dec, lambda_prev, b_prev);
      sn.lambda = dc->lambda;
      sn.q = &dc->q;
    }
    opt.on_snapshot(sn);
  };
  record(0.0);
  lambda0 = res.diag.records.back().lambda;
  snapshot(0);

  std::size_t steps = 0;
  while (t < t_end) {
    if (steps >= opt.max_steps) {
      res.diag.status = "max-steps";
      break;
    }
    h = std::min({h, opt.h_max, t_end - t});
    const auto full = stepper.step(u, h, 0.0);
    std::vector<double> uf(u.size()), uh(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) uf[i] = u[i] + full.dA[i];
    const auto h1 = stepper.step(u, 0.5 * h, 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) uh[i] = u[i] + h1.dA[i];
    const auto h2 = stepper.step(uh, 0.5 * h, 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) uh[i] += h2.dA[i];
    if (!all_finite(uh) || !all_finite(uf)) {
      res.diag.status = "non-finite";
      res.traj.events.push_back("non-finite t=" + std::to_string(t));
      break;
    }
    const double err = max_abs_diff(uf, uh);
    if (err > opt.tol) {
      ++res.diag.rejected;
      h *= std::clamp(0.9 * std::sqrt(opt.tol / err), 0.1, 0.9);
      if (h < opt.h_min) {
        res.diag.status = "step-underflow";
        res.traj.events.push_back("step-underflow t=" + std::to_string(t));
        break;
      }
      continue;
    }
    // Dissipation over the step: int u_t^2 r^{d-3} dt.
    std::vector<double> ut2(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) ut2[i] = (uh[i] - u[i]) * (uh[i] - u[i]) / h;
    dissipated += u0.grid().integrate(ut2);
    u.swap(uh);
    t += h;
    ++steps;
    ++res.diag.accepted;
    const double En = energy(GridFunction(u0.grid_ptr(), u));
    const double dE = En - E;
    res.diag.max_energy_increase = std::max(res.diag.max_energy_increase, dE);
    E = En;
    const double used = h;
    h *= err > 0 ? std::clamp(0.9 * std::sqrt(opt.tol / err), 0.2, 4.0) : 4.0;
    snapshot(steps);
    if (steps % opt.record_every == 0 || t >= t_end) {
      record(used);
      if (dec && res.diag.records.back().lambda < opt.stop_ratio * lambda0) {
        res.diag.status = "stop-ratio";
        break;
      }
    }
  }
  if (res.diag.status == "ok") res.diag.status = "t-end";
  const double E0 = res.diag.records.front().energy;
  for (const auto& r : res.diag.records)
    if (r.dissipated > 0.0)
      res.diag.dissipation_defect = std::max(res.diag.dissipation_defect, std::abs(r.energy - E0 + r.dissipated) / r.dissipated);
  summarize(res.diag);
  res.state = GridFunction(u0.grid_ptr(), std::move(u));
  return res;
}

EvolveResult evolve_renormalized(const GridFunction& w0, const Decomposer& dec, double s0, double s_end,
                                 const std::vector<double>& b0, const SolverOptions& opt, std::vector<int> m_set) {
  check_decomposer(dec);
  const auto& ctx = *dec.ctx;
  require_same_grid(w0, ctx.gs.Q);
  if (!(s_end > s0)) throw config_error("s_end must exceed s0");
  const int Le = dec.L_extract;
  const int N = Le + 1;
  const auto& phis = dec.phi->LmPhi;
  const std::size_t n = w0.size();

  EvolveResult res;
  res.traj.l = ctx.params.l;
  res.traj.gamma = ctx.params.gamma;
  res.traj.rtol = opt.tol;
  res.diag.m_set = std::move(m_set);

  // Bring w0 onto the constraint manifold; the rescaling is absorbed into lambda(s0).
  const auto dc0 = extract_decomposition(w0, dec, 1.0, b0);
  if (!dc0.converged) throw numerical_error("initial decomposition did not converge");
  std::vector<double> w = rescale_to(w0, dc0.lambda, ctx.grid).values();
  std::vector<double> b = dc0.b;
  double s = s0, t = 0.0, lnlam = std::log(dc0.lambda), mu = b.empty() ? 0.0 : -b[0];
  const double lambda0 = dc0.lambda;

  Stepper stepper(ctx.grid, Frame::renormalized, w0[n - 1]);

  // <Qtilde_b, L^i Phi> and its b-Jacobian.
  auto proj = [&](const std::vector<double>& bb) {
    const auto qt = profile_family(dec, bb);
    Eigen::VectorXd v(N);
    for (int i = 0; i < N; ++i) v[i] = weighted_inner(qt, phis[std::size_t(i)]);
    return v;
  };

  struct Sub {
    std::vector<double> w, b;
    double mu = 0.0;
    bool ok = false;
  };
  // One constrained step: unknowns mu and b solve <w + dA + mu dB - Qtilde_b, L^i Phi> = 0.
  auto sub_step = [&](const std::vector<double>& wn, const std::vector<double>& bn, double mu_star, double hh) {
    Sub out;
    const auto inc = stepper.step(wn, hh, mu_star);
    std::vector<double> wa(n);
    for (std::size_t i = 0; i < n; ++i) wa[i] = wn[i] + inc.dA[i];
    const GridFunction WA(ctx.grid, wa), DB(ctx.grid, inc.dB);
    Eigen::VectorXd a(N), c(N), scale(N);
    for (int i = 0; i < N; ++i) {
      a[i] = weighted_inner(WA, phis[std::size_t(i)]);
      c[i] = weighted_inner(DB, phis[std::size_t(i)]);
    }
    double m = mu_star;
    std::vector<double> bb = bn;
    Eigen::VectorXd P = proj(bb);
    auto res_of = [&](double mm, const Eigen::VectorXd& PP) { return Eigen::VectorXd(a + mm * c - PP); };
    Eigen::VectorXd r = res_of(m, P);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 30; ++it) {
      Eigen::MatrixXd J(N, N);
      J.col(0) = c;
      for (int k = 0; k < Le; ++k) {
        const double hs = 1e-6 * std::max(std::abs(bb[std::size_t(k)]), 1e-4);
        auto bp = bb, bm = bb;
        bp[std::size_t(k)] += hs;
        bm[std::size_t(k)] -= hs;
        J.col(k + 1) = -(proj(bp) - proj(bm)) / (2 * hs);
      }
      const Eigen::VectorXd dx = J.fullPivLu().solve(-r);
      if (!dx.allFinite()) return out;
      m += dx[0];
      for (int k = 0; k < Le; ++k) bb[std::size_t(k)] += dx[k + 1];
      P = proj(bb);
      r = res_of(m, P);
      double step = std::abs(dx[0]) / std::max(std::abs(m), 1e-300);
      for (int k = 0; k < Le; ++k) step = std::max(step, std::abs(dx[k + 1]) / std::max(std::abs(bb[std::size_t(k)]), 1e-300));
      if (step < 1e-13 || (step >= prev && step < 1e-9)) break;
      prev = step;
    }
    out.w.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.w[i] = wa[i] + m * inc.dB[i];
    out.b = bb;
    out.mu = m;
    out.ok = all_finite(out.w) && std::isfinite(m);
    return out;
  };

  auto record = [&](double step) {
    DiagnosticRecord rec;
    rec.s = s;
    rec.t = t;
    rec.lambda = std::exp(lnlam);
    rec.b = b;
    rec.mu = mu;
    rec.step = step;
    const GridFunction wf(ctx.grid, w);
    rec.grad_sup = grad_sup(wf) / rec.lambda;
    const auto q = wf - profile_family(dec, b);
    fill_constraints(rec, constraint_ratios(dec, q, wf));
    if (!res.diag.m_set.empty()) rec.E2m = diagnostics_q(q, ctx, res.diag.m_set).E2m;
    res.diag.records.push_back(rec);
    TrajectorySample smp;
    smp.s = s;
    smp.t = t;
    smp.lambda = rec.lambda;
    smp.b = b;
    res.traj.samples.push_back(std::move(smp));
  };
  auto snapshot = [&](std::size_t step) {
    if (!opt.on_snapshot || opt.snap_every == 0 || step % opt.snap_every != 0) return;
    const GridFunction wf(ctx.grid, w);
    const auto q = wf - profile_family(dec, b);
    opt.on_snapshot(Snapshot{step, s, t, std::exp(lnlam), &wf, &q});
  };
  record(0.0);
  snapshot(0);

  double h = opt.h0;
  std::size_t steps = 0;
  while (s < s_end) {
    if (steps >= opt.max_steps) {
      res.diag.status = "max-steps";
      break;
    }
    h = std::min({h, opt.h_max, s_end - s});
    const auto full = sub_step(w, b, mu, h);
    const auto half1 = sub_step(w, b, mu, 0.5 * h);
    Sub half2;
    if (half1.ok) half2 = sub_step(half1.w, half1.b, half1.mu, 0.5 * h);
    if (!full.ok || !half1.ok || !half2.ok) {
      res.diag.status = "newton-failure";
      res.traj.events.push_back(at_s("newton-failure", s));
      break;
    }
    const double lam_full = full.mu * h, lam_half = 0.5 * h * (half1.mu + half2.mu);
    const double err = std::max(max_abs_diff(full.w, half2.w), std::abs(lam_full - lam_half));
    if (err > opt.tol) {
      ++res.diag.rejected;
      h *= std::clamp(0.9 * std::sqrt(opt.tol / err), 0.1, 0.9);
      if (h < opt.h_min) {
        res.diag.status = "step-underflow";
        res.traj.events.push_back(at_s("step-underflow", s));
        break;
      }
      continue;
    }
    t += time_increment(std::exp(lnlam), half1.mu, 0.5 * h);
    lnlam += 0.5 * h * half1.mu;
    t += time_increment(std::exp(lnlam), half2.mu, 0.5 * h);
    lnlam += 0.5 * h * half2.mu;
    w = half2.w;
    b = half2.b;
    mu = half2.mu;
    s += h;
    ++steps;
    ++res.diag.accepted;
    const double used = h;
    h *= err > 0 ? std::clamp(0.9 * std::sqrt(opt.tol / err), 0.2, 4.0) : 4.0;
    snapshot(steps);
    if (steps % opt.record_every == 0 || s >= s_end) record(used);
    if (std::exp(lnlam) < opt.stop_ratio * lambda0) {
      if (steps % opt.record_every != 0 && s < s_end) record(used);
      res.diag.status = "stop-ratio";
      break;
    }
  }
  if (res.diag.status == "ok") res.diag.status = "s-end";
  summarize(res.diag);
  res.state = GridFunction(ctx.grid, std::move(w));
  return res;
}

}  // namespace ymflow
