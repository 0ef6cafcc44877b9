#include "ymflow/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "ymflow/error.hpp"
#include "ymflow/ode.hpp"

namespace ymflow {

std::vector<double> explicit_coefficients(const ModelParams& p) {
  const int l = p.l, L = std::max(p.L, p.l);
  const double g = p.gamma, den = 2.0 * l - g;
  std::vector<double> c(L, 0.0);
  c[0] = l / den;
  for (int k = 1; k < L; ++k) c[k] = -g * (l - k) / den * c[k - 1];
  return c;
}

ModulationSystem build_system(const ModelParams& p) {
  ModulationSystem sys;
  sys.params = p;
  sys.c = explicit_coefficients(p);
  const int l = p.l;
  const double g = p.gamma, den = 2.0 * l - g;
  auto& A = sys.A;
  A = Eigen::MatrixXd::Zero(l, l);
  for (int i = 1; i <= l; ++i) {
    A(i - 1, i - 1) += g * (l - i) / den;
    if (i < l) A(i - 1, i) = 1.0;
    A(i - 1, 0) += -(2.0 * i - g) * sys.c[i - 1];
  }
  sys.D.push_back(-1.0);
  for (int k = 2; k <= l; ++k) sys.D.push_back(k * g / den);

  Eigen::EigenSolver<Eigen::MatrixXd> es(A.transpose());
  if (es.info() != Eigen::Success) throw numerical_error("build_system: eigen-solve failed");
  const auto ev = es.eigenvalues();
  const auto vecs = es.eigenvectors();
  std::vector<bool> used(l, false);
  sys.P = Eigen::MatrixXd::Zero(l, l);
  sys.eig.assign(l, 0.0);
  for (int i = 0; i < l; ++i) {
    int best = -1;
    for (int j = 0; j < l; ++j)
      if (!used[j] && (best < 0 || std::abs(ev[j] - sys.D[i]) < std::abs(ev[best] - sys.D[i]))) best = j;
    used[best] = true;
    if (std::abs(ev[best].imag()) > 1e-8 * (1.0 + std::abs(ev[best]))) throw numerical_error("build_system: complex spectrum");
    sys.eig[i] = ev[best].real();
    Eigen::VectorXd v = vecs.col(best).real();
    v.normalize();
    for (int k = 0; k < l; ++k)
      if (std::abs(v[k]) > 1e-12) {
        if (v[k] < 0) v = -v;
        break;
      }
    sys.P.row(i) = v.transpose();
    sys.spectrum_defect = std::max(sys.spectrum_defect, std::abs(sys.eig[i] - sys.D[i]));
    sys.pair_defect = std::max(sys.pair_defect, (A.transpose() * v - sys.eig[i] * v).norm());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.P);
  const auto sv = svd.singularValues();
  sys.condition = sv[0] / sv[l - 1];
  if (!(sys.condition < 1e12)) throw numerical_error("build_system: A_l is numerically defective");
  return sys;
}

std::vector<double> explicit_b(const ModulationSystem& sys, double s) {
  std::vector<double> b(sys.c.size());
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = sys.c[k] * std::pow(s, -double(k + 1));
  return b;
}

Trajectory integrate(const ModulationSystem& sys, const std::vector<double>& b0, double lambda0, double s0, double s1,
                     const IntegrateOptions& opt) {
  const int L = int(b0.size());
  const double g = sys.params.gamma;
  if (L < 1) throw config_error("integrate: empty b");
  if (!(s0 >= 1.0) || !(s1 > s0)) throw config_error("integrate: need 1 <= s0 < s1");
  if (!(lambda0 > 0.0)) throw config_error("integrate: lambda0 must be positive");
  if (!(b0[0] > 0.0)) throw config_error("integrate: b_1(s0) must be positive");

  // State (b_1..b_L, ln lambda, t) in tau = ln s.
  auto rhs = [&](double tau, const std::vector<double>& y, std::vector<double>& dy) {
    const double s = std::exp(tau);
    for (int k = 1; k <= L; ++k) dy[k - 1] = s * ((k < L ? y[k] : 0.0) - (2.0 * k - g) * y[0] * y[k - 1]);
    dy[L] = -s * y[0];
    dy[L + 1] = s * std::exp(2.0 * y[L]);
  };
  Dopri5 ode(rhs, opt.rtol, opt.atol);
  std::vector<double> y(b0);
  y.push_back(std::log(lambda0));
  y.push_back(0.0);
  const double tau0 = std::log(s0), tau1 = std::log(s1);
  ode.reset(tau0, y, 1e-3);

  Trajectory tr;
  tr.l = sys.params.l;
  tr.gamma = g;
  tr.rtol = opt.rtol;
  tr.atol = opt.atol;
  auto record = [&](double tau) {
    const auto& z = ode.y();
    TrajectorySample smp;
    smp.s = tau == tau0 ? s0 : (tau == tau1 ? s1 : std::exp(tau));
    smp.b.assign(z.begin(), z.begin() + L);
    smp.lambda = std::exp(z[L]);
    smp.t = z[L + 1];
    tr.samples.push_back(std::move(smp));
  };
  bool exited = false;
  auto check_cone = [&](const TrajectorySample& smp) {
    if (exited) return;
    bool out = !(smp.b[0] > 0.0);
    for (int k = 2; k <= L && !out; ++k) out = std::abs(smp.b[k - 1]) > 10.0 * std::pow(std::abs(smp.b[0]), k);
    if (!out) return;
    std::ostringstream os;
    os.precision(17);
    os << "cone-exit s=" << smp.s;
    tr.events.push_back(os.str());
    exited = true;
  };
  record(tau0);
  check_cone(tr.samples.back());
  const int nsteps = std::max(1, int(std::ceil((tau1 - tau0) / std::log(10.0) * opt.samples_per_decade)));
  for (int i = 1; i <= nsteps; ++i) {
    const double tau = i == nsteps ? tau1 : tau0 + (tau1 - tau0) * i / nsteps;
    try {
      ode.advance_to(tau);
    } catch (const Error& e) {
      std::ostringstream os;
      os.precision(17);
      os << "integration-stopped s=" << std::exp(ode.x()) << ": " << e.what();
      tr.events.push_back(os.str());
      break;
    }
    record(tau);
    const auto& smp = tr.samples.back();
    check_cone(smp);
    if (smp.lambda < 1e-280) {
      std::ostringstream os;
      os.precision(17);
      os << "lambda-underflow s=" << smp.s;
      tr.events.push_back(os.str());
      break;
    }
  }
  return tr;
}

namespace {

struct LineFit {
  double a = 0, b = 0, se = 0;
};

// y = a + b x
LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
  LineFit f;
  f.b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.a = (sy - f.b * sx) / n;
  double r = 0;
  for (std::size_t i = 0; i < x.size(); ++i) r += std::pow(y[i] - f.a - f.b * x[i], 2);
  f.se = x.size() > 2 ? std::sqrt(r / (n - 2)) : 0.0;
  return f;
}

}  // namespace

RateFit fit_blowup_rate(const std::vector<double>& t, const std::vector<double>& lambda, double p0,
                        const FitOptions& opt) {
  if (t.size() != lambda.size() || t.size() < 4) throw config_error("fit_blowup_rate: need >= 4 samples");
  // Past the last sample where t still resolves, the remaining time is below round-off.
  std::size_t n = 1;
  while (n < t.size() && t[n] > t[n - 1]) ++n;
  if (n < 4) throw numerical_error("fit_blowup_rate: t is not increasing");
  for (std::size_t i = 1; i < n; ++i)
    if (!(lambda[i] < lambda[i - 1])) throw numerical_error("fit_blowup_rate: lambda is not monotone decreasing");
  if (lambda[n - 1] > 1e-2 * lambda.front())
    throw numerical_error("fit_blowup_rate: insufficient decay (lambda must drop by 1e2)");
  std::vector<double> tw, lw;
  for (std::size_t i = 0; i < n; ++i)
    if (lambda[i] <= opt.hi * lambda.front() && lambda[i] >= opt.lo * lambda.front()) {
      tw.push_back(t[i]);
      lw.push_back(lambda[i]);
    }
  if (tw.size() < 4) throw config_error("fit_blowup_rate: fit window holds fewer than 4 samples");

  RateFit out;
  // T from lambda^{1/p} linear in t; then the log-log slope.
  auto slope_for = [&](double p, RateFit& r) {
    std::vector<double> z(lw.size());
    for (std::size_t i = 0; i < lw.size(); ++i) z[i] = std::pow(lw[i] / lw.front(), 1.0 / p);
    const auto lf = line_fit(tw, z);
    r.T = -lf.a / lf.b;
    r.c_u = -lf.b * std::pow(lw.front(), 1.0 / p);
    std::vector<double> x, y;
    const double floor = 1e-9 * std::max(std::abs(r.T), tw.back() - tw.front());
    for (std::size_t i = 0; i < tw.size(); ++i)
      if (r.T - tw[i] > floor) {
        x.push_back(std::log(r.T - tw[i]));
        y.push_back(std::log(lw[i]));
      }
    if (x.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    const auto ll = line_fit(x, y);
    r.exponent = ll.b;
    r.prefactor = std::exp(ll.a);
    r.residual_se = ll.se;
    r.used = x.size();
    return ll.b;
  };
  auto g = [&](double p) {
    RateFit r;
    const double q = slope_for(p, r);
    return std::isfinite(q) ? q - p : std::numeric_limits<double>::quiet_NaN();
  };
  // Every self-consistent exponent on a log grid around p0; keep the straightest log-log fit.
  std::vector<double> grid;
  for (int i = -60; i <= 60; ++i) grid.push_back(p0 * std::pow(64.0, i / 60.0));
  std::vector<double> gv(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) gv[i] = g(grid[i]);
  bool found = false;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (!std::isfinite(gv[i]) || !std::isfinite(gv[i + 1]) || gv[i] * gv[i + 1] > 0) continue;
    std::uintmax_t iters = 200;
    const auto root = gv[i] == 0 ? std::make_pair(grid[i], grid[i])
                                 : boost::math::tools::toms748_solve(g, grid[i], grid[i + 1], gv[i], gv[i + 1],
                                                                     boost::math::tools::eps_tolerance<double>(50), iters);
    RateFit r;
    if (!std::isfinite(slope_for(0.5 * (root.first + root.second), r))) continue;
    r.iterations = int(iters);
    if (!found || r.residual_se < out.residual_se) out = r;
    found = true;
  }
  if (!found) throw numerical_error("fit_blowup_rate: no self-consistent exponent near the seed");
  return out;
}

RateFit fit_blowup_rate(const Trajectory& traj, const FitOptions& opt) {
  std::vector<double> t, lam;
  for (const auto& s : traj.samples) {
    t.push_back(s.t);
    lam.push_back(s.lambda);
  }
  return fit_blowup_rate(t, lam, traj.l / traj.gamma, opt);
}

LinearCoordinates linearized_coordinates(const ModulationSystem& sys, const std::vector<double>& b, double s) {
  const int l = sys.params.l;
  if (int(b.size()) < l) throw config_error("linearized_coordinates: need at least l values of b");
  LinearCoordinates out;
  Eigen::VectorXd U(l);
  for (int k = 1; k <= l; ++k) {
    const double sk = std::pow(s, k);
    U[k - 1] = sk * b[k - 1] - sys.c[k - 1];
  }
  const Eigen::VectorXd V = sys.P * U;
  out.U.assign(U.data(), U.data() + l);
  out.V.assign(V.data(), V.data() + l);
  return out;
}

}  // namespace ymflow
