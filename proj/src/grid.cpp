#include "ymflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ymflow/error.hpp"

namespace ymflow {

namespace {

// Fornberg's recursion: weights c[k][j] of the k-th derivative at x0.
std::vector<std::vector<double>> fornberg(double x0, const std::vector<double>& x, int m) {
  const int n = int(x.size());
  std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Weights of int_0^1 of the Lagrange interpolant through integer offsets.
std::vector<double> interval_weights(const std::vector<int>& off) {
  const int n = int(off.size());
  std::vector<long double> a(n * n), b(n);
  for (int p = 0; p < n; ++p) {
    for (int j = 0; j < n; ++j) a[p * n + j] = std::pow((long double)off[j], p);
    b[p] = 1.0L / (p + 1);
  }
  // Gaussian elimination with partial pivoting.
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    for (int k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
    std::swap(b[c], b[piv]);
    for (int r = c + 1; r < n; ++r) {
      const long double m = a[r * n + c] / a[c * n + c];
      for (int k = c; k < n; ++k) a[r * n + k] -= m * a[c * n + k];
      b[r] -= m * b[c];
    }
  }
  std::vector<long double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    long double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= a[r * n + k] * x[k];
    x[r] = s / a[r * n + r];
  }
  return std::vector<double>(x.begin(), x.end());
}

// Gregory coefficients for the trapezoid end corrections.
constexpr double kGregory[] = {1.0 / 12,         1.0 / 24,           19.0 / 720,           3.0 / 160,
                               863.0 / 60480,    275.0 / 24192,      33953.0 / 3628800,    8183.0 / 1036800,
                               3250433.0 / 479001600};

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Left-end correction weights (units of h) using K difference terms.
std::vector<double> gregory_left(int K) {
  std::vector<double> c(K + 1, 0.0);
  for (int k = 1; k <= K; ++k) {
    const double g = ((k % 2) ? 1.0 : -1.0) * kGregory[k - 1];
    for (int j = 0; j <= k; ++j) c[j] += g * (((k - j) % 2) ? -1.0 : 1.0) * binom(k, j);
  }
  return c;
}

// Mapping ln y = G(xi).
struct Mapping {
  double kappa, w;
  double uprime(double xi) const {
    if (xi <= 0.0) return 1.0;
    return 1.0 / (1.0 + kappa * xi * smoothstep(xi / w));
  }
  double uprime2(double xi) const {
    if (xi <= 0.0) return 0.0;
    const double up = uprime(xi);
    return -kappa * (smoothstep(xi / w) + (xi / w) * smoothstep_deriv(xi / w)) * up * up;
  }
  double G(double xi) const {
    if (xi <= 0.0) return xi;
    static const auto rule = [] {
      std::pair<std::vector<double>, std::vector<double>> r;
      gauss_legendre(20, r.first, r.second);
      return r;
    }();
    const auto& [gx, gw] = rule;
    auto quad = [&](double a, double b) {
      const int panels = 8;
      double s = 0.0;
      const double hp = (b - a) / panels;
      for (int p = 0; p < panels; ++p) {
        const double lo = a + p * hp;
        for (std::size_t k = 0; k < gx.size(); ++k) s += gw[k] * uprime(lo + 0.5 * hp * (gx[k] + 1.0));
      }
      return 0.5 * hp * s;
    };
    if (xi <= w) return quad(0.0, xi);
    const double gw0 = quad(0.0, w);
    if (kappa == 0.0) return gw0 + (xi - w);
    return gw0 + std::log1p(kappa * (xi - w) / (1.0 + kappa * w)) / kappa;
  }
  double Ginv(double target) const {
    if (target <= 0.0) return target;
    double lo = 0.0, hi = std::max(1.0, 2.0 * target);
    while (G(hi) < target) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (G(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

}  // namespace

double smoothstep(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = x < 1.0 / 700.0 ? 0.0 : std::exp(-1.0 / x);
  const double b = (1.0 - x) < 1.0 / 700.0 ? 0.0 : std::exp(-1.0 / (1.0 - x));
  return a / (a + b);
}

double smoothstep_deriv(double x) {
  if (x <= 1.0 / 700.0 || x >= 1.0 - 1.0 / 700.0) return 0.0;
  const double a = std::exp(-1.0 / x), b = std::exp(-1.0 / (1.0 - x));
  const double da = a / (x * x), db = -b / ((1.0 - x) * (1.0 - x));
  return (da * b - a * db) / ((a + b) * (a + b));
}

double smoothstep_deriv2(double x) {
  if (x <= 1.0 / 700.0 || x >= 1.0 - 1.0 / 700.0) return 0.0;
  const double s = smoothstep(x), q = 1.0 - x;
  const double p1 = -1.0 / (x * x) - 1.0 / (q * q);
  const double p2 = 2.0 / (x * x * x) - 2.0 / (q * q * q);
  return s * (1.0 - s) * ((1.0 - 2.0 * s) * p1 * p1 - p2);
}

RadialGrid::RadialGrid(double y_min, double y_max, std::size_t n, int d, const Grading& grading)
    : d_(d), grading_(grading) {
  if (!(y_min > 0.0) || !(y_min <= 1.0) || !(y_max > 1.0))
    throw config_error("grid requires 0 < y_min <= 1 < y_max");
  if (grading.fd_order != 4 && grading.fd_order != 6) throw config_error("fd_order must be 4 or 6");
  if (grading.end_corrections < 1 || grading.end_corrections > 9)
    throw config_error("end_corrections must be in 1..9");
  if (!(grading.far_exponent > 0.0 && grading.far_exponent <= 1.5))
    throw config_error("far_exponent must be in (0, 1.5]");
  if (n < 100) throw domain_error("insufficient resolution: n must be >= 100");

  const double kappa0 = 1.0 - grading.far_exponent;
  Mapping map{kappa0, grading.blend};
  const double a = -std::log(y_min);
  const double ly = std::log(y_max);
  const double c0 = map.Ginv(ly);
  std::size_t i1 = 0;
  double h = 0.0;
  if (a > 0.0) {
    const double h0 = (a + c0) / double(n - 1);
    i1 = std::size_t(std::llround(a / h0));
    if (i1 < 20) throw domain_error("insufficient resolution: fewer than 20 nodes on [y_min, 1]");
    if (i1 > n - 21) throw domain_error("insufficient resolution: fewer than 20 nodes on [1, y_max]");
    h = a / double(i1);
    // Tune kappa so that the last node lands on y_max.
    const double xi_end = double(n - 1 - i1) * h;
    double lo = -0.9 / xi_end, hi = 50.0;
    auto g_at = [&](double k) { return Mapping{k, grading.blend}.G(xi_end); };
    if (g_at(lo) < ly || g_at(hi) > ly) throw domain_error("cannot place mesh end at y_max with this grading");
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g_at(mid) > ly ? lo : hi) = mid;
    }
    map.kappa = 0.5 * (lo + hi);
  } else {
    h = c0 / double(n - 1);
  }
  h_ = h;
  kappa_ = map.kappa;
  i_one_ = i1;

  xi_.resize(n);
  y_.resize(n);
  up_.resize(n);
  upp_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    xi_[i] = (double(i) - double(i1)) * h;
    y_[i] = std::exp(map.G(xi_[i]));
    up_[i] = map.uprime(xi_[i]);
    upp_[i] = map.uprime2(xi_[i]);
  }
  y_[0] = y_min;
  y_[i1] = 1.0;
  y_[n - 1] = y_max;
  for (std::size_t i = 1; i < n; ++i)
    if (!(y_[i] > y_[i - 1])) throw domain_error("mesh nodes not strictly increasing");

  build_stencils();
  build_quadrature();
}

void RadialGrid::build_stencils() {
  const std::size_t n = size();
  const int q = grading_.fd_order / 2;
  const std::size_t wide = std::size_t(grading_.fd_order + 2);
  st_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stencil s;
    std::size_t width;
    if (i >= std::size_t(q) && i + q < n) {
      s.start = i - q;
      width = 2 * q + 1;
    } else {
      width = wide;
      s.start = i < std::size_t(q) ? 0 : n - wide;
    }
    std::vector<double> off(width);
    for (std::size_t j = 0; j < width; ++j) off[j] = double(s.start + j) - double(i);
    const auto c = fornberg(0.0, off, 2);
    s.w1 = c[1];
    s.w2 = c[2];
    st_[i] = std::move(s);
  }
  // Interval weights for cumulative integrals, keyed by stencil shift.
  interval_w_.assign(5, {});
  for (int shift = -4; shift <= 0; ++shift) {
    std::vector<int> off(6);
    for (int j = 0; j < 6; ++j) off[j] = shift + j;
    interval_w_[shift + 4] = interval_weights(off);
  }
}

void RadialGrid::build_quadrature() {
  const std::size_t n = size();
  greg_ = gregory_left(grading_.end_corrections);
  const std::size_t K = std::min<std::size_t>(greg_.size() - 1, (n - 1) / 2 - 1);
  const auto c = gregory_left(int(K));
  qw_.assign(n, h_);
  qw_[0] *= 0.5;
  qw_[n - 1] *= 0.5;
  for (std::size_t j = 0; j < c.size(); ++j) {
    qw_[j] += c[j] * h_;
    qw_[n - 1 - j] += c[j] * h_;
  }
  for (std::size_t i = 0; i < n; ++i) qw_[i] *= std::pow(y_[i], d_ - 2) * up_[i];
}

std::vector<double> RadialGrid::d_xi(std::span<const double> f) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const Stencil& s = st_[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < s.w1.size(); ++j) acc += s.w1[j] * (f[s.start + j] - f[i]);
    out[i] = acc / h_;
  }
  return out;
}

std::vector<double> RadialGrid::d2_xi(std::span<const double> f) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const Stencil& s = st_[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < s.w2.size(); ++j) acc += s.w2[j] * (f[s.start + j] - f[i]);
    out[i] = acc / (h_ * h_);
  }
  return out;
}

std::vector<double> RadialGrid::lambda(std::span<const double> f) const {
  auto out = d_xi(f);
  for (std::size_t i = 0; i < size(); ++i) out[i] /= up_[i];
  return out;
}

std::vector<double> RadialGrid::lambda2(std::span<const double> f) const {
  const auto f1 = d_xi(f);
  auto out = d2_xi(f);
  for (std::size_t i = 0; i < size(); ++i) {
    const double u = up_[i];
    out[i] = out[i] / (u * u) - upp_[i] / (u * u * u) * f1[i];
  }
  return out;
}

double RadialGrid::integrate(std::span<const double> f, std::size_t i0, std::size_t i1) const {
  if (i1 <= i0) return 0.0;
  const std::size_t m = i1 - i0;
  auto base = [&](std::size_t i) { return f[i] * std::pow(y_[i], d_ - 2) * up_[i] * h_; };
  double s = 0.0;
  for (std::size_t i = i0; i <= i1; ++i) s += base(i);
  s -= 0.5 * (base(i0) + base(i1));
  if (m >= 4) {
    const std::size_t K = std::min<std::size_t>(greg_.size() - 1, m / 2 - 1);
    const auto c = K + 1 == greg_.size() ? greg_ : gregory_left(int(K));
    for (std::size_t j = 0; j < c.size(); ++j) s += c[j] * (base(i0 + j) + base(i1 - j));
  }
  return s;
}

std::size_t RadialGrid::index_below(double Y) const {
  auto it = std::upper_bound(y_.begin(), y_.end(), Y);
  if (it == y_.begin()) return 0;
  return std::size_t(it - y_.begin()) - 1;
}

std::vector<double> RadialGrid::cumulative(std::span<const double> F, std::size_t anchor) const {
  const std::size_t n = size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = F[i] * jac(i);
  auto interval = [&](std::size_t i) {  // int over [xi_i, xi_{i+1}]
    const std::size_t s = std::min<std::size_t>(i >= 2 ? i - 2 : 0, n - 6);
    const int shift = int(s) - int(i);
    const auto& w = interval_w_[shift + 4];
    double acc = 0.0;
    for (int j = 0; j < 6; ++j) acc += w[j] * g[s + j];
    return acc * h_;
  };
  // Neumaier-compensated running sums.
  std::vector<double> c(n, 0.0);
  double sum = 0.0, comp = 0.0;
  auto add = [&](double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
    return sum + comp;
  };
  for (std::size_t i = anchor + 1; i < n; ++i) c[i] = add(interval(i - 1));
  sum = comp = 0.0;
  for (std::size_t i = anchor; i-- > 0;) c[i] = add(-interval(i));
  return c;
}

double RadialGrid::interpolate(std::span<const double> f, double y) const {
  const std::size_t n = size();
  if (!(y >= y_.front() && y <= y_.back())) throw domain_error("interpolation point outside the mesh");
  std::size_t k = index_below(y);
  if (k >= n - 1) k = n - 2;
  const std::size_t s = std::min<std::size_t>(k >= 2 ? k - 2 : 0, n - 6);
  const double x = std::log(y);
  double acc = 0.0;
  for (std::size_t j = 0; j < 6; ++j) {
    double l = 1.0;
    const double xj = std::log(y_[s + j]);
    for (std::size_t m = 0; m < 6; ++m)
      if (m != j) l *= (x - std::log(y_[s + m])) / (xj - std::log(y_[s + m]));
    acc += l * f[s + j];
  }
  return acc;
}

std::string RadialGrid::descriptor() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "mapped-log n=%zu y_min=%.6g y_max=%.6g h=%.6g kappa=%.6g far_exponent=%.3g blend=%.3g fd_order=%d d=%d",
                size(), y_min(), y_max(), h_, kappa_, grading_.far_exponent, grading_.blend, grading_.fd_order, d_);
  return buf;
}

GridPtr build_grid(double y_min, double y_max, std::size_t n, int d, const Grading& grading) {
  return std::make_shared<const RadialGrid>(y_min, y_max, n, d, grading);
}

// ---------------------------------------------------------------------------

GridFunction::GridFunction(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), v_(std::move(values)) {
  if (!grid_) throw config_error("grid function without grid");
  if (v_.size() != grid_->size()) throw config_error("grid function size mismatch");
}

GridFunction GridFunction::zeros(GridPtr grid) {
  const std::size_t n = grid->size();
  return GridFunction(std::move(grid), std::vector<double>(n, 0.0));
}

GridFunction GridFunction::sample(GridPtr grid, const std::function<double(double)>& fn) {
  std::vector<double> v(grid->size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(grid->y(i));
  return GridFunction(std::move(grid), std::move(v));
}

bool GridFunction::finite() const {
  return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
}

void require_same_grid(const GridFunction& a, const GridFunction& b) {
  if (a.grid_ptr() != b.grid_ptr()) throw config_error("grid mismatch");
}

GridFunction& GridFunction::operator+=(const GridFunction& o) {
  require_same_grid(*this, o);
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o) {
  require_same_grid(*this, o);
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}

GridFunction& GridFunction::operator*=(const GridFunction& o) {
  require_same_grid(*this, o);
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] *= o.v_[i];
  return *this;
}

GridFunction& GridFunction::operator*=(double a) {
  for (double& x : v_) x *= a;
  return *this;
}

GridFunction& GridFunction::axpy(double a, const GridFunction& x) {
  require_same_grid(*this, x);
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += a * x.v_[i];
  return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(GridFunction a, const GridFunction& b) { return a *= b; }
GridFunction operator*(double s, GridFunction a) { return a *= s; }
GridFunction operator-(GridFunction a) { return a *= -1.0; }

GridFunction map(const GridFunction& u, const std::function<double(double, double)>& fn) {
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(u.grid().y(i), u[i]);
  return GridFunction(u.grid_ptr(), std::move(v));
}

double weighted_inner(const GridFunction& f, const GridFunction& g) {
  require_same_grid(f, g);
  const auto& w = f.grid().quad_weights();
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * f[i] * g[i];
  return s;
}

double weighted_norm(const GridFunction& f) { return std::sqrt(std::max(0.0, weighted_inner(f, f))); }

double weighted_norm_below(const GridFunction& f, double Y) {
  std::vector<double> sq(f.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = f[i] * f[i];
  return std::sqrt(std::max(0.0, f.grid().integrate(sq, 0, f.grid().index_below(Y))));
}

GridFunction cutoff(GridPtr grid, double scale) {
  if (!(scale > 0.0)) throw config_error("cutoff scale must be positive");
  return GridFunction::sample(std::move(grid), [scale](double y) { return chi(y / scale); });
}

PowerFit fit_power_law(const GridFunction& f, double y_lo, double y_hi) {
  const auto& g = f.grid();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double y = g.y(i);
    if (y < y_lo || y > y_hi) continue;
    if (!(f[i] != 0.0) || !std::isfinite(f[i])) throw numerical_error("power-law fit: zero or non-finite value in window");
    const double x = std::log(y), v = std::log(std::abs(f[i]));
    pts.emplace_back(x, v);
    sx += x;
    sy += v;
    sxx += x * x;
    sxy += x * v;
    ++m;
  }
  if (m < 3) throw numerical_error("power-law fit: fewer than 3 nodes in window");
  const double mx = sx / m, my = sy / m;
  double cxx = 0, cxy = 0;
  for (auto [x, v] : pts) {
    cxx += (x - mx) * (x - mx);
    cxy += (x - mx) * (v - my);
  }
  PowerFit r;
  r.exponent = cxy / cxx;
  const double icpt = my - r.exponent * mx;
  r.amplitude = std::exp(icpt);
  double rss = 0;
  for (auto [x, v] : pts) rss += std::pow(v - icpt - r.exponent * x, 2);
  r.residual_se = std::sqrt(rss / double(m > 2 ? m - 2 : 1));
  return r;
}

double origin_slope(const GridFunction& f) {
  const double y0 = f.grid().y_min();
  return fit_power_law(f, y0, 10.0 * y0).exponent;
}

double tail_slope(const GridFunction& f) {
  const double y1 = f.grid().y_max();
  return fit_power_law(f, 0.1 * y1, y1).exponent;
}

bool orders_consistent(const GridFunction& f, double tol) {
  if (f.origin_order) {
    const double want = 2.0 * *f.origin_order + 2.0;
    if (std::abs(origin_slope(f) - want) > tol * std::abs(want)) return false;
  }
  if (f.tail_order) {
    const double want = *f.tail_order;
    if (std::abs(tail_slope(f) - want) > tol * std::max(std::abs(want), 1.0)) return false;
  }
  return true;
}

}  // namespace ymflow
