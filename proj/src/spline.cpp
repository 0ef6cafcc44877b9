#include "ymflow/spline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ymflow/error.hpp"

namespace ymflow {

BSplineBasis::BSplineBasis(double a, double b, int m, int p) : a_(a), b_(b), p_(p) {
  if (!(b > a) || m < 1 || p < 0) throw config_error("BSplineBasis: invalid interval, interval count or degree");
  for (int i = 0; i < p; ++i) knots_.push_back(a);
  for (int i = 0; i <= m; ++i) knots_.push_back(a + (b - a) * i / m);
  knots_.back() = b;
  for (int i = 0; i < p; ++i) knots_.push_back(b);
}

std::vector<double> BSplineBasis::eval_all(double t, int der) const {
  const int nb = size();
  std::vector<double> out(nb, 0.0);
  if (t < a_ || t > b_ || der > p_) return out;
  // span index s with knots_[s] <= t < knots_[s+1]
  int s = int(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin()) - 1;
  s = std::clamp(s, p_, nb - 1);
  // Piegl-Tiller: nonzero basis functions and derivatives on the span.
  const int p = p_;
  std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1));
  std::vector<double> left(p + 1), right(p + 1);
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - knots_[s + 1 - j];
    right[j] = knots_[s + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double tmp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    ndu[j][j] = saved;
  }
  if (der == 0) {
    for (int j = 0; j <= p; ++j) out[s - p + j] = ndu[j][p];
    return out;
  }
  std::vector<std::vector<double>> a(2, std::vector<double>(p + 1));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0].assign(p + 1, 0.0);
    a[0][0] = 1.0;
    double dv = 0.0;
    for (int k = 1; k <= der; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      a[s2].assign(p + 1, 0.0);
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      dv = d;
      std::swap(s1, s2);
    }
    double fac = 1.0;
    for (int k = p; k > p - der; --k) fac *= k;
    out[s - p + r] = dv * fac;
  }
  return out;
}

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5)), pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
}

}  // namespace ymflow
