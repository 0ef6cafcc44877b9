#include "ymflow/samples.hpp"

#include <cmath>
#include <vector>

#include "ymflow/error.hpp"

namespace ymflow {

double bump(double t) {
  const double s = 1.0 - t * t;
  if (s <= 0.0) return 0.0;
  const double e = -1.0 / s;
  return e < -700.0 ? 0.0 : std::exp(e);
}

GridFunction random_bump_sum(GridPtr grid, std::mt19937_64& rng, double y_lo, double y_hi, int terms) {
  if (!(y_lo > 0.0 && y_hi > y_lo)) throw config_error("random_bump_sum: empty support");
  const double a = std::log(y_lo), b = std::log(y_hi);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  struct Term { double c, m, w; };
  std::vector<Term> t(terms);
  for (auto& x : t) {
    const double w = std::min(0.5 * (b - a), 1.5 + 1.5 * U(rng));
    x.w = w;
    x.m = a + w + (b - a - 2 * w) * U(rng);
    x.c = 2.0 * U(rng) - 1.0;
  }
  return GridFunction::sample(grid, [&](double y) {
    const double ly = std::log(y);
    double s = 0.0;
    for (const auto& x : t) s += x.c * bump((ly - x.m) / x.w);
    return s;
  });
}

}  // namespace ymflow
