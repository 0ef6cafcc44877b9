#include "ymflow/params.hpp"

#include <cmath>
#include <string>

#include "ymflow/error.hpp"

namespace ymflow {

double gamma_of(int d) {
  const double disc = double(d - 6) * double(d - 6) - 12.0;
  if (disc < 0.0) throw config_error("d must exceed 10 (gamma is complex)");
  return 0.5 * (double(d - 4) - std::sqrt(disc));
}

double ModelParams::B0(double b1) const { return 1.0 / std::sqrt(b1); }

double ModelParams::B1(double b1) const { return std::pow(b1, -0.5 * (1.0 + eta)); }

ModelParams derive_params(int d, int l, int L, double eta, double M, double bstar) {
  if (d <= 10) throw config_error("d must exceed 10 (got d=" + std::to_string(d) + ")");
  if (l < 1) throw config_error("l must be >= 1");
  if (L < l) throw config_error("L must be >= l");
  if (!(eta > 0.0 && eta <= 0.1)) throw config_error("eta must lie in (0, 0.1]");
  if (!(M >= 1.0)) throw config_error("M must be >= 1");
  if (!(bstar > 0.0)) throw config_error("bstar must be positive");

  ModelParams p;
  p.d = d;
  p.l = l;
  p.L = L;
  p.eta = eta;
  p.M = M;
  p.bstar = bstar;
  p.gamma = gamma_of(d);
  const double half = 0.5 * (0.5 * double(d - 2) - p.gamma);
  p.hbar = int(std::floor(half));
  p.delta = half - p.hbar;
  p.bbk = L + p.hbar + 1;

  if (!(p.gamma > 1.0 && p.gamma < 2.0)) throw config_error("gamma outside (1,2); d must exceed 10");
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw config_error("delta outside (0,1) for d=" + std::to_string(d));
  if (!(2.0 * l > p.gamma)) throw config_error("blow-up index too small: need 2l > gamma");
  return p;
}

}  // namespace ymflow
