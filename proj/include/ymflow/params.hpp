#pragma once

namespace ymflow {

// Model constants for dimension d. B0 and B1 are derived from b1 on demand.
struct ModelParams {
  int d = 11;
  double gamma = 0.0;
  int hbar = 0;
  double delta = 0.0;
  int l = 1;
  int L = 4;
  int bbk = 0;  // L + hbar + 1
  double eta = 0.01;
  double M = 20.0;
  double bstar = 0.1;

  double B0(double b1) const;
  double B1(double b1) const;
};

// gamma = (d - 4 - sqrt((d-6)^2 - 12)) / 2
double gamma_of(int d);

ModelParams derive_params(int d, int l, int L, double eta, double M, double bstar = 0.1);

// f(u) = u(1-u)(2-u) and its derivatives.
inline double f(double u) { return u * (1.0 - u) * (2.0 - u); }
inline double fp(double u) { return 2.0 - 6.0 * u + 3.0 * u * u; }
inline double fpp(double u) { return -6.0 + 6.0 * u; }
inline double fppp(double) { return 6.0; }

}  // namespace ymflow
