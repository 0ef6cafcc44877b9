#pragma once

#include <cstddef>
#include <vector>

namespace ymflow {

// Clamped B-spline basis of degree p on [a, b] with m uniform intervals.
class BSplineBasis {
 public:
  BSplineBasis(double a, double b, int m, int p);

  int degree() const { return p_; }
  int size() const { return int(knots_.size()) - p_ - 1; }
  double a() const { return a_; }
  double b() const { return b_; }

  // Values (or derivatives of order `der`) of all basis functions at t; zero outside [a, b].
  std::vector<double> eval_all(double t, int der = 0) const;

  // Support of basis j.
  double support_lo(int j) const { return knots_[j]; }
  double support_hi(int j) const { return knots_[j + p_ + 1]; }

 private:
  double a_, b_;
  int p_;
  std::vector<double> knots_;
};

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);

}  // namespace ymflow
