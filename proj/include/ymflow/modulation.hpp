#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ymflow/params.hpp"

namespace ymflow {

struct ModulationSystem {
  ModelParams params;
  std::vector<double> c;  // c_1 .. c_L, zero past l
  Eigen::MatrixXd A;      // l x l
  std::vector<double> D;  // predicted spectrum, in listing order
  std::vector<double> eig;  // computed eigenvalues matched to D
  Eigen::MatrixXd P;        // rows: left eigenvectors, V = P U
  double spectrum_defect = 0.0;  // max |eig_i - D_i|
  double pair_defect = 0.0;      // max ||A^T p - mu p|| / ||p||
  double condition = 0.0;        // cond(P)
};

// b^e coefficients: c_1 = l/(2l - gamma), c_{k+1} = -gamma (l-k)/(2l-gamma) c_k.
std::vector<double> explicit_coefficients(const ModelParams& p);
ModulationSystem build_system(const ModelParams& p);

// b_k^e(s) = c_k s^{-k}
std::vector<double> explicit_b(const ModulationSystem& sys, double s);

struct TrajectorySample {
  double s = 0.0, t = 0.0, lambda = 0.0;
  std::vector<double> b;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  int l = 1;
  double gamma = 0.0;
  double rtol = 0.0, atol = 0.0;
  std::vector<std::string> events;  // "cone-exit s=...", "lambda-underflow s=..."
};

struct IntegrateOptions {
  double rtol = 1e-13;
  double atol = 1e-300;
  int samples_per_decade = 100;
};

// (b_k)_s = b_{k+1} - (2k - gamma) b_1 b_k with b_{L+1} = 0, lambda_s = -b_1 lambda, dt = lambda^2 ds.
Trajectory integrate(const ModulationSystem& sys, const std::vector<double>& b0, double lambda0, double s0, double s1,
                     const IntegrateOptions& opt = {});

struct RateFit {
  double T = 0.0;
  double exponent = 0.0;
  double c_u = 0.0;       // lambda^{1/exponent} ~ c_u (T - t)
  double prefactor = 0.0;  // lambda ~ prefactor (T - t)^exponent
  double residual_se = 0.0;
  std::size_t used = 0;
  int iterations = 0;
};

struct FitOptions {
  // Fit window in units of lambda(0): lambda in [lo, hi] * lambda_0.
  double hi = 1.0;
  double lo = 0.0;
};

// Finds T from the linear decay of lambda^{1/p} in t, then p from log lambda vs log(T - t), self-consistently.
RateFit fit_blowup_rate(const Trajectory& traj, const FitOptions& opt = {});
// Same on raw (t, lambda) columns; p0 seeds the search.
RateFit fit_blowup_rate(const std::vector<double>& t, const std::vector<double>& lambda, double p0,
                        const FitOptions& opt = {});

struct LinearCoordinates {
  std::vector<double> U, V;
};

// U_k = s^k (b_k - b_k^e(s)), V = P U, k <= l.
LinearCoordinates linearized_coordinates(const ModulationSystem& sys, const std::vector<double>& b, double s);

}  // namespace ymflow
