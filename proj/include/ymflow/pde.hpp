#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ymflow/modulation.hpp"
#include "ymflow/profiles.hpp"
#include "ymflow/spectral.hpp"

namespace ymflow {

enum class Frame { physical, renormalized };

struct Snapshot {
  std::size_t step = 0;
  double s = 0.0, t = 0.0, lambda = 1.0;
  const GridFunction* field = nullptr;  // u (physical) or w (renormalized)
  const GridFunction* q = nullptr;      // null when no decomposition is available
};

struct SolverOptions {
  double tol = 1e-7;  // step-doubling local error bound, max norm on the field
  double h0 = 1e-3;
  double h_min = 1e-12;
  double h_max = 1e300;
  std::size_t max_steps = 200000;
  std::size_t record_every = 1;
  // Stop once lambda < stop_ratio * lambda(0).
  double stop_ratio = 1e-3;
  // Called at step 0 and every snap_every accepted steps (0: never).
  std::size_t snap_every = 0;
  std::function<void(const Snapshot&)> on_snapshot;
};

// Everything the decomposition u = (Qtilde_b + q)(r / lambda) needs.
struct Decomposer {
  const OperatorContext* ctx = nullptr;
  const ApproximateProfile* prof = nullptr;
  const PhiM* phi = nullptr;
  int L_extract = 1;
  double eta = 0.01;
};

// Q + chi_{B_1} Theta_b on the context grid, for any real b_1 (B_1 from |b_1|, no cone check).
GridFunction profile_family(const Decomposer& dec, const std::vector<double>& b);

struct Decomposition {
  double lambda = 1.0;
  std::vector<double> b;          // b_1 .. b_{L_extract}
  GridFunction q;                 // on the context grid
  std::vector<double> residuals;  // |<q, L^i Phi_M>| / (||q|| ||L^i Phi_M||), i = 0..L_extract
  std::vector<double> local;      // same with ||q|| on y <= 2M
  std::vector<double> absolute;   // same with ||u(lambda .)|| on y <= 2M
  int iterations = 0;
  bool converged = false;
};

// u(r) sampled at r = lambda y: interpolation inside the r-grid, c r^2 below it, constant above it.
GridFunction rescale_to(const GridFunction& u, double lambda, GridPtr target);

// Damped Newton with a finite-difference Jacobian in (lambda, b_1..b_{L_extract}).
Decomposition extract_decomposition(const GridFunction& u, const Decomposer& dec, double lambda_guess,
                                    const std::vector<double>& b_guess, double tol = 1e-12, int max_iter = 40);

struct DiagnosticRecord {
  double s = 0.0, t = 0.0, lambda = 1.0;
  std::vector<double> b;
  double mu = 0.0;          // lambda_s / lambda
  double energy = 0.0;      // physical frame only
  double dissipated = 0.0;  // int_0^t int u_t^2 r^{d-3} dr dt (physical frame)
  double grad_sup = 0.0;    // sup |d_r u|
  double constraint = 0.0;        // worst |<q, L^i Phi_M>| / (||q|| ||L^i Phi_M||)
  double constraint_local = 0.0;  // same with ||q|| taken on y <= 2M
  double constraint_abs = 0.0;    // same with ||w|| on y <= 2M in place of ||q||
  double step = 0.0;
  std::vector<double> E2m;  // E_{2m} for m in the configured set
};

struct Diagnostics {
  std::vector<int> m_set;
  std::vector<DiagnosticRecord> records;
  std::size_t accepted = 0, rejected = 0;
  double worst_constraint = 0.0, worst_constraint_local = 0.0, worst_constraint_abs = 0.0;
  double max_energy_increase = 0.0;  // max over steps of E_{n+1} - E_n (physical frame)
  double dissipation_defect = 0.0;   // max over records of |E(t) - E(0) + dissipated(t)| / dissipated(t)
  std::string status = "ok";         // ok | stop-ratio | t-end | step-underflow | non-finite | newton-failure
};

struct EvolveResult {
  Trajectory traj;
  Diagnostics diag;
  GridFunction state;  // final u (physical) or w (renormalized)
};

// chi_{r0} u + (1 - chi_{r0}) u(r0): flat past 2 r0, so compatible with the Neumann condition.
GridFunction flatten_far_field(const GridFunction& u, double r0);

// E(u) relative to u == 1: int [u_r^2/2 + (d-2)/r^2 (F(u) - F(1))] r^{d-3} dr, F(u) = u^2 (2-u)^2 / 4.
double energy(const GridFunction& u);

// u_t = u_rr + (d-3)/r u_r - (d-2)/r^2 f(u) on the grid of u0; Neumann at r_max.
// With a decomposer, (lambda, b) are extracted at every recorded step.
EvolveResult evolve_physical(const GridFunction& u0, const ModelParams& p, double t_end, const SolverOptions& opt = {},
                             const Decomposer* dec = nullptr, std::vector<int> m_set = {});

// w_s = w_yy + (d-3)/y w_y + (lambda_s/lambda) Lambda w - (d-2)/y^2 f(w) on the decomposer grid; Dirichlet at y_max.
// lambda_s/lambda and b_1..b_{L_extract} are solved each step so that <w - Qtilde_b, L^i Phi_M> = 0 exactly.
EvolveResult evolve_renormalized(const GridFunction& w0, const Decomposer& dec, double s0, double s_end,
                                 const std::vector<double>& b0, const SolverOptions& opt = {},
                                 std::vector<int> m_set = {});

struct QDiagnostics {
  std::vector<int> m_set;
  std::vector<double> E2m;    // int |L^m q|^2
  std::vector<double> lower;  // int |d_y^i q|^2 / (1 + y^{2(2-i)}), i = 0, 1, 2
};

// Default m_set {1, 2, hbar + 2}.
QDiagnostics diagnostics_q(const GridFunction& q, const OperatorContext& ctx, std::vector<int> m_set = {});

}  // namespace ymflow
