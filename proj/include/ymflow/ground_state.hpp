#pragma once

#include <vector>

#include "ymflow/grid.hpp"
#include "ymflow/params.hpp"

namespace ymflow {

struct GroundState {
  GridFunction Q;
  GridFunction OneMinusQ;  // 1 - Q without cancellation in the far field
  GridFunction LambdaQ;  // y Q'
  GridFunction V;        // Lambda ln(LambdaQ)
  GridFunction Z;        // (d-2) f'(Q)
  GridFunction LambdaV;
  GridFunction LambdaZ;
  double alpha_fit = 0.0;
  double gamma_fit = 0.0;
  double tail_fit_se = 0.0;
  double seed_radius = 0.0;
};

// Coefficients a_1..a_n of Q = sum a_k y^{2k} near the origin; a_1 = leading.
std::vector<double> origin_series(const ModelParams& p, int n_terms, double leading = 0.5);

// Q and y Q' from the truncated series.
void series_eval(const std::vector<double>& a, double y, double& Q, double& LQ);

GroundState solve_ground_state(const ModelParams& p, GridPtr grid, double leading = 0.5);

// Power-law fit of f on [y_lo, y_hi]: f ~ amplitude * y^exponent.
PowerFit fit_tail(const GridFunction& f, double y_lo, double y_hi);

// -Q'' - (d-3)Q'/y + (d-2) f(Q)/y^2 evaluated with the mesh stencils.
GridFunction ground_state_residual(const ModelParams& p, const GroundState& gs);

}  // namespace ymflow
