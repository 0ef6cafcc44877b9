#pragma once

#include <cstdint>
#include <vector>

#include "ymflow/ground_state.hpp"
#include "ymflow/grid.hpp"
#include "ymflow/params.hpp"

namespace ymflow {

struct OperatorContext {
  ModelParams params;
  GridPtr grid;
  GroundState gs;
  GridFunction Ztilde;          // (V+1)^2 + (d-4)(V+1) - Lambda V
  GridFunction Gamma;           // Lambda Q * int_1^y dx / (x^{d-3} (Lambda Q)^2)
  GridFunction GammaDecaying;   // -Lambda Q * int_y^inf dx / (x^{d-3} (Lambda Q)^2)
};

OperatorContext make_context(const ModelParams& p, GridPtr grid);

GridFunction apply_Lambda(const OperatorContext& ctx, const GridFunction& u);
GridFunction apply_A(const OperatorContext& ctx, const GridFunction& u);
GridFunction apply_Astar(const OperatorContext& ctx, const GridFunction& u);
GridFunction apply_L(const OperatorContext& ctx, const GridFunction& u);
GridFunction apply_Ltilde(const OperatorContext& ctx, const GridFunction& u);
GridFunction apply_L_power(const OperatorContext& ctx, const GridFunction& u, int k);

void compute_Gamma(OperatorContext& ctx);

struct InversionRecord {
  int level = 0;
  double roundtrip = 0.0;  // ||L w - g|| / ||g||
};

// Regular solution of L w = g (two nested origin-anchored quadratures).
GridFunction invert_L(const OperatorContext& ctx, const GridFunction& g, double tol = 1e-4,
                      InversionRecord* rec = nullptr);
// Same solution from the variation-of-parameters formula with Gamma.
GridFunction invert_L_gamma(const OperatorContext& ctx, const GridFunction& g);
// ||L w - g|| / ||g||, weighted.
double roundtrip_residual(const OperatorContext& ctx, const GridFunction& w, const GridFunction& g);

struct ProfileSet {
  std::vector<GridFunction> T;  // T_0 .. T_L
  std::vector<InversionRecord> provenance;
};

ProfileSet build_profile_ladder(const OperatorContext& ctx, int L);

// Worst relative defects of the operator identities over random compactly supported samples.
struct CalculusReport {
  double adjointness = 0.0;    // |<Au,v> - <u,A*v>| / (||Au|| ||v||)
  double factorization = 0.0;  // ||A*Au - Lu|| / ||Lu||
  double ltilde = 0.0;         // ||AA*u - Ltilde u|| / ||Ltilde u||
  double commutator = 0.0;     // ||[L,Lambda]u - 2Lu + (Lambda Z/y^2)u|| / ||2Lu||
  double roundtrip = 0.0;      // ||L L^{-1} g - g|| / ||g||
  double two_pipelines = 0.0;  // ||L^{-1} g - Gamma formula|| / ||L^{-1} g||
  int samples = 0;
  std::uint64_t seed = 0;
};

CalculusReport operator_calculus_check(const OperatorContext& ctx, std::uint64_t seed, int samples,
                                       double y_lo = 1e-2, double y_hi = 50.0);

}  // namespace ymflow
