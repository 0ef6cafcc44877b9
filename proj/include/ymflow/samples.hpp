#pragma once

#include <cstdint>
#include <random>

#include "ymflow/grid.hpp"

namespace ymflow {

// exp(-1/(1-t^2)) on |t| < 1, zero outside.
double bump(double t);

// Sum of `terms` smooth bumps in ln y with random centers, widths and amplitudes,
// supported inside [y_lo, y_hi].
GridFunction random_bump_sum(GridPtr grid, std::mt19937_64& rng, double y_lo, double y_hi, int terms = 4);

}  // namespace ymflow
