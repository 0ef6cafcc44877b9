#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ymflow/grid.hpp"
#include "ymflow/params.hpp"

namespace ymflow {

struct Tier {
  std::string name;
  std::size_t n = 0;
  double y_min = 0.0, y_max = 0.0;
  std::size_t profile_n = 0;  // the S_k stage needs a longer mesh
  double profile_y_max = 0.0;
  double tol = 0.0;  // PDE step-doubling tolerance
};

// coarse | standard | fine
const std::vector<Tier>& tiers();
const Tier& tier_by_name(const std::string& name);

// One key per field; JSON files use these names, flags use the same names with '-' for '_'.
struct RunConfig {
  std::string command;
  int d = 11;
  int l = 1;
  int L = 4;
  double eta = 0.01;
  double M = 20.0;
  double bstar = 0.1;
  std::uint64_t seed = 7;
  std::string tier = "standard";
  std::size_t n = 0;  // 0: from the tier
  double y_min = 0.0, y_max = 0.0;
  std::string out;
  std::string report;
  std::string norms;
  // ground-state
  double leading = 0.5;
  // operators
  int samples = 8;
  bool dump_profiles = false;
  // profile, evolve
  double b1 = 1e-2;
  std::vector<double> b;  // b_1..b_L; overrides b1 when set
  // modulate
  double s0 = 0.0;  // 0: c_1 / b_1 (evolve) or 10 (modulate)
  double s1 = 1e6;
  double lambda0 = 1.0;
  int samples_per_decade = 100;
  // evolve
  std::string frame = "renormalized";
  double s_end = 1e6;
  double t_end = 1e3;
  int snap_every = 0;
  int record_every = 1;
  int L_extract = 1;
  double eta_data = 1.0;
  double stop_ratio = 1e-3;
  double tol = 0.0;  // 0: from the tier
  double flatten_r0 = 250.0;
  // verify
  std::vector<std::string> criteria;  // empty: all

  ModelParams params() const;
  GridPtr grid() const;          // tier mesh with n / y_min / y_max overrides
  GridPtr profile_grid() const;  // longer mesh for the S_k stage
  double step_tol() const;
  std::vector<double> b_vector(int L) const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, command, d, l, L, eta, M, bstar, seed, tier, n, y_min, y_max,
                                                out, report, norms, leading, samples, dump_profiles, b1, b, s0, s1,
                                                lambda0, samples_per_decade, frame, s_end, t_end, snap_every,
                                                record_every, L_extract, eta_data, stop_ratio, tol, flatten_r0,
                                                criteria)

// Thrown by parse_config for --help; carries the usage text.
struct HelpRequested {
  std::string text;
};

// Checks ranges and cross-field consistency; throws config_error.
void validate(const RunConfig& c);

// args excludes the program name. Order: defaults, then --config file, then flags.
RunConfig parse_config(const std::vector<std::string>& args);

// SHA-256 of the canonical JSON without output paths.
std::string config_hash(const RunConfig& c);

const char* version();

}  // namespace ymflow
