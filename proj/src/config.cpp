#include "ymflow/config.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "ymflow/error.hpp"
#include "ymflow/verify.hpp"

namespace ymflow {

const std::vector<Tier>& tiers() {
  static const std::vector<Tier> t = {
      {"coarse", 1000, 1e-4, 1e3, 1500, 1e4, 1e-6},
      {"standard", 2000, 1e-4, 1e3, 3000, 1e4, 1e-7},
      {"fine", 3999, 1e-4, 1e3, 6000, 1e4, 1e-8},
  };
  return t;
}

const Tier& tier_by_name(const std::string& name) {
  for (const auto& t : tiers())
    if (t.name == name) return t;
  throw config_error("unknown tier '" + name + "' (expected coarse, standard or fine)");
}

ModelParams RunConfig::params() const { return derive_params(d, l, L, eta, M, bstar); }

GridPtr RunConfig::grid() const {
  const auto& t = tier_by_name(tier);
  return build_grid(y_min > 0 ? y_min : t.y_min, y_max > 0 ? y_max : t.y_max, n > 0 ? n : t.n, d);
}

GridPtr RunConfig::profile_grid() const {
  const auto& t = tier_by_name(tier);
  return build_grid(y_min > 0 ? y_min : t.y_min, t.profile_y_max, n > 0 ? n * t.profile_n / t.n : t.profile_n, d);
}

double RunConfig::step_tol() const { return tol > 0 ? tol : tier_by_name(tier).tol; }

std::vector<double> RunConfig::b_vector(int Lb) const {
  std::vector<double> out(std::size_t(Lb), 0.0);
  if (b.empty()) {
    out[0] = b1;
  } else {
    if (int(b.size()) > Lb) throw config_error("b has more than L entries");
    std::copy(b.begin(), b.end(), out.begin());
  }
  return out;
}

namespace {

const std::set<std::string> kCommands = {"ground-state", "operators", "profile", "modulate", "evolve", "verify"};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw config_error("config file '" + path + "' must hold a JSON object");
  j.erase("header");  // emitted configs carry the artifact header
  const auto known = nlohmann::json(RunConfig{});
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw config_error("unknown key '" + k + "' in config file '" + path + "'");
  return j;
}

}  // namespace

void validate(const RunConfig& c) {
  if (c.command.empty()) throw config_error("missing command");
  if (!kCommands.count(c.command)) throw config_error("unknown command '" + c.command + "'");
  const auto p = c.params();  // d > 10, l, L, eta, M
  tier_by_name(c.tier);
  if (c.out.empty() && !(c.command == "operators" && !c.report.empty()))
    throw config_error("missing required key 'out' (--out)");
  if (c.y_min < 0 || c.y_max < 0) throw config_error("y_min and y_max must be positive when set");
  if (c.samples < 1) throw config_error("samples must be >= 1");
  if (!(c.leading > 0)) throw config_error("leading must be positive");
  if (!c.b.empty() && int(c.b.size()) > c.L) throw config_error("b has more than L entries");
  if (!(c.b1 != 0.0) && c.b.empty() && (c.command == "profile" || c.command == "evolve"))
    throw config_error("b1 must be nonzero");
  if (c.s0 < 0) throw config_error("s0 must be positive when set");
  if (c.command == "modulate" && c.s0 > 0 && !(c.s1 > c.s0)) throw config_error("s1 must exceed s0");
  if (c.command == "evolve" && c.s0 > 0 && !(c.s_end > c.s0)) throw config_error("s_end must exceed s0");
  if (!(c.lambda0 > 0)) throw config_error("lambda0 must be positive");
  if (c.samples_per_decade < 1) throw config_error("samples_per_decade must be >= 1");
  if (c.frame != "physical" && c.frame != "renormalized")
    throw config_error("frame must be 'physical' or 'renormalized'");
  if (!(c.t_end > 0)) throw config_error("t_end must be positive");
  if (c.snap_every < 0) throw config_error("snap_every must be >= 0");
  if (c.record_every < 1) throw config_error("record_every must be >= 1");
  if (c.L_extract < 1 || c.L_extract > p.L) throw config_error("L_extract must lie in 1..L");
  if (!(c.eta_data > 0)) throw config_error("eta_data must be positive");
  if (!(c.stop_ratio > 0 && c.stop_ratio < 1)) throw config_error("stop_ratio must lie in (0, 1)");
  if (c.tol < 0) throw config_error("tol must be positive when set");
  if (c.flatten_r0 < 0) throw config_error("flatten_r0 must be >= 0 (0 disables)");
  for (const auto& k : c.criteria) criterion_id(k);
  if (!c.criteria.empty() && c.command != "verify") throw config_error("criteria only apply to verify");
}

RunConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"Equivariant Yang-Mills heat flow: ground state, operators, profiles, modulation, PDE runs"};
  app.name("ymflow");
  app.require_subcommand(1, 1);
  std::string config_file;
  app.add_option("--config", config_file, "JSON file with RunConfig keys; flags override it");

  RunConfig f;
  std::vector<std::pair<std::string, CLI::Option*>> keyed;
  auto opt = [&](const std::string& key, auto& ref, const std::string& desc) {
    keyed.emplace_back(key, app.add_option(flag_name(key), ref, desc));
  };
  opt("d", f.d, "dimension, d > 10");
  opt("l", f.l, "blow-up index");
  opt("L", f.L, "profile order");
  opt("eta", f.eta, "localization exponent in (0, 0.1]");
  opt("M", f.M, "Phi_M cutoff radius");
  opt("bstar", f.bstar, "upper bound on b_1");
  opt("seed", f.seed, "random seed");
  opt("tier", f.tier, "coarse | standard | fine");
  opt("n", f.n, "mesh nodes (overrides the tier)");
  opt("y_min", f.y_min, "inner mesh radius (overrides the tier)");
  opt("y_max", f.y_max, "outer mesh radius (overrides the tier)");
  opt("out", f.out, "output file or directory; nothing is written outside it");
  opt("report", f.report, "JSON report path (operators)");
  opt("norms", f.norms, "JSON norms path (profile)");
  opt("leading", f.leading, "Q ~ leading y^2 at the origin");
  opt("samples", f.samples, "random samples for the operator checks");
  keyed.emplace_back("dump_profiles", app.add_flag("--dump-profiles", f.dump_profiles, "write T_k as CSV"));
  opt("b1", f.b1, "b_1 (other b_k zero)");
  keyed.emplace_back("b", app.add_option("--b", f.b, "b_1 .. b_L")->expected(1, 64));
  opt("s0", f.s0, "initial s");
  opt("s1", f.s1, "final s (modulate)");
  opt("lambda0", f.lambda0, "initial scale");
  opt("samples_per_decade", f.samples_per_decade, "trajectory samples per decade of s");
  opt("frame", f.frame, "physical | renormalized");
  opt("s_end", f.s_end, "final s (renormalized frame)");
  opt("t_end", f.t_end, "final t (physical frame)");
  opt("snap_every", f.snap_every, "write a profile snapshot every N accepted steps (0: none)");
  opt("record_every", f.record_every, "diagnostic record every N accepted steps");
  opt("L_extract", f.L_extract, "number of b_k solved for by the decomposition");
  opt("eta_data", f.eta_data, "localization exponent of the PDE data and decomposer");
  opt("stop_ratio", f.stop_ratio, "stop once lambda < stop_ratio lambda(0)");
  opt("tol", f.tol, "step-doubling tolerance (overrides the tier)");
  opt("flatten_r0", f.flatten_r0, "flatten physical data past r0 (0: off)");

  for (const auto& c : kCommands) {
    auto* sub = app.add_subcommand(c);
    sub->fallthrough();
    if (c == "verify")
      keyed.emplace_back("criteria", sub->add_option("criteria", f.criteria, "criterion ids or names (default all)"));
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw config_error(e.what());
  }

  nlohmann::json j = RunConfig{};
  if (!config_file.empty()) {
    const auto file = read_config_file(config_file);
    for (const auto& [k, v] : file.items()) j[k] = v;
  }
  const nlohmann::json fj = f;
  for (const auto& [key, o] : keyed)
    if (o->count() > 0) j[key] = fj[key];

  const auto& sub = app.get_subcommands().front()->get_name();
  if (!j["command"].get<std::string>().empty() && j["command"] != sub)
    throw config_error("config file command '" + j["command"].get<std::string>() + "' conflicts with '" + sub + "'");
  j["command"] = sub;

  bool b_flag = false, b1_flag = false;
  for (const auto& [key, o] : keyed) {
    if (key == "b" && o->count()) b_flag = true;
    if (key == "b1" && o->count()) b1_flag = true;
  }
  if (b_flag && b1_flag) throw config_error("conflicting keys: --b and --b1 both given");

  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("bad value in configuration: ") + e.what());
  }
  if (b1_flag) c.b.clear();
  validate(c);
  return c;
}

std::string config_hash(const RunConfig& c) {
  nlohmann::json j = c;
  for (const char* k : {"out", "report", "norms"}) j.erase(k);
  const std::string s = j.dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr) != 1) throw numerical_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

const char* version() { return YMFLOW_VERSION; }

}  // namespace ymflow
