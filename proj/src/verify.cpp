#include "ymflow/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <thread>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "ymflow/error.hpp"
#include "ymflow/modulation.hpp"
#include "ymflow/output.hpp"
#include "ymflow/pde.hpp"
#include "ymflow/profiles.hpp"
#include "ymflow/samples.hpp"
#include "ymflow/spectral.hpp"

namespace ymflow {

const std::vector<CriterionInfo>& criteria_table() {
  static const std::vector<CriterionInfo> t = {
      {1, "constants", "gamma, hbar, delta against extended precision"},
      {2, "ground-state", "ground state residual, tail and potential endpoints"},
      {3, "operators", "operator calculus identities and refinement"},
      {4, "ladder", "profile ladder slopes and Phi_M orthogonality"},
      {5, "coercivity", "Hardy constant and form domination"},
      {6, "sk", "S_k homogeneity, triangularity and slopes"},
      {7, "residual", "residual power law in b_1"},
      {8, "spectrum", "modulation spectrum and explicit solution"},
      {9, "rate", "rate quantization from the modulation system"},
      {10, "pde-rate", "blow-up rate from the PDE"},
      {11, "sanity", "stationarity of Q and scaling covariance"},
  };
  return t;
}

int criterion_id(const std::string& name) {
  for (const auto& c : criteria_table())
    if (c.key == name || std::to_string(c.id) == name) return c.id;
  throw config_error("unknown criterion '" + name + "'");
}

bool VerifyReport::pass() const {
  return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.pass; });
}

namespace {

struct Checks {
  CriterionResult& r;
  void record(const std::string& name, bool ok, nlohmann::json detail) {
    detail["pass"] = ok;
    r.metrics[name] = std::move(detail);
    if (!ok) r.failed.push_back(name);
  }
  void at_most(const std::string& name, double v, double limit) {
    record(name, v <= limit, {{"value", v}, {"max", limit}});
  }
  void at_least(const std::string& name, double v, double limit) {
    record(name, v >= limit, {{"value", v}, {"min", limit}});
  }
  void near(const std::string& name, double v, double target, double rel) {
    const double dev = std::abs(v - target) / std::abs(target);
    record(name, dev <= rel, {{"value", v}, {"target", target}, {"relative_deviation", dev}, {"max", rel}});
  }
  void truth(const std::string& name, bool ok) { record(name, ok, nlohmann::json::object()); }
};

std::string sub(const std::string& a, int i) { return a + "[" + std::to_string(i) + "]"; }

// Objects shared by the criteria of one group.
struct Cache {
  const RunConfig& cfg;
  std::optional<OperatorContext> ctx, ctx_profile;
  std::optional<ProfileSet> ladder, ladder_profile;
  std::optional<PhiM> phi;
  std::optional<ApproximateProfile> prof;

  ModelParams params() const { return derive_params(cfg.d, cfg.l, 4, cfg.eta, cfg.M, cfg.bstar); }
  const OperatorContext& base() {
    if (!ctx) ctx.emplace(make_context(params(), cfg.grid()));
    return *ctx;
  }
  const ProfileSet& base_ladder() {
    if (!ladder) ladder.emplace(build_profile_ladder(base(), 4));
    return *ladder;
  }
  const PhiM& base_phi() {
    if (!phi) phi.emplace(build_phi_m(base(), base_ladder(), 4, cfg.M));
    return *phi;
  }
  const ApproximateProfile& profile() {
    if (!prof) {
      ctx_profile.emplace(make_context(params(), cfg.profile_grid()));
      ladder_profile.emplace(build_profile_ladder(*ctx_profile, 4));
      prof.emplace(build_sk(*ctx_profile, *ladder_profile, 4));
    }
    return *prof;
  }
};

void constants(Cache&, Checks& k) {
  using big = boost::multiprecision::cpp_bin_float_50;
  for (int d : {11, 12, 13}) {
    const big dd = d;
    const big g = (dd - 4 - sqrt((dd - 6) * (dd - 6) - 12)) / 2;
    const big half = ((dd - 2) / 2 - g) / 2;
    const big h = floor(half);
    const auto p = derive_params(d, 1, 4, 0.01, 20);
    const std::string s = "d=" + std::to_string(d);
    k.at_most("gamma " + s, std::abs(p.gamma - double(g)) / double(g), 1e-12);
    k.at_most("delta " + s, std::abs(p.delta - double(half - h)), 1e-12);
    k.record("hbar " + s, p.hbar == int(h), {{"value", p.hbar}, {"target", int(h)}});
  }
}

void ground_state(Cache& c, Checks& k) {
  const auto& ctx = c.base();
  const auto& gs = ctx.gs;
  const auto& p = ctx.params;
  const auto res = ground_state_residual(p, gs);
  const auto src = map(gs.Q, [&](double y, double q) { return (p.d - 2) * f(q) / (y * y); });
  k.at_most("ode residual", weighted_norm(res) / weighted_norm(src), 1e-6);
  k.near("tail exponent", -gs.gamma_fit, -p.gamma, 0.01);
  k.near("V(0)", gs.V[0], 2.0, 0.05);
  k.near("V(y_max)", gs.V[gs.V.size() - 1], -p.gamma, 0.05);
  k.at_most("L(Lambda Q)", weighted_norm(apply_L(ctx, gs.LambdaQ)) / weighted_norm(gs.LambdaQ), 1e-6);
}

void operators(Cache& c, Checks& k) {
  const auto& ctx = c.base();
  const auto& g = *ctx.grid;
  const auto r = operator_calculus_check(ctx, c.cfg.seed, c.cfg.samples);
  const auto fine = make_context(ctx.params, build_grid(g.y_min(), g.y_max(), 2 * g.size() - 1, ctx.params.d));
  const auto rf = operator_calculus_check(fine, c.cfg.seed, c.cfg.samples);
  const std::pair<const char*, double CalculusReport::*> ids[] = {{"adjointness", &CalculusReport::adjointness},
                                                                   {"factorization", &CalculusReport::factorization},
                                                                   {"commutator", &CalculusReport::commutator},
                                                                   {"roundtrip", &CalculusReport::roundtrip}};
  for (const auto& [name, m] : ids) {
    k.at_most(name, r.*m, 1e-4);
    k.at_least(std::string(name) + " refinement gain", r.*m / rf.*m, 4.0);
  }
  const double d = ctx.params.d, gam = ctx.params.gamma;
  k.near("Gamma origin slope", origin_slope(ctx.GammaDecaying), -(d - 2), 0.05);
  k.near("Gamma tail slope", tail_slope(ctx.GammaDecaying), -(d - 4 - gam), 0.05);
}

void ladder(Cache& c, Checks& k) {
  const auto& ld = c.base_ladder();
  const double gam = c.base().params.gamma;
  for (int j = 0; j <= 4; ++j) {
    k.near(sub("T origin slope", j), origin_slope(ld.T[std::size_t(j)]), 2.0 * j + 2, 0.05);
    k.near(sub("T tail slope", j), tail_slope(ld.T[std::size_t(j)]), 2.0 * j - gam, 0.05);
  }
  k.at_most("Phi_M orthogonality", phi_m_defects(c.base_phi(), ld).orthogonality, 1e-6);
}

void coercivity(Cache& c, Checks& k) {
  const auto& ctx = c.base();
  const auto h = hardy_check(ctx.params, 0.0, ctx.grid->y_max());
  k.at_least("Hardy subspace minimum", h.subspace_min, 12.25 * 0.95);
  CoercivityOptions o;
  o.samples = 200;
  o.seed = c.cfg.seed;
  const auto r = coercivity_check(ctx, c.base_phi(), Lemma::iterate, ctx.params.hbar, 0, 0.0, o);
  k.truth("form domination ran", r.status == "ok" && r.samples == 200);
  k.at_least("form domination min ratio", r.min_ratio, 1e-3);
  k.at_most("form domination constraint", r.max_constraint, 1e-10);
}

void sk(Cache& c, Checks& k) {
  const auto& prof = c.profile();
  const std::vector<double> b = {1e-2, 3e-5, -2e-7, 5e-9};
  double worst = 0.0;
  for (int j = 2; j <= 6; ++j) {
    const auto base = prof.S[std::size_t(j)].evaluate(b);
    for (double mu : {0.5, 2.0}) {
      std::vector<double> bm(4);
      for (int i = 0; i < 4; ++i) bm[std::size_t(i)] = std::pow(mu, i + 1) * b[std::size_t(i)];
      const auto s = prof.S[std::size_t(j)].evaluate(bm);
      for (std::size_t i = 0; i < s.size(); ++i)
        if (base[i] != 0) worst = std::max(worst, std::abs(s[i] / (std::pow(mu, j) * base[i]) - 1));
    }
  }
  k.at_most("homogeneity", worst, 1e-12);
  bool tri = true;
  for (int j = 2; j <= 6; ++j)
    for (int m = j; m <= 4; ++m) tri = tri && !prof.S[std::size_t(j)].depends_on(m) && prof.dS[std::size_t(j)][std::size_t(m)].empty();
  k.truth("triangular dependence", tri);
  const double g = c.ctx_profile->params.gamma;
  for (int j = 2; j <= 4; ++j)
    for (const auto& [m, f] : prof.S[std::size_t(j)].terms()) {
      const std::string s = "S_" + std::to_string(j) + " " + format_multi(m);
      k.near(s + " origin slope", origin_slope(f), 2.0 * j + 2, 0.07);
      k.near(s + " tail slope", tail_slope(f), 2.0 * (j - 1) - g, 0.07);
    }
}

void residual(Cache& c, Checks& k) {
  const auto& prof = c.profile();
  const auto scan = residual_power_law(*c.ctx_profile, prof, {1e-2, std::pow(10.0, -2.5), 1e-3}, 0.35, 1);
  k.truth("cutoffs separated", scan.separated);
  for (int m = 0; m <= 1; ++m) k.near(sub("slope m", m), scan.slope[std::size_t(m)], scan.target[std::size_t(m)], 0.15);
}

void spectrum(Cache&, Checks& k) {
  double worst = 0.0;
  for (int d : {11, 12, 13})
    for (int l = 1; l <= 10; ++l) worst = std::max(worst, build_system(derive_params(d, l, l, 0.01, 20)).spectrum_defect);
  k.at_most("eigenvalue defect", worst, 1e-8);
  for (int l : {1, 2, 3}) {
    const auto sys = build_system(derive_params(11, l, l, 0.01, 20));
    const double s0 = 10;
    const auto tr = integrate(sys, explicit_b(sys, s0), 1.0, s0, 100 * s0);
    double drift = 0, lam = 0;
    for (const auto& smp : tr.samples) {
      for (int j = 1; j <= l; ++j)
        drift = std::max(drift, std::abs(smp.b[std::size_t(j - 1)] * std::pow(smp.s, j) / sys.c[std::size_t(j - 1)] - 1));
      lam = std::max(lam, std::abs(smp.lambda / std::pow(s0 / smp.s, l / (2.0 * l - sys.params.gamma)) - 1));
    }
    k.at_most(sub("explicit drift l", l), drift, 1e-6);
    k.at_most(sub("lambda(s) power law l", l), lam, 1e-2);
  }
}

void rate(Cache&, Checks& k) {
  struct Case {
    int d, l;
    double target, span;
  };
  for (const auto& cs : {Case{11, 1, 0.58920, 100}, Case{11, 2, 1.17838, 1e4}, Case{12, 1, 0.64495, 100}}) {
    const auto sys = build_system(derive_params(cs.d, cs.l, 2, 0.01, 20));
    for (double s0 : {10.0, 30.0, 100.0}) {
      const auto fit = fit_blowup_rate(integrate(sys, explicit_b(sys, s0), 1.0, s0, s0 * cs.span / 10));
      k.near("d=" + std::to_string(cs.d) + " l=" + std::to_string(cs.l) + " s0=" + format_double(s0), fit.exponent,
             cs.target, 0.02);
    }
  }
}

struct PdeRun {
  EvolveResult renorm, phys;
  double decades = 0.0;
  RateFit fit;
};

PdeRun pde_run(const RunConfig& cfg, const std::string& tier) {
  RunConfig c = cfg;
  c.tier = tier;
  const auto p = derive_params(c.d, c.l, c.l + 1, c.eta, c.M, c.bstar);
  const auto ctx = make_context(p, c.grid());
  const auto ld = build_profile_ladder(ctx, p.L);
  const auto prof = build_sk(ctx, ld, p.L);
  const auto phi = build_phi_m(ctx, ld, p.L, c.M);
  const Decomposer dec{&ctx, &prof, &phi, 1, c.eta_data};
  const auto sys = build_system(p);
  const double b1 = 1e-2;
  const double s0 = sys.c[0] / b1;
  SolverOptions o;
  o.tol = c.step_tol();
  o.h0 = 1e-2;
  PdeRun out;
  out.renorm = evolve_renormalized(profile_family(dec, {b1}), dec, s0, 1e6, {b1}, o);
  SolverOptions op;
  op.tol = c.step_tol();
  op.record_every = 20;
  op.stop_ratio = 1e-2;
  out.phys = evolve_physical(flatten_far_field(profile_family(dec, {b1}), 250.0), p, 1e3, op, &dec);
  const auto& s = out.renorm.traj.samples;
  out.decades = std::log10(s.front().lambda / s.back().lambda);
  out.fit = fit_blowup_rate(out.renorm.traj);
  return out;
}

void pde_rate(Cache& c, Checks& k) {
  const double target = c.cfg.l / gamma_of(c.cfg.d);
  auto run = pde_run(c.cfg, c.cfg.tier);
  double tol = 0.10;
  if (run.decades < 1.0) {
    k.r.metrics["window"] = {{"tier", c.cfg.tier}, {"decades", run.decades}, {"fallback", "fine"}};
    run = pde_run(c.cfg, "fine");
    tol = 0.15;
  }
  const auto& s = run.renorm.traj.samples;
  bool mono = s.size() > 1;
  for (std::size_t i = 1; i < s.size(); ++i) mono = mono && s[i].lambda < s[i - 1].lambda;
  k.truth("lambda monotone", mono);
  k.record("renormalized status", run.renorm.diag.status == "stop-ratio",
           {{"value", run.renorm.diag.status}, {"steps", run.renorm.diag.accepted}});
  k.at_least("lambda decades", run.decades, 1.0);
  k.near("exponent", run.fit.exponent, target, tol);
  k.r.metrics["blow-up time"] = run.fit.T;
  k.at_most("constraint residual", run.renorm.diag.worst_constraint, 1e-8);
  k.at_most("physical energy increase", run.phys.diag.max_energy_increase, 0.0);
  k.r.metrics["physical dissipation defect"] = run.phys.diag.dissipation_defect;
  k.r.metrics["physical status"] = run.phys.diag.status;
}

double max_abs(const GridFunction& f, double y_hi = 1e300) {
  double m = 0;
  for (std::size_t i = 0; i < f.size() && f.grid().y(i) <= y_hi; ++i) m = std::max(m, std::abs(f[i]));
  return m;
}

void sanity(Cache& c, Checks& k) {
  const auto& ctx = c.base();
  SolverOptions o;
  o.tol = c.cfg.step_tol();
  const auto r = evolve_physical(ctx.gs.Q, ctx.params, 1.0, o);
  k.at_most("Q stationary", max_abs(r.state - ctx.gs.Q), 1e-5);
  std::mt19937_64 rng(c.cfg.seed);
  const auto u0 = flatten_far_field(ctx.gs.Q + 0.05 * random_bump_sum(ctx.grid, rng, 0.3, 10.0), 200.0);
  const double mu = 2.0;
  const auto v0 = rescale_to(u0, 1 / mu, ctx.grid);
  o.tol = std::min(o.tol, 1e-9);
  for (double t : {0.05, 0.2, 0.5}) {
    const auto u = evolve_physical(u0, ctx.params, t, o).state;
    const auto v = evolve_physical(v0, ctx.params, mu * mu * t, o).state;
    k.at_most("scaling covariance t=" + format_double(t), max_abs(v - rescale_to(u, 1 / mu, ctx.grid), 100.0), 1e-5);
  }
}

using CriterionFn = void (*)(Cache&, Checks&);

CriterionFn function_of(int id) {
  static const CriterionFn fns[] = {constants, ground_state, operators, ladder, coercivity, sk,
                                     residual,  spectrum,     rate,      pde_rate, sanity};
  return fns[id - 1];
}

const std::vector<std::vector<int>>& groups() {
  static const std::vector<std::vector<int>> g = {{1}, {2, 3, 4, 5}, {6, 7}, {8}, {9}, {10}, {11}};
  return g;
}

}  // namespace

VerifyReport run_verify(const RunConfig& c, int threads) {
  std::vector<int> ids;
  for (const auto& n : c.criteria) ids.push_back(criterion_id(n));
  if (ids.empty())
    for (const auto& t : criteria_table()) ids.push_back(t.id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::vector<std::vector<int>> jobs;
  for (const auto& g : groups()) {
    std::vector<int> sel;
    for (int id : g)
      if (std::binary_search(ids.begin(), ids.end(), id)) sel.push_back(id);
    if (!sel.empty()) jobs.push_back(sel);
  }
  std::vector<std::vector<CriterionResult>> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next++) < jobs.size();) {
      Cache cache{c};
      for (int id : jobs[j]) {
        const auto& info = criteria_table()[std::size_t(id - 1)];
        CriterionResult r;
        r.id = id;
        r.key = info.key;
        r.title = info.title;
        Checks k{r};
        try {
          function_of(id)(cache, k);
          r.pass = r.failed.empty();
        } catch (const std::exception& e) {
          r.error = e.what();
          r.pass = false;
        }
        out[j].push_back(std::move(r));
      }
    }
  };
  const int nt = std::max(1, std::min<int>(threads, int(jobs.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  VerifyReport rep;
  rep.tier = c.tier;
  for (auto& v : out)
    for (auto& r : v) rep.results.push_back(std::move(r));
  std::sort(rep.results.begin(), rep.results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return rep;
}

nlohmann::json to_json(const VerifyReport& r) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : r.results) {
    nlohmann::json e = {{"id", c.id}, {"key", c.key}, {"title", c.title}, {"pass", c.pass},
                        {"failed", c.failed}, {"metrics", c.metrics}};
    if (!c.error.empty()) e["error"] = c.error;
    list.push_back(e);
  }
  return {{"tier", r.tier}, {"pass", r.pass()}, {"criteria", list}};
}

}  // namespace ymflow
