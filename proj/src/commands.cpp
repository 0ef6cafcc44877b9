#include "ymflow/commands.hpp"

#include <cstdlib>
#include <iomanip>
#include <sstream>

#include "ymflow/error.hpp"
#include "ymflow/modulation.hpp"
#include "ymflow/output.hpp"
#include "ymflow/pde.hpp"
#include "ymflow/profiles.hpp"
#include "ymflow/spectral.hpp"
#include "ymflow/verify.hpp"

namespace ymflow {

namespace fs = std::filesystem;

namespace {

std::vector<double> ys(const RadialGrid& g) { return g.nodes(); }

void emit_config(const RunConfig& c, const OutputRoot& root, const ArtifactHeader& h, std::ostream& log) {
  const auto path = root.sibling(".config.json");
  write_json(path, h, nlohmann::json(c));
  log << "wrote " << path.string() << "\n";
}

nlohmann::json fit_json(const Trajectory& tr) {
  try {
    const auto f = fit_blowup_rate(tr);
    return {{"T", f.T}, {"exponent", f.exponent}, {"prefactor", f.prefactor}, {"c_u", f.c_u},
            {"residual_se", f.residual_se}, {"used", f.used}};
  } catch (const Error& e) {
    return {{"error", e.what()}};
  }
}

int ground_state(const RunConfig& c, std::ostream& log) {
  OutputRoot root(c.out, "ground_state.csv");
  const auto p = c.params();
  const auto grid = c.grid();
  const auto gs = solve_ground_state(p, grid, c.leading);
  const auto h = make_header(c, grid->descriptor());
  write_csv(root.primary(), h,
            {{"y", ys(*grid)}, {"Q", gs.Q.values()}, {"LambdaQ", gs.LambdaQ.values()}, {"V", gs.V.values()},
             {"Z", gs.Z.values()}});
  log << "wrote " << root.primary().string() << "\n";
  const auto ctx = make_context(p, grid);
  const auto res = ground_state_residual(p, gs);
  const auto src = map(gs.Q, [&](double y, double q) { return (p.d - 2) * f(q) / (y * y); });
  write_json(root.sibling(".json"), h,
             {{"gamma", p.gamma},
              {"hbar", p.hbar},
              {"delta", p.delta},
              {"alpha_fit", gs.alpha_fit},
              {"gamma_fit", gs.gamma_fit},
              {"tail_fit_se", gs.tail_fit_se},
              {"residual", {{"ode_relative", weighted_norm(res) / weighted_norm(src)},
                            {"L_LambdaQ_relative", weighted_norm(apply_L(ctx, gs.LambdaQ)) / weighted_norm(gs.LambdaQ)}}}});
  log << "wrote " << root.sibling(".json").string() << "\n";
  emit_config(c, root, h, log);
  return kSuccess;
}

int operators(const RunConfig& c, std::ostream& log) {
  OutputRoot root(c.out.empty() ? c.report : c.out, "operators.json");
  const auto report = c.out.empty() || c.report.empty() ? root.primary() : root.resolve(c.report);
  const auto p = c.params();
  const auto ctx = make_context(p, c.grid());
  const auto h = make_header(c, ctx.grid->descriptor());
  const auto r = operator_calculus_check(ctx, c.seed, c.samples);
  const auto ld = build_profile_ladder(ctx, p.L);
  nlohmann::json table = nlohmann::json::array();
  for (int k = 0; k <= p.L; ++k) {
    const auto& T = ld.T[std::size_t(k)];
    table.push_back({{"k", k},
                     {"origin_slope", origin_slope(T)},
                     {"origin_target", 2.0 * k + 2},
                     {"tail_slope", tail_slope(T)},
                     {"tail_target", 2.0 * k - p.gamma},
                     {"roundtrip", ld.provenance[std::size_t(k)].roundtrip}});
  }
  const double d = p.d;
  write_json(report, h,
             {{"calculus", {{"adjointness", r.adjointness}, {"factorization", r.factorization}, {"ltilde", r.ltilde},
                            {"commutator", r.commutator}, {"roundtrip", r.roundtrip}, {"two_pipelines", r.two_pipelines},
                            {"samples", r.samples}, {"seed", r.seed}}},
              {"Gamma", {{"origin_slope", origin_slope(ctx.GammaDecaying)}, {"origin_target", -(d - 2)},
                         {"tail_slope", tail_slope(ctx.GammaDecaying)}, {"tail_target", -(d - 4 - p.gamma)},
                         {"anchored_tail_slope", tail_slope(ctx.Gamma)}}},
              {"L_LambdaQ_relative", weighted_norm(apply_L(ctx, ctx.gs.LambdaQ)) / weighted_norm(ctx.gs.LambdaQ)},
              {"ladder", table}});
  log << "wrote " << report.string() << "\n";
  if (c.dump_profiles) {
    std::vector<Column> cols = {{"y", ys(*ctx.grid)}};
    for (int k = 0; k <= p.L; ++k) cols.push_back({"T" + std::to_string(k), ld.T[std::size_t(k)].values()});
    const auto path = root.resolve((report.parent_path() / (report.stem().string() + "_profiles.csv")).string());
    write_csv(path, h, cols);
    log << "wrote " << path.string() << "\n";
  }
  auto cfg_path = report;
  cfg_path.replace_extension(".config.json");
  write_json(cfg_path, h, nlohmann::json(c));
  log << "wrote " << cfg_path.string() << "\n";
  return kSuccess;
}

int profile(const RunConfig& c, std::ostream& log) {
  OutputRoot root(c.out, "profile.csv");
  const auto p = c.params();
  const auto ctx = make_context(p, c.profile_grid());
  const auto ld = build_profile_ladder(ctx, p.L);
  const auto prof = build_sk(ctx, ld, p.L);
  const auto b = c.b_vector(p.L);
  check_cone(p, b);
  const auto qb = assemble_qb(ctx, prof, b);
  const auto loc = localize_qb(ctx, prof, b, p.eta);
  const auto rr = residual_psi(ctx, prof, b, p.eta, true, 1);
  const auto h = make_header(c, ctx.grid->descriptor());
  write_csv(root.primary(), h,
            {{"y", ys(*ctx.grid)}, {"Q", ctx.gs.Q.values()}, {"Qb", qb.Qb.values()}, {"Theta", qb.Theta.values()},
             {"Qb_localized", loc.values()}, {"Psi", rr.psi.values()}});
  log << "wrote " << root.primary().string() << "\n";
  nlohmann::json norms = nlohmann::json::array();
  for (const auto& n : rr.norms)
    norms.push_back({{"m", n.m}, {"full_L", n.full_L}, {"full_weighted", n.full_weighted}, {"B0_L", n.b0_L},
                     {"B0_weighted", n.b0_weighted}, {"M_L", n.m_L}});
  const auto npath = c.norms.empty() ? root.sibling(".json") : root.resolve(c.norms);
  write_json(npath, h,
             {{"b", b}, {"B0", rr.B0}, {"B1", rr.B1}, {"norms", norms}, {"dropped", rr.dropped},
              {"b1_s_ratio", rr.b1_s_ratio}, {"worst_inversion_roundtrip", prof.worst_roundtrip}});
  log << "wrote " << npath.string() << "\n";
  emit_config(c, root, h, log);
  return kSuccess;
}

int modulate(const RunConfig& c, std::ostream& log) {
  OutputRoot root(c.out, "trajectory.csv");
  const auto p = c.params();
  const auto sys = build_system(p);
  const double s0 = c.s0 > 0 ? c.s0 : 10.0;
  if (!(c.s1 > s0)) throw config_error("s1 must exceed s0");
  const auto b0 = c.b.empty() ? explicit_b(sys, s0) : c.b_vector(p.L);
  IntegrateOptions o;
  o.samples_per_decade = c.samples_per_decade;
  const auto tr = integrate(sys, b0, c.lambda0, s0, c.s1, o);
  std::vector<Column> cols = {{"s", {}}, {"t", {}}, {"lambda", {}}};
  for (int k = 1; k <= p.L; ++k) cols.push_back({"b" + std::to_string(k), {}});
  for (int k = 1; k <= p.l; ++k) cols.push_back({"U" + std::to_string(k), {}});
  for (int k = 1; k <= p.l; ++k) cols.push_back({"V" + std::to_string(k), {}});
  for (const auto& smp : tr.samples) {
    std::size_t j = 0;
    cols[j++].values.push_back(smp.s);
    cols[j++].values.push_back(smp.t);
    cols[j++].values.push_back(smp.lambda);
    for (double v : smp.b) cols[j++].values.push_back(v);
    const auto lc = linearized_coordinates(sys, smp.b, smp.s);
    for (double v : lc.U) cols[j++].values.push_back(v);
    for (double v : lc.V) cols[j++].values.push_back(v);
  }
  const auto h = make_header(c, "none");
  write_csv(root.primary(), h, cols);
  log << "wrote " << root.primary().string() << "\n";
  write_json(root.sibling(".json"), h,
             {{"c", sys.c}, {"D", sys.D}, {"eigenvalues", sys.eig}, {"spectrum_defect", sys.spectrum_defect},
              {"target_exponent", p.l / p.gamma}, {"fit", fit_json(tr)}, {"events", tr.events}});
  log << "wrote " << root.sibling(".json").string() << "\n";
  emit_config(c, root, h, log);
  for (const auto& e : tr.events)
    if (e.rfind("integration-stopped", 0) == 0) return kNumericalFailure;
  return kSuccess;
}

std::string snap_name(std::size_t step) {
  std::ostringstream os;
  os << "snap_" << std::setw(8) << std::setfill('0') << step << ".csv";
  return os.str();
}

int evolve(const RunConfig& c, std::ostream& log) {
  OutputRoot root(c.out, "trajectory.csv");
  const auto p = c.params();
  const auto ctx = make_context(p, c.grid());
  const auto ld = build_profile_ladder(ctx, p.L);
  const auto prof = build_sk(ctx, ld, p.L);
  const auto phi = build_phi_m(ctx, ld, p.L, p.M);
  const Decomposer dec{&ctx, &prof, &phi, c.L_extract, c.eta_data};
  const auto sys = build_system(p);
  const auto b = c.b_vector(p.L);
  const double s0 = c.s0 > 0 ? c.s0 : sys.c[0] / b[0];
  const std::vector<int> m_set = {1, 2, p.hbar + 2};
  const auto h = make_header(c, ctx.grid->descriptor());
  const bool renorm = c.frame == "renormalized";

  SolverOptions o;
  o.tol = c.step_tol();
  o.h0 = renorm ? 1e-2 : 1e-3;
  o.record_every = std::size_t(c.record_every);
  o.stop_ratio = c.stop_ratio;
  o.snap_every = std::size_t(c.snap_every);
  fs::path snap_dir;
  if (c.snap_every > 0) {
    snap_dir = root.resolve("snapshots");
    fs::create_directories(snap_dir);
  }
  o.on_snapshot = [&](const Snapshot& sn) {
    std::vector<Column> cols = {{"y", ys(*ctx.grid)}, {renorm ? "w" : "u", sn.field->values()}};
    if (sn.q) cols.push_back({"q", sn.q->values()});
    write_csv(snap_dir / snap_name(sn.step), h, cols);
  };

  const auto data = profile_family(dec, b);
  EvolveResult r;
  if (renorm) {
    r = evolve_renormalized(data, dec, s0, c.s_end, std::vector<double>(b.begin(), b.begin() + c.L_extract), o,
                            m_set);
  } else {
    r = evolve_physical(c.flatten_r0 > 0 ? flatten_far_field(data, c.flatten_r0) : data, p, c.t_end, o, &dec, m_set);
  }

  std::vector<Column> cols = {{"s", {}}, {"t", {}}, {"lambda", {}}};
  for (int k = 1; k <= c.L_extract; ++k) cols.push_back({"b" + std::to_string(k), {}});
  for (const char* n : {"mu", "energy", "dissipated", "grad_sup", "constraint", "constraint_local", "constraint_abs",
                        "step"})
    cols.push_back({n, {}});
  for (int m : m_set) cols.push_back({"E" + std::to_string(2 * m), {}});
  for (const auto& rec : r.diag.records) {
    std::size_t j = 0;
    for (double v : {rec.s, rec.t, rec.lambda}) cols[j++].values.push_back(v);
    for (int k = 0; k < c.L_extract; ++k) cols[j++].values.push_back(rec.b[std::size_t(k)]);
    for (double v : {rec.mu, rec.energy, rec.dissipated, rec.grad_sup, rec.constraint, rec.constraint_local,
                     rec.constraint_abs, rec.step})
      cols[j++].values.push_back(v);
    for (double v : rec.E2m) cols[j++].values.push_back(v);
  }
  write_csv(root.primary(), h, cols);
  log << "wrote " << root.primary().string() << "\n";
  const auto& d = r.diag;
  const auto dpath = root.resolve("diagnostics.json");
  write_json(dpath, h,
             {{"frame", c.frame}, {"status", d.status}, {"accepted", d.accepted}, {"rejected", d.rejected},
              {"s0", renorm ? s0 : 0.0}, {"worst_constraint", d.worst_constraint},
              {"worst_constraint_local", d.worst_constraint_local}, {"worst_constraint_abs", d.worst_constraint_abs},
              {"max_energy_increase", d.max_energy_increase}, {"dissipation_defect", d.dissipation_defect},
              {"m_set", d.m_set}, {"target_exponent", p.l / p.gamma}, {"fit", fit_json(r.traj)},
              {"events", r.traj.events}});
  log << "wrote " << dpath.string() << "\n";
  emit_config(c, root, h, log);
  const bool ok = d.status == "s-end" || d.status == "t-end" || d.status == "stop-ratio";
  return ok ? kSuccess : kNumericalFailure;
}

int verify(const RunConfig& c, std::ostream& log, int threads) {
  OutputRoot root(c.out, "verify.json");
  const auto rep = run_verify(c, threads);
  const auto h = make_header(c, c.grid()->descriptor());
  write_json(root.primary(), h, to_json(rep));
  for (const auto& r : rep.results) {
    log << "criterion " << r.id << " " << (r.pass ? "PASS" : "FAIL") << " " << r.key;
    for (const auto& f : r.failed) log << " [" << f << "]";
    if (!r.error.empty()) log << " error: " << r.error;
    log << "\n";
  }
  log << "wrote " << root.primary().string() << "\n";
  emit_config(c, root, h, log);
  return rep.pass() ? kSuccess : kCriterionFailure;
}

}  // namespace

int run_command(const RunConfig& c, std::ostream& log, int threads) {
  validate(c);
  if (c.command == "ground-state") return ground_state(c, log);
  if (c.command == "operators") return operators(c, log);
  if (c.command == "profile") return profile(c, log);
  if (c.command == "modulate") return modulate(c, log);
  if (c.command == "evolve") return evolve(c, log);
  return verify(c, log, threads);
}

int exit_code_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e))
    return err->kind() == ErrorKind::numerical ? kNumericalFailure : kConfigError;
  return kNumericalFailure;
}

int threads_from_env() {
  const char* v = std::getenv("YMFLOW_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 256) throw config_error(std::string("YMFLOW_THREADS must be 1..256, got '") + v + "'");
  return int(n);
}

}  // namespace ymflow
