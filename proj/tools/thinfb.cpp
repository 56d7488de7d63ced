// thinfb: command line front end. Every subcommand is a pure function of a
// Config; flags only set config keys, so `thinfb run file.ini` with a saved
// config reproduces a flag-driven run bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thinfb/config.hpp"
#include "thinfb/dichotomy.hpp"
#include "thinfb/error.hpp"
#include "thinfb/field_io.hpp"
#include "thinfb/fixtures.hpp"
#include "thinfb/monitors.hpp"
#include "thinfb/polyhom.hpp"
#include "thinfb/seqlab.hpp"
#include "thinfb/sphere_layer.hpp"
#include "thinfb/vi_solver.hpp"

#ifndef THINFB_VERSION
#define THINFB_VERSION "unknown"
#endif

using namespace thinfb;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitFalsified = 4;

// Thrown when a run finished and produced its outputs, but the outputs record
// a violated prediction.
struct Falsified {
  std::string what;
};

json provenance(const Config& c) {
  return {{"version", THINFB_VERSION}, {"config_hash", c.hash()}};
}

std::string require(const Config& c, const std::string& key) {
  const std::string v = c.get_string(key, "");
  if (v.empty()) throw ValidationError(key, "is required");
  return v;
}

// Output sink: a file when out.path is set, stdout otherwise.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw ValidationError("out.path", "cannot open '" + path + "' for writing");
    }
  }
  std::ostream& os() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::ostream& full_precision(std::ostream& os) { return os << std::setprecision(17); }

HomPoly load_poly(const std::string& path, const std::string& key) {
  std::ifstream is(path);
  if (!is) throw ValidationError(key, "cannot open '" + path + "'");
  return read_text(is);
}

GridField load_field(const std::string& path, const std::string& key) {
  if (!std::filesystem::exists(path)) throw ValidationError(key, "no such file '" + path + "'");
  return read_field(path).field;
}

json sphere_field_json(const SphereField& f) {
  return {{"dim", f.dim}, {"lat", f.lat}, {"rings", f.rings}, {"phi0", f.phi0}, {"values", f.values}};
}

// --- poly -----------------------------------------------------------------

int cmd_poly(const Config& c) {
  const std::string action = c.get_string("poly.action", "basis");
  Sink out(c.get_string("out.path", ""));
  if (action == "basis") {
    const int dim = c.get_int("poly.dim", 3);
    const int degree = c.get_int("poly.degree", 2);
    const std::string cls = c.get_string("poly.class", "");
    const Parity parity = cls.empty() ? natural_parity(degree) : parity_from_string(cls);
    const auto b = basis(dim, degree, parity);
    out.os() << "# config_hash=" << c.hash() << " version=" << THINFB_VERSION << " size=" << b.size() << "\n";
    for (const auto& p : b) out.os() << to_text(p) << "\n";
    return 0;
  }
  if (action == "check") {
    const HomPoly p = load_poly(require(c, "poly.file"), "poly.file");
    const ConeMembership cm = cone_check(p);
    json j = provenance(c);
    j["dim"] = p.dim();
    j["degree"] = p.degree();
    j["class"] = to_string(p.parity());
    j["harmonicity_residual"] = p.harmonicity_residual();
    j["l2_norm"] = p.l2_norm();
    j["in_cone"] = cm.is_plus;
    j["margin"] = cm.margin;
    j["witness"] = std::vector<double>(cm.witness.begin(), cm.witness.begin() + p.dim());
    out.os() << j.dump(2) << "\n";
    return 0;
  }
  throw ValidationError("poly.action", "expected 'basis' or 'check', got '" + action + "'");
}

// --- solve ----------------------------------------------------------------

BoundaryData boundary_from_spec(const std::string& spec, int dim) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "fixture") {
    const Fixture f = make_fixture(arg, dim);
    return f.data;
  }
  if (kind == "poly") {
    auto p = std::make_shared<HomPoly>(load_poly(arg, "solve.boundary"));
    if (p->dim() != dim) throw ValidationError("solve.boundary", "polynomial dimension differs from solve.dim");
    return [p](const Point& x) { return p->eval(x); };
  }
  throw ValidationError("solve.boundary", "expected 'fixture:NAME' or 'poly:FILE', got '" + spec + "'");
}

int cmd_solve(const Config& c) {
  const int dim = c.get_int("solve.dim", 3);
  const int nodes = c.get_int("solve.nodes", 65);
  const Grid grid(dim, nodes);
  grid.validate();
  const SolverConfig sc = solver_config(c);
  const BoundaryData g = boundary_from_spec(require(c, "solve.boundary"), dim);
  const std::string path = require(c, "out.path");

  const SolveResult r = solve_top(g, grid, sc);
  write_field(path, r.u, c.hash_value());
  if (const std::string csv = c.get_string("out.csv", ""); !csv.empty()) write_field_csv(csv, r.u, c.hash_value());

  const ResidualReport res = residuals(r.u);
  json j = provenance(c);
  j["field"] = path;
  j["dim"] = dim;
  j["nodes"] = nodes;
  j["h"] = grid.h();
  j["iterations"] = r.report.iterations;
  j["residual"] = r.report.residual;
  j["energy"] = r.report.energy;
  j["omega"] = r.report.omega;
  j["active_set"] = r.report.active_set.size();
  j["harmonic_residual"] = res.harmonic;
  j["plane_sign"] = res.plane_sign;
  j["plane_superharmonic"] = res.plane_superharmonic;
  j["complementarity"] = res.complementarity;
  if (r.report.planar_extension) j["planar_extension"] = true;
  Sink rep(c.get_string("out.report", ""));
  rep.os() << j.dump(2) << "\n";
  return 0;
}

// --- replace --------------------------------------------------------------

LayerGeometry geometry_for(const Config& c, const HomPoly& p) {
  const LayerConfig lc = layer_config(c);
  const std::string eta = c.get_string("layer.eta", "auto");
  if (eta == "auto") return choose_eta(p.dim(), p.degree(), lc);
  LayerGeometry g = choose_eta(p.dim(), p.degree(), lc);
  const double e = c.get_positive("layer.eta", 0.5);
  if (e >= 1.0) throw ValidationError("layer.eta", "must lie in (0, 1)");
  g.eta = e;
  g.theta_eta = std::asin(e);
  g.certified_eigenvalue = band_min_eigenvalue(g.dim, g.theta_eta, g.band_intervals) - g.lambda;
  if (g.certified_eigenvalue <= 0.0)
    throw ValidationError("layer.eta", "band operator is not coercive at this eta; use a smaller value or 'auto'");
  return g;
}

int cmd_replace(const Config& c) {
  const HomPoly p = load_poly(require(c, "replace.poly"), "replace.poly");
  const LayerGeometry geom = geometry_for(c, p);
  const ReplaceOptions opts = replace_options(c);
  const ReplacementBundle b = replace(p, geom, opts);

  json j = provenance(c);
  j["p"] = to_text(b.p);
  j["geometry"] = {{"dim", geom.dim},
                   {"degree", geom.degree},
                   {"lambda", geom.lambda},
                   {"eta", geom.eta},
                   {"theta_eta", geom.theta_eta},
                   {"band_intervals", geom.band_intervals},
                   {"longitudes", geom.longitudes},
                   {"certified_eigenvalue", geom.certified_eigenvalue}};
  j["tolerances"] = {{"kkt", opts.tol}, {"psor_sweeps", opts.psor_sweeps}, {"max_newton", opts.max_newton}};
  j["kappa"] = b.kappa;
  j["kappa_minus"] = b.kappa_minus;
  j["v_sup"] = b.v_sup;
  j["v_l2_sphere"] = b.v_l2_sphere;
  j["v_grad_sphere"] = b.v_grad_sphere;
  j["v_h1_ball"] = b.v_h1_ball;
  j["energy"] = b.energy;
  j["v"] = sphere_field_json(b.v);
  j["f"] = b.f;
  j["g_mass"] = b.g_mass;
  j["g"] = b.g;
  if (b.has_correctors()) {
    j["phi"] = to_text(b.phi);
    j["phi_coeffs"] = basis_coordinates(b.phi);
    j["phi_log_coeff"] = b.phi_log_coeff;
    j["H"] = sphere_field_json(b.H);
    j["fredholm_residual"] = b.fredholm_residual;
    j["solvability_defect"] = b.solvability_defect;
  }
  j["diagnostics"] = {{"psor_sweeps", b.diag.psor_sweeps},
                      {"newton_iterations", b.diag.newton_iterations},
                      {"kkt_residual", b.diag.kkt_residual},
                      {"min_pbar_equator", b.diag.min_pbar_equator},
                      {"max_interior_residual", b.diag.max_interior_residual},
                      {"max_equator_excess", b.diag.max_equator_excess},
                      {"complementarity", b.diag.complementarity}};
  if (p.dim() == 2) j["planar_extension"] = true;
  Sink out(c.get_string("out.path", ""));
  out.os() << j.dump() << "\n";
  return 0;
}

// --- monitor --------------------------------------------------------------

// "geometric:r_max,r_min,count" or "list:r1,r2,..."
std::vector<double> parse_radii(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  std::vector<double> v;
  std::stringstream ss(colon == std::string::npos ? "" : spec.substr(colon + 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ValidationError("monitor.radii", "bad number '" + tok + "'");
    }
  }
  if (kind == "geometric") {
    if (v.size() != 3) throw ValidationError("monitor.radii", "geometric needs r_max,r_min,count");
    return geometric_radii(v[0], v[1], static_cast<int>(v[2]));
  }
  if (kind == "list") {
    if (v.empty()) throw ValidationError("monitor.radii", "empty list");
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
  }
  throw ValidationError("monitor.radii", "expected 'geometric:...' or 'list:...', got '" + spec + "'");
}

int cmd_monitor(const Config& c) {
  const GridField u = load_field(require(c, "monitor.field"), "monitor.field");
  const double lambda = c.get_double("monitor.lambda", -1.0);
  if (!(lambda >= 0.0)) throw ValidationError("monitor.lambda", "is required and must be >= 0");
  const auto radii = parse_radii(c.get_string("monitor.radii", "geometric:0.8,0.05,16"));
  const double factor = c.get_positive("monitor.allowance_factor", 10.0);
  std::optional<HomPoly> ref;
  if (const std::string rp = c.get_string("monitor.poly", ""); !rp.empty()) ref = load_poly(rp, "monitor.poly");
  const HomPoly* refp = ref ? &*ref : nullptr;

  const MonitorSeries s = monitor_series(u, lambda, radii, refp);
  const WeissAudit audit = weiss_monotonicity_audit(u, lambda, radii, factor, refp);
  Sink out(c.get_string("out.path", ""));
  full_precision(out.os()) << "# config_hash=" << c.hash() << " version=" << THINFB_VERSION
                           << " lambda=" << lambda << " quadrature=" << s.quadrature << "\n";
  out.os() << "r,W,N,allowance\n";
  for (std::size_t i = 0; i < s.radii.size(); ++i)
    out.os() << s.radii[i] << ',' << s.weiss[i] << ',' << s.frequency[i] << ',' << audit.allowance << "\n";
  if (!audit.violations.empty()) {
    const auto& v = audit.violations.front();
    throw Falsified{"Weiss energy decreased by " + std::to_string(-v.increment) + " between r = " +
                    std::to_string(v.r_small) + " and " + std::to_string(v.r_large) + " (allowance " +
                    std::to_string(audit.allowance) + ")"};
  }
  return 0;
}

// --- dichotomy ------------------------------------------------------------

int cmd_dichotomy(const Config& c) {
  const DichotomyConfig dc = dichotomy_config(c);
  GridField u;
  std::optional<HomPoly> p0;
  const std::string field = c.get_string("dichotomy.field", "");
  const std::string fixture = c.get_string("dichotomy.fixture", "");
  if (field.empty() == fixture.empty())
    throw ValidationError("dichotomy.field", "give exactly one of dichotomy.field and dichotomy.fixture");
  if (!fixture.empty()) {
    const Fixture f = make_fixture(fixture);
    if (f.has_poly) p0 = f.p;
    u = solve_top(f.data, Grid(f.dim, c.get_int("dichotomy.nodes", 65)), dc.solver).u;
  } else {
    u = load_field(field, "dichotomy.field");
  }
  if (const std::string pf = c.get_string("dichotomy.p0", ""); !pf.empty()) p0 = load_poly(pf, "dichotomy.p0");
  if (!p0) throw ValidationError("dichotomy.p0", "is required unless the fixture carries a polynomial");
  const int rungs = c.get_int("dichotomy.rungs", 10);
  if (rungs < 1) throw ValidationError("dichotomy.rungs", "must be >= 1");
  const double e0 = c.get_double("dichotomy.e0", 0.0);
  if (e0 < 0.0) throw ValidationError("dichotomy.e0", "must be >= 0 (0 picks e0 from delta)");

  const IterationLog log = run_iteration(u, *p0, rungs, e0, dc);
  Sink out(c.get_string("out.path", ""));
  const std::string hash = c.hash();
  for (std::size_t n = 0; n < log.rungs.size(); ++n) {
    const Rung& r = log.rungs[n];
    json j;
    j["type"] = "rung";
    j["config_hash"] = hash;
    j["n"] = n;
    j["rho"] = r.state.scale;
    j["branch"] = to_string(r.state.branch);
    j["e"] = r.state.eps;
    j["w"] = r.state.weiss;
    j["delta"] = r.state.delta;
    j["kappa"] = r.state.kappa;
    j["w_34"] = r.weiss_34;
    j["w_eps_ratio"] = r.weiss_eps_ratio;
    j["monotone"] = r.monotone;
    j["p"] = basis_coordinates(r.state.p);
    if (n + 1 < log.rungs.size() || !r.step.violation.empty()) {
      j["step"] = {{"w_drop", r.step.w_drop},         {"best_delta", r.step.best_delta},
                   {"step_ratio", r.step.step_ratio}, {"c_fit", r.step.c_fit},
                   {"evaluations", r.step.evaluations}, {"violation", r.step.violation}};
    }
    out.os() << j.dump() << "\n";
  }
  json s;
  s["type"] = "summary";
  s["config_hash"] = hash;
  s["version"] = THINFB_VERSION;
  s["r0"] = dc.r0;
  s["rungs"] = log.rungs.size();
  s["violated"] = log.violated;
  s["stop_reason"] = log.stop_reason;
  s["max_step_ratio"] = log.max_step_ratio;
  s["max_weiss_eps_ratio"] = log.max_weiss_eps_ratio;
  s["allowance"] = log.allowance;
  s["p_limit"] = basis_coordinates(log.p_limit);
  if (log.rungs.size() >= 6) {
    const RateReport rr = fit_rate(log, dc.r0);
    s["rate"] = {{"ratio", rr.ratio}, {"alpha", rr.alpha}, {"alpha_lo", rr.alpha_lo}, {"alpha_hi", rr.alpha_hi},
                 {"c", rr.c},         {"c_lo", rr.c_lo},   {"c_hi", rr.c_hi}};
  }
  out.os() << s.dump() << "\n";
  if (log.violated) throw Falsified{"dichotomy violated: " + log.stop_reason};
  return 0;
}

// --- epi ------------------------------------------------------------------

int cmd_epi(const Config& c) {
  const int samples = c.get_int("epi.samples", 50);
  if (samples < 1) throw ValidationError("epi.samples", "must be >= 1");
  if (c.get_int("epi.k", 1) != 1) throw ValidationError("epi.k", "random admissible traces exist for k = 1 only");
  const Grid grid(3, c.get_int("epi.nodes", 65));
  grid.validate();
  const std::uint64_t seed0 = c.get_u64("epi.seed0", 1);
  const double factor = c.get_positive("epi.allowance_factor", 10.0);
  const SolverConfig sc = solver_config(c);

  Sink out(c.get_string("out.path", ""));
  full_precision(out.os()) << "# config_hash=" << c.hash() << " version=" << THINFB_VERSION << " k=1 d=3\n";
  out.os() << "sample,seed,W_w,W_u,gap,ratio,allowance,W_exact\n";
  int failures = 0;
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const std::uint64_t seed = seed0 + static_cast<std::uint64_t>(i);
    const RandomTrace t = random_admissible_trace(seed);
    const EpiResult r = epiperimetric_gap([&](const Point& x) { return t.eval(x); }, 1, grid, sc, factor);
    out.os() << i << ',' << seed << ',' << r.w_energy << ',' << r.u_energy << ',' << r.gap << ',';
    if (r.ratio) out.os() << *r.ratio;
    out.os() << ',' << r.allowance << ',' << t.weiss_exact() << "\n";
    if (r.gap < -r.allowance) {
      ++failures;
      worst = std::min(worst, r.gap);
    }
  }
  if (failures)
    throw Falsified{std::to_string(failures) + " traces with gap below -allowance (worst " + std::to_string(worst) +
                    ")"};
  return 0;
}

// --- seq ------------------------------------------------------------------

int cmd_seq(const Config& c) {
  const SeqParams sp = seq_params(c);
  const int runs = c.get_int("seq.runs", 0);
  const std::uint64_t seed = c.get_u64("seq.seed", 0);
  Sink out(c.get_string("out.path", ""));

  if (runs > 0) {
    const BatchReport b = verify_batch(sp, runs, seed);
    json j = provenance(c);
    j["runs"] = b.runs;
    j["hypothesis_failures"] = b.hypothesis_failures;
    j["uncertified"] = b.uncertified;
    j["envelope_violations"] = b.envelope_violations;
    j["min_mu"] = b.min_mu;
    j["min_c"] = b.min_c;
    j["max_env_C"] = b.max_env_C;
    j["first_counterexample"] = b.first_counterexample;
    out.os() << j.dump(2) << "\n";
    if (b.hypothesis_failures || b.uncertified || b.envelope_violations)
      throw Falsified{"batch failures: " + b.first_counterexample};
    return 0;
  }

  const Policy policy = policy_from_string(c.get_string("seq.policy", "adversarial"));
  const SeqRun run = simulate(sp, policy, seed);
  const SeqReport rep = verify_bounds(run);
  full_precision(out.os()) << "# config_hash=" << c.hash() << " version=" << THINFB_VERSION
                           << " policy=" << to_string(policy) << " certified=" << rep.certified
                           << " mu=" << rep.mu << " c=" << rep.c << " ok=" << rep.ok() << "\n";
  out.os() << "n,branch,w,e,alpha,tail,envelope\n";
  for (std::size_t n = 0; n < run.e.size(); ++n) {
    out.os() << n << ',' << (n < run.branch.size() ? run.branch[n] : 0) << ',' << run.w[n] << ',' << run.e[n] << ',';
    if (n < rep.alpha.size()) out.os() << rep.alpha[n];
    out.os() << ',';
    if (n < rep.tail.size()) out.os() << rep.tail[n];
    out.os() << ',';
    if (n < rep.envelope.size()) out.os() << rep.envelope[n];
    out.os() << "\n";
  }
  if (!rep.ok()) {
    std::string why = rep.hypothesis_violation;
    if (why.empty()) why = rep.certified ? rep.counterexample : "recurrence not certified for any dyadic mu";
    throw Falsified{"sequence bounds failed: " + why};
  }
  return 0;
}

// --- fixtures -------------------------------------------------------------

int cmd_fixtures(const Config& c) {
  const std::string name = c.get_string("fixtures.name", "all");
  const std::filesystem::path dir = c.get_string("fixtures.dir", ".");
  const int dim = c.get_int("fixtures.dim", 3);
  const Grid grid(dim, c.get_int("fixtures.nodes", 65));
  grid.validate();
  std::filesystem::create_directories(dir);
  std::vector<std::string> names = name == "all" ? fixture_names() : std::vector<std::string>{name};
  json index = provenance(c);
  index["fixtures"] = json::array();
  for (const auto& nm : names) {
    const Fixture f = make_fixture(nm, dim);
    json meta = {{"name", f.name},     {"description", f.description}, {"dim", f.dim},
                 {"frequency", f.frequency}, {"exact", f.exact},       {"nodes", grid.n}};
    const auto data_path = dir / (nm + ".bin");
    write_field(data_path.string(), sample(grid, f.data), c.hash_value());
    meta["data"] = data_path.filename().string();
    if (f.has_poly) {
      const auto poly_path = dir / (nm + ".poly");
      std::ofstream os(poly_path);
      os << "# fixture=" << nm << " config_hash=" << c.hash() << "\n" << to_text(f.p);
      meta["poly"] = poly_path.filename().string();
    }
    index["fixtures"].push_back(meta);
  }
  std::ofstream(dir / "fixtures.json") << index.dump(2) << "\n";
  std::cout << index.dump(2) << "\n";
  return 0;
}

// --- report ---------------------------------------------------------------

// Summaries of existing artifacts: a dichotomy log (rate fits) or a field
// (residuals, contact set, frequency at a few radii).
int cmd_report(const Config& c) {
  const std::string log_path = c.get_string("report.log", "");
  const std::string field_path = c.get_string("report.field", "");
  if (log_path.empty() == field_path.empty())
    throw ValidationError("report.log", "give exactly one of report.log and report.field");
  json j = provenance(c);
  if (!log_path.empty()) {
    std::ifstream is(log_path);
    if (!is) throw ValidationError("report.log", "cannot open '" + log_path + "'");
    std::vector<double> e;
    std::map<std::string, int> branches;
    double r0 = 0.5;
    std::string source_hash, line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      json l;
      try {
        l = json::parse(line);
      } catch (const json::exception&) {
        throw ValidationError("report.log", "not a JSON-lines log");
      }
      if (l.value("type", "") == "rung") {
        e.push_back(l.at("e").get<double>());
        ++branches[l.at("branch").get<std::string>()];
      } else if (l.value("type", "") == "summary") {
        r0 = l.at("r0").get<double>();
      }
      source_hash = l.value("config_hash", source_hash);
    }
    j["source_hash"] = source_hash;
    j["rungs"] = e.size();
    j["branches"] = branches;
    if (e.size() >= 6) {
      const RateReport rr = fit_rate(e, r0);
      j["rate"] = {{"ratio", rr.ratio}, {"alpha", rr.alpha}, {"alpha_lo", rr.alpha_lo}, {"alpha_hi", rr.alpha_hi},
                   {"c", rr.c},         {"c_lo", rr.c_lo},   {"c_hi", rr.c_hi}};
    }
  } else {
    const LoadedField lf = read_field(field_path);
    const GridField& u = lf.field;
    const ResidualReport res = residuals(u);
    const ContactSet cs = extract_contact(u);
    if (lf.config_hash) j["source_hash"] = hex64(*lf.config_hash);
    j["dim"] = u.grid.dim;
    j["nodes"] = u.grid.n;
    j["harmonic_residual"] = res.harmonic;
    j["plane_sign"] = res.plane_sign;
    j["plane_superharmonic"] = res.plane_superharmonic;
    j["complementarity"] = res.complementarity;
    j["contact_nodes"] = cs.contact.size();
    j["free_boundary_nodes"] = cs.free_boundary.size();
    j["energy"] = dirichlet_energy(u);
    json freq = json::array();
    for (double r : geometric_radii(0.6, std::max(0.2, 5.0 * u.grid.h()), 5)) freq.push_back({{"r", r}, {"N", almgren(u, r)}});
    j["frequency"] = freq;
  }
  Sink out(c.get_string("out.path", ""));
  out.os() << j.dump(2) << "\n";
  return 0;
}

const std::map<std::string, std::function<int(const Config&)>>& commands() {
  static const std::map<std::string, std::function<int(const Config&)>> m = {
      {"poly", cmd_poly},           {"solve", cmd_solve}, {"replace", cmd_replace},   {"monitor", cmd_monitor},
      {"dichotomy", cmd_dichotomy}, {"epi", cmd_epi},     {"seq", cmd_seq},           {"fixtures", cmd_fixtures},
      {"report", cmd_report}};
  return m;
}

int dispatch(const Config& c) {
  const std::string module = c.get_string("run.module", "");
  const auto it = commands().find(module);
  if (it == commands().end()) throw ValidationError("run.module", "unknown module '" + module + "'");
  return it->second(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thinfb: thin obstacle problem experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", THINFB_VERSION);

  std::string config_path;
  std::vector<std::string> sets;
  std::string threads;
  std::string save_config;
  std::map<std::string, std::string> flags;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "override a config key (section.key=value)");
  app.add_option("--threads", threads, "cap on worker threads (sets THINFB_THREADS)");
  app.add_option("--save-config", save_config, "write the effective config to this file");

  // Binds a flag to a config key. Flags win over --set, which wins over --config.
  auto bind = [&flags](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };

  auto* poly = app.add_subcommand("poly", "harmonic basis of P_m and cone checks");
  poly->add_option_function<std::string>(
          "action", [&flags](const std::string& v) { flags["poly.action"] = v; }, "basis | check")
      ->required();
  bind(poly, "--dim", "poly.dim", "dimension");
  bind(poly, "--degree", "poly.degree", "degree m");
  bind(poly, "--class", "poly.class", "even | odd (default: parity of m)");
  bind(poly, "--poly", "poly.file", "polynomial file (check)");
  bind(poly, "--out", "out.path", "output file (default stdout)");

  auto* solve = app.add_subcommand("solve", "thin obstacle solve on the box");
  bind(solve, "--dim", "solve.dim", "dimension");
  bind(solve, "--nodes", "solve.nodes", "nodes per axis (odd)");
  bind(solve, "--boundary", "solve.boundary", "fixture:NAME or poly:FILE");
  bind(solve, "--tol", "solver.tol", "KKT tolerance");
  bind(solve, "--omega", "solver.omega", "SOR factor (<= 0: auto)");
  bind(solve, "--out", "out.path", "field file");
  bind(solve, "--csv", "out.csv", "CSV export of the field");
  bind(solve, "--report", "out.report", "JSON report (default stdout)");

  auto* repl = app.add_subcommand("replace", "sphere layer replacement of a polynomial");
  bind(repl, "--poly", "replace.poly", "polynomial file");
  bind(repl, "--eta", "layer.eta", "auto or a value in (0, 1)");
  bind(repl, "--band", "layer.band_intervals", "latitude steps in the band");
  bind(repl, "--longitudes", "layer.longitudes", "longitude count (d = 3)");
  bind(repl, "--out", "out.path", "bundle JSON");

  auto* mon = app.add_subcommand("monitor", "Weiss and Almgren series of a field");
  bind(mon, "--field", "monitor.field", "field file");
  bind(mon, "--lambda", "monitor.lambda", "homogeneity in W_lambda");
  bind(mon, "--radii", "monitor.radii", "geometric:r_max,r_min,count or list:r1,r2,...");
  bind(mon, "--poly", "monitor.poly", "reference polynomial for the sampler");
  bind(mon, "--out", "out.path", "CSV r,W,N,allowance");

  auto* dich = app.add_subcommand("dichotomy", "improvement-of-flatness iteration");
  bind(dich, "--field", "dichotomy.field", "field file");
  bind(dich, "--fixture", "dichotomy.fixture", "solve this fixture first");
  bind(dich, "--nodes", "dichotomy.nodes", "nodes per axis for --fixture");
  bind(dich, "--p0", "dichotomy.p0", "starting polynomial file");
  bind(dich, "--r0", "dichotomy.r0", "scale ratio between rungs");
  bind(dich, "--n", "dichotomy.rungs", "number of rungs");
  bind(dich, "--e0", "dichotomy.e0", "starting e (0: from delta)");
  bind(dich, "--zooms", "dichotomy.initial_zooms", "rescalings before rung 0");
  bind(dich, "--out", "out.path", "JSON-lines log");

  auto* epi = app.add_subcommand("epi", "epiperimetric gap over random admissible traces");
  bind(epi, "--samples", "epi.samples", "trace count");
  bind(epi, "--k", "epi.k", "homogeneity 2k");
  bind(epi, "--nodes", "epi.nodes", "nodes per axis");
  bind(epi, "--seed", "epi.seed0", "first seed");
  bind(epi, "--out", "out.path", "CSV");

  auto* seq = app.add_subcommand("seq", "sequence recurrence lab");
  bind(seq, "--gamma", "seq.gamma", "gamma in (0, 1]");
  bind(seq, "--A", "seq.A", "cap constant");
  bind(seq, "--A-grow", "seq.A_grow", "branch 1 expansion (default A)");
  bind(seq, "--a", "seq.a", "branch 1 energy drop");
  bind(seq, "--e0", "seq.e0", "e_0");
  bind(seq, "--w0", "seq.w0", "w_0 (default A e0^{1+gamma})");
  bind(seq, "--policy", "seq.policy", "branch2 | adversarial | random");
  bind(seq, "--steps", "seq.steps", "steps");
  bind(seq, "--seed", "seq.seed", "seed (random policy, batch seed0)");
  bind(seq, "--runs", "seq.runs", "batch of random runs instead of one run");
  bind(seq, "--out", "out.path", "CSV (single run) or JSON (batch)");

  auto* fix = app.add_subcommand("fixtures", "write fixture polynomials and boundary data");
  bind(fix, "--name", "fixtures.name", "fixture name or 'all'");
  bind(fix, "--dir", "fixtures.dir", "output directory");
  bind(fix, "--dim", "fixtures.dim", "dimension");
  bind(fix, "--nodes", "fixtures.nodes", "nodes per axis for the sampled data");

  auto* rep = app.add_subcommand("report", "summarize a dichotomy log or a field");
  bind(rep, "--log", "report.log", "JSON-lines dichotomy log");
  bind(rep, "--field", "report.field", "field file");
  bind(rep, "--out", "out.path", "JSON (default stdout)");

  auto* run = app.add_subcommand("run", "run the module named by run.module in a config");
  std::string run_path;
  run->add_option("config", run_path, "INI config")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (!threads.empty()) ::setenv("THINFB_THREADS", threads.c_str(), 1);
    Config cfg;
    if (!config_path.empty()) cfg = Config::load(config_path);
    if (!run_path.empty()) cfg = Config::load(run_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ValidationError("--set", "expected key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) cfg.set(k, v);
    const std::string module = app.get_subcommands().front()->get_name();
    if (module != "run") cfg.set("run.module", module);
    if (!save_config.empty()) std::ofstream(save_config) << cfg.to_ini();
    std::cerr << "thinfb " << cfg.get_string("run.module", "") << "  config " << cfg.hash() << "\n";
    return dispatch(cfg);
  } catch (const Falsified& f) {
    std::cerr << "falsification: " << f.what << "\n";
    return kExitFalsified;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConvergenceError& e) {
    std::cerr << "did not converge: " << e.what() << " (" << e.history().size() << " residuals recorded)\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
