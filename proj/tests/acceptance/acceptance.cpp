// Acceptance suite: one PASS/FAIL line per criterion. Every criterion also
// produces a digest of its raw numeric outputs; criterion 11 re-executes this
// binary in a child process and compares the digests bit for bit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thinfb/config.hpp"
#include "thinfb/dichotomy.hpp"
#include "thinfb/error.hpp"
#include "thinfb/fixtures.hpp"
#include "thinfb/monitors.hpp"
#include "thinfb/seqlab.hpp"
#include "thinfb/sphere_layer.hpp"
#include "thinfb/vi_solver.hpp"

using namespace thinfb;
using Clock = std::chrono::steady_clock;

namespace {

class Digest {
 public:
  void add(double x) { h_ = fnv1a64(std::string_view(reinterpret_cast<const char*>(&x), sizeof x), h_); }
  void add(std::size_t x) { h_ = fnv1a64(std::string_view(reinterpret_cast<const char*>(&x), sizeof x), h_); }
  void add(const std::vector<double>& v) {
    for (double x : v) add(x);
  }
  void add(const GridField& u) { add(u.values); }
  void add(const HomPoly& p) { add(p.coeffs()); }
  std::string hex() const { return hex64(h_); }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

struct Outcome {
  bool pass = false;
  std::string summary;
  std::string digest;
  double seconds = 0.0;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Ctx {
  Config cfg;
  int n = 65;
  SolverConfig solver;
  DichotomyConfig dich;
  std::map<std::string, GridField> solves;  // fixture solves shared by 1-3

  Grid grid() const { return Grid(3, n); }
  const GridField& fixture_solve(const std::string& name) {
    auto it = solves.find(name);
    if (it != solves.end()) return it->second;
    const Fixture f = make_fixture(name);
    return solves[name] = solve_top(f.data, grid(), solver).u;
  }
};

// 1. Exact solutions are reproduced.
Outcome c1(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const Grid g = ctx.grid();
  const double h = g.h();
  double worst_t = 0.0;
  auto err_of = [&](const std::string& name, const std::function<double(const Point&)>& exact) {
    const auto t0 = Clock::now();
    const GridField& u = ctx.fixture_solve(name);
    worst_t = std::max(worst_t, since(t0));
    dg.add(u);
    double e = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) e = std::max(e, std::abs(u[k] - exact(g.point(k))));
    return e;
  };
  const HomPoly m2 = make_fixture("m2").p;
  const double e2 = err_of("m2", [&](const Point& x) { return m2.eval(x); });
  const double e32 = err_of("u32", [](const Point& x) { return u_three_halves(x, 3); });
  o.pass = e2 <= 5 * h * h && e32 <= 5 * h && worst_t <= 60.0;
  o.summary = "x1^2-x3^2 err " + fmt("%.2e", e2) + " (<= 5h^2 = " + fmt("%.2e", 5 * h * h) + "), u32 err " +
              fmt("%.2e", e32) + " (<= 5h = " + fmt("%.2e", 5 * h) + "), slowest solve " + fmt("%.1fs", worst_t);
  o.digest = dg.hex();
  return o;
}

// 2. Almgren frequency recovers 3/2 and m.
Outcome c2(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const std::vector<double> radii = geometric_radii(0.6, 0.2, 5);
  double worst = 0.0;
  std::string where;
  for (const char* name : {"u32", "m1", "m2", "m3"}) {
    const Fixture f = make_fixture(name);
    const GridField& u = ctx.fixture_solve(name);
    for (double r : radii) {
      const double N = almgren(u, r);
      dg.add(N);
      const double dev = std::abs(N - f.frequency);
      if (dev > worst) {
        worst = dev;
        where = std::string(name) + " r=" + fmt("%.3f", r) + " N=" + fmt("%.4f", N);
      }
    }
  }
  o.pass = worst <= 0.05;
  o.summary = "max |N - m| = " + fmt("%.4f", worst) + " at " + where + " (<= 0.05), r in [0.2, 0.6]";
  o.digest = dg.hex();
  return o;
}

// 3. Weiss monotonicity on every fixture solve; W_m(p; r) = 0 on P_m^+ fixtures.
Outcome c3(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const double h = ctx.grid().h();
  const std::vector<double> radii = geometric_radii(0.95, 0.15, 16);
  std::size_t violations = 0;
  double worst_w = 0.0;
  for (const auto& name : fixture_names()) {
    const Fixture f = make_fixture(name);
    const GridField& u = ctx.fixture_solve(name);
    const WeissAudit a = weiss_monotonicity_audit(u, f.frequency, radii, 10.0);
    violations += a.violations.size();
    for (const auto& s : a.steps) dg.add(s.increment);
    if (name == "m1" || name == "m2" || name == "m3") {
      for (double r : radii) {
        const double w = weiss(u, f.frequency, r);
        dg.add(w);
        worst_w = std::max(worst_w, std::abs(w));
      }
    }
  }
  o.pass = violations == 0 && worst_w <= 10 * h;
  o.summary = std::to_string(violations) + " monotonicity violations over " + std::to_string(fixture_names().size()) +
              " fixtures x 16 radii (allowance 10h); max |W_m(p; r)| on P_m^+ = " + fmt("%.2e", worst_w) +
              " (<= 10h = " + fmt("%.3f", 10 * h) + ")";
  o.digest = dg.hex();
  return o;
}

HomPoly quartic_plus() {
  return poly_from_terms(3, 4, Parity::even, {{{4, 0, 0, 0}, 1.0}, {{2, 0, 2, 0}, -6.0}, {{0, 0, 4, 0}, 1.0}});
}

// 4. Replacement: trivial on the cone, nontrivial and consistent on x1 x2.
Outcome c4(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const auto t0 = Clock::now();
  const LayerConfig lc = ctx.dich.layer;
  double worst_v = 0.0, worst_k = 0.0;
  for (const HomPoly& p : {make_fixture("m1").p, make_fixture("m2").p, make_fixture("m3").p, quartic_plus()}) {
    const ReplacementBundle b = replace(p, choose_eta(3, p.degree(), lc), ctx.dich.replace);
    worst_k = std::max(worst_k, b.kappa);
    worst_v = std::max(worst_v, b.v_sup);
    dg.add(b.v.values);
  }
  const HomPoly xy = make_fixture("x1x2").p;
  const ReplacementBundle b = replace(xy, choose_eta(3, 2, lc), ctx.dich.replace);
  double vmin = std::numeric_limits<double>::infinity();
  for (double v : b.v.values) vmin = std::min(vmin, v);
  LayerConfig fine = lc;
  fine.band_intervals *= 2;
  fine.longitudes *= 2;
  const ReplacementBundle b2 = replace(xy, choose_eta(3, 2, fine), ctx.dich.replace);
  const double drift = std::abs(b2.kappa - b.kappa) / b.kappa;
  dg.add(b.v.values);
  dg.add(b.kappa);
  dg.add(b2.kappa);
  const double secs = since(t0);
  o.pass = worst_k == 0.0 && worst_v <= 1e-10 && b.kappa > 0.0 && vmin >= 0.0 && b.fredholm_residual <= 1e-8 &&
           drift <= 0.05 && secs <= 120.0;
  o.summary = "cone: max kappa " + fmt("%.1e", worst_k) + ", max sup v " + fmt("%.1e", worst_v) + "; x1x2: kappa " +
              fmt("%.5f", b.kappa) + ", min v " + fmt("%.1e", vmin) + ", Fredholm " + fmt("%.1e", b.fredholm_residual) +
              ", kappa drift under doubling " + fmt("%.2f%%", 100 * drift) + " (<= 5%), " + fmt("%.1fs", secs);
  o.digest = dg.hex();
  return o;
}

// 5. kappa <= C sup v along the even family; H^1 slope of v on the odd family.
Outcome c5(Ctx& ctx) {
  Outcome o;
  Digest dg;
  std::vector<double> ts;
  for (int k = 1; k <= 8; ++k) ts.push_back(std::ldexp(1.0, -k));
  const HomPoly base_e = make_fixture("m2").p;
  const HomPoly xy = make_fixture("x1x2").p;
  auto even = [&](double t) { return base_e + t * xy; };
  const FamilyFit fe = verify_kappa_v_bounds(even, ts, choose_eta(3, 2, ctx.dich.layer), ctx.dich.replace);
  auto odd = [](double t) {
    return poly_from_terms(3, 3, Parity::odd, {{{2, 0, 1, 0}, -1.0}, {{0, 0, 3, 0}, 1.0 / 3.0}, {{1, 1, 1, 0}, t}});
  };
  const FamilyFit fo = verify_kappa_v_bounds(odd, ts, choose_eta(3, 3, ctx.dich.layer), ctx.dich.replace);
  bool all = true;
  double rmin = std::numeric_limits<double>::infinity();
  for (const auto& q : fe.points) {
    dg.add(q.kappa);
    dg.add(q.v_sup);
    all = all && q.kappa > 0.0 && q.v_sup > 0.0 && q.kappa <= fe.kappa_over_sup_v * q.v_sup;
    rmin = std::min(rmin, q.kappa / q.v_sup);
  }
  for (const auto& q : fo.points) dg.add(q.v_h1);
  o.pass = all && fe.slope_kappa_vs_sup >= 0.9 && fo.slope_h1_vs_kappa >= 0.4;
  o.summary = "even: kappa/sup v in [" + fmt("%.3f", rmin) + ", " + fmt("%.3f", fe.kappa_over_sup_v) +
              "], C = " + fmt("%.3f", fe.kappa_over_sup_v) + ", slope log kappa / log sup v " +
              fmt("%.3f", fe.slope_kappa_vs_sup) + " (>= 0.9); odd: H^1 slope " + fmt("%.3f", fo.slope_h1_vs_kappa) +
              " (>= 0.4)";
  o.digest = dg.hex();
  return o;
}

// 6. W_m(u; 3/4) against eps on manufactured in-class families.
Outcome c6(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const Grid g = ctx.grid();
  struct Family {
    const char* name;
    Parity parity;
    HomPoly p;
    std::function<double(const Point&, double)> data;
  };
  const HomPoly m1 = make_fixture("m1").p, m2 = make_fixture("m2").p;
  const std::vector<Family> fams = {
      {"-|x3|(1 - t x1)", Parity::odd, m1, [](const Point& x, double t) { return -std::abs(x[2]) * (1.0 - t * x[0]); }},
      {"-|x3|(1 - t x1 x2)", Parity::odd, m1,
       [](const Point& x, double t) { return -std::abs(x[2]) * (1.0 - t * x[0] * x[1]); }},
      {"x1^2 - x3^2 + t(x1^3 - 3x1x3^2)", Parity::even, m2,
       [](const Point& x, double t) {
         return x[0] * x[0] - x[2] * x[2] + t * (x[0] * x[0] * x[0] - 3 * x[0] * x[2] * x[2]);
       }},
      {"x1^2 - x3^2 + t(x1^3 x2 - 3x1x2x3^2)", Parity::even, m2,
       [](const Point& x, double t) {
         return x[0] * x[0] - x[2] * x[2] + t * (x[0] * x[0] * x[0] * x[1] - 3 * x[0] * x[1] * x[2] * x[2]);
       }},
  };
  std::map<Parity, double> C;
  std::map<Parity, std::vector<WeissEpsPoint>> pooled;
  bool ok = true;
  std::string detail;
  for (const auto& f : fams) {
    std::vector<WeissEpsPoint> pts;
    for (double t : {0.4, 0.2, 0.1, 0.05}) {
      const GridField u = solve_top([&](const Point& x) { return f.data(x, t); }, g, ctx.solver).u;
      const WeissEpsPoint pt = weiss_epsilon(u, f.p, ctx.dich);
      ok = ok && in_class(u, f.p, 1.5 * pt.eps, 1.0, ctx.dich);
      dg.add(pt.eps);
      dg.add(pt.weiss_34);
      pts.push_back(pt);
      pooled[f.parity].push_back(pt);
    }
    const WeissEpsFit fit = fit_weiss_epsilon(pts, f.parity, 3);
    const bool slope_ok = std::abs(fit.slope - fit.exponent) <= 0.2;
    ok = ok && slope_ok;
    detail += std::string(detail.empty() ? "" : "; ") + f.name + " slope " + fmt("%.3f", fit.slope);
  }
  for (auto& [par, pts] : pooled) {
    const WeissEpsFit fit = fit_weiss_epsilon(pts, par, 3);
    C[par] = fit.constant;
    // C is the largest ratio over these points; the slack only absorbs the division round trip.
    for (const auto& pt : pts) ok = ok && pt.weiss_34 <= fit.constant * std::pow(pt.eps, fit.exponent) * (1.0 + 1e-12);
  }
  o.pass = ok;
  o.summary = "C_odd = " + fmt("%.4f", C[Parity::odd]) + ", C_even = " + fmt("%.4f", C[Parity::even]) +
              " (exponent 2 for both in d = 3); " + detail + " (target 2 +- 0.2)";
  o.digest = dg.hex();
  return o;
}

// 7. Multi-scale dichotomy iteration on the perturbed fixtures.
Outcome c7(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const auto t0 = Clock::now();
  const int rungs = ctx.cfg.get_int("dichotomy.rungs", 8);
  bool ok = true;
  std::string detail;
  for (const char* name : {"m1p", "m2p"}) {
    const Fixture f = make_fixture(name);
    const GridField u = solve_top(f.data, ctx.grid(), ctx.solver).u;
    const IterationLog log = run_iteration(u, f.p, rungs, 0.0, ctx.dich);
    int violations = 0;
    for (const auto& r : log.rungs) {
      violations += r.state.branch == Branch::violation;
      dg.add(r.state.eps);
      dg.add(r.state.weiss);
      dg.add(r.state.p);
    }
    const int done = static_cast<int>(log.rungs.size());
    ok = ok && done >= 6 && violations == 0 && !log.violated;
    std::string fits;
    if (done >= 6) {
      const RateReport rr = fit_rate(log, ctx.dich.r0);
      ok = ok && rr.ratio <= 0.9;
      fits = ", ratio " + fmt("%.3f", rr.ratio) + " (<= 0.9), alpha " + fmt("%.3f", rr.alpha) + " [" +
             fmt("%.3f", rr.alpha_lo) + ", " + fmt("%.3f", rr.alpha_hi) + "], power c " + fmt("%.2f", rr.c);
      dg.add(rr.ratio);
    }
    detail += std::string(detail.empty() ? "" : "; ") + name + ": " + std::to_string(done) + " rungs, " +
              std::to_string(violations) + " violations" + fits;
  }
  const double secs = since(t0);
  o.pass = ok && secs <= 600.0;
  o.summary = detail + ", " + fmt("%.0fs", secs);
  o.digest = dg.hex();
  return o;
}

// 8. Sequence lemma envelopes.
Outcome c8(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const auto t0 = Clock::now();
  const int runs = ctx.cfg.get_int("seq.runs", 10000);
  const std::uint64_t seed0 = ctx.cfg.get_u64("seq.seed0", 1);
  bool ok = true;
  std::string detail;
  for (double g : {1.0, 0.5, 0.25}) {
    Config c = ctx.cfg;
    c.set("seq.gamma", fmt("%.17g", g));
    const SeqParams p = seq_params(c);
    const BatchReport b = verify_batch(p, runs, seed0);
    const SeqReport adv = verify_bounds(simulate(p, Policy::adversarial));
    const LadderReport lad = sigma_ladder(p, Policy::adversarial);
    ok = ok && b.hypothesis_failures == 0 && b.uncertified == 0 && b.envelope_violations == 0 && adv.ok() &&
         lad.monotone;
    dg.add(b.min_c);
    dg.add(b.max_env_C);
    dg.add(adv.sum_e);
    dg.add(lad.sums);
    detail += std::string(detail.empty() ? "" : "; ") + "gamma " + fmt("%.2f", g) + ": " +
              std::to_string(b.envelope_violations + b.uncertified + b.hypothesis_failures) + "/" +
              std::to_string(runs) + " random failures, adversarial " + (adv.ok() ? "ok" : "FAIL") + " (mu " +
              fmt("%.4g", adv.mu) + ", c " + fmt("%.3g", adv.c) + "), ladder " + (lad.monotone ? "monotone" : "NOT monotone");
    if (!b.first_counterexample.empty()) detail += " [" + b.first_counterexample + "]";
    if (!adv.counterexample.empty()) detail += " [" + adv.counterexample + "]";
  }
  const double secs = since(t0);
  o.pass = ok && secs <= 60.0;
  o.summary = detail + ", " + fmt("%.1fs", secs);
  o.digest = dg.hex();
  return o;
}

// 9. Epiperimetric gap over random admissible traces.
Outcome c9(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const auto t0 = Clock::now();
  const Grid g = ctx.grid();
  const double h = g.h();
  const int traces = ctx.cfg.get_int("epi.traces", 50);
  const std::uint64_t seed0 = ctx.cfg.get_u64("epi.seed0", 1);
  double min_gap = std::numeric_limits<double>::infinity();
  double min_ratio = std::numeric_limits<double>::infinity();
  int qualified = 0;
  for (int i = 0; i < traces; ++i) {
    const RandomTrace t = random_admissible_trace(seed0 + static_cast<std::uint64_t>(i));
    const EpiResult r = epiperimetric_gap([&](const Point& x) { return t.eval(x); }, 1, g, ctx.solver);
    dg.add(r.gap);
    dg.add(r.w_energy);
    min_gap = std::min(min_gap, r.gap);
    if (r.w_energy >= 20 * h) {
      ++qualified;
      // d = 3: the exponent 1 + (d-3)/(d+1) is 1.
      min_ratio = std::min(min_ratio, r.gap / r.w_energy);
    }
  }
  const double secs = since(t0);
  o.pass = min_gap >= -10 * h && qualified > 0 && min_ratio > 0.0 && secs <= 900.0;
  o.summary = std::to_string(traces) + " traces: min gap " + fmt("%.4f", min_gap) + " (>= -10h = " +
              fmt("%.3f", -10 * h) + "); " + std::to_string(qualified) + " with W >= 20h, recorded c = min ratio " +
              (qualified ? fmt("%.4f", min_ratio) : std::string("n/a")) + ", " + fmt("%.0fs", secs);
  o.digest = dg.hex();
  return o;
}

// 10. Pin-down on the odd suite; -|x_d| vanishes on the inner plane.
Outcome c10(Ctx& ctx) {
  Outcome o;
  Digest dg;
  const Grid g = ctx.grid();
  const GridField& u = ctx.fixture_solve("m1");
  double plane_max = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.on_plane(k)) continue;
    const Point x = g.point(k);
    if (std::hypot(x[0], x[1]) < 1.0) plane_max = std::max(plane_max, std::abs(u[k]));
  }
  const double M = ctx.cfg.get_positive("pin.M", kPinDownM);
  const auto suite = odd_pin_down_suite(g, ctx.solver);
  const PinDownCalibration cal = calibrate_pin_down(suite);
  std::size_t viol = 0, predicted = 0;
  bool every = true;
  for (const auto& c : suite) {
    const PinDown pd = pin_down(c.u, c.p, c.eps, M);
    viol += pd.violations.size();
    predicted += pd.nodes.size();
    every = every && !pd.nodes.empty();
    dg.add(pd.nodes.size());
    dg.add(pd.violations.size());
  }
  dg.add(plane_max);
  o.pass = plane_max == 0.0 && viol == 0 && every;
  o.summary = "-|x3| solve: max |u| on inner plane " + fmt("%.1e", plane_max) + "; M = " + fmt("%g", M) + ": " +
              std::to_string(viol) + " violations over " + std::to_string(predicted) + " predicted zeros in " +
              std::to_string(suite.size()) + " cases; calibrated M_cal = " +
              (cal.M_cal ? fmt("%g", *cal.M_cal) : std::string("none"));
  o.digest = dg.hex();
  return o;
}

Config default_config() {
  return Config::parse(
      "[acceptance]\nn = 65\n"
      "[dichotomy]\ninitial_zooms = 2\nrungs = 8\n"
      "[seq]\nA = 2\na = 0.1\ne0 = 0.05\nsteps = 200\nruns = 10000\nseed0 = 1\n"
      "[epi]\ntraces = 50\nseed0 = 1\n"
      "[pin]\nM = 1\n");
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) {
      out.insert(std::stoi(tok));
    } else {
      for (int k = std::stoi(tok.substr(0, dash)); k <= std::stoi(tok.substr(dash + 1)); ++k) out.insert(k);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thinfb acceptance suite"};
  std::string config_path, only = "1-11", json_path;
  bool digests_only = false;
  app.add_option("--config", config_path, "INI overrides");
  app.add_option("--only", only, "criteria, e.g. 1,3,7-9");
  app.add_option("--json", json_path, "write results as JSON");
  app.add_flag("--digests", digests_only, "print only 'digest <k> <hex>' lines");
  CLI11_PARSE(app, argc, argv);

  Ctx ctx;
  try {
    ctx.cfg = default_config();
    if (!config_path.empty())
      for (const auto& [k, v] : Config::load(config_path).values()) ctx.cfg.set(k, v);
    ctx.n = ctx.cfg.get_int("acceptance.n", 65);
    ctx.solver = solver_config(ctx.cfg);
    ctx.dich = dichotomy_config(ctx.cfg);
  } catch (const ValidationError& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 2;
  }
  const std::set<int> want = parse_only(only);

  const std::vector<std::pair<int, std::function<Outcome(Ctx&)>>> criteria = {
      {1, c1}, {2, c2}, {3, c3}, {4, c4}, {5, c5}, {6, c6}, {7, c7}, {8, c8}, {9, c9}, {10, c10}};
  const char* titles[] = {"",
                          "exact-solution reproduction",
                          "frequency recovery",
                          "Weiss monotonicity audit",
                          "replacement correctness",
                          "kappa / v scaling laws",
                          "Weiss-epsilon comparison",
                          "dichotomy iteration",
                          "sequence lemma",
                          "epiperimetric gap",
                          "pin-down",
                          "determinism"};

  if (!digests_only) {
    std::cout << "thinfb acceptance  config " << ctx.cfg.hash() << "  n = " << ctx.n << "\n";
    std::cout.flush();
  }
  nlohmann::json report = {{"config_hash", ctx.cfg.hash()}, {"criteria", nlohmann::json::array()}};
  std::map<int, std::string> digests;
  bool all = true;
  auto emit = [&](int k, const Outcome& o) {
    all = all && o.pass;
    if (digests_only) return;
    std::printf("criterion %2d %-28s %s  %s  [%.1fs]\n", k, titles[k], o.pass ? "PASS" : "FAIL", o.summary.c_str(),
                o.seconds);
    std::fflush(stdout);
    report["criteria"].push_back(
        {{"id", k}, {"title", titles[k]}, {"pass", o.pass}, {"summary", o.summary}, {"digest", o.digest}, {"seconds", o.seconds}});
  };

  for (const auto& [k, fn] : criteria) {
    if (!want.count(k)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
      o.digest = "error";
    }
    o.seconds = since(t0);
    digests[k] = o.digest;
    if (digests_only) std::printf("digest %d %s\n", k, o.digest.c_str());
    emit(k, o);
  }

  if (want.count(11) && !digests_only) {
    const auto t0 = Clock::now();
    Outcome o;
    std::string ids;
    for (const auto& [k, d] : digests) ids += (ids.empty() ? "" : ",") + std::to_string(k);
    // popen runs through /bin/sh, so /proc/self/exe must be resolved here.
    std::error_code ec;
    const std::string self = std::filesystem::read_symlink("/proc/self/exe", ec).string();
    std::string cmd = "'" + (ec ? std::string(argv[0]) : self) + "' --digests --only " + ids;
    if (!config_path.empty()) cmd += " --config '" + config_path + "'";
    std::map<int, std::string> second;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
      char line[256];
      while (std::fgets(line, sizeof line, pipe)) {
        int k;
        char hex[64];
        if (std::sscanf(line, "digest %d %63s", &k, hex) == 2) second[k] = hex;
      }
      pclose(pipe);
    }
    int same = 0;
    std::string differ;
    for (const auto& [k, d] : digests) {
      if (second.count(k) && second[k] == d && d != "error") ++same;
      else differ += " " + std::to_string(k);
    }
    o.pass = !digests.empty() && same == static_cast<int>(digests.size());
    o.summary = std::to_string(same) + "/" + std::to_string(digests.size()) +
                " criteria bit-identical across two executions (config " + ctx.cfg.hash() + ")" +
                (differ.empty() ? "" : "; differing:" + differ);
    o.seconds = since(t0);
    emit(11, o);
  }

  if (!json_path.empty() && !digests_only) {
    report["all_pass"] = all;
    std::ofstream(json_path) << report.dump(2) << "\n";
  }
  return all ? 0 : 1;
}
