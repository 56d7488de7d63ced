#include "thinfb/dichotomy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "thinfb/error.hpp"
#include "thinfb/fixtures.hpp"
#include "thinfb/monitors.hpp"
#include "thinfb/rng.hpp"
#include "thinfb/sphere_quadrature.hpp"

namespace thinfb {

namespace {

const LayerGeometry& layer_geometry(int dim, int degree, const LayerConfig& lc) {
  using Key = std::tuple<int, int, int, int, double, double, int>;
  thread_local std::map<Key, LayerGeometry> cache;
  const Key key{dim, degree, lc.band_intervals, lc.longitudes, lc.margin, lc.eta_cap, lc.eta_min_exponent};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, choose_eta(dim, degree, lc)).first;
  return it->second;
}

bool ball_node(const Grid& g, std::size_t k) { return norm(g.point(k), g.dim) <= 1.0 + 1e-12; }

// f on every node within one cell of the unit ball (all that h1_inner reads), zero elsewhere.
GridField ball_sample(const Grid& g, const std::function<double(std::size_t, const Point&)>& f) {
  GridField e(g);
  const double reach = 1.0 + 1.5 * g.h();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point x = g.point(k);
    if (norm(x, g.dim) <= reach) e[k] = f(k, x);
  }
  return e;
}

GridField difference_field(const GridField& u, const std::function<double(const Point&)>& pbar) {
  return ball_sample(u.grid, [&](std::size_t k, const Point& x) { return u[k] - pbar(x); });
}

double weight(const Grid& g) { return std::pow(g.h(), g.dim); }

}  // namespace

double h1_inner(const GridField& a, const GridField& b) {
  const Grid& g = a.grid;
  if (b.grid.n != g.n || b.grid.dim != g.dim) throw ValidationError("field", "grid mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!ball_node(g, k)) continue;
    const Point ga = a.gradient(k), gb = b.gradient(k);
    s += a[k] * b[k] + dot(ga, gb, g.dim);
  }
  return s * weight(g);
}

DeltaReport delta_report(const GridField& u, const HomPoly& p, const DichotomyConfig& cfg) {
  const Grid& g = u.grid;
  if (p.dim() != g.dim) throw ValidationError("poly", "dimension mismatch with the field");
  if (g.half_width < 1.0 - 1e-12) throw ValidationError("field", "grid must contain the unit ball");
  DeltaReport r;
  const ConeMembership cm = cone_check(p);
  r.in_cone = cm.margin >= -1e-13 * std::max(1.0, p.l2_norm());
  GridField e;
  if (r.in_cone) {
    e = difference_field(u, [&](const Point& x) { return p.eval(x); });
  } else {
    ReplaceOptions opts = cfg.replace;
    opts.check_norm = false;
    const ReplacementBundle b = replace(p, layer_geometry(g.dim, p.degree(), cfg.layer), opts);
    r.kappa = b.kappa;
    e = difference_field(u, [&](const Point& x) { return b.pbar_ext(x); });
  }
  r.h1 = std::sqrt(h1_inner(e, e));
  r.delta = std::max(r.h1, r.kappa);
  return r;
}

double delta(const GridField& u, const HomPoly& p, const DichotomyConfig& cfg) {
  return delta_report(u, p, cfg).delta;
}

bool in_class(const GridField& u, const HomPoly& p, double eps, double r, const DichotomyConfig& cfg) {
  if (!(r > 0.0 && r <= 1.0)) throw ValidationError("r", "must lie in (0, 1]");
  if (r == 1.0) return delta(u, p, cfg) < eps;
  return delta(rescale(u, Point{}, r, RescaleMode::homogeneous, p.degree()), p, cfg) < eps;
}

const char* to_string(Branch b) {
  switch (b) {
    case Branch::initial: return "initial";
    case Branch::a: return "a";
    case Branch::b: return "b";
    case Branch::violation: return "violation";
  }
  return "?";
}

ImproveResult improve(const GridField& u, const GridField& u_next, const ApproxState& state,
                      const DichotomyConfig& cfg) {
  const HomPoly& p = state.p;
  const int m = p.degree();
  const double e = state.eps;
  if (!(e > 0.0)) throw ValidationError("eps", "must be positive");
  if (!(e < cfg.eps_tilde)) throw ValidationError("eps", "exceeds eps_tilde");
  const Grid& g = u.grid;

  ImproveResult out;
  out.w_drop = weiss(u, m, 1.0, &p) - weiss(u, m, cfg.r0, &p);
  out.c_fit = out.w_drop / (e * e);

  const std::vector<HomPoly> B = basis(p.dim(), m, p.parity());
  const int nb = static_cast<int>(B.size());
  auto candidate = [&](const std::vector<double>& h) {
    HomPoly q = p;
    for (int j = 0; j < nb; ++j) q += (e * h[j]) * B[j];
    return q;
  };
  auto objective = [&](const std::vector<double>& h) {
    ++out.evaluations;
    return delta_report(u_next, candidate(h), cfg);
  };

  // Least-squares start in the discrete H^1 product, ignoring the layer.
  std::vector<double> h(nb, 0.0);
  bool ls_exact = false;
  if (nb > 0) {
    std::vector<GridField> bf;
    for (const auto& b : B) bf.push_back(ball_sample(g, [&](std::size_t, const Point& x) { return b.eval(x); }));
    const GridField rem = difference_field(u_next, [&](const Point& x) { return p.eval(x); });
    Eigen::MatrixXd G(nb, nb);
    Eigen::VectorXd rhs(nb);
    for (int i = 0; i < nb; ++i) {
      rhs[i] = h1_inner(rem, bf[i]) / e;
      for (int j = 0; j <= i; ++j) G(i, j) = G(j, i) = h1_inner(bf[i], bf[j]);
    }
    const Eigen::VectorXd c = G.ldlt().solve(rhs);
    double nrm = c.norm();
    const double shrink = nrm > cfg.c_search ? cfg.c_search / nrm : 1.0;
    for (int i = 0; i < nb; ++i) h[i] = c[i] * shrink;
    ls_exact = shrink == 1.0;
  }

  auto clip = [&](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    if (s > cfg.c_search)
      for (double& x : v) x *= cfg.c_search / s;
  };

  DeltaReport best = objective(h);
  const std::vector<double> zero(nb, 0.0);
  DeltaReport at_zero = objective(zero);
  if (at_zero.delta < best.delta) {
    best = at_zero;
    h = zero;
  }
  // delta >= H^1 distance, which the unshrunk least-squares point minimizes;
  // if that point lies in the cone no search can do better.
  const bool done = ls_exact && best.in_cone;
  // Coordinate descent with step halving.
  double step = 0.5;
  while (!done && nb > 0 && step > 1e-3 && out.evaluations < cfg.search_evaluations) {
    bool moved = false;
    for (int j = 0; j < nb && out.evaluations < cfg.search_evaluations; ++j) {
      for (double sgn : {1.0, -1.0}) {
        std::vector<double> t = h;
        t[j] += sgn * step;
        clip(t);
        const DeltaReport r = objective(t);
        if (r.delta < best.delta) {
          best = r;
          h = t;
          moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }
  // Quadratic polish along each coordinate.
  for (int j = 0; j < nb && !done; ++j) {
    const double s = std::max(2.0 * step, 1e-3);
    std::vector<double> lo = h, hi = h;
    lo[j] -= s;
    hi[j] += s;
    const double fl = objective(lo).delta, fh = objective(hi).delta, f0 = best.delta;
    const double curv = fl + fh - 2.0 * f0;
    if (curv <= 0.0) continue;
    std::vector<double> t = h;
    t[j] += 0.5 * s * (fl - fh) / curv;
    clip(t);
    const DeltaReport r = objective(t);
    if (r.delta < best.delta) {
      best = r;
      h = t;
    }
  }

  out.h = h;
  out.best_delta = best.delta;
  double hn = 0.0;
  for (double x : h) hn += x * x;
  out.step_ratio = std::sqrt(hn);

  ApproxState next;
  next.scale = state.scale * cfg.r0;
  if (best.delta <= 0.5 * e) {
    next.p = candidate(h);
    next.eps = 0.5 * e;
    next.branch = Branch::b;
    next.delta = best.delta;
    next.kappa = best.kappa;
  } else {
    out.branch_a_delta = at_zero.delta;
    next.p = p;
    next.eps = cfg.branch_a_C * e;
    next.delta = at_zero.delta;
    next.kappa = at_zero.kappa;
    out.step_ratio = 0.0;
    if (out.w_drop >= cfg.branch_a_c * e * e && at_zero.delta < cfg.branch_a_C * e) {
      next.branch = Branch::a;
    } else {
      next.branch = Branch::violation;
      out.violation = "no certified branch: best delta " + std::to_string(best.delta) + " > eps/2 = " +
                      std::to_string(0.5 * e) + ", Weiss drop " + std::to_string(out.w_drop) + " vs c e^2 = " +
                      std::to_string(cfg.branch_a_c * e * e) + ", delta(u_next, p) = " +
                      std::to_string(at_zero.delta) + " vs C e = " + std::to_string(cfg.branch_a_C * e);
    }
  }
  next.weiss = weiss(u_next, m, 1.0, &next.p);
  out.next = next;
  return out;
}

namespace {

// Tensor-product cubic Lagrange interpolation of an even field. The x_d
// stencil stays in the closed upper half so a kink across the plane is not
// smeared; the other axes use centered stencils clamped to the box.
double cubic_even(const GridField& u, const Point& x) {
  const Grid& g = u.grid;
  const int d = g.dim;
  const double h = g.h();
  std::array<std::array<int, 4>, 4> idx{};
  std::array<std::array<double, 4>, 4> w{};
  for (int a = 0; a < d; ++a) {
    const double xa = a == d - 1 ? std::abs(x[a]) : x[a];
    const double t = std::clamp((xa + g.half_width) / h, 0.0, static_cast<double>(g.n - 1));
    const int lo_bound = a == d - 1 ? g.plane_index() : 0;
    int start = static_cast<int>(std::floor(t)) - 1;
    start = std::clamp(start, lo_bound, g.n - 4);
    for (int j = 0; j < 4; ++j) {
      idx[a][j] = start + j;
      double l = 1.0;
      for (int k = 0; k < 4; ++k)
        if (k != j) l *= (t - (start + k)) / static_cast<double>(j - k);
      w[a][j] = l;
    }
  }
  double s = 0.0;
  const int corners = 1 << (2 * d);
  for (int c = 0; c < corners; ++c) {
    std::array<int, 4> node{};
    double wt = 1.0;
    for (int a = 0; a < d; ++a) {
      const int j = (c >> (2 * a)) & 3;
      node[a] = idx[a][j];
      wt *= w[a][j];
    }
    s += wt * u[g.flat(node)];
  }
  return s;
}

}  // namespace

GridField zoom_field(const GridField& u, const HomPoly& p, double r0, const SolverConfig& cfg) {
  const Grid& g = u.grid;
  if (!(r0 > 0.0 && r0 < 1.0)) throw ValidationError("r0", "must lie in (0, 1)");
  if (g.n < 5) throw ValidationError("grid", "zooming needs at least 5 nodes per axis");
  GridField rem = u;
  for (std::size_t k = 0; k < g.size(); ++k) rem[k] -= p.eval(g.point(k));
  const double scale = std::pow(r0, -p.degree());
  const int d = g.dim;
  auto data = [&](const Point& x) {
    Point y{};
    for (int i = 0; i < d; ++i) y[i] = r0 * x[i];
    return p.eval(x) + scale * cubic_even(rem, y);
  };
  return solve_top(data, g, cfg).u;
}

namespace {

double weiss_eps_exponent_impl(Parity parity, int dim) {
  return parity == Parity::odd ? 2.0 : 1.0 + 2.0 / (dim - 1);
}

}  // namespace

double weiss_epsilon_exponent(Parity parity, int dim) { return weiss_eps_exponent_impl(parity, dim); }

IterationLog run_iteration(const GridField& u, const HomPoly& p0, int n_max, double e0, const DichotomyConfig& cfg) {
  if (n_max < 1) throw ValidationError("n", "need at least one rung");
  if (!(cfg.r0 > 0.0 && cfg.r0 < 1.0)) throw ValidationError("r0", "must lie in (0, 1)");
  const Grid& g = u.grid;
  const int m = p0.degree();
  const double expo = weiss_eps_exponent_impl(p0.parity(), g.dim);
  IterationLog log;
  log.allowance = cfg.allowance_factor * g.h();

  if (cfg.initial_zooms < 0) throw ValidationError("initial_zooms", "must be nonnegative");
  GridField cur = u;
  ApproxState state;
  state.p = p0;
  for (int i = 0; i < cfg.initial_zooms; ++i) {
    state.scale *= cfg.r0;
    if (!cfg.zoom && state.scale < 8.0 * g.h()) throw ValidationError("initial_zooms", "below the resolution floor");
    cur = cfg.zoom ? zoom_field(cur, p0, cfg.r0, cfg.solver)
                   : rescale(u, Point{}, state.scale, RescaleMode::homogeneous, m);
  }
  const DeltaReport d0 = delta_report(cur, p0, cfg);
  state.delta = d0.delta;
  state.kappa = d0.kappa;
  state.eps = e0 > 0.0 ? e0 : cfg.e0_factor * d0.delta;
  if (!(state.eps > d0.delta)) throw ValidationError("e0", "u is not in the class S_m(p0, e0, 1)");
  if (!(state.eps < cfg.eps_tilde)) throw ValidationError("e0", "e0 is not below eps_tilde");
  state.weiss = weiss(cur, m, 1.0, &p0);

  for (int n = 0; n < n_max; ++n) {
    Rung rung;
    rung.state = state;
    rung.weiss_34 = weiss(cur, m, 0.75, &state.p);
    rung.weiss_eps_ratio = rung.weiss_34 / std::pow(state.eps, expo);
    if (n > 0) rung.monotone = state.weiss <= log.rungs.back().state.weiss + log.allowance;
    log.max_weiss_eps_ratio = std::max(log.max_weiss_eps_ratio, rung.weiss_eps_ratio);
    if (n + 1 == n_max) {
      log.rungs.push_back(rung);
      log.stop_reason = "rung limit";
      break;
    }
    const double next_scale = state.scale * cfg.r0;
    if (!cfg.zoom && next_scale < 8.0 * g.h()) {
      log.rungs.push_back(rung);
      log.stop_reason = "resolution floor";
      break;
    }
    GridField nxt = cfg.zoom ? zoom_field(cur, state.p, cfg.r0, cfg.solver)
                             : rescale(u, Point{}, next_scale, RescaleMode::homogeneous, m);
    rung.step = improve(cur, nxt, state, cfg);
    log.rungs.push_back(rung);
    if (!rung.step.violation.empty()) {
      log.violated = true;
      log.stop_reason = "dichotomy violation";
      break;
    }
    log.max_step_ratio = std::max(log.max_step_ratio, rung.step.step_ratio);
    state = rung.step.next;
    if (!(state.eps < cfg.eps_tilde)) {
      log.stop_reason = "e_n reached eps_tilde";
      Rung last;
      last.state = state;
      last.monotone = state.weiss <= log.rungs.back().state.weiss + log.allowance;
      log.rungs.push_back(last);
      break;
    }
    cur = std::move(nxt);
  }
  log.p_limit = log.rungs.back().state.p;
  return log;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit", "need at least two points");
  const int n = static_cast<int>(x.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("fit", "abscissae are all equal");
  LinearFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ssr = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ssr += r * r;
    }
    const double se = std::sqrt(ssr / (n - 2) / sxx);
    const boost::math::students_t dist(n - 2);
    const double t = boost::math::quantile(dist, 0.975);
    f.slope_lo = f.slope - t * se;
    f.slope_hi = f.slope + t * se;
  } else {
    f.slope_lo = -std::numeric_limits<double>::infinity();
    f.slope_hi = std::numeric_limits<double>::infinity();
  }
  return f;
}

RateReport fit_rate(const std::vector<double>& e, double r0) {
  if (e.size() < 6) throw ValidationError("rungs", "rate fits need at least 6 rungs");
  if (!(r0 > 0.0 && r0 < 1.0)) throw ValidationError("r0", "must lie in (0, 1)");
  for (double v : e)
    if (!(v > 0.0)) throw ValidationError("e", "rates need positive e_n");
  RateReport r;
  r.rungs = static_cast<int>(e.size());
  std::vector<double> n, le, ln, le1;
  for (std::size_t i = 0; i < e.size(); ++i) {
    n.push_back(static_cast<double>(i));
    le.push_back(std::log(e[i]));
    if (i >= 1) {
      ln.push_back(std::log(static_cast<double>(i)));
      le1.push_back(std::log(e[i]));
    }
  }
  const LinearFit geo = linear_fit(n, le);
  const double lr = std::log(r0);
  r.ratio = std::exp(geo.slope);
  r.alpha = geo.slope / lr;
  r.alpha_lo = geo.slope_hi / lr;
  r.alpha_hi = geo.slope_lo / lr;
  const LinearFit pw = linear_fit(ln, le1);
  r.c = -pw.slope;
  r.c_lo = -pw.slope_hi;
  r.c_hi = -pw.slope_lo;
  return r;
}

RateReport fit_rate(const IterationLog& log, double r0) {
  std::vector<double> e;
  for (const auto& rung : log.rungs) e.push_back(rung.state.eps);
  return fit_rate(e, r0);
}

WeissEpsPoint weiss_epsilon(const GridField& u, const HomPoly& p, const DichotomyConfig& cfg) {
  WeissEpsPoint w;
  w.eps = delta(u, p, cfg);
  w.weiss_34 = weiss(u, p.degree(), 0.75, &p);
  return w;
}

WeissEpsFit fit_weiss_epsilon(const std::vector<WeissEpsPoint>& pts, Parity parity, int dim) {
  WeissEpsFit f;
  f.exponent = weiss_eps_exponent_impl(parity, dim);
  std::vector<double> x, y;
  for (const auto& p : pts) {
    if (!(p.eps > 0.0)) continue;
    f.constant = std::max(f.constant, p.weiss_34 / std::pow(p.eps, f.exponent));
    if (p.weiss_34 > 0.0) {
      x.push_back(p.eps);
      y.push_back(p.weiss_34);
    }
  }
  f.slope = x.size() >= 2 ? loglog_slope(x, y) : std::numeric_limits<double>::quiet_NaN();
  return f;
}

EpiResult epiperimetric_gap(const std::function<double(const Point&)>& trace, int k, const Grid& grid,
                            const SolverConfig& cfg, double allowance_factor) {
  if (k < 1) throw ValidationError("k", "must be at least 1");
  const int d = grid.dim;
  const int m = 2 * k;
  if (grid.half_width < 1.0 - 1e-12) throw ValidationError("grid", "must contain the unit ball");
  // Admissibility: nonnegative on the equator of the sphere.
  if (d == 3) {
    for (int i = 0; i < 720; ++i) {
      const double a = 2.0 * std::numbers::pi * i / 720.0;
      if (trace({std::cos(a), std::sin(a), 0.0, 0.0}) < -1e-12)
        throw ValidationError("trace", "negative on the equator");
    }
  } else if (d == 2) {
    if (trace({1.0, 0.0, 0.0, 0.0}) < -1e-12 || trace({-1.0, 0.0, 0.0, 0.0}) < -1e-12)
      throw ValidationError("trace", "negative on the equator");
  }
  EpiResult r;
  const SphereQuadrature q = SphereQuadrature::make(d, 64);
  double n2 = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) n2 += q.weights[a] * std::pow(trace(q.nodes[a]), 2);
  r.trace_norm = std::sqrt(n2);
  if (std::abs(r.trace_norm - 1.0) > 1e-6) throw ValidationError("trace", "L2(S) norm must be 1");

  auto w = [&](const Point& x) {
    const double rad = norm(x, d);
    if (rad == 0.0) return 0.0;
    Point u{};
    for (int i = 0; i < d; ++i) u[i] = x[i] / rad;
    return std::pow(rad, m) * trace(u);
  };
  const GridField wf = sample(grid, w);
  r.allowance = allowance_factor * grid.h();
  r.w_energy = weiss(wf, m, 1.0);
  if (std::abs(r.w_energy) > 1.0 + r.allowance) throw ValidationError("trace", "|W(w;1)| must be at most 1");
  SolverConfig sc = cfg;
  sc.fixed_outside_radius = 1.0;
  const SolveResult s = solve_top(w, grid, sc);
  r.iterations = s.report.iterations;
  r.u_energy = weiss(s.u, m, 1.0);
  r.gap = r.w_energy - r.u_energy;
  if (r.w_energy > r.allowance) r.ratio = r.gap / std::pow(r.w_energy, 1.0 + (d - 3.0) / (d + 1.0));
  return r;
}

double RandomTrace::eval(const Point& unit) const {
  double s = 0.0;
  for (const auto& p : parts) s += p.eval(unit);
  return scale * s;
}

double RandomTrace::weiss_exact() const {
  // 2-homogeneous extension of a degree-j harmonic Y in d = 3:
  // W_2 = ((4 + j(j+1)) / 5 - 2) |Y|^2.
  double w = 0.0;
  for (const auto& p : parts) {
    const double j = p.degree();
    w += ((4.0 + j * (j + 1.0)) / 5.0 - 2.0) * std::pow(scale * p.l2_norm(), 2);
  }
  return w;
}

namespace {

// Sphere L^2 product of polynomials of different degrees.
double cross_inner(const HomPoly& a, const HomPoly& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.coeffs().size(); ++i) {
    if (a.coeffs()[i] == 0.0) continue;
    for (std::size_t j = 0; j < b.coeffs().size(); ++j) {
      Exponent e{};
      for (int k = 0; k < 4; ++k) e[k] = a.exponents()[i][k] + b.exponents()[j][k];
      s += a.coeffs()[i] * b.coeffs()[j] * sphere_monomial_integral(e, a.dim());
    }
  }
  return s;
}

}  // namespace

RandomTrace random_admissible_trace(std::uint64_t seed, double max_abs_weiss) {
  PortableRng rng(seed);
  auto normal = [&rng] {
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    // A random scale on G spreads W(w; 1) over the admissible range; E alone
    // has most of its mass in degree 0 and so negative energy.
    const double sg = 3.0 * rng.uniform();
    const double g1 = sg * normal(), g2 = sg * normal(), g3 = sg * normal(), g4 = sg * normal();
    const double b1 = normal(), b2 = normal(), b3 = normal();
    const double s = 0.5 * rng.uniform();
    // x_3^2 (g1 x1^2 + g2 x2^2 + g3 x3^2 + g4 x1 x2) + s (x1^2 + x2^2)^2 + (b1 x1^2 + b2 x1 x2 + b3 x2^2)^2
    RandomTrace t;
    t.form = poly_from_terms(3, 4, Parity::even,
                             {{{2, 0, 2, 0}, g1},
                              {{0, 2, 2, 0}, g2},
                              {{0, 0, 4, 0}, g3},
                              {{1, 1, 2, 0}, g4},
                              {{4, 0, 0, 0}, s + b1 * b1},
                              {{0, 4, 0, 0}, s + b3 * b3},
                              {{2, 2, 0, 0}, 2.0 * s + b2 * b2 + 2.0 * b1 * b3},
                              {{3, 1, 0, 0}, 2.0 * b1 * b2},
                              {{1, 3, 0, 0}, 2.0 * b2 * b3}});
    double n2 = 0.0;
    for (int j : {0, 2, 4}) {
      HomPoly part(3, j, Parity::even);
      for (const auto& b : basis(3, j, Parity::even)) part += cross_inner(t.form, b) * b;
      n2 += std::pow(part.l2_norm(), 2);
      t.parts.push_back(part);
    }
    if (!(n2 > 0.0)) continue;
    t.scale = 1.0 / std::sqrt(n2);
    if (std::abs(t.weiss_exact()) <= max_abs_weiss) return t;
  }
  throw ConvergenceError("no admissible trace with |W| <= bound in 1000 draws", {});
}

}  // namespace thinfb
