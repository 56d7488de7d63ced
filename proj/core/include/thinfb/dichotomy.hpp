#pragma once

// Approximation of solutions by replacements p-bar of homogeneous polynomials,
// the improvement step (either the polynomial improves at the smaller scale or
// the Weiss energy drops), the multi-scale iteration built from it, rate fits,
// and the epiperimetric gap of homogeneous traces.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thinfb/grid.hpp"
#include "thinfb/polyhom.hpp"
#include "thinfb/sphere_layer.hpp"
#include "thinfb/vi_solver.hpp"

namespace thinfb {

struct DichotomyConfig {
  double eps_tilde = 0.1;     // largest admissible e_n
  double r0 = 0.5;            // scale ratio between rungs
  double c_search = 10.0;     // |h|_{L^2(S)} bound in p' = p + e h
  double e0_factor = 1.5;     // e_0 = e0_factor * delta(u, p_0) when not given
  double branch_a_c = 1e-3;   // branch a needs W(rho) - W(r0 rho) >= branch_a_c e^2
  double branch_a_C = 2.0;    // e_{n+1} = branch_a_C e_n on branch a
  double allowance_factor = 10.0;  // Weiss allowances in units of h
  int search_evaluations = 80;     // objective evaluations per improvement search
  bool zoom = true;           // re-solve on each smaller box instead of resampling one grid
  int initial_zooms = 0;      // rescalings by r0 applied before rung 0
  LayerConfig layer;
  ReplaceOptions replace;
  SolverConfig solver;        // used for the zoomed solves
};

// delta(u, p) = max(|u - pbar|_{H^1(B_1)}, kappa_p). The H^1 norm is the nodal
// sum over grid points in the closed unit ball of value^2 plus the squared
// central-difference gradient, times h^d.
struct DeltaReport {
  double delta = 0.0;
  double h1 = 0.0;
  double kappa = 0.0;
  bool in_cone = false;  // p-bar = p, no layer solve needed
};
DeltaReport delta_report(const GridField& u, const HomPoly& p, const DichotomyConfig& cfg = {});
double delta(const GridField& u, const HomPoly& p, const DichotomyConfig& cfg = {});

// delta(u_r, p) < eps with u_r(x) = u(r x) / r^m resampled on the same grid.
bool in_class(const GridField& u, const HomPoly& p, double eps, double r, const DichotomyConfig& cfg = {});

// Discrete H^1(B_1) inner product used by delta.
double h1_inner(const GridField& a, const GridField& b);

enum class Branch { initial, a, b, violation };
const char* to_string(Branch b);

struct ApproxState {
  HomPoly p;
  double eps = 0.0;    // e_n
  double weiss = 0.0;  // w_n = W_m(u; rho_n)
  double scale = 1.0;  // rho_n
  Branch branch = Branch::initial;
  double delta = 0.0;  // delta(u_{rho_n}, p_n) actually measured
  double kappa = 0.0;
};

struct ImproveResult {
  ApproxState next;
  double w_drop = 0.0;         // W_m(u; rho) - W_m(u; r0 rho)
  double best_delta = 0.0;     // min over the search of delta(u_{r0 rho}, p + e h)
  std::vector<double> h;       // best coefficients in the orthonormal basis of P_m
  double step_ratio = 0.0;     // |p' - p|_{L^2(S)} / e
  double c_fit = 0.0;          // w_drop / e^2
  double branch_a_delta = 0.0; // delta(u_{r0 rho}, p) checked against branch_a_C e on branch a
  int evaluations = 0;
  std::string violation;       // nonempty when neither branch is certified
};

// One step. `u` is u_rho and `u_next` is u_{r0 rho}, both on the unit grid.
ImproveResult improve(const GridField& u, const GridField& u_next, const ApproxState& state,
                      const DichotomyConfig& cfg = {});

struct Rung {
  ApproxState state;
  ImproveResult step;          // the step leaving this rung (empty on the last one)
  double weiss_34 = 0.0;       // W_m(u; 3 rho / 4)
  double weiss_eps_ratio = 0.0;  // weiss_34 / e^{2} (odd) or e^{1 + 2/(d-1)} (even)
  bool monotone = true;        // w_n <= w_{n-1} + allowance
};

struct IterationLog {
  std::vector<Rung> rungs;
  HomPoly p_limit;
  bool violated = false;
  std::string stop_reason;
  double max_step_ratio = 0.0;
  double max_weiss_eps_ratio = 0.0;
  double allowance = 0.0;
};

// Next-scale field for the zoomed iteration: solves on the unit box with data
// p(x) + [u - p](r0 x) / r0^m, i.e. u_{r0} with only the remainder interpolated
// (cubic, one-sided across the plane). Interpolation errors in modes of degree
// below m are amplified by r0^{-m} at every level, so the remainder is
// interpolated to fourth order.
GridField zoom_field(const GridField& u, const HomPoly& p, double r0, const SolverConfig& cfg = {});

// Iterates improve() from (p0, e0) until n_max rungs, a violation, or (single
// grid mode) the scale drops below 8h. e0 <= 0 selects e0_factor * delta(u, p0).
IterationLog run_iteration(const GridField& u, const HomPoly& p0, int n_max, double e0 = 0.0,
                           const DichotomyConfig& cfg = {});

struct LinearFit {
  double slope = 0.0, intercept = 0.0;
  double slope_lo = 0.0, slope_hi = 0.0;  // 95% confidence interval
  int points = 0;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct RateReport {
  // Geometric model log e_n = a + n log(ratio); alpha = log(ratio) / log r0.
  double ratio = 0.0;
  double alpha = 0.0, alpha_lo = 0.0, alpha_hi = 0.0;
  // Power model log e_n = b - c log n (n >= 1).
  double c = 0.0, c_lo = 0.0, c_hi = 0.0;
  int rungs = 0;
};
// Needs at least 6 rungs.
RateReport fit_rate(const std::vector<double>& e, double r0);
RateReport fit_rate(const IterationLog& log, double r0);

// Weiss-epsilon comparison for one field: eps = delta(u, p), W_m(u; 3/4).
struct WeissEpsPoint {
  double eps = 0.0;
  double weiss_34 = 0.0;
};
WeissEpsPoint weiss_epsilon(const GridField& u, const HomPoly& p, const DichotomyConfig& cfg = {});
// Exponent 2 for the odd class, 1 + 2/(d-1) for the even class.
double weiss_epsilon_exponent(Parity parity, int dim);
struct WeissEpsFit {
  double constant = 0.0;  // max W / eps^exponent
  double slope = 0.0;     // log-log slope over points with W > 0
  double exponent = 0.0;
};
WeissEpsFit fit_weiss_epsilon(const std::vector<WeissEpsPoint>& pts, Parity parity, int dim);

// Epiperimetric gap for the 2k-homogeneous extension w of a trace on the sphere.
struct EpiResult {
  double w_energy = 0.0;   // W_{2k}(w; 1)
  double u_energy = 0.0;   // W_{2k}(u; 1), u the solution in B_1 with trace w
  double gap = 0.0;
  std::optional<double> ratio;  // gap / W(w;1)^{1 + (d-3)/(d+1)} when W(w;1) > allowance
  double allowance = 0.0;
  double trace_norm = 0.0;
  int iterations = 0;
};
EpiResult epiperimetric_gap(const std::function<double(const Point&)>& trace, int k, const Grid& grid,
                            const SolverConfig& cfg = {}, double allowance_factor = 10.0);

// Random admissible trace for k = 1, d = 3: the sphere restriction of a
// quartic form x_3^2 G(x) + E(x_1, x_2) with G a random quadratic (even in
// x_3) and E = s |x'|^4 + (b . (x_1^2, x_1 x_2, x_2^2))^2 >= 0, so the trace is
// nonnegative on the equator by construction. It is stored by its harmonic
// components of degree 4, 2, 0 and normalized in L^2(S^2).
struct RandomTrace {
  std::vector<HomPoly> parts;  // harmonic components, degrees 0, 2, 4
  HomPoly form;                // the quartic form before normalization
  double scale = 1.0;          // normalization factor
  double eval(const Point& unit) const;
  // W_2 of the 2-homogeneous extension from the spectral formula.
  double weiss_exact() const;
};
RandomTrace random_admissible_trace(std::uint64_t seed, double max_abs_weiss = 1.0);

}  // namespace thinfb
