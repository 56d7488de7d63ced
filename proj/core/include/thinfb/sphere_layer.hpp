#pragma once

// The boundary layer L_eta = {|x_d| < eta |x|} on S^{d-1} and the replacement
// of a polynomial p in P_m: the constrained minimizer pbar of
//
//   w -> int |grad_S w|^2 - lambda(m) w^2,  w >= 0 on the equator, w = p off L_eta,
//
// together with the measures it carries on S_eta^+- and on the equator, the
// deficit kappa, the projection phi onto P_m and the correctors H and Phi.
//
// Everything is even in x_d, so only the upper hemisphere is discretized, on a
// latitude-longitude grid whose latitude rows include the equator and S_eta^+.
// In d = 2 the "longitudes" are the two arcs through (+1, 0) and (-1, 0).

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "thinfb/polyhom.hpp"

namespace thinfb {

struct LayerConfig {
  int band_intervals = 16;  // latitude steps between the equator and S_eta^+
  int longitudes = 256;     // d = 3 only
  double margin = 0.5;      // required gap of -Delta_S - lambda above zero on the band
  double eta_cap = 0.5;
  int eta_min_exponent = 12;
};

struct LayerGeometry {
  int dim = 3;
  int degree = 0;
  double lambda = 0.0;
  double eta = 0.5;
  double theta_eta = 0.0;  // asin(eta): latitude of S_eta^+
  int band_intervals = 16;
  int longitudes = 256;
  double certified_eigenvalue = 0.0;  // smallest eigenvalue of -Delta_S - lambda on the band

  int rings() const { return dim == 2 ? 2 : longitudes; }
  double dtheta() const { return theta_eta / band_intervals; }
  double dphi() const;
  // Length element of a ring at latitude theta: cos(theta) dphi in d = 3, 1 in d = 2.
  double ring_measure(double theta) const;
};

// Smallest eigenvalue of -Delta_S on the discretized band |theta| < theta_eta with
// zero data on S_eta^+-. The lowest mode is zonal, so the zonal block is enough.
double band_min_eigenvalue(int dim, double theta_eta, int band_intervals);

// Largest eta in {2^-j} whose band certifies min eig(-Delta_S - lambda) >= margin.
LayerGeometry choose_eta(int dim, int degree, const LayerConfig& cfg = {});

// Values on a latitude-longitude grid of the upper hemisphere (latitudes
// ascending from the equator).
struct SphereField {
  int dim = 3;
  std::vector<double> lat;
  int rings = 0;
  double phi0 = 0.0;
  std::vector<double> values;  // values[j * rings + i]

  double ring_angle(int i) const;
  Point point(int j, int i) const;
  double at(int j, int i) const { return values[static_cast<std::size_t>(j) * rings + i]; }
  double& at(int j, int i) { return values[static_cast<std::size_t>(j) * rings + i]; }
  // Bilinear in (latitude, longitude), even in x_d; zero beyond the last latitude
  // when `zero_outside` is set.
  double interpolate(const Point& unit, bool zero_outside = false) const;
};

struct ReplaceOptions {
  double tol = 1e-12;         // KKT residual, in units of the data
  int psor_sweeps = 4000;     // projected SOR warm start before the active-set polish
  int max_newton = 100;       // active-set (semismooth Newton) iterations
  // Longitude of ring 0. Default: the cone witness of p, so the most violated
  // equator point is a grid node.
  std::optional<double> phi0;
  bool check_norm = true;     // require |p|_{L^2(S)} in [1/2, 4]
};

struct BandDiagnostics {
  int psor_sweeps = 0;
  int newton_iterations = 0;
  double kkt_residual = 0.0;
  double min_pbar_equator = 0.0;
  double max_interior_residual = 0.0;  // |(Delta_S + lambda) pbar| at band nodes off the equator
  double max_equator_excess = 0.0;     // positive part of (Delta_S + lambda) pbar on the equator
  double complementarity = 0.0;        // max |pbar * g| on the equator
};

struct ReplacementBundle {
  HomPoly p;
  LayerGeometry geom;
  SphereField v;                 // band rows 0..K; row K is S_eta^+ where v = 0
  std::vector<double> f;         // density on S_eta^+ per ring
  std::vector<double> g_mass;    // nodal masses of (Delta_S + lambda) pbar on the equator
  std::vector<double> g;         // the same as densities (mass / ring measure)
  double kappa = 0.0;
  double kappa_minus = 0.0;      // mass on S_eta^-, equal to kappa by symmetry
  HomPoly phi;
  SphereField H;                 // upper hemisphere, latitudes 0..pi/2
  double phi_log_coeff = 0.0;    // 1 / (d + 2m - 2)
  double fredholm_residual = 0.0;   // max_j |<f/kappa - phi, p_j>|
  double solvability_defect = 0.0;  // largest discrete kernel correction in the H solve
  double v_sup = 0.0;
  double v_l2_sphere = 0.0;
  double v_grad_sphere = 0.0;    // |grad_S v|_{L^2(S)}
  double v_h1_ball = 0.0;        // H^1(B_1) norm of the m-homogeneous extension
  double energy = 0.0;           // int |grad_S pbar|^2 - lambda pbar^2 over S
  BandDiagnostics diag;

  bool has_correctors() const { return kappa > 0.0; }
  // v and pbar at a unit vector, and their m-homogeneous extensions.
  double v_at(const Point& unit) const;
  double v_ext(const Point& x) const;
  double pbar_ext(const Point& x) const;
  // Points of S_eta^+ (and mirrored S_eta^-) with their arc-length masses.
  SphereMeasure f_measure(bool normalized = true) const;
  double h_min_default() const { return 2.0 * geom.dtheta(); }
};

ReplacementBundle replace(const HomPoly& p, const LayerGeometry& geom, const ReplaceOptions& opts = {});

// Extremes of f / kappa over S_eta^+-; requires kappa > 0.
std::pair<double, double> verify_f_comparability(const ReplacementBundle& b);

struct FamilyPoint {
  double t = 0.0;
  double kappa = 0.0;
  double v_sup = 0.0;
  double v_h1 = 0.0;
};

struct FamilyFit {
  std::vector<FamilyPoint> points;
  double kappa_over_sup_v = 0.0;       // fitted C in kappa <= C sup v (max ratio)
  double slope_kappa_vs_sup = 0.0;     // d log kappa / d log sup v
  double slope_sup_power_vs_kappa = 0.0;  // d log (sup v)^{(d-1)/2} / d log kappa (even class)
  double even_power_constant = 0.0;    // fitted C in (sup v)^{(d-1)/2} <= C kappa
  double slope_h1_vs_kappa = 0.0;      // d log |v|_{H^1} / d log kappa
  double h1_constant = 0.0;            // fitted C in |v|_{H^1} <= C kappa^{exponent}
  double h1_exponent = 0.0;            // 1/2 + 1/(d-1) even, 1/2 odd
  bool consistent = false;
};

FamilyFit verify_kappa_v_bounds(const std::function<HomPoly(double)>& family, const std::vector<double>& ts,
                                const LayerGeometry& geom, const ReplaceOptions& opts = {});

// Phi(x) = H(x/|x|)|x|^m + phi(x/|x|)|x|^m log|x| / (d + 2m - 2) for h_min <= |x| <= 1.
double build_Phi(const ReplacementBundle& b, const Point& x, std::optional<double> h_min = {});

// Both sides of int Phi Delta psi = int_{S_eta^+-} (f/kappa) psi for the bump
// psi = (1 - |x - c|^2 / s^2)^4. The bump must avoid B_{h_min} (and the plane in
// the odd class).
std::pair<double, double> Phi_weak_identity(const ReplacementBundle& b, const Point& center, double radius);

// max |grad Phi| over h_min <= |x| <= 1, sampled on the corrector grid.
double Phi_lipschitz(const ReplacementBundle& b, std::optional<double> h_min = {});

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace thinfb
