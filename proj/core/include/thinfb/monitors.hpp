#pragma once

// Monotone quantities of a grid solution: Weiss energy, Almgren frequency,
// rescalings, the contact set, and the pin-down predicate for odd blow-ups.
//
// Ball and shell integrals use a radial Gauss rule times a product rule on the
// sphere. Values and gradients come from the multilinear interpolant of the
// field, so a kink along the plane {x_d = 0} (a grid plane) is represented exactly.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "thinfb/grid.hpp"
#include "thinfb/polyhom.hpp"

namespace thinfb {

// Multilinear interpolant of a grid field together with its cellwise gradient.
// With a reference polynomial p the field is split as p + (u - p): p is
// evaluated exactly and only the remainder is interpolated, so the quadrature
// error scales with the remainder rather than with u.
class FieldSampler {
 public:
  explicit FieldSampler(const GridField& u, const HomPoly* ref = nullptr);
  double value(const Point& x) const;
  // Value and gradient; on a cell face the cell on the positive side is used.
  double value_grad(const Point& x, Point& grad) const;
  const Grid& grid() const { return field_->grid; }

 private:
  const GridField* field_;
  GridField remainder_;
  const HomPoly* ref_ = nullptr;
};

// int_{B_r} |grad u|^2 and int_{dB_r} u^2 (centered at the origin).
double dirichlet_integral(const GridField& u, double r, const HomPoly* ref = nullptr);
double shell_integral_sq(const GridField& u, double r, const HomPoly* ref = nullptr);
// int_{B_r} u^2.
double ball_integral_sq(const GridField& u, double r, const HomPoly* ref = nullptr);

// W_lambda(u; r) = r^{-(d-2+2 lambda)} int_{B_r} |grad u|^2 - lambda r^{-(d-1+2 lambda)} int_{dB_r} u^2.
double weiss(const GridField& u, double lambda, double r, const HomPoly* ref = nullptr);
// N(r) = r int_{B_r} |grad u|^2 / int_{dB_r} u^2.
double almgren(const GridField& u, double r, const HomPoly* ref = nullptr);

// r_max, ..., r_min geometrically spaced (descending).
std::vector<double> geometric_radii(double r_max, double r_min, int count);

struct MonitorSeries {
  std::vector<double> radii;  // descending
  std::vector<double> weiss;
  std::vector<double> frequency;
  double lambda = 0.0;
  std::string quadrature;
};
MonitorSeries monitor_series(const GridField& u, double lambda, const std::vector<double>& radii,
                             const HomPoly* ref = nullptr);

struct WeissStep {
  double r_small = 0.0, r_large = 0.0;
  double increment = 0.0;  // W(r_large) - W(r_small)
  double identity = 0.0;   // int of (2/t) int_{dB_1} (grad u_t . nu - lambda u_t)^2 dt over the same interval
};

struct WeissAudit {
  double allowance = 0.0;
  std::vector<WeissStep> steps;       // consecutive radius pairs
  std::vector<WeissStep> violations;  // steps with increment < -allowance
  double max_identity_residual = 0.0;
};
// `allowance_factor` multiplies h.
WeissAudit weiss_monotonicity_audit(const GridField& u, double lambda, const std::vector<double>& radii,
                                    double allowance_factor = 10.0, const HomPoly* ref = nullptr);

struct RadialChange {
  double lhs = 0.0;  // mean over dB_1 of |u_r - u_s|
  double rhs = 0.0;  // (log(r/s))^{1/2} (W(r) - W(s))^{1/2}
  double w_r = 0.0, w_s = 0.0;
  bool monotone = true;  // W(r) >= W(s) - allowance
};
RadialChange radial_change(const GridField& u, double lambda, double r, double s, double allowance_factor = 10.0);

struct ContactSet {
  std::vector<std::size_t> contact;        // interior plane nodes with u <= zero_tol
  std::vector<std::size_t> free_boundary;  // contact nodes next to a non-contact plane node
  double zero_tol = 0.0;
};
ContactSet extract_contact(const GridField& u);

enum class RescaleMode { normalized, homogeneous };

// Resamples x -> u(q + r x) / scale onto the grid of u. Homogeneous mode uses
// scale = r^m; normalized mode divides by the resampled field's shell norm on
// dB_1, scaled by r^{-(d-1)/2}, so the output has unit L^2 norm on dB_1.
// q must lie on the plane. Nodes mapped outside the box use clamped values.
GridField rescale(const GridField& u, const Point& q, double r, RescaleMode mode, double m = 0.0);

struct PinDown {
  std::vector<std::size_t> nodes;       // plane nodes where u = 0 is predicted
  std::vector<std::size_t> violations;  // predicted nodes with u > zero_tol
  double M = 0.0;
  bool vacuous = false;
};
// For odd-class p: u = 0 on B'_{1 - sqrt(eps)} ∩ {d_d q <= -M sqrt(eps)}.
// Throws ValidationError when u <= p + eps fails on B_1.
PinDown pin_down(const GridField& u, const HomPoly& p, double eps, double M);

// Frozen pin-down constant: one dyadic above the smallest violation-free M on
// the odd suite at n = 65 (0.5).
inline constexpr double kPinDownM = 1.0;

struct PinDownCase {
  std::string label;
  HomPoly p;
  double eps = 0.0;
  GridField u;
};
struct PinDownCalibration {
  std::vector<double> M;                  // 2^k, k = k_min..k_max
  std::vector<std::size_t> violations;    // summed over the suite
  std::vector<std::size_t> predicted;
  std::optional<double> M_cal;            // smallest M with zero violations and some prediction in every case
};
PinDownCalibration calibrate_pin_down(const std::vector<PinDownCase>& suite, int k_min = -3, int k_max = 5);

}  // namespace thinfb
