#pragma once

// Homogeneous harmonic polynomials that are even in x_d.
//
// Two classes share one representation. For the even class the stored
// polynomial q is harmonic with only even powers of x_d and represents p = q.
// For the odd class q is harmonic with only odd powers of x_d, and the
// represented function is p(x', x_d) = q(x', |x_d|): harmonic off the plane,
// zero on it, even in x_d.

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "thinfb/sphere_quadrature.hpp"

namespace thinfb {

enum class Parity { even, odd };

const char* to_string(Parity p);
Parity parity_from_string(const std::string& s);

// Parity class of a degree: even degrees use the even class, odd degrees the odd class.
inline Parity natural_parity(int degree) { return degree % 2 == 0 ? Parity::even : Parity::odd; }

using Exponent = std::array<int, 4>;
using Rational = boost::multiprecision::cpp_rational;

// Degree-m monomials in d variables whose x_d exponent has the given parity,
// in graded lexicographic order (x_1^m first).
std::vector<Exponent> monomials(int dim, int degree, Parity parity);

// Integral of x^alpha over S^{d-1}.
double sphere_monomial_integral(const Exponent& alpha, int dim);

class HomPoly {
 public:
  HomPoly() = default;
  // Zero polynomial of the given class.
  HomPoly(int dim, int degree, Parity parity);
  HomPoly(int dim, int degree, Parity parity, std::vector<double> coeffs);

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  Parity parity() const { return parity_; }
  const std::vector<Exponent>& exponents() const { return exps_; }
  const std::vector<double>& coeffs() const { return coeffs_; }
  std::vector<double>& coeffs() { return coeffs_; }

  // Harmonic representative q at x (no absolute value).
  double eval_q(const Point& x) const;
  // Gradient of q.
  Point grad_q(const Point& x) const;

  // Represented function p; even in x_d for both classes.
  double eval(const Point& x) const;
  // Gradient of p. On the plane the x_d component is the one-sided
  // derivative taken from x_d > 0.
  Point grad(const Point& x) const;

  // Exact coefficient Laplacian of q (degree m - 2, same x_d parity).
  std::vector<double> laplacian_coeffs() const;
  double harmonicity_residual() const;

  // L^2(S^{d-1}) inner product and norm, computed from exact monomial integrals.
  double inner(const HomPoly& other) const;
  double l2_norm() const;

  HomPoly& operator+=(const HomPoly& o);
  HomPoly& operator-=(const HomPoly& o);
  HomPoly& operator*=(double s);
  friend HomPoly operator+(HomPoly a, const HomPoly& b) { return a += b; }
  friend HomPoly operator-(HomPoly a, const HomPoly& b) { return a -= b; }
  friend HomPoly operator*(double s, HomPoly a) { return a *= s; }
  friend HomPoly operator*(HomPoly a, double s) { return a *= s; }
  HomPoly operator-() const { return -1.0 * *this; }

  bool is_zero() const;

 private:
  int dim_ = 0;
  int degree_ = 0;
  Parity parity_ = Parity::even;
  std::vector<Exponent> exps_;
  std::vector<double> coeffs_;
};

// Exact nullspace of the coefficient Laplacian on the parity class, one
// rational vector per free variable of the reduced row echelon form.
std::vector<std::vector<Rational>> harmonic_nullspace_exact(int dim, int degree, Parity parity);

// Orthonormal basis of P_m in L^2(S^{d-1}) (Gram-Schmidt over the exact
// nullspace in canonical monomial order). Empty when the class is empty.
std::vector<HomPoly> basis(int dim, int degree, Parity parity);

// Dimension of degree-m spherical harmonics in d variables.
int spherical_harmonic_dimension(int dim, int degree);

// Coordinates of p in the orthonormal basis and back.
std::vector<double> basis_coordinates(const HomPoly& p);
HomPoly from_basis_coordinates(int dim, int degree, Parity parity, const std::vector<double>& c);

// A finite signed measure on S^{d-1}: atoms with masses.
struct SphereMeasure {
  int dim = 0;
  std::vector<Point> points;
  std::vector<double> masses;
};

// Projection onto P_m of a function, integrated with a product rule at `resolution`.
HomPoly project_to_Pm(const std::function<double(const Point&)>& data, int dim, int degree,
                      Parity parity, int resolution = 48);
// Projection onto P_m of a discrete measure: sum_j <mu, p_j> p_j.
HomPoly project_to_Pm(const SphereMeasure& data, int degree, Parity parity);

struct ConeMembership {
  bool is_plus = false;
  Point witness{};
  double margin = 0.0;
};

// Admissibility of p: even class needs p >= 0 on the equator of S^{d-1};
// odd class needs -d_{x_d} q >= 0 there (superharmonicity of p).
ConeMembership cone_check(const HomPoly& p);

// Text format: a "# thinfb-poly dim=.. degree=.. class=.." header, then one
// line per monomial "e_1 ... e_d : numerator/denominator". Coefficients are
// written as exact dyadic fractions so that the round trip is bit-exact.
void write_text(std::ostream& os, const HomPoly& p);
std::string to_text(const HomPoly& p);
HomPoly read_text(std::istream& is);
HomPoly from_text(const std::string& s);

}  // namespace thinfb
