#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace thinfb {

// Points in R^d for d <= 4. Unused trailing components are zero.
using Point = std::array<double, 4>;

inline double dot(const Point& a, const Point& b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Point& a, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Surface area of the unit sphere S^{d-1}.
double sphere_area(int dim);

// Product quadrature rule on S^{d-1}, d in {2, 3, 4}.
//
// d = 2: `resolution` equispaced angles (exact for trigonometric degree < resolution).
// d = 3: Gauss-Legendre in x_3 times 2*resolution equispaced longitudes.
// d = 4: Gauss-Chebyshev (2nd kind) in x_4 times the d = 3 rule on the slices.
// Weights sum to the sphere area. The rule is symmetric under x_d -> -x_d.
struct SphereQuadrature {
  int dim = 0;
  std::vector<Point> nodes;
  std::vector<double> weights;

  static SphereQuadrature make(int dim, int resolution);

  std::size_t size() const { return nodes.size(); }
};

}  // namespace thinfb
