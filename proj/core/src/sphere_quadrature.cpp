#include "thinfb/sphere_quadrature.hpp"

#include <cmath>
#include <numbers>

#include "thinfb/error.hpp"

namespace thinfb {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw ValidationError("n", "Gauss-Legendre rule needs at least one node");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const double pi = std::numbers::pi;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

double sphere_area(int dim) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

SphereQuadrature SphereQuadrature::make(int dim, int resolution) {
  if (resolution < 2) throw ValidationError("resolution", "sphere quadrature needs resolution >= 2");
  SphereQuadrature q;
  q.dim = dim;
  const double pi = std::numbers::pi;
  if (dim == 2) {
    const int n = 2 * resolution;
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * pi * (i + 0.5) / n;
      q.nodes.push_back({std::cos(a), std::sin(a), 0.0, 0.0});
      q.weights.push_back(2.0 * pi / n);
    }
    return q;
  }
  if (dim == 3) {
    std::vector<double> z, wz;
    gauss_legendre(resolution, z, wz);
    const int nphi = 2 * resolution;
    for (int j = 0; j < resolution; ++j) {
      const double s = std::sqrt(std::max(0.0, 1.0 - z[j] * z[j]));
      for (int i = 0; i < nphi; ++i) {
        const double a = 2.0 * pi * (i + 0.5) / nphi;
        q.nodes.push_back({s * std::cos(a), s * std::sin(a), z[j], 0.0});
        q.weights.push_back(wz[j] * 2.0 * pi / nphi);
      }
    }
    return q;
  }
  if (dim == 4) {
    const SphereQuadrature inner = make(3, resolution);
    const int nt = resolution;
    for (int k = 1; k <= nt; ++k) {
      const double th = k * pi / (nt + 1);
      const double t = std::cos(th);
      // Gauss-Chebyshev second kind for weight sqrt(1 - t^2).
      const double wt = pi / (nt + 1) * std::sin(th) * std::sin(th);
      const double s = std::sin(th);
      for (std::size_t a = 0; a < inner.size(); ++a) {
        const Point& p = inner.nodes[a];
        q.nodes.push_back({s * p[0], s * p[1], s * p[2], t});
        q.weights.push_back(wt * inner.weights[a]);
      }
    }
    return q;
  }
  throw ValidationError("dim", "sphere quadrature supports d in {2, 3, 4}");
}

}  // namespace thinfb
