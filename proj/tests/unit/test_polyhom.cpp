#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "thinfb/error.hpp"
#include "thinfb/polyhom.hpp"

using namespace thinfb;

namespace {

// Independent oracle: rank of the Laplacian map on the parity class, in doubles.
int laplacian_nullity_bruteforce(int d, int m, Parity par) {
  const auto cols = monomials(d, m, par);
  if (m < 2) return static_cast<int>(cols.size());
  const auto rows = monomials(d, m - 2, par);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows.size(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (int i = 0; i < d; ++i) {
      if (cols[j][i] < 2) continue;
      Exponent b = cols[j];
      b[i] -= 2;
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r] == b) a(r, j) += cols[j][i] * (cols[j][i] - 1);
    }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  return static_cast<int>(cols.size()) - static_cast<int>(lu.rank());
}

// Laplacian of p by central differences (independent of the coefficient map).
double fd_laplacian(const HomPoly& p, const Point& x) {
  const double h = 1e-3;
  double s = 0.0;
  for (int i = 0; i < p.dim(); ++i) {
    Point a = x, b = x;
    a[i] += h;
    b[i] -= h;
    s += (p.eval_q(a) - 2.0 * p.eval_q(x) + p.eval_q(b)) / (h * h);
  }
  return s;
}

Point random_point(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Point x{};
  for (int i = 0; i < d; ++i) x[i] = n(rng);
  return x;
}

HomPoly poly(int d, int m, Parity par, std::map<Exponent, double> terms) {
  HomPoly p(d, m, par);
  for (const auto& [a, c] : terms) {
    for (std::size_t k = 0; k < p.exponents().size(); ++k)
      if (p.exponents()[k] == a) p.coeffs()[k] = c;
  }
  return p;
}

}  // namespace

TEST_CASE("basis: d=3, m=1, odd class is |x_3| normalised") {
  const auto b = basis(3, 1, Parity::odd);
  REQUIRE(b.size() == 1);
  const double c = std::sqrt(3.0 / (4.0 * std::numbers::pi));
  CHECK(b[0].eval({0.0, 0.0, 1.0, 0.0}) == doctest::Approx(c).epsilon(1e-14));
  CHECK(b[0].eval({0.0, 0.0, -2.0, 0.0}) == doctest::Approx(2.0 * c).epsilon(1e-14));
  CHECK(b[0].eval({1.0, 0.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("basis: d=3, m=0, even class is a constant") {
  const auto b = basis(3, 0, Parity::even);
  REQUIRE(b.size() == 1);
  CHECK(b[0].eval({0.3, 0.1, 0.2, 0.0}) == doctest::Approx(1.0 / std::sqrt(4.0 * std::numbers::pi)));
  CHECK(basis(3, 0, Parity::odd).empty());
}

TEST_CASE("basis: d=3, m=2, even class spans x1^2-x3^2, x2^2-x3^2, x1x2") {
  const auto b = basis(3, 2, Parity::even);
  REQUIRE(b.size() == 3);
  CHECK(laplacian_nullity_bruteforce(3, 2, Parity::even) == 3);
  // Each target lies in the span: projection residual vanishes.
  const std::vector<HomPoly> targets = {
      poly(3, 2, Parity::even, {{{2, 0, 0, 0}, 1.0}, {{0, 0, 2, 0}, -1.0}}),
      poly(3, 2, Parity::even, {{{0, 2, 0, 0}, 1.0}, {{0, 0, 2, 0}, -1.0}}),
      poly(3, 2, Parity::even, {{{1, 1, 0, 0}, 1.0}}),
  };
  for (const auto& t : targets) {
    HomPoly r = t;
    for (const auto& e : b) r -= e.inner(t) * e;
    CHECK(r.l2_norm() < 1e-12);
  }
}

TEST_CASE("basis dimensions match spherical harmonics for d <= 4, m <= 8") {
  for (int d = 2; d <= 4; ++d)
    for (int m = 0; m <= 8; ++m) {
      const int ne = static_cast<int>(basis(d, m, Parity::even).size());
      const int no = static_cast<int>(basis(d, m, Parity::odd).size());
      CHECK(ne == laplacian_nullity_bruteforce(d, m, Parity::even));
      CHECK(no == laplacian_nullity_bruteforce(d, m, Parity::odd));
      CHECK(ne + no == spherical_harmonic_dimension(d, m));
    }
}

TEST_CASE("exact nullspace has zero rational Laplacian") {
  for (int d = 2; d <= 4; ++d)
    for (int m = 2; m <= 6; ++m)
      for (Parity par : {Parity::even, Parity::odd}) {
        const auto cols = monomials(d, m, par);
        const auto rows = monomials(d, m - 2, par);
        for (const auto& v : harmonic_nullspace_exact(d, m, par)) {
          std::vector<Rational> lap(rows.size(), Rational(0));
          for (std::size_t j = 0; j < cols.size(); ++j)
            for (int i = 0; i < d; ++i) {
              if (cols[j][i] < 2) continue;
              Exponent b = cols[j];
              b[i] -= 2;
              const auto r = std::find(rows.begin(), rows.end(), b) - rows.begin();
              lap[r] += v[j] * cols[j][i] * (cols[j][i] - 1);
            }
          for (const auto& x : lap) CHECK(x == 0);
        }
      }
}

TEST_CASE("floating basis is harmonic and orthonormal under quadrature") {
  std::mt19937_64 rng(7);
  for (int d = 2; d <= 4; ++d)
    for (int m = 0; m <= 6; ++m)
      for (Parity par : {Parity::even, Parity::odd}) {
        const auto b = basis(d, m, par);
        if (b.empty()) continue;
        const auto quad = SphereQuadrature::make(d, d == 4 ? 12 : 16);
        for (std::size_t i = 0; i < b.size(); ++i) {
          CHECK(b[i].harmonicity_residual() <= 1e-12);
          // Off the plane the represented function is harmonic.
          Point x = random_point(rng, d);
          x[d - 1] = std::abs(x[d - 1]) + 0.5;
          const double nx = norm(x, d);
          for (int k = 0; k < d; ++k) x[k] /= nx;
          CHECK(std::abs(fd_laplacian(b[i], x)) < 1e-4);
          for (std::size_t j = 0; j < b.size(); ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < quad.size(); ++a)
              s += quad.weights[a] * b[i].eval(quad.nodes[a]) * b[j].eval(quad.nodes[a]);
            CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8).scale(1.0));
          }
        }
      }
}

TEST_CASE("Euler identity x.grad p = m p at random points") {
  std::mt19937_64 rng(11);
  for (int d = 2; d <= 4; ++d)
    for (int m = 1; m <= 5; ++m)
      for (Parity par : {Parity::even, Parity::odd}) {
        const auto b = basis(d, m, par);
        if (b.empty()) continue;
        HomPoly p(d, m, par);
        std::normal_distribution<double> n(0.0, 1.0);
        for (const auto& e : b) p += n(rng) * e;
        for (int k = 0; k < 1000 / 30; ++k) {
          const Point x = random_point(rng, d);
          const Point g = p.grad(x);
          const double lhs = dot(x, g, d);
          CHECK(std::abs(lhs - m * p.eval(x)) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        }
      }
}

TEST_CASE("evaluation examples") {
  const auto p = poly(3, 2, Parity::even, {{{2, 0, 0, 0}, 1.0}, {{0, 0, 2, 0}, -1.0}});
  CHECK(p.eval({1.0, 0.0, 0.0, 0.0}) == 1.0);
  const auto q = poly(3, 1, Parity::odd, {{{0, 0, 1, 0}, 1.0}});
  CHECK(q.eval({0.0, 0.0, -2.0, 0.0}) == 2.0);
  const Point g = q.grad({0.0, 0.0, 0.0, 0.0});
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
  CHECK(q.grad({0.0, 0.0, -1.0, 0.0})[2] == -1.0);
  // Evenness in x_d, bit-exact.
  std::mt19937_64 rng(3);
  const auto b = basis(3, 3, Parity::odd);
  for (int k = 0; k < 50; ++k) {
    Point x = random_point(rng, 3), y = x;
    y[2] = -y[2];
    for (const auto& e : b) CHECK(e.eval(x) == e.eval(y));
  }
}

TEST_CASE("projection onto P_m") {
  const auto b = basis(3, 2, Parity::even);
  SUBCASE("idempotent on basis elements") {
    const HomPoly pr = project_to_Pm([&](const Point& x) { return b[1].eval(x); }, 3, 2, Parity::even);
    CHECK((pr - b[1]).l2_norm() < 1e-12);
  }
  SUBCASE("orthogonal data projects to zero") {
    const auto b4 = basis(3, 4, Parity::even);
    const HomPoly pr = project_to_Pm([&](const Point& x) { return b4[2].eval(x); }, 3, 2, Parity::even);
    CHECK(pr.l2_norm() < 1e-12);
  }
  SUBCASE("uniform layer measure projects onto the zonal mode") {
    // Two latitude circles x_3 = +-eta with uniform density.
    const double eta = 0.25, s = std::sqrt(1 - eta * eta);
    SphereMeasure mu;
    mu.dim = 3;
    const int n = 400;
    for (int i = 0; i < n; ++i) {
      const double a = 2 * std::numbers::pi * i / n;
      for (double z : {eta, -eta}) {
        mu.points.push_back({s * std::cos(a), s * std::sin(a), z, 0.0});
        mu.masses.push_back(2 * std::numbers::pi * s / n);
      }
    }
    const HomPoly pr = project_to_Pm(mu, 2, Parity::even);
    CHECK(pr.l2_norm() > 0.1);
    // Oracle: direct quadrature of <mu, p_j> at high resolution against the zonal harmonic.
    const auto zonal = poly(3, 2, Parity::even, {{{2, 0, 0, 0}, 1.0}, {{0, 2, 0, 0}, 1.0}, {{0, 0, 2, 0}, -2.0}});
    double expect = 0.0;
    for (std::size_t a = 0; a < mu.points.size(); ++a) expect += mu.masses[a] * zonal.eval(mu.points[a]);
    expect /= zonal.l2_norm();
    CHECK(pr.inner(zonal) / zonal.l2_norm() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect > 0.0);
    CHECK(std::abs(pr.l2_norm() - std::abs(expect)) < 1e-10);
    // Residual orthogonal to every basis element.
    for (const auto& e : b) {
      double r = 0.0;
      for (std::size_t a = 0; a < mu.points.size(); ++a) r += mu.masses[a] * e.eval(mu.points[a]);
      CHECK(std::abs(r - pr.inner(e)) < 1e-12);
    }
  }
  SUBCASE("empty measure signals quadrature failure") {
    SphereMeasure mu;
    mu.dim = 3;
    CHECK_THROWS_AS(project_to_Pm(mu, 2, Parity::even), QuadratureError);
  }
}

TEST_CASE("cone membership") {
  SUBCASE("x1^2 - x3^2 is in P_2^+ with zero margin") {
    const auto p = poly(3, 2, Parity::even, {{{2, 0, 0, 0}, 1.0}, {{0, 0, 2, 0}, -1.0}});
    const auto c = cone_check(p);
    CHECK(c.is_plus);
    CHECK(std::abs(c.margin) < 1e-12);
    CHECK(std::abs(c.witness[0]) < 1e-6);
  }
  SUBCASE("|x_d| is not admissible, -|x_d| is") {
    const auto q = poly(3, 1, Parity::odd, {{{0, 0, 1, 0}, 1.0}});
    CHECK_FALSE(cone_check(q).is_plus);
    CHECK(cone_check(q).margin == doctest::Approx(-1.0));
    CHECK(cone_check(-q).is_plus);
  }
  SUBCASE("x1 x2 has margin -1/2") {
    const auto p = poly(3, 2, Parity::even, {{{1, 1, 0, 0}, 1.0}});
    const auto c = cone_check(p);
    CHECK_FALSE(c.is_plus);
    CHECK(c.margin == doctest::Approx(-0.5).epsilon(1e-12));
  }
  SUBCASE("d = 2 and d = 4") {
    const auto p2 = poly(2, 2, Parity::even, {{{2, 0, 0, 0}, 1.0}, {{0, 2, 0, 0}, -1.0}});
    CHECK(cone_check(p2).is_plus);
    CHECK(cone_check(-1.0 * p2).margin == doctest::Approx(-1.0));
    const auto p4 = poly(4, 2, Parity::even, {{{1, 0, 1, 0}, 1.0}});
    CHECK(cone_check(p4).margin == doctest::Approx(-0.5).epsilon(1e-10));
  }
}

TEST_CASE("text serialization round trips bit-exactly") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int d = 2; d <= 4; ++d)
    for (int m = 0; m <= 5; ++m)
      for (Parity par : {Parity::even, Parity::odd}) {
        const auto b = basis(d, m, par);
        HomPoly p(d, m, par);
        for (const auto& e : b) p += n(rng) * e;
        const HomPoly back = from_text(to_text(p));
        CHECK(back.dim() == d);
        CHECK(back.degree() == m);
        CHECK(back.parity() == par);
        CHECK(back.coeffs() == p.coeffs());
      }
  CHECK(from_text("0 0 1 : 1/2\n").eval({0, 0, -1, 0}) == 0.5);
  CHECK_THROWS_AS(from_text("0 0 1 1/2\n"), ValidationError);
}
