#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "thinfb/error.hpp"
#include "thinfb/field_io.hpp"
#include "thinfb/vi_solver.hpp"

using namespace thinfb;

namespace {

// Re(x_{d-1} + i|x_d|)^{3/2}, written in polar form independently of the library.
double u_three_halves(const Point& x, int d) {
  const double a = x[d - 2], b = std::abs(x[d - 1]);
  const double r = std::hypot(a, b);
  if (r == 0.0) return 0.0;
  const double th = std::atan2(b, a);
  return std::pow(r, 1.5) * std::cos(1.5 * th);
}

double max_error(const GridField& u, const std::function<double(const Point&)>& f) {
  double e = 0.0;
  for (std::size_t k = 0; k < u.grid.size(); ++k) e = std::max(e, std::abs(u[k] - f(u.grid.point(k))));
  return e;
}

}  // namespace

TEST_CASE("quadratic in the cone is reproduced and its contact line found") {
  const Grid g(3, 33);
  auto p = [](const Point& x) { return x[0] * x[0] - x[2] * x[2]; };
  const auto res = solve_top(p, g);
  const double h = g.h();
  CHECK(max_error(res.u, p) <= 5.0 * h * h);
  CHECK(res.report.residual <= 1e-10);
  // Interior plane nodes with x1 = 0 and nothing else.
  std::size_t expected = 0;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.on_plane(k) && !g.on_boundary(k) && g.unflat(k)[0] == g.plane_index()) ++expected;
  CHECK(res.report.active_set.size() == expected);
  for (std::size_t k : res.report.active_set) CHECK(g.unflat(k)[0] == g.plane_index());
}

TEST_CASE("zero data gives the zero solution without sweeps") {
  const Grid g(3, 17);
  const auto res = solve_top([](const Point&) { return 0.0; }, g);
  CHECK(res.u.max_abs() == 0.0);
  CHECK(res.report.iterations == 0);
}

TEST_CASE("three-halves solution is reproduced to first order") {
  for (int d : {2, 3}) {
    const Grid g(d, 33);
    auto f = [d](const Point& x) { return u_three_halves(x, d); };
    const auto res = solve_top(f, g);
    CHECK(max_error(res.u, f) <= 5.0 * g.h());
    CHECK(res.report.planar_extension == (d == 2));
  }
}

TEST_CASE("mesh refinement reduces the error by at least 1.7") {
  const int d = 3;
  auto f = [d](const Point& x) { return u_three_halves(x, d); };
  const double e1 = max_error(solve_top(f, Grid(d, 17)).u, f);
  const double e2 = max_error(solve_top(f, Grid(d, 33)).u, f);
  MESSAGE("errors " << e1 << " " << e2 << " ratio " << e1 / e2);
  CHECK(e1 / e2 >= 1.7);
}

TEST_CASE("discrete energy never increases across sweeps") {
  const Grid g(3, 17);
  SolverConfig cfg;
  cfg.track_energy = true;
  cfg.nested = false;
  cfg.omega = 1.8;
  auto f = [](const Point& x) { return u_three_halves(x, 3) + 0.3 * x[0]; };
  const auto res = solve_top(f, g, cfg);
  const auto& e = res.report.energy_history;
  REQUIRE(e.size() > 10);
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] <= e[i - 1] * (1.0 + 1e-14) + 1e-300);
}

TEST_CASE("comparison principle on random ordered data") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const Grid g(2, 17);
  for (int trial = 0; trial < 20; ++trial) {
    double a[6];
    for (double& v : a) v = U(rng);
    const double c = 0.5 * (U(rng) + 1.0);
    auto g1 = [a](const Point& x) {
      const double t = x[1] * x[1];
      return a[0] + a[1] * x[0] + a[2] * t + a[3] * x[0] * t + a[4] * std::sin(3.0 * x[0]) + a[5] * std::cos(2.0 * t);
    };
    auto g2 = [g1, c](const Point& x) { return g1(x) + c * (1.0 + x[0] * x[0]) * (1.0 - 0.5 * x[1] * x[1]); };
    const auto u1 = solve_top(g1, g).u;
    const auto u2 = solve_top(g2, g).u;
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, u1[k] - u2[k]);
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("reflected data gives the reflected solution bit for bit") {
  const Grid g(3, 17);
  auto f = [](const Point& x) { return x[0] + 0.3 * x[1] - 2.0 * x[2] * x[2] + 0.1; };
  auto fr = [f](const Point& x) { return f({x[0], x[1], -x[2], 0.0}); };
  const auto u = solve_top(f, g).u;
  const auto v = solve_top(fr, g).u;
  for (std::size_t k = 0; k < g.size(); ++k) {
    CHECK(u[k] == v[g.mirror(k)]);
    CHECK(u[k] == u[g.mirror(k)]);
  }
}

TEST_CASE("residual diagnostics") {
  const Grid g(3, 17);
  SUBCASE("solved field") {
    const auto res = solve_top([](const Point& x) { return u_three_halves(x, 3); }, g);
    const auto r = residuals(res.u);
    // The tolerance is relative to the data sup-norm, 2^{3/4} here.
    const double tol = 1e-10 * std::pow(2.0, 0.75);
    CHECK(r.harmonic <= tol);
    CHECK(r.plane_sign == 0.0);
    CHECK(r.plane_superharmonic <= tol);
  }
  SUBCASE("sampled quadratic") {
    const auto u = sample(g, [](const Point& x) { return x[0] * x[0] - x[2] * x[2]; });
    const auto r = residuals(u);
    CHECK(r.harmonic <= 1e-10);
    CHECK(r.plane_sign == 0.0);
  }
  SUBCASE("kink across the plane") {
    const auto u = sample(g, [](const Point& x) { return -std::abs(x[2]); });
    const auto r = residuals(u);
    CHECK(r.plane_sign == 0.0);
    CHECK(r.plane_superharmonic == 0.0);
    CHECK(r.complementarity == 0.0);
    // The stencil sees a negative mass 2h / h^2 at every plane node.
    const std::size_t k = g.flat({8, 8, 8, 0});
    CHECK(r.node_residual[k] == 0.0);
  }
}

TEST_CASE("invalid input and exhausted budgets are reported") {
  const Grid g(3, 9);
  CHECK_THROWS_AS(solve_top([](const Point&) { return std::nan(""); }, g), ValidationError);
  CHECK_THROWS_AS(solve_top([](const Point& x) { return x[2]; }, g), ValidationError);
  CHECK_THROWS_AS(Grid(3, 8), ValidationError);
  SolverConfig cfg;
  cfg.max_iter = 3;
  cfg.omega = 1.5;
  try {
    solve_top([](const Point& x) { return u_three_halves(x, 3); }, g, cfg);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& e) {
    CHECK(!e.history().empty());
  }
}

TEST_CASE("binary field round trip keeps bits and the hash") {
  const Grid g(2, 9);
  const auto u = sample(g, [](const Point& x) { return std::sin(x[0]) * std::exp(-x[1] * x[1]); });
  std::stringstream ss;
  write_field(ss, u, 0xabcdefULL);
  const auto back = read_field(ss);
  CHECK(back.field.values == u.values);
  CHECK(back.field.grid.n == 9);
  REQUIRE(back.config_hash.has_value());
  CHECK(*back.config_hash == 0xabcdefULL);

  std::stringstream plain;
  write_field(plain, u);
  CHECK(!read_field(plain).config_hash.has_value());

  std::stringstream csv;
  write_field_csv(csv, u, 0x10ULL);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "# config_hash=10");
  std::getline(csv, line);
  CHECK(line == "x1,x2,u");
}
