#include <cmath>
#include <numbers>

#include "doctest.h"
#include "thinfb/error.hpp"
#include "thinfb/fixtures.hpp"
#include "thinfb/monitors.hpp"
#include "thinfb/vi_solver.hpp"

using namespace thinfb;

namespace {

HomPoly make_poly(int dim, int degree, Parity parity, std::initializer_list<std::pair<Exponent, double>> terms) {
  HomPoly p(dim, degree, parity);
  for (const auto& [e, c] : terms) {
    bool found = false;
    for (std::size_t i = 0; i < p.exponents().size(); ++i)
      if (p.exponents()[i] == e) {
        p.coeffs()[i] += c;
        found = true;
      }
    REQUIRE(found);
  }
  return p;
}

GridField sample_poly(const Grid& g, const HomPoly& p) {
  return sample(g, [&](const Point& x) { return p.eval(x); });
}

// For p in P_m: W_lambda(p; r) = (m - lambda) r^{2m - 2 lambda} ||p||^2.
double weiss_oracle(const HomPoly& p, double lambda, double r) {
  const double n = p.l2_norm();
  return (p.degree() - lambda) * std::pow(r, 2.0 * p.degree() - 2.0 * lambda) * n * n;
}

// Quarter turn about the x_d axis: x1 -> x2, x2 -> -x1.
GridField quarter_turn(const GridField& u) {
  GridField out(u.grid);
  const Grid& g = u.grid;
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto idx = g.unflat(k);
    auto src = idx;
    src[0] = idx[1];
    src[1] = g.n - 1 - idx[0];
    out[k] = u[g.flat(src)];
  }
  return out;
}

const HomPoly& x1sq_minus_x3sq() {
  static const HomPoly p = make_poly(3, 2, Parity::even, {{{2, 0, 0, 0}, 1.0}, {{0, 0, 2, 0}, -1.0}});
  return p;
}
const HomPoly& minus_abs_xd() {
  static const HomPoly p = make_poly(3, 1, Parity::odd, {{{0, 0, 1, 0}, -1.0}});
  return p;
}
const HomPoly& odd_cubic() {
  // -x3 (x1^2 + x2^2 - (2/3) x3^2), harmonic and in the odd cone.
  static const HomPoly p = make_poly(3, 3, Parity::odd,
                                     {{{2, 0, 1, 0}, -1.0}, {{0, 2, 1, 0}, -1.0}, {{0, 0, 3, 0}, 2.0 / 3.0}});
  return p;
}

}  // namespace

TEST_CASE("Weiss energy matches the closed form on homogeneous harmonics") {
  const Grid g(3, 33);
  const double h = g.h();
  for (const HomPoly* p : {&x1sq_minus_x3sq(), &minus_abs_xd(), &odd_cubic()}) {
    const GridField u = sample_poly(g, *p);
    const double scale = p->l2_norm() * p->l2_norm();
    for (double r : {0.25, 0.5, 0.75, 1.0}) {
      CHECK(std::abs(weiss(u, p->degree(), r)) <= 2.0 * h * scale);
      for (double lam : {0.5, 1.5, 2.5})
        CHECK(std::abs(weiss(u, lam, r) - weiss_oracle(*p, lam, r)) <= 2.0 * h * scale * std::pow(r, 2 * p->degree() - 2 * lam));
    }
  }
  const GridField zero(g);
  CHECK(weiss(zero, 1.5, 0.5) == 0.0);
}

TEST_CASE("Almgren frequency of homogeneous solutions and a two-degree oracle") {
  const Grid g(3, 65);
  for (const HomPoly* p : {&minus_abs_xd(), &x1sq_minus_x3sq(), &odd_cubic()}) {
    const GridField u = sample_poly(g, *p);
    for (double r : {0.2, 0.4, 0.6, 0.8}) CHECK(std::abs(almgren(u, r) - p->degree()) <= 0.04);
  }
  const GridField u32 = sample(g, [](const Point& x) { return u_three_halves(x, 3); });
  for (double r : {0.2, 0.4, 0.6}) CHECK(std::abs(almgren(u32, r) - 1.5) <= 0.05);

  // u = p + delta z with z of degree 3: N(r) = (2A + 3B r^2) / (A + B r^2).
  const HomPoly& p = x1sq_minus_x3sq();
  const HomPoly z = make_poly(3, 3, Parity::even, {{{3, 0, 0, 0}, 1.0}, {{1, 2, 0, 0}, -3.0}});
  const double delta = 0.5;
  const GridField u = sample(g, [&](const Point& x) { return p.eval(x) + delta * z.eval(x); });
  const double A = std::pow(p.l2_norm(), 2), B = delta * delta * std::pow(z.l2_norm(), 2);
  double prev = 0.0;
  for (double r : {0.2, 0.4, 0.6, 0.8}) {
    const double n = almgren(u, r);
    CHECK(std::abs(n - (2 * A + 3 * B * r * r) / (A + B * r * r)) <= 0.04);
    if (r >= 0.6) CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("monotonicity audit on solved fields and the derivative identity") {
  const Grid g(3, 33);
  const double h = g.h();
  const auto radii = geometric_radii(0.9, 0.25, 16);
  const auto sol = solve_top([](const Point& x) { return u_three_halves(x, 3) + 0.2 * x[0] * x[0] - 0.1 * x[2] * x[2]; }, g);
  for (double lam : {1.5, 2.0}) {
    const WeissAudit a = weiss_monotonicity_audit(sol.u, lam, radii);
    CHECK(a.violations.empty());
    CHECK(a.steps.size() == 15);
    CHECK(a.allowance == doctest::Approx(10 * h));
  }
  // For a smooth field the increment equals the integrated identity up to the
  // interpolation error, which scales like (h / r)^2.
  const GridField u = sample_poly(g, x1sq_minus_x3sq());
  const WeissAudit a = weiss_monotonicity_audit(u, 1.5, radii);
  CHECK(a.violations.empty());
  CHECK(a.max_identity_residual <= 0.5 * (h / 0.25) * (h / 0.25));
  for (const auto& st : a.steps) CHECK(st.increment > 0.0);
}

TEST_CASE("radial change is controlled by the Weiss increment") {
  const Grid g(3, 33);
  const double h = g.h();
  const GridField hom = sample_poly(g, x1sq_minus_x3sq());
  const RadialChange rc = radial_change(hom, 2.0, 0.8, 0.3);
  CHECK(rc.lhs <= h * h / 0.09);
  CHECK(rc.monotone);

  const auto sol = solve_top([](const Point& x) { return u_three_halves(x, 3) + 0.3 * x[0] * x[0] - 0.3 * x[2] * x[2]; }, g);
  for (auto [r, s] : {std::pair{0.9, 0.3}, std::pair{0.6, 0.25}, std::pair{0.9, 0.6}}) {
    const RadialChange c = radial_change(sol.u, 1.5, r, s);
    CHECK(c.monotone);
    CHECK(c.lhs <= c.rhs + 10 * h);
  }
  CHECK_THROWS_AS(radial_change(hom, 2.0, 0.3, 0.8), ValidationError);
}

TEST_CASE("rescalings") {
  const Grid g(3, 33);
  const double h = g.h();
  const GridField u = sample_poly(g, x1sq_minus_x3sq());
  const GridField v = rescale(u, Point{}, 0.5, RescaleMode::homogeneous, 2.0);
  double err = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) err = std::max(err, std::abs(v[k] - u[k]));
  CHECK(err <= 2 * h * h);

  const GridField n1 = rescale(u, Point{}, 0.5, RescaleMode::normalized);
  CHECK(std::abs(shell_integral_sq(n1, 1.0) - 1.0) <= 1e-8);
  const GridField n2 = rescale(n1, Point{}, 1.0, RescaleMode::normalized);
  CHECK(std::abs(shell_integral_sq(n2, 1.0) - 1.0) <= 1e-8);

  // At a free-boundary point of the 3/2 solution the blow-up is the solution itself.
  const GridField u32 = sample(Grid(3, 65), [](const Point& x) { return u_three_halves(x, 3); });
  const GridField b = rescale(u32, Point{0.25, 0.0, 0.0, 0.0}, 0.5, RescaleMode::homogeneous, 1.5);
  double e32 = 0.0;
  for (std::size_t k = 0; k < b.grid.size(); ++k)
    if (norm(b.grid.point(k), 3) <= 1.0) e32 = std::max(e32, std::abs(b[k] - u_three_halves(b.grid.point(k), 3)));
  CHECK(e32 <= 0.05);

  CHECK_THROWS_AS(rescale(u, Point{0.0, 0.0, 0.1, 0.0}, 0.5, RescaleMode::normalized), ValidationError);
  CHECK_THROWS_AS(rescale(u, Point{0.6, 0.0, 0.0, 0.0}, 0.5, RescaleMode::normalized), ValidationError);
}

TEST_CASE("monitors are invariant under quarter turns and exact under scaling by 2") {
  const Grid g(3, 33);
  const auto sol = solve_top([](const Point& x) { return u_three_halves(x, 3) + 0.4 * x[0] * x[1] + 0.1; }, g);
  const GridField rot = quarter_turn(sol.u);
  GridField twice = sol.u;
  for (double& v : twice.values) v *= 2.0;
  for (double r : {0.3, 0.7}) {
    const double w = weiss(sol.u, 1.5, r), n = almgren(sol.u, r);
    CHECK(std::abs(weiss(rot, 1.5, r) - w) <= 1e-12 * std::max(1.0, std::abs(w)));
    CHECK(std::abs(almgren(rot, r) - n) <= 1e-12 * n);
    CHECK(weiss(twice, 1.5, r) == 4.0 * w);
    CHECK(almgren(twice, r) == n);
  }
}

TEST_CASE("contact set of the quadratic solution") {
  const Grid g(3, 33);
  const auto sol = solve_top([](const Point& x) { return x[0] * x[0] - x[2] * x[2]; }, g);
  const ContactSet c = extract_contact(sol.u);
  std::size_t line = 0;
  for (std::size_t k : c.contact) {
    CHECK(std::abs(g.point(k)[0]) < 1e-12);
    ++line;
  }
  CHECK(line == static_cast<std::size_t>(g.n - 2));
  CHECK(c.free_boundary.size() == c.contact.size());
}

TEST_CASE("pin-down on odd fixtures") {
  const Grid g(3, 33);
  const HomPoly& p = minus_abs_xd();
  const auto sol = solve_top([&](const Point& x) { return p.eval(x); }, g);
  const PinDown pd = pin_down(sol.u, p, 0.0, 1.0);
  CHECK_FALSE(pd.vacuous);
  CHECK(pd.violations.empty());
  std::size_t inner = 0;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.on_plane(k) && !g.on_boundary(k) && norm(g.point(k), 3) < 1.0) ++inner;
  CHECK(pd.nodes.size() == inner);

  CHECK(pin_down(sol.u, p, 1.0, 1.0).vacuous);
  // A huge M empties the node set.
  CHECK(pin_down(sol.u, p, 0.01, 1e6).vacuous);
  // Hypothesis u <= p + eps must hold.
  const auto above = solve_top([&](const Point& x) { return p.eval(x) + 0.5; }, g);
  CHECK_THROWS_AS(pin_down(above.u, p, 0.01, 1.0), ValidationError);
  CHECK_THROWS_AS(pin_down(sol.u, x1sq_minus_x3sq(), 0.0, 1.0), ValidationError);
}

TEST_CASE("a reference polynomial removes the interpolation bias of its own part") {
  const Grid g(3, 33);
  const HomPoly& p = x1sq_minus_x3sq();
  const HomPoly z = make_poly(3, 3, Parity::even, {{{3, 0, 0, 0}, 1.0}, {{1, 0, 2, 0}, -3.0}});
  for (double t : {0.1, 0.01}) {
    const GridField u = sample(g, [&](const Point& x) { return p.eval(x) + t * z.eval(x); });
    // W_2(p + t z; r) = t^2 r^2 |z|^2 since the degrees differ.
    const double exact = t * t * 0.75 * 0.75 * std::pow(z.l2_norm(), 2);
    CHECK(std::abs(weiss(u, 2.0, 0.75, &p) - exact) <= 0.05 * exact);
    CHECK(std::abs(almgren(u, 0.75, &p) - almgren(u, 0.75)) <= 0.01);
  }
  const GridField u = sample_poly(g, p);
  CHECK(std::abs(weiss(u, 2.0, 0.5, &p)) <= 1e-12);
  CHECK(std::abs(ball_integral_sq(u, 1.0) - std::pow(p.l2_norm(), 2) / 7.0) <= 1e-3);
}

TEST_CASE("pin-down calibration on the odd suite") {
  const Grid g(3, 33);
  const auto suite = odd_pin_down_suite(g);
  REQUIRE(suite.size() == 6);
  const PinDownCalibration cal = calibrate_pin_down(suite);
  REQUIRE(cal.M_cal.has_value());
  CHECK(*cal.M_cal <= kPinDownM);
  // Violations can only disappear as M grows: the node set shrinks.
  for (std::size_t i = 1; i < cal.M.size(); ++i) CHECK(cal.violations[i] <= cal.violations[i - 1]);
  for (const auto& c : suite) {
    const PinDown pd = pin_down(c.u, c.p, c.eps, kPinDownM);
    CHECK_FALSE(pd.nodes.empty());
    CHECK(pd.violations.empty());
  }
}
