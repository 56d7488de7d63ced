#include "thinfb/fixtures.hpp"

#include <cmath>

#include "thinfb/error.hpp"

namespace thinfb {

HomPoly poly_from_terms(int dim, int degree, Parity parity,
                        const std::vector<std::pair<Exponent, double>>& terms) {
  HomPoly p(dim, degree, parity);
  for (const auto& [e, c] : terms) {
    bool found = false;
    for (std::size_t i = 0; i < p.exponents().size(); ++i)
      if (p.exponents()[i] == e) {
        p.coeffs()[i] += c;
        found = true;
      }
    if (!found) throw ValidationError("poly", "monomial outside the class");
  }
  return p;
}

double u_three_halves(const Point& x, int dim) {
  const double a = x[dim - 2], b = std::abs(x[dim - 1]);
  const double r = std::hypot(a, b);
  if (r == 0.0) return 0.0;
  return std::pow(r, 1.5) * std::cos(1.5 * std::atan2(b, a));
}

std::vector<std::string> fixture_names() { return {"u32", "m1", "m2", "m3", "x1x2", "m1p", "m2p"}; }

namespace {

Exponent unit_exp(int dim, std::initializer_list<std::pair<int, int>> powers) {
  Exponent e{};
  for (auto [axis, k] : powers) {
    if (axis >= dim) throw ValidationError("dim", "fixture needs more variables");
    e[axis] = k;
  }
  return e;
}

HomPoly minus_abs_xd(int d) { return poly_from_terms(d, 1, Parity::odd, {{unit_exp(d, {{d - 1, 1}}), -1.0}}); }

HomPoly x1sq_minus_xdsq(int d) {
  return poly_from_terms(d, 2, Parity::even, {{unit_exp(d, {{0, 2}}), 1.0}, {unit_exp(d, {{d - 1, 2}}), -1.0}});
}

// -|x_d| (|x'|^2 - ((d-1)/3) x_d^2).
HomPoly odd_cubic(int d) {
  std::vector<std::pair<Exponent, double>> t;
  for (int i = 0; i < d - 1; ++i) t.push_back({unit_exp(d, {{i, 2}, {d - 1, 1}}), -1.0});
  t.push_back({unit_exp(d, {{d - 1, 3}}), (d - 1) / 3.0});
  return poly_from_terms(d, 3, Parity::odd, t);
}

}  // namespace

Fixture make_fixture(const std::string& name, int dim) {
  if (dim < 2 || dim > 3) throw ValidationError("dim", "fixtures are defined for d = 2, 3");
  Fixture f;
  f.name = name;
  f.dim = dim;
  const int d = dim;
  if (name == "u32") {
    f.description = "Re(x_{d-1} + i|x_d|)^{3/2}";
    f.frequency = 1.5;
    f.exact = true;
    f.data = [d](const Point& x) { return u_three_halves(x, d); };
  } else if (name == "m1") {
    f.description = "-|x_d|";
    f.frequency = 1.0;
    f.has_poly = f.exact = true;
    f.p = minus_abs_xd(d);
  } else if (name == "m2") {
    f.description = "x_1^2 - x_d^2";
    f.frequency = 2.0;
    f.has_poly = f.exact = true;
    f.p = x1sq_minus_xdsq(d);
  } else if (name == "m3") {
    f.description = "-|x_d|(|x'|^2 - ((d-1)/3) x_d^2)";
    f.frequency = 3.0;
    f.has_poly = f.exact = true;
    f.p = odd_cubic(d);
  } else if (name == "x1x2") {
    if (d != 3) throw ValidationError("dim", "x1x2 needs d = 3");
    f.description = "x_1 x_2 (outside the cone)";
    f.frequency = 2.0;
    f.has_poly = true;
    f.p = poly_from_terms(3, 2, Parity::even, {{{1, 1, 0, 0}, 1.0}});
  } else if (name == "m1p") {
    if (d != 3) throw ValidationError("dim", "m1p needs d = 3");
    f.description = "-|x_3| + 0.05 (x_1 + x_1 x_2 + x_2^2 - x_3^2) on the boundary";
    f.frequency = 1.0;
    f.has_poly = true;
    f.p = minus_abs_xd(3);
    f.data = [](const Point& x) {
      return -std::abs(x[2]) + 0.05 * (x[0] + x[0] * x[1] + x[1] * x[1] - x[2] * x[2]);
    };
    return f;
  } else if (name == "m2p") {
    if (d != 3) throw ValidationError("dim", "m2p needs d = 3");
    f.description = "x_1^2 - x_3^2 + 0.05 (x_1^3 - 3 x_1 x_3^2) + 0.05 (x_1^3 x_2 - 3 x_1 x_2 x_3^2)";
    f.frequency = 2.0;
    f.has_poly = f.exact = true;
    f.p = x1sq_minus_xdsq(3);
    f.data = [](const Point& x) {
      const double a = x[0], b = x[1], c = x[2];
      return a * a - c * c + 0.05 * (a * a * a - 3 * a * c * c) + 0.05 * (a * a * a * b - 3 * a * b * c * c);
    };
    return f;
  } else {
    throw ValidationError("fixture", "unknown fixture '" + name + "'");
  }
  if (f.has_poly && !f.data) {
    const HomPoly p = f.p;
    f.data = [p](const Point& x) { return p.eval(x); };
  }
  return f;
}

std::vector<PinDownCase> odd_pin_down_suite(const Grid& grid, const SolverConfig& cfg) {
  std::vector<PinDownCase> out;
  for (const char* name : {"m1", "m3"}) {
    const HomPoly p = make_fixture(name, grid.dim).p;
    for (double eps : {0.01, 0.02, 0.05}) {
      PinDownCase c;
      c.label = std::string(name) + " eps=" + std::to_string(eps).substr(0, 4);
      c.p = p;
      c.eps = eps;
      c.u = solve_top([&](const Point& x) { return p.eval(x) + eps * (1.0 + x[0]) / 2.0; }, grid, cfg).u;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace thinfb
