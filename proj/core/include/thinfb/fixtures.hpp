#pragma once

// Canonical boundary data and polynomials used by the tests, the acceptance
// suite and the command line tool.

#include <string>
#include <vector>

#include "thinfb/monitors.hpp"
#include "thinfb/polyhom.hpp"
#include "thinfb/vi_solver.hpp"

namespace thinfb {

struct Fixture {
  std::string name;
  std::string description;
  int dim = 3;
  double frequency = 0.0;  // expected frequency at the origin
  bool has_poly = false;   // p below is meaningful
  bool exact = false;      // data is itself the solution
  HomPoly p;               // blow-up (or starting) polynomial
  BoundaryData data;
};

// Builds a polynomial of the given class from (exponent, coefficient) pairs.
HomPoly poly_from_terms(int dim, int degree, Parity parity,
                        const std::vector<std::pair<Exponent, double>>& terms);

// Re(x_{d-1} + i|x_d|)^{3/2}.
double u_three_halves(const Point& x, int dim);

std::vector<std::string> fixture_names();
// Throws ValidationError for unknown names or unsupported dimensions.
Fixture make_fixture(const std::string& name, int dim = 3);

// Odd pin-down suite: solves with data p + eps (1 + x_1)/2 for p in {m1, m3}
// and eps in {0.01, 0.02, 0.05}. p + eps is a supersolution, so u <= p + eps.
std::vector<PinDownCase> odd_pin_down_suite(const Grid& grid, const SolverConfig& cfg = {});

}  // namespace thinfb
