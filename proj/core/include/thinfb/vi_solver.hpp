#pragma once

// Thin obstacle problem on a uniform grid:
//
//   Delta u <= 0 in the box, u >= 0 on {x_d = 0},
//   Delta u = 0 where u > 0 or off the plane, u = g on the outer boundary.
//
// Solved as the discrete variational inequality for the 2d+1 point stencil by
// red-black projected SOR on the upper half grid, then reflected evenly.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "thinfb/grid.hpp"

namespace thinfb {

struct SolverConfig {
  double tol = 1e-10;            // KKT residual in h^2-scaled units, relative to max(1, |g|_inf)
  int max_iter = 200000;         // sweeps
  double omega = 0.0;            // <= 0: auto-tune over {1.5, ..., 1.9}
  bool nested = true;            // cascadic initial guess from the grid with (n+1)/2 nodes
  bool zero_initial_guess = true;  // otherwise start from g sampled in the interior
  bool track_energy = false;     // record the discrete energy after every sweep
  int check_every = 10;
  // When set, every node with |x| >= radius is held at g (a ball inside the box).
  std::optional<double> fixed_outside_radius;
};

struct SolverReport {
  int iterations = 0;
  double residual = 0.0;
  double energy = 0.0;
  double omega = 0.0;
  std::vector<std::size_t> active_set;  // plane nodes with u <= contact threshold
  std::vector<double> residual_history;
  std::vector<double> energy_history;
  bool planar_extension = false;        // d = 2 runs are flagged as an extension
};

using BoundaryData = std::function<double(const Point&)>;

struct SolveResult {
  GridField u;
  SolverReport report;
};

SolveResult solve_top(const BoundaryData& g, const Grid& grid, const SolverConfig& cfg = {});

// Complementarity diagnostics of a field, split into the three conditions.
struct ResidualReport {
  double harmonic = 0.0;           // max |A u| at interior off-plane nodes (h^2-scaled)
  double harmonic_unscaled = 0.0;  // the same divided by h^2, i.e. max |Delta_h u|
  double plane_sign = 0.0;         // max(0, -u) on the plane
  double plane_superharmonic = 0.0;  // max(0, Delta_h u) h^2 on the plane
  double complementarity = 0.0;    // max |u * A u| on the plane
  GridField node_residual;         // per-node natural residual
};

// `fixed` marks nodes held by Dirichlet data; boundary nodes are always skipped.
ResidualReport residuals(const GridField& u, const std::vector<char>* fixed = nullptr);

// Discrete Dirichlet energy 1/2 h^{d-2} sum over grid edges of (u_i - u_j)^2.
double dirichlet_energy(const GridField& u);

}  // namespace thinfb
