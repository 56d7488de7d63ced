#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "thinfb/sphere_quadrature.hpp"

namespace thinfb {

// Uniform grid over the box [-R, R]^d with an odd number of nodes per axis,
// so that the obstacle plane {x_d = 0} carries a layer of nodes.
struct Grid {
  int dim = 3;
  int n = 33;
  double half_width = 1.0;

  Grid() = default;
  Grid(int dim, int n, double half_width = 1.0);

  double h() const { return 2.0 * half_width / (n - 1); }
  int plane_index() const { return (n - 1) / 2; }
  std::size_t size() const;
  std::size_t stride(int axis) const;
  // Symmetric about the plane: coord(n - 1 - i) == -coord(i) exactly.
  double coord(int i) const { return (i - plane_index()) * h(); }

  // Multi-index <-> flat index; the last axis (x_d) is fastest.
  std::size_t flat(const std::array<int, 4>& idx) const;
  std::array<int, 4> unflat(std::size_t k) const;
  Point point(std::size_t k) const;
  std::size_t mirror(std::size_t k) const;
  bool on_boundary(std::size_t k) const;
  bool on_plane(std::size_t k) const { return unflat(k)[dim - 1] == plane_index(); }

  void validate() const;
};

struct GridField {
  Grid grid;
  std::vector<double> values;
  bool even = true;

  GridField() = default;
  explicit GridField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}

  double& operator[](std::size_t k) { return values[k]; }
  double operator[](std::size_t k) const { return values[k]; }

  // Multilinear interpolation; x must lie in the box (clamped to it otherwise).
  double interpolate(const Point& x) const;
  // Central-difference gradient at node k (one-sided on the box boundary).
  Point gradient(std::size_t k) const;
  double max_abs() const;
};

// Samples f at every node.
GridField sample(const Grid& g, const std::function<double(const Point&)>& f);

}  // namespace thinfb
