#include "thinfb/grid.hpp"

#include <algorithm>
#include <cmath>

#include "thinfb/error.hpp"

namespace thinfb {

Grid::Grid(int dim_, int n_, double half_width_) : dim(dim_), n(n_), half_width(half_width_) { validate(); }

void Grid::validate() const {
  if (dim != 2 && dim != 3) throw ValidationError("dim", "grids support d in {2, 3}");
  if (n < 5 || n % 2 == 0) throw ValidationError("nodes", "node count per axis must be odd and >= 5");
  if (!(half_width > 0.0)) throw ValidationError("half_width", "box half-width must be positive");
}

std::size_t Grid::size() const {
  std::size_t s = 1;
  for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(n);
  return s;
}

std::size_t Grid::stride(int axis) const {
  std::size_t s = 1;
  for (int i = dim - 1; i > axis; --i) s *= static_cast<std::size_t>(n);
  return s;
}

std::size_t Grid::flat(const std::array<int, 4>& idx) const {
  std::size_t k = 0;
  for (int i = 0; i < dim; ++i) k = k * n + idx[i];
  return k;
}

std::array<int, 4> Grid::unflat(std::size_t k) const {
  std::array<int, 4> idx{};
  for (int i = dim - 1; i >= 0; --i) {
    idx[i] = static_cast<int>(k % n);
    k /= n;
  }
  return idx;
}

Point Grid::point(std::size_t k) const {
  const auto idx = unflat(k);
  Point x{};
  for (int i = 0; i < dim; ++i) x[i] = coord(idx[i]);
  // The plane row is exactly zero.
  if (idx[dim - 1] == plane_index()) x[dim - 1] = 0.0;
  return x;
}

std::size_t Grid::mirror(std::size_t k) const {
  auto idx = unflat(k);
  idx[dim - 1] = n - 1 - idx[dim - 1];
  return flat(idx);
}

bool Grid::on_boundary(std::size_t k) const {
  const auto idx = unflat(k);
  for (int i = 0; i < dim; ++i)
    if (idx[i] == 0 || idx[i] == n - 1) return true;
  return false;
}

double GridField::interpolate(const Point& x) const {
  const int d = grid.dim;
  const double h = grid.h();
  std::array<int, 4> base{};
  std::array<double, 4> frac{};
  for (int i = 0; i < d; ++i) {
    double t = (x[i] + grid.half_width) / h;
    t = std::clamp(t, 0.0, static_cast<double>(grid.n - 1));
    int b = static_cast<int>(std::floor(t));
    b = std::min(b, grid.n - 2);
    base[i] = b;
    frac[i] = t - b;
  }
  double s = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    std::array<int, 4> idx = base;
    for (int i = 0; i < d; ++i) {
      const int bit = (corner >> i) & 1;
      idx[i] += bit;
      w *= bit ? frac[i] : 1.0 - frac[i];
    }
    if (w != 0.0) s += w * values[grid.flat(idx)];
  }
  return s;
}

Point GridField::gradient(std::size_t k) const {
  const auto idx = grid.unflat(k);
  const double h = grid.h();
  Point g{};
  for (int i = 0; i < grid.dim; ++i) {
    const std::size_t s = grid.stride(i);
    if (idx[i] == 0)
      g[i] = (values[k + s] - values[k]) / h;
    else if (idx[i] == grid.n - 1)
      g[i] = (values[k] - values[k - s]) / h;
    else
      g[i] = (values[k + s] - values[k - s]) / (2.0 * h);
  }
  return g;
}

double GridField::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

GridField sample(const Grid& g, const std::function<double(const Point&)>& f) {
  GridField out(g);
  for (std::size_t k = 0; k < g.size(); ++k) out[k] = f(g.point(k));
  return out;
}

}  // namespace thinfb
