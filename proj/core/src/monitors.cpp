#include "thinfb/monitors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "thinfb/error.hpp"
#include "thinfb/parallel.hpp"
#include "thinfb/sphere_quadrature.hpp"

namespace thinfb {

FieldSampler::FieldSampler(const GridField& u, const HomPoly* ref) : field_(&u), ref_(ref) {
  if (ref_ == nullptr) return;
  if (ref_->dim() != u.grid.dim) throw ValidationError("ref", "dimension mismatch");
  remainder_ = u;
  for (std::size_t k = 0; k < u.grid.size(); ++k) remainder_[k] -= ref_->eval(u.grid.point(k));
  field_ = &remainder_;
}

double FieldSampler::value(const Point& x) const {
  const double v = field_->interpolate(x);
  return ref_ ? v + ref_->eval(x) : v;
}

double FieldSampler::value_grad(const Point& x, Point& grad) const {
  const GridField& u = *field_;
  const Grid& g = u.grid;
  const int d = g.dim;
  const double h = g.h();
  std::array<int, 4> base{};
  std::array<double, 4> frac{};
  for (int i = 0; i < d; ++i) {
    double t = (x[i] + g.half_width) / h;
    t = std::clamp(t, 0.0, static_cast<double>(g.n - 1));
    int b = std::min(static_cast<int>(std::floor(t)), g.n - 2);
    base[i] = b;
    frac[i] = t - b;
  }
  double val = 0.0;
  grad = Point{};
  for (int corner = 0; corner < (1 << d); ++corner) {
    std::array<int, 4> idx = base;
    std::array<double, 4> w1{};
    for (int i = 0; i < d; ++i) {
      const int bit = (corner >> i) & 1;
      idx[i] += bit;
      w1[i] = bit ? frac[i] : 1.0 - frac[i];
    }
    const double uc = u[g.flat(idx)];
    double w = 1.0;
    for (int i = 0; i < d; ++i) w *= w1[i];
    val += w * uc;
    for (int i = 0; i < d; ++i) {
      double dw = (((corner >> i) & 1) ? 1.0 : -1.0) / h;
      for (int k = 0; k < d; ++k)
        if (k != i) dw *= w1[k];
      grad[i] += dw * uc;
    }
  }
  if (ref_) {
    // One-sided in x_d on the plane, from x_d > 0, matching the cell choice above.
    const Point gp = ref_->grad(x);
    for (int i = 0; i < d; ++i) grad[i] += gp[i];
    val += ref_->eval(x);
  }
  return val;
}

namespace {

// Product rules on S^{d-1}, cached per resolution; resolution kept even so the
// rule maps to itself under quarter turns about the x_d axis.
const SphereQuadrature& sphere_rule(int dim, int res) {
  thread_local std::map<std::pair<int, int>, SphereQuadrature> cache;
  const auto key = std::make_pair(dim, res);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, SphereQuadrature::make(dim, res)).first;
  return it->second;
}

int angular_resolution(double radius, double h, int floor_res) {
  int res = static_cast<int>(std::ceil(std::numbers::pi * radius / h));
  res = std::max(res, floor_res);
  return res + (res % 2);
}

void check_radius(const GridField& u, double r) {
  const double h = u.grid.h();
  if (!(r > 0.0) || r > u.grid.half_width + 1e-12) throw ValidationError("radius", "must lie in (0, half-width]");
  if (r < 4.0 * h - 1e-12) throw ValidationError("radius", "below the resolution limit 4h");
}

// int_{S} F(omega) for the field at radius rho.
template <class F>
double sphere_sum(int dim, int res, F&& f) {
  const auto& q = sphere_rule(dim, res);
  double s = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) s += q.weights[a] * f(q.nodes[a]);
  return s;
}

double dirichlet_integral_unchecked(const FieldSampler& smp, double r) {
  const int d = smp.grid().dim;
  const double h = smp.grid().h();
  const int nr = std::max(8, static_cast<int>(std::ceil(4.0 * r / h)));
  std::vector<double> z, w;
  gauss_legendre(nr, z, w);
  // Per-node partials summed in a fixed order keep the result independent of the thread count.
  std::vector<double> part(nr, 0.0);
  parallel_for(0, nr, [&](int k) {
    const double rho = 0.5 * r * (z[k] + 1.0);
    const double wr = 0.5 * r * w[k] * std::pow(rho, d - 1);
    const int res = angular_resolution(2.0 * rho, h, 8);
    part[k] = wr * sphere_sum(d, res, [&](const Point& om) {
      Point x{}, g{};
      for (int i = 0; i < d; ++i) x[i] = rho * om[i];
      smp.value_grad(x, g);
      return dot(g, g, d);
    });
  });
  double total = 0.0;
  for (double v : part) total += v;
  return total;
}

double shell_integral_unchecked(const FieldSampler& smp, double r) {
  const int d = smp.grid().dim;
  const int res = angular_resolution(2.0 * r, smp.grid().h(), 16);
  return std::pow(r, d - 1) * sphere_sum(d, res, [&](const Point& om) {
           Point x{};
           for (int i = 0; i < d; ++i) x[i] = r * om[i];
           const double v = smp.value(x);
           return v * v;
         });
}

double ball_integral_unchecked(const FieldSampler& smp, double r) {
  const int d = smp.grid().dim;
  const double h = smp.grid().h();
  const int nr = std::max(8, static_cast<int>(std::ceil(4.0 * r / h)));
  std::vector<double> z, w;
  gauss_legendre(nr, z, w);
  double total = 0.0;
  for (int k = 0; k < nr; ++k) {
    const double rho = 0.5 * r * (z[k] + 1.0);
    total += 0.5 * r * w[k] * shell_integral_unchecked(smp, rho);
  }
  return total;
}

double weiss_unchecked(const FieldSampler& smp, double lambda, double r) {
  const int d = smp.grid().dim;
  const double e = dirichlet_integral_unchecked(smp, r);
  const double s = shell_integral_unchecked(smp, r);
  return std::pow(r, -(d - 2 + 2.0 * lambda)) * e - lambda * std::pow(r, -(d - 1 + 2.0 * lambda)) * s;
}

// int_s^r (2/t) int_{dB_1} (grad u_t . nu - lambda u_t)^2 dt.
double derivative_identity(const FieldSampler& smp, double lambda, double s, double r) {
  const int d = smp.grid().dim;
  std::vector<double> z, w;
  gauss_legendre(16, z, w);
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double t = 0.5 * (r + s) + 0.5 * (r - s) * z[k];
    const int res = angular_resolution(2.0 * t, smp.grid().h(), 16);
    const double inner = sphere_sum(d, res, [&](const Point& om) {
      Point x{}, g{};
      for (int i = 0; i < d; ++i) x[i] = t * om[i];
      const double v = smp.value_grad(x, g);
      const double e = t * dot(g, om, d) - lambda * v;
      return e * e;
    });
    total += 0.5 * (r - s) * w[k] * 2.0 * std::pow(t, -1.0 - 2.0 * lambda) * inner;
  }
  return total;
}

}  // namespace

double dirichlet_integral(const GridField& u, double r, const HomPoly* ref) {
  check_radius(u, r);
  return dirichlet_integral_unchecked(FieldSampler(u, ref), r);
}

double shell_integral_sq(const GridField& u, double r, const HomPoly* ref) {
  check_radius(u, r);
  return shell_integral_unchecked(FieldSampler(u, ref), r);
}

double ball_integral_sq(const GridField& u, double r, const HomPoly* ref) {
  check_radius(u, r);
  return ball_integral_unchecked(FieldSampler(u, ref), r);
}

double weiss(const GridField& u, double lambda, double r, const HomPoly* ref) {
  check_radius(u, r);
  return weiss_unchecked(FieldSampler(u, ref), lambda, r);
}

double almgren(const GridField& u, double r, const HomPoly* ref) {
  check_radius(u, r);
  const FieldSampler smp(u, ref);
  const double s = shell_integral_unchecked(smp, r);
  if (!(s > 0.0)) throw ValidationError("field", "vanishing shell norm, frequency undefined");
  return r * dirichlet_integral_unchecked(smp, r) / s;
}

std::vector<double> geometric_radii(double r_max, double r_min, int count) {
  if (!(r_max > r_min) || !(r_min > 0.0) || count < 2) throw ValidationError("radii", "need r_max > r_min > 0 and count >= 2");
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k) out[k] = r_max * std::pow(r_min / r_max, static_cast<double>(k) / (count - 1));
  return out;
}

MonitorSeries monitor_series(const GridField& u, double lambda, const std::vector<double>& radii,
                             const HomPoly* ref) {
  const FieldSampler smp(u, ref);
  MonitorSeries s;
  s.lambda = lambda;
  s.radii = radii;
  std::sort(s.radii.begin(), s.radii.end(), std::greater<>());
  const int d = u.grid.dim;
  for (double r : s.radii) {
    check_radius(u, r);
    const double e = dirichlet_integral_unchecked(smp, r);
    const double sh = shell_integral_unchecked(smp, r);
    s.weiss.push_back(std::pow(r, -(d - 2 + 2.0 * lambda)) * e - lambda * std::pow(r, -(d - 1 + 2.0 * lambda)) * sh);
    s.frequency.push_back(sh > 0.0 ? r * e / sh : std::numeric_limits<double>::quiet_NaN());
  }
  s.quadrature = "radial Gauss (4r/h nodes) x sphere product rule (spacing h/2); multilinear interpolant";
  if (ref) s.quadrature += " of u - ref";
  return s;
}

WeissAudit weiss_monotonicity_audit(const GridField& u, double lambda, const std::vector<double>& radii,
                                    double allowance_factor, const HomPoly* ref) {
  const FieldSampler smp(u, ref);
  std::vector<double> rs = radii;
  std::sort(rs.begin(), rs.end(), std::greater<>());
  WeissAudit a;
  a.allowance = allowance_factor * u.grid.h();
  std::vector<double> w;
  for (double r : rs) {
    check_radius(u, r);
    w.push_back(weiss_unchecked(smp, lambda, r));
  }
  for (std::size_t k = 0; k + 1 < rs.size(); ++k) {
    WeissStep st;
    st.r_large = rs[k];
    st.r_small = rs[k + 1];
    st.increment = w[k] - w[k + 1];
    st.identity = derivative_identity(smp, lambda, st.r_small, st.r_large);
    a.max_identity_residual = std::max(a.max_identity_residual, std::abs(st.increment - st.identity));
    a.steps.push_back(st);
    if (st.increment < -a.allowance) a.violations.push_back(st);
  }
  return a;
}

RadialChange radial_change(const GridField& u, double lambda, double r, double s, double allowance_factor) {
  if (!(s < r)) throw ValidationError("radii", "need s < r");
  check_radius(u, r);
  check_radius(u, s);
  const int d = u.grid.dim;
  RadialChange out;
  out.w_r = weiss(u, lambda, r);
  out.w_s = weiss(u, lambda, s);
  const double allowance = allowance_factor * u.grid.h();
  out.monotone = out.w_r >= out.w_s - allowance;
  const int res = angular_resolution(2.0 * r, u.grid.h(), 16);
  const auto& q = sphere_rule(d, res);
  double num = 0.0, den = 0.0;
  const double cr = std::pow(r, -lambda), cs = std::pow(s, -lambda);
  for (std::size_t a = 0; a < q.size(); ++a) {
    Point xr{}, xs{};
    for (int i = 0; i < d; ++i) {
      xr[i] = r * q.nodes[a][i];
      xs[i] = s * q.nodes[a][i];
    }
    num += q.weights[a] * std::abs(cr * u.interpolate(xr) - cs * u.interpolate(xs));
    den += q.weights[a];
  }
  out.lhs = num / den;
  out.rhs = std::sqrt(std::log(r / s)) * std::sqrt(std::max(0.0, out.w_r - out.w_s));
  return out;
}

ContactSet extract_contact(const GridField& u) {
  const Grid& g = u.grid;
  ContactSet c;
  c.zero_tol = 10.0 * std::numeric_limits<double>::epsilon() * u.max_abs();
  std::vector<char> in(g.size(), 0);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.on_plane(k) && !g.on_boundary(k) && u[k] <= c.zero_tol) {
      in[k] = 1;
      c.contact.push_back(k);
    }
  for (std::size_t k : c.contact) {
    bool edge = false;
    for (int i = 0; i < g.dim - 1 && !edge; ++i)
      for (long s : {-1L, 1L}) {
        const std::size_t nb = k + s * static_cast<long>(g.stride(i));
        if (!g.on_boundary(nb) && !in[nb]) edge = true;
      }
    if (edge) c.free_boundary.push_back(k);
  }
  return c;
}

GridField rescale(const GridField& u, const Point& q, double r, RescaleMode mode, double m) {
  const Grid& g = u.grid;
  const int d = g.dim;
  if (q[d - 1] != 0.0) throw ValidationError("q", "center must lie on the plane");
  if (!(r > 0.0)) throw ValidationError("r", "must be positive");
  for (int i = 0; i < d; ++i)
    if (std::abs(q[i]) + r > g.half_width + 1e-12) throw ValidationError("r", "ball B_r(q) leaves the domain");
  GridField out(g);
  out.even = true;
  const double scale = mode == RescaleMode::homogeneous ? std::pow(r, m) : 1.0;
  const int mid = g.plane_index();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.unflat(k)[d - 1] < mid) continue;
    const Point x = g.point(k);
    Point y{};
    for (int i = 0; i < d; ++i) y[i] = q[i] + r * x[i];
    out[k] = u.interpolate(y) / scale;
  }
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.unflat(k)[d - 1] < mid) out[k] = out[g.mirror(k)];
  if (mode == RescaleMode::normalized) {
    const double s = shell_integral_unchecked(FieldSampler(out), 1.0);
    if (!(s > 0.0)) throw ValidationError("field", "vanishing shell norm, cannot normalize");
    const double inv = 1.0 / std::sqrt(s);
    for (double& v : out.values) v *= inv;
  }
  return out;
}

PinDown pin_down(const GridField& u, const HomPoly& p, double eps, double M) {
  const Grid& g = u.grid;
  const int d = g.dim;
  if (p.parity() != Parity::odd) throw ValidationError("poly", "pin-down applies to the odd class");
  if (p.dim() != d) throw ValidationError("poly", "dimension mismatch");
  if (!(eps >= 0.0)) throw ValidationError("eps", "must be nonnegative");
  if (p.l2_norm() > 4.0) throw ValidationError("poly", "L2(S) norm must be at most 4");
  const double slack = 1e-9 * std::max(1.0, u.max_abs());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point x = g.point(k);
    if (norm(x, d) > 1.0) continue;
    if (u[k] > p.eval(x) + eps + slack) throw ValidationError("u", "hypothesis u <= p + eps fails in B_1");
  }
  PinDown out;
  out.M = M;
  const double se = std::sqrt(eps);
  if (se >= 1.0) {
    out.vacuous = true;
    return out;
  }
  const double zero_tol = 10.0 * std::numeric_limits<double>::epsilon() * u.max_abs();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.on_plane(k) || g.on_boundary(k)) continue;
    const Point x = g.point(k);
    if (norm(x, d) >= 1.0 - se) continue;
    if (p.grad_q(x)[d - 1] > -M * se) continue;
    out.nodes.push_back(k);
    if (u[k] > zero_tol) out.violations.push_back(k);
  }
  out.vacuous = out.nodes.empty();
  return out;
}

PinDownCalibration calibrate_pin_down(const std::vector<PinDownCase>& suite, int k_min, int k_max) {
  if (suite.empty()) throw ValidationError("suite", "empty");
  if (k_max < k_min) throw ValidationError("k_max", "below k_min");
  PinDownCalibration out;
  for (int k = k_min; k <= k_max; ++k) {
    const double M = std::ldexp(1.0, k);
    std::size_t viol = 0, pred = 0;
    bool all_predict = true;
    for (const auto& c : suite) {
      const PinDown pd = pin_down(c.u, c.p, c.eps, M);
      viol += pd.violations.size();
      pred += pd.nodes.size();
      all_predict = all_predict && !pd.nodes.empty();
    }
    out.M.push_back(M);
    out.violations.push_back(viol);
    out.predicted.push_back(pred);
    if (!out.M_cal && viol == 0 && all_predict) out.M_cal = M;
  }
  return out;
}

}  // namespace thinfb
