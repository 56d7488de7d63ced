#include "thinfb/sphere_layer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "thinfb/error.hpp"

namespace thinfb {

namespace {

constexpr double kPi = std::numbers::pi;

double lat_weight(int dim, double theta) { return dim == 3 ? std::cos(theta) : 1.0; }

// Solves a symmetric tridiagonal system in place (no pivoting; callers pass
// definite matrices). diag/off are copied.
std::vector<double> thomas(std::vector<double> diag, std::vector<double> off, std::vector<double> rhs) {
  const std::size_t n = diag.size();
  std::vector<double> up(off.begin(), off.end());
  for (std::size_t i = 1; i < n; ++i) {
    const double w = off[i - 1] / diag[i - 1];
    diag[i] -= w * up[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - up[i] * x[i + 1]) / diag[i];
  return x;
}

// Zonal band operator: stiffness of int w(theta) |v'|^2 and the lumped mass,
// unknowns at latitudes j * dtheta, j = 0..K-1, zero at j = K.
struct ZonalBand {
  std::vector<double> diag, off, mass;
};

ZonalBand zonal_band(int dim, double theta_eta, int K) {
  const double dt = theta_eta / K;
  ZonalBand z;
  z.diag.assign(K, 0.0);
  z.off.assign(K > 1 ? K - 1 : 0, 0.0);
  z.mass.assign(K, 0.0);
  for (int j = 0; j < K; ++j) {
    const double a = lat_weight(dim, (j + 0.5) * dt) / dt;  // edge j -- j+1
    z.diag[j] += a;
    if (j + 1 < K) {
      z.diag[j + 1] += a;
      z.off[j] = -a;
    }
    z.mass[j] = (j == 0 ? 0.5 : 1.0) * lat_weight(dim, j * dt) * dt;
  }
  return z;
}

}  // namespace

double LayerGeometry::dphi() const { return dim == 3 ? 2.0 * kPi / longitudes : 1.0; }

double LayerGeometry::ring_measure(double theta) const {
  return dim == 3 ? std::cos(theta) * dphi() : 1.0;
}

double band_min_eigenvalue(int dim, double theta_eta, int K) {
  if (K < 2) throw ValidationError("band_intervals", "need at least 2 latitude steps");
  const ZonalBand z = zonal_band(dim, theta_eta, K);
  // Inverse power iteration for S y = sigma M y.
  std::vector<double> y(K, 1.0);
  double sigma = 0.0, prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 10000; ++it) {
    std::vector<double> rhs(K);
    for (int j = 0; j < K; ++j) rhs[j] = z.mass[j] * y[j];
    y = thomas(z.diag, z.off, rhs);
    double num = 0.0, den = 0.0;
    for (int j = 0; j < K; ++j) {
      double sy = z.diag[j] * y[j];
      if (j > 0) sy += z.off[j - 1] * y[j - 1];
      if (j + 1 < K) sy += z.off[j] * y[j + 1];
      num += y[j] * sy;
      den += z.mass[j] * y[j] * y[j];
    }
    sigma = num / den;
    const double nrm = std::sqrt(den);
    for (double& v : y) v /= nrm;
    if (std::abs(sigma - prev) <= 1e-14 * sigma) break;
    prev = sigma;
  }
  return sigma;
}

LayerGeometry choose_eta(int dim, int degree, const LayerConfig& cfg) {
  if (dim != 2 && dim != 3) throw ValidationError("dim", "the layer problem supports d in {2, 3}");
  if (degree < 0 || degree > 8) throw ValidationError("degree", "must lie in [0, 8]");
  if (cfg.band_intervals < 2) throw ValidationError("band_intervals", "need at least 2");
  if (dim == 3 && (cfg.longitudes < 8 || cfg.longitudes % 2)) throw ValidationError("longitudes", "need an even count >= 8");
  LayerGeometry g;
  g.dim = dim;
  g.degree = degree;
  g.lambda = degree * (degree + dim - 2.0);
  g.band_intervals = cfg.band_intervals;
  g.longitudes = dim == 3 ? cfg.longitudes : 2;
  for (int j = 1; j <= cfg.eta_min_exponent; ++j) {
    const double eta = std::ldexp(1.0, -j);
    if (eta > cfg.eta_cap) continue;
    const double th = std::asin(eta);
    const double ev = band_min_eigenvalue(dim, th, cfg.band_intervals) - g.lambda;
    g.eta = eta;
    g.theta_eta = th;
    g.certified_eigenvalue = ev;
    if (ev >= cfg.margin) return g;
  }
  return g;  // the smallest candidate
}

// SphereField ---------------------------------------------------------------

double SphereField::ring_angle(int i) const {
  if (dim == 2) return i == 0 ? 0.0 : kPi;
  return phi0 + 2.0 * kPi * i / rings;
}

Point SphereField::point(int j, int i) const {
  const double th = lat[j];
  if (dim == 2) return {(i == 0 ? 1.0 : -1.0) * std::cos(th), std::sin(th), 0.0, 0.0};
  const double a = ring_angle(i);
  return {std::cos(th) * std::cos(a), std::cos(th) * std::sin(a), std::sin(th), 0.0};
}

double SphereField::interpolate(const Point& x, bool zero_outside) const {
  const double xd = std::abs(x[dim - 1]);
  const double rho = dim == 2 ? std::abs(x[0]) : std::hypot(x[0], x[1]);
  const double th = std::atan2(xd, rho);
  if (th > lat.back()) {
    if (zero_outside) return 0.0;
  }
  const double t = std::min(th, lat.back());
  auto it = std::upper_bound(lat.begin(), lat.end(), t);
  int j = static_cast<int>(it - lat.begin()) - 1;
  j = std::clamp(j, 0, static_cast<int>(lat.size()) - 2);
  const double s = (t - lat[j]) / (lat[j + 1] - lat[j]);
  if (dim == 2) {
    const int i = x[0] >= 0.0 ? 0 : 1;
    return (1.0 - s) * at(j, i) + s * at(j + 1, i);
  }
  double a = std::atan2(x[1], x[0]) - phi0;
  const double two_pi = 2.0 * kPi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  const double u = a / (two_pi / rings);
  int i0 = static_cast<int>(std::floor(u));
  const double w = u - i0;
  i0 %= rings;
  const int i1 = (i0 + 1) % rings;
  const double lo = (1.0 - w) * at(j, i0) + w * at(j, i1);
  const double hi = (1.0 - w) * at(j + 1, i0) + w * at(j + 1, i1);
  return (1.0 - s) * lo + s * hi;
}

// Band minimization ---------------------------------------------------------

namespace {

// Quadratic form v^T Q v of the upper-half band energy, in node order j * R + i.
struct BandOperator {
  int K = 0, R = 0, dim = 3;
  std::vector<double> aN;    // coupling j -- j+1
  std::vector<double> aE;    // coupling i -- i+1 along row j (d = 3)
  std::vector<double> mass;  // upper-half cell area of a node in row j
  std::vector<double> diag;  // per row

  BandOperator(const LayerGeometry& g) : K(g.band_intervals), R(g.rings()), dim(g.dim) {
    const double dt = g.dtheta();
    const double A = g.dim == 3 ? g.dphi() : 1.0;
    aN.assign(K, 0.0);
    aE.assign(K, 0.0);
    mass.assign(K, 0.0);
    diag.assign(K, 0.0);
    for (int j = 0; j < K; ++j) {
      const double th = j * dt;
      const double mu = j == 0 ? 0.5 : 1.0;
      aN[j] = A * lat_weight(g.dim, (j + 0.5) * dt) / dt;
      if (g.dim == 3) aE[j] = dt * mu / (g.dphi() * std::cos(th));
      mass[j] = dt * A * mu * lat_weight(g.dim, th);
    }
    for (int j = 0; j < K; ++j)
      diag[j] = aN[j] + (j > 0 ? aN[j - 1] : 0.0) + 2.0 * aE[j] - g.lambda * mass[j];
  }

  std::size_t size() const { return static_cast<std::size_t>(K) * R; }

  // (Q v)_k with v = 0 on row K.
  double apply(const std::vector<double>& v, int j, int i) const {
    const std::size_t k = static_cast<std::size_t>(j) * R + i;
    double s = diag[j] * v[k];
    if (j + 1 < K) s -= aN[j] * v[k + R];
    if (j > 0) s -= aN[j - 1] * v[k - R];
    if (dim == 3) {
      const int ip = (i + 1) % R, im = (i + R - 1) % R;
      s -= aE[j] * (v[static_cast<std::size_t>(j) * R + ip] + v[static_cast<std::size_t>(j) * R + im]);
    }
    return s;
  }

  double off_sum(const std::vector<double>& v, int j, int i) const {
    return diag[j] * v[static_cast<std::size_t>(j) * R + i] - apply(v, j, i);
  }
};

struct BandSolve {
  std::vector<double> v;
  int sweeps = 0;
  int newton = 0;
  double residual = 0.0;
};

// Minimizes v^T Q v - 2 beta^T v subject to v >= lower on row 0.
BandSolve solve_band(const BandOperator& Q, const std::vector<double>& lower, const std::vector<double>& beta,
                     double scale, const ReplaceOptions& opts) {
  const int K = Q.K, R = Q.R;
  BandSolve out;
  out.v.assign(Q.size(), 0.0);
  auto& v = out.v;
  for (int i = 0; i < R; ++i) v[i] = std::max(0.0, lower[i]);

  auto kkt = [&] {
    double r = 0.0;
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < R; ++i) {
        const double g = (Q.apply(v, j, i) - (j == 0 ? beta[i] : 0.0)) / Q.diag[j];
        r = std::max(r, j == 0 ? std::abs(std::min(v[i] - lower[i], g)) : std::abs(g));
      }
    return r;
  };
  const double target = opts.tol * std::max(1.0, scale);

  // Projected SOR warm start.
  const double omega = 1.9;
  double res = kkt();
  while (res > 1e-3 * std::max(target, 1e-9) && out.sweeps < opts.psor_sweeps) {
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < R; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * R + i;
        const double gs = (Q.off_sum(v, j, i) + (j == 0 ? beta[i] : 0.0)) / Q.diag[j];
        double nv = v[k] + omega * (gs - v[k]);
        if (j == 0) nv = std::max(lower[i], nv);
        v[k] = nv;
      }
    ++out.sweeps;
    if (out.sweeps % 20 == 0) res = kkt();
  }

  // Active-set polish: fix v = lower where the unconstrained update would cross
  // it, solve the rest exactly, repeat until the set settles.
  std::vector<char> active(R, 0), prev(R, 2);
  for (out.newton = 0; out.newton < opts.max_newton; ++out.newton) {
    for (int i = 0; i < R; ++i) {
      const double r = Q.apply(v, 0, i) - beta[i];
      active[i] = (r + Q.diag[0] * (lower[i] - v[i]) > 0.0) ? 1 : 0;
    }
    if (active == prev) break;
    prev = active;
    std::vector<int> idx(Q.size(), -1);
    int nfree = 0;
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < R; ++i)
        if (j > 0 || !active[i]) idx[static_cast<std::size_t>(j) * R + i] = nfree++;
    for (int i = 0; i < R; ++i)
      if (active[i]) v[i] = lower[i];
    if (nfree == 0) continue;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree);
    auto couple = [&](std::size_t a, std::size_t b, double w) {
      // Q_ab = -w
      if (idx[a] < 0) return;
      if (idx[b] >= 0)
        trip.emplace_back(idx[a], idx[b], -w);
      else
        rhs[idx[a]] += w * v[b];
    };
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < R; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * R + i;
        if (idx[k] < 0) continue;
        trip.emplace_back(idx[k], idx[k], Q.diag[j]);
        if (j == 0) rhs[idx[k]] += beta[i];
        if (j + 1 < K) couple(k, k + R, Q.aN[j]);
        if (j > 0) couple(k, k - R, Q.aN[j - 1]);
        if (Q.dim == 3) {
          couple(k, static_cast<std::size_t>(j) * R + (i + 1) % R, Q.aE[j]);
          couple(k, static_cast<std::size_t>(j) * R + (i + R - 1) % R, Q.aE[j]);
        }
      }
    Eigen::SparseMatrix<double> A(nfree, nfree);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw Error("band operator is not definite; eta is too large");
    const Eigen::VectorXd sol = ldlt.solve(rhs);
    for (std::size_t k = 0; k < Q.size(); ++k)
      if (idx[k] >= 0) v[k] = sol[idx[k]];
  }
  out.residual = kkt();
  if (out.residual > target)
    throw ConvergenceError("band minimization did not reach the KKT tolerance", {out.residual});
  return out;
}

}  // namespace

double ReplacementBundle::v_at(const Point& unit) const { return v.interpolate(unit, true); }

double ReplacementBundle::v_ext(const Point& x) const {
  const double r = norm(x, geom.dim);
  if (r == 0.0) return 0.0;
  Point u{};
  for (int i = 0; i < geom.dim; ++i) u[i] = x[i] / r;
  return std::pow(r, geom.degree) * v_at(u);
}

double ReplacementBundle::pbar_ext(const Point& x) const { return p.eval(x) + v_ext(x); }

SphereMeasure ReplacementBundle::f_measure(bool normalized) const {
  SphereMeasure mu;
  mu.dim = geom.dim;
  const int K = geom.band_intervals;
  const double ds = geom.ring_measure(geom.theta_eta);
  const double scale = normalized ? 1.0 / kappa : 1.0;
  for (int i = 0; i < geom.rings(); ++i) {
    Point x = v.point(K, i);
    mu.points.push_back(x);
    mu.masses.push_back(f[i] * ds * scale);
    x[geom.dim - 1] = -x[geom.dim - 1];
    mu.points.push_back(x);
    mu.masses.push_back(f[i] * ds * scale);
  }
  return mu;
}

namespace {

// (Delta_S + lambda) H = f/kappa - phi on the upper hemisphere, per Fourier mode.
void solve_corrector(ReplacementBundle& b) {
  const LayerGeometry& g = b.geom;
  const int K = g.band_intervals;
  const double dt = g.dtheta();
  const bool odd = b.p.parity() == Parity::odd;
  const double lam = g.lambda;

  // Latitude nodes: the band rows, then a uniform grid up to the pole (d = 3)
  // or across to the opposite equator point (d = 2).
  std::vector<double> nodes;
  for (int j = 0; j <= K; ++j) nodes.push_back(j * dt);
  const double span = g.dim == 3 ? 0.5 * kPi - g.theta_eta : kPi - 2.0 * g.theta_eta;
  int M = std::max(8, static_cast<int>(std::ceil(span / dt)));
  if (M % 2) ++M;
  for (int j = 1; j <= M; ++j) nodes.push_back(j == M && g.dim == 3 ? 0.5 * kPi : g.theta_eta + span * j / M);
  if (g.dim == 2) {
    for (int j = 1; j <= K; ++j) nodes.push_back(j == K ? kPi : kPi - g.theta_eta + j * dt);
  }
  const int N = static_cast<int>(nodes.size()) - 1;

  std::vector<double> face(N + 2), mass(N + 1), secm(N + 1), tcoef(N);
  face[0] = 0.0;
  for (int j = 0; j < N; ++j) face[j + 1] = 0.5 * (nodes[j] + nodes[j + 1]);
  face[N + 1] = nodes[N];
  for (int j = 0; j <= N; ++j) {
    if (g.dim == 3) {
      mass[j] = std::sin(face[j + 1]) - std::sin(face[j]);
      auto gd = [](double t) { return std::log(1.0 / std::cos(t) + std::tan(t)); };
      secm[j] = j == N ? std::numeric_limits<double>::infinity() : gd(face[j + 1]) - gd(face[j]);
    } else {
      mass[j] = face[j + 1] - face[j];
      secm[j] = 0.0;
    }
  }
  for (int j = 0; j < N; ++j) tcoef[j] = lat_weight(g.dim, face[j + 1]) / (nodes[j + 1] - nodes[j]);

  const int R = g.dim == 3 ? g.rings() : 1;
  const int kmax = g.dim == 3 ? R / 2 : 0;

  // Right-hand sides per latitude node, one entry per ring (d = 3) or along the line (d = 2).
  SphereField H;
  H.dim = g.dim;
  H.phi0 = b.v.phi0;
  H.rings = g.rings();
  std::vector<std::vector<double>> phi_vals(N + 1, std::vector<double>(R));
  std::vector<double> f_line(g.rings(), 0.0);
  auto line_point = [&](int j, int i) -> Point {
    const double th = nodes[j];
    if (g.dim == 2) return {std::cos(th), std::sin(th), 0.0, 0.0};
    const double a = H.phi0 + 2.0 * kPi * i / R;
    return {std::cos(th) * std::cos(a), std::cos(th) * std::sin(a), std::sin(th), 0.0};
  };
  for (int j = 0; j <= N; ++j)
    for (int i = 0; i < R; ++i) phi_vals[j][i] = b.phi.eval(line_point(j, i));
  for (int i = 0; i < g.rings(); ++i) f_line[i] = b.f[i] / b.kappa;

  // Real DFT tables.
  std::vector<double> ctab(R), stab(R);
  for (int i = 0; i < R; ++i) {
    ctab[i] = std::cos(2.0 * kPi * i / R);
    stab[i] = std::sin(2.0 * kPi * i / R);
  }
  auto coeff = [&](const std::vector<double>& x, int k, bool sine) {
    double s = 0.0;
    for (int i = 0; i < R; ++i) {
      const int t = static_cast<int>((static_cast<long long>(k) * i) % R);
      s += x[i] * (sine ? stab[t] : ctab[t]);
    }
    const double w = (k == 0 || 2 * k == R) ? 1.0 / R : 2.0 / R;
    return s * w;
  };

  std::vector<std::vector<double>> Hval(N + 1, std::vector<double>(R, 0.0));
  double defect = 0.0;

  for (int k = 0; k <= kmax; ++k) {
    const int j0 = odd ? 1 : 0;
    const int j1 = (g.dim == 2) ? (odd ? N - 1 : N) : (k >= 1 ? N - 1 : N);
    const int n = j1 - j0 + 1;
    // Symmetric tridiagonal L.
    std::vector<double> dg(n), of(n > 0 ? n - 1 : 0);
    for (int j = j0; j <= j1; ++j) {
      double d = lam * mass[j] - (k > 0 ? static_cast<double>(k) * k * secm[j] : 0.0);
      if (j < N) d -= tcoef[j];
      if (j > 0) d -= tcoef[j - 1];
      dg[j - j0] = d;
      if (j < j1) of[j - j0] = tcoef[j];
    }
    // Kernel check on the mass-scaled matrix.
    Eigen::VectorXd z;
    bool bordered = false;
    if (k <= g.degree + 1) {
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
      for (int a = 0; a < n; ++a) {
        const double ma = std::sqrt(mass[a + j0]);
        B(a, a) = dg[a] / (ma * ma);
        if (a + 1 < n) {
          const double v = of[a] / (ma * std::sqrt(mass[a + 1 + j0]));
          B(a, a + 1) = v;
          B(a + 1, a) = v;
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
      int best = 0;
      for (int a = 1; a < n; ++a)
        if (std::abs(es.eigenvalues()[a]) < std::abs(es.eigenvalues()[best])) best = a;
      if (std::abs(es.eigenvalues()[best]) < 0.5) {
        bordered = true;
        z = es.eigenvectors().col(best);
        for (int a = 0; a < n; ++a) z[a] /= std::sqrt(mass[a + j0]);
      }
    }
    const int nsines = (g.dim == 3 && k > 0 && 2 * k != R) ? 2 : 1;
    for (int comp = 0; comp < nsines; ++comp) {
      const bool sine = comp == 1;
      Eigen::VectorXd rhs(n);
      for (int j = j0; j <= j1; ++j) {
        const double pk = g.dim == 3 ? coeff(phi_vals[j], k, sine) : phi_vals[j][0];
        double r = -mass[j] * pk;
        if (g.dim == 3) {
          if (j == K) r += std::cos(g.theta_eta) * coeff(f_line, k, sine);
        } else {
          if (j == K) r += f_line[0];
          if (j == N - K) r += f_line[1];
        }
        rhs[j - j0] = r;
      }
      Eigen::VectorXd sol;
      if (bordered) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
        for (int a = 0; a < n; ++a) {
          A(a, a) = dg[a];
          if (a + 1 < n) A(a, a + 1) = A(a + 1, a) = of[a];
          const double mz = mass[a + j0] * z[a];
          A(a, n) = mz;
          A(n, a) = mz;
        }
        Eigen::VectorXd r2(n + 1);
        r2.head(n) = rhs;
        r2[n] = 0.0;
        const Eigen::VectorXd s2 = A.fullPivLu().solve(r2);
        sol = s2.head(n);
        double zn = 0.0;
        for (int a = 0; a < n; ++a) zn = std::max(zn, std::abs(z[a]));
        defect = std::max(defect, std::abs(s2[n]) * zn);
      } else if (k > g.degree + 1) {
        std::vector<double> d2(n), o2(of.size()), r2(n);
        for (int a = 0; a < n; ++a) {
          d2[a] = -dg[a];
          r2[a] = -rhs[a];
        }
        for (std::size_t a = 0; a < of.size(); ++a) o2[a] = -of[a];
        const auto x = thomas(d2, o2, r2);
        sol = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
      } else {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        for (int a = 0; a < n; ++a) {
          A(a, a) = dg[a];
          if (a + 1 < n) A(a, a + 1) = A(a + 1, a) = of[a];
        }
        sol = A.partialPivLu().solve(rhs);
      }
      for (int j = j0; j <= j1; ++j)
        for (int i = 0; i < R; ++i) {
          const int t = static_cast<int>((static_cast<long long>(k) * i) % R);
          const double basis_val = g.dim == 3 ? (sine ? stab[t] : ctab[t]) : 1.0;
          Hval[j][i] += sol[j - j0] * basis_val;
        }
    }
  }
  b.solvability_defect = defect;

  if (g.dim == 3) {
    H.lat = nodes;
    H.values.assign(static_cast<std::size_t>(N + 1) * R, 0.0);
    for (int j = 0; j <= N; ++j)
      for (int i = 0; i < R; ++i) H.at(j, i) = Hval[j][i];
  } else {
    // Fold the arc [0, pi] into two rings meeting at the pole.
    const int half = N / 2;
    H.lat.assign(nodes.begin(), nodes.begin() + half + 1);
    H.values.assign(static_cast<std::size_t>(half + 1) * 2, 0.0);
    for (int j = 0; j <= half; ++j) {
      H.at(j, 0) = Hval[j][0];
      H.at(j, 1) = Hval[N - j][0];
    }
  }
  b.H = std::move(H);
}

}  // namespace

ReplacementBundle replace(const HomPoly& p, const LayerGeometry& geom, const ReplaceOptions& opts) {
  const int d = geom.dim;
  const int m = geom.degree;
  if (d != 2 && d != 3) throw ValidationError("dim", "the layer problem supports d in {2, 3}");
  if (p.dim() != d || p.degree() != m) throw ValidationError("poly", "dimension or degree does not match the layer");
  if (p.parity() != natural_parity(m)) throw ValidationError("poly", "class must match the parity of the degree");
  if (geom.band_intervals < 2) throw ValidationError("band_intervals", "need at least 2");
  const double pn = p.l2_norm();
  if (opts.check_norm && (pn < 0.5 || pn > 4.0))
    throw ValidationError("poly", "L2(S) norm must lie in [1/2, 4]");

  ReplacementBundle b;
  b.p = p;
  b.geom = geom;
  b.phi_log_coeff = 1.0 / (d + 2.0 * m - 2.0);
  const bool odd = p.parity() == Parity::odd;
  const int K = geom.band_intervals, R = geom.rings();
  const double dt = geom.dtheta();

  double phi0 = 0.0;
  if (opts.phi0) {
    phi0 = *opts.phi0;
  } else if (d == 3) {
    const ConeMembership c = cone_check(p);
    if (c.margin < 0.0) phi0 = std::atan2(c.witness[1], c.witness[0]);
  }

  b.v.dim = d;
  b.v.rings = R;
  b.v.phi0 = phi0;
  for (int j = 0; j <= K; ++j) b.v.lat.push_back(j * dt);
  b.v.values.assign(static_cast<std::size_t>(K + 1) * R, 0.0);

  std::vector<double> lower(R), beta(R, 0.0), peq(R);
  const double ds0 = geom.ring_measure(0.0);
  double scale = 0.0;
  for (int i = 0; i < R; ++i) {
    const Point x = b.v.point(0, i);
    peq[i] = p.eval(x);
    lower[i] = odd ? 0.0 : -peq[i];
    if (odd) beta[i] = p.grad_q(x)[d - 1] * ds0;
    scale = std::max(scale, std::abs(peq[i]));
  }
  for (int j = 0; j <= K; ++j)
    for (int i = 0; i < R; ++i) scale = std::max(scale, std::abs(p.eval(b.v.point(j, i))));

  const BandOperator Q(geom);
  const BandSolve bs = solve_band(Q, lower, beta, scale, opts);
  for (std::size_t k = 0; k < Q.size(); ++k) b.v.values[k] = bs.v[k];
  b.diag.psor_sweeps = bs.sweeps;
  b.diag.newton_iterations = bs.newton;
  b.diag.kkt_residual = bs.residual;

  // Measures.
  b.f.assign(R, 0.0);
  for (int i = 0; i < R; ++i) b.f[i] = (4.0 * b.v.at(K - 1, i) - b.v.at(K - 2, i)) / (2.0 * dt);
  const double dsK = geom.ring_measure(geom.theta_eta);
  double kappa = 0.0;
  for (int i = 0; i < R; ++i) kappa += b.f[i] * dsK;
  b.g_mass.assign(R, 0.0);
  b.g.assign(R, 0.0);
  b.diag.min_pbar_equator = std::numeric_limits<double>::infinity();
  for (int i = 0; i < R; ++i) {
    b.g_mass[i] = -2.0 * (Q.apply(bs.v, 0, i) - beta[i]);
    b.g[i] = b.g_mass[i] / ds0;
    const double pb = peq[i] + bs.v[i];
    b.diag.min_pbar_equator = std::min(b.diag.min_pbar_equator, pb);
    b.diag.max_equator_excess = std::max(b.diag.max_equator_excess, std::max(0.0, b.g[i]));
    b.diag.complementarity = std::max(b.diag.complementarity, std::abs(pb * b.g[i]));
  }
  for (int j = 1; j < K; ++j)
    for (int i = 0; i < R; ++i)
      b.diag.max_interior_residual =
          std::max(b.diag.max_interior_residual, std::abs(Q.apply(bs.v, j, i)) / Q.mass[j]);

  // Norms of v on the sphere and of its homogeneous extension.
  double l2 = 0.0, grad = 0.0, vsup = 0.0;
  for (int j = 0; j < K; ++j)
    for (int i = 0; i < R; ++i) {
      const double vv = b.v.at(j, i);
      vsup = std::max(vsup, vv);
      l2 += Q.mass[j] * vv * vv;
      const double dn = b.v.at(j + 1, i) - vv;
      grad += Q.aN[j] * dn * dn;
      if (d == 3) {
        const double de = b.v.at(j, (i + 1) % R) - vv;
        grad += Q.aE[j] * de * de;
      }
    }
  l2 *= 2.0;
  grad *= 2.0;
  b.v_sup = vsup;
  b.v_l2_sphere = std::sqrt(l2);
  b.v_grad_sphere = std::sqrt(grad);
  const double denom = 2.0 * m + d - 2.0;
  const double rad = m * m * l2 + grad;
  b.v_h1_ball = std::sqrt((denom > 0.0 ? rad / denom : (rad > 0.0 ? std::numeric_limits<double>::infinity() : 0.0)) +
                          l2 / (2.0 * m + d));
  {
    double vq = 0.0, bv = 0.0;
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < R; ++i) vq += bs.v[static_cast<std::size_t>(j) * R + i] * Q.apply(bs.v, j, i);
    for (int i = 0; i < R; ++i) bv += beta[i] * bs.v[i];
    b.energy = 2.0 * vq - 4.0 * bv;
  }

  const double vtol = 1e-10 * std::max(1.0, scale);
  if (!(kappa > 0.0) || kappa <= 1e-300) {
    if (vsup > vtol) throw Error("replacement moved p but carries no mass on S_eta (kappa = 0)");
    b.kappa = 0.0;
    b.kappa_minus = 0.0;
    b.phi = HomPoly(d, m, p.parity());
    return b;
  }
  b.kappa = kappa;
  const SphereMeasure mu = b.f_measure(true);
  double minus = 0.0;
  for (std::size_t a = 1; a < mu.masses.size(); a += 2) minus += mu.masses[a];
  b.kappa_minus = minus * kappa;

  b.phi = project_to_Pm(mu, m, p.parity());
  double fr = 0.0;
  for (const auto& e : basis(d, m, p.parity())) {
    double s = 0.0;
    for (std::size_t a = 0; a < mu.points.size(); ++a) s += mu.masses[a] * e.eval(mu.points[a]);
    fr = std::max(fr, std::abs(s - b.phi.inner(e)));
  }
  b.fredholm_residual = fr;
  solve_corrector(b);
  return b;
}

std::pair<double, double> verify_f_comparability(const ReplacementBundle& b) {
  if (!(b.kappa > 0.0)) throw ValidationError("kappa", "f/kappa is undefined when kappa = 0");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double f : b.f) {
    lo = std::min(lo, f / b.kappa);
    hi = std::max(hi, f / b.kappa);
  }
  return {lo, hi};
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = std::min(x.size(), y.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int cnt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double a = std::log(x[i]), c = std::log(y[i]);
    sx += a;
    sy += c;
    sxx += a * a;
    sxy += a * c;
    ++cnt;
  }
  if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
  const double den = cnt * sxx - sx * sx;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (cnt * sxy - sx * sy) / den;
}

FamilyFit verify_kappa_v_bounds(const std::function<HomPoly(double)>& family, const std::vector<double>& ts,
                                const LayerGeometry& geom, const ReplaceOptions& opts) {
  FamilyFit fit;
  bool any = false;
  Parity par = Parity::even;
  for (double t : ts) {
    const HomPoly p = family(t);
    par = p.parity();
    const ReplacementBundle b = replace(p, geom, opts);
    fit.points.push_back({t, b.kappa, b.v_sup, b.v_h1_ball});
    if (b.kappa > 0.0) any = true;
  }
  if (!any) throw ValidationError("family", "kappa vanishes along the whole family");
  const int d = geom.dim;
  const bool even = par == Parity::even;
  fit.h1_exponent = even ? 0.5 + 1.0 / (d - 1) : 0.5;
  std::vector<double> kap, sup, supp, h1;
  for (const auto& q : fit.points) {
    if (!(q.kappa > 0.0) || !(q.v_sup > 0.0)) continue;
    kap.push_back(q.kappa);
    sup.push_back(q.v_sup);
    supp.push_back(std::pow(q.v_sup, 0.5 * (d - 1)));
    h1.push_back(q.v_h1);
    fit.kappa_over_sup_v = std::max(fit.kappa_over_sup_v, q.kappa / q.v_sup);
    fit.even_power_constant = std::max(fit.even_power_constant, supp.back() / q.kappa);
    fit.h1_constant = std::max(fit.h1_constant, q.v_h1 / std::pow(q.kappa, fit.h1_exponent));
  }
  fit.slope_kappa_vs_sup = loglog_slope(sup, kap);
  fit.slope_sup_power_vs_kappa = loglog_slope(kap, supp);
  fit.slope_h1_vs_kappa = loglog_slope(kap, h1);
  constexpr double kFitTol = 0.1;
  // As t -> 0 the bounds need kappa to vanish no slower than sup v, (sup v)^{(d-1)/2}
  // no slower than kappa (even class) and |v|_{H^1} no slower than kappa^{exponent}.
  fit.consistent = fit.slope_kappa_vs_sup >= 1.0 - kFitTol && fit.slope_h1_vs_kappa >= fit.h1_exponent - kFitTol &&
                   (!even || fit.slope_sup_power_vs_kappa >= 1.0 - kFitTol);
  return fit;
}

// Correctors -----------------------------------------------------------------

double build_Phi(const ReplacementBundle& b, const Point& x, std::optional<double> h_min) {
  if (!b.has_correctors()) throw ValidationError("kappa", "Phi is undefined when kappa = 0");
  const int d = b.geom.dim;
  const double r = norm(x, d);
  const double hm = h_min.value_or(b.h_min_default());
  if (r < hm) throw ValidationError("x", "inside the exclusion radius of the log term");
  if (r > 1.0 + 1e-12) throw ValidationError("x", "outside the unit ball");
  Point u{};
  for (int i = 0; i < d; ++i) u[i] = x[i] / r;
  const double rm = std::pow(r, b.geom.degree);
  return rm * (b.H.interpolate(u) + b.phi_log_coeff * b.phi.eval(u) * std::log(r));
}

namespace {

struct AngularNode {
  Point u;
  double weight;
  double H;
};

// Nodes of the corrector grid over the whole sphere with their area weights.
std::vector<AngularNode> corrector_nodes(const ReplacementBundle& b) {
  const SphereField& H = b.H;
  const int n = static_cast<int>(H.lat.size());
  const int d = b.geom.dim;
  std::vector<AngularNode> out;
  for (int j = 0; j < n; ++j) {
    const double lo = j == 0 ? 0.0 : 0.5 * (H.lat[j - 1] + H.lat[j]);
    const double hi = j + 1 == n ? H.lat[j] : 0.5 * (H.lat[j] + H.lat[j + 1]);
    double w = d == 3 ? std::sin(hi) - std::sin(lo) : hi - lo;
    if (d == 3) w *= 2.0 * kPi / H.rings;
    for (int i = 0; i < H.rings; ++i) {
      const Point u = H.point(j, i);
      // d = 2: the pole node is shared by both arcs.
      if (d == 2 && j + 1 == n && i == 1) continue;
      double wi = w;
      if (d == 2 && j + 1 == n) wi *= 2.0;
      if (d == 3 && j + 1 == n) {
        // Pole: one node carries the cap.
        if (i > 0) continue;
        wi = 2.0 * kPi * (std::sin(hi) - std::sin(lo));
      }
      if (j == 0) {
        out.push_back({u, 2.0 * wi, H.at(j, i)});
      } else {
        out.push_back({u, wi, H.at(j, i)});
        Point m = u;
        m[d - 1] = -m[d - 1];
        out.push_back({m, wi, H.at(j, i)});
      }
    }
  }
  return out;
}

}  // namespace

std::pair<double, double> Phi_weak_identity(const ReplacementBundle& b, const Point& c, double s) {
  if (!b.has_correctors()) throw ValidationError("kappa", "Phi is undefined when kappa = 0");
  const int d = b.geom.dim, m = b.geom.degree;
  const double cn = norm(c, d);
  const double r_lo = cn - s, r_hi = cn + s;
  if (r_lo < b.h_min_default() || r_hi > 1.0) throw ValidationError("bump", "support must lie in the annulus");
  if (b.p.parity() == Parity::odd && std::abs(c[d - 1]) <= s) throw ValidationError("bump", "support must avoid the plane");

  auto bump = [&](const Point& x, double& lap) {
    double rho2 = 0.0;
    for (int i = 0; i < d; ++i) rho2 += (x[i] - c[i]) * (x[i] - c[i]);
    const double u = 1.0 - rho2 / (s * s);
    if (u <= 0.0) {
      lap = 0.0;
      return 0.0;
    }
    lap = 12.0 * u * u * 4.0 * rho2 / (s * s * s * s) - 8.0 * d * u * u * u / (s * s);
    return u * u * u * u;
  };

  std::vector<double> gx, gw;
  gauss_legendre(64, gx, gw);
  const auto nodes = corrector_nodes(b);
  double lhs = 0.0;
  for (std::size_t q = 0; q < gx.size(); ++q) {
    const double r = 0.5 * (r_lo + r_hi) + 0.5 * (r_hi - r_lo) * gx[q];
    const double wr = 0.5 * (r_hi - r_lo) * gw[q] * std::pow(r, d - 1);
    const double rm = std::pow(r, m), lr = std::log(r);
    for (const auto& nd : nodes) {
      Point x{};
      for (int i = 0; i < d; ++i) x[i] = r * nd.u[i];
      double lap = 0.0;
      bump(x, lap);
      if (lap == 0.0) continue;
      const double Phi = rm * (nd.H + b.phi_log_coeff * b.phi.eval(nd.u) * lr);
      lhs += wr * nd.weight * Phi * lap;
    }
  }
  const SphereMeasure mu = b.f_measure(true);
  double rhs = 0.0;
  for (std::size_t q = 0; q < gx.size(); ++q) {
    const double r = 0.5 * (r_lo + r_hi) + 0.5 * (r_hi - r_lo) * gx[q];
    const double wr = 0.5 * (r_hi - r_lo) * gw[q] * std::pow(r, m - 1 + d - 2);
    for (std::size_t a = 0; a < mu.points.size(); ++a) {
      Point x{};
      for (int i = 0; i < d; ++i) x[i] = r * mu.points[a][i];
      double lap = 0.0;
      rhs += wr * mu.masses[a] * bump(x, lap);
    }
  }
  return {lhs, rhs};
}

double Phi_lipschitz(const ReplacementBundle& b, std::optional<double> h_min) {
  if (!b.has_correctors()) throw ValidationError("kappa", "Phi is undefined when kappa = 0");
  const int d = b.geom.dim, m = b.geom.degree;
  const double hm = h_min.value_or(b.h_min_default());
  const SphereField& H = b.H;
  const int n = static_cast<int>(H.lat.size());
  const double c = b.phi_log_coeff;
  std::vector<double> radii;
  for (int k = 0; k <= 24; ++k) radii.push_back(hm * std::pow(1.0 / hm, k / 24.0));
  double best = 0.0;
  for (int j = 0; j + 1 < n; ++j) {
    const double th = H.lat[j];
    for (int i = 0; i < H.rings; ++i) {
      // Tangential gradient of H by differences on the grid.
      const int jp = j + 1, jm = j > 0 ? j - 1 : j;
      const double dth = (H.at(jp, i) - H.at(jm, i)) / (H.lat[jp] - H.lat[jm]);
      double dph = 0.0;
      if (d == 3) {
        const double dp = 2.0 * kPi / H.rings;
        dph = (H.at(j, (i + 1) % H.rings) - H.at(j, (i + H.rings - 1) % H.rings)) / (2.0 * dp * std::cos(th));
      }
      const double gH2 = dth * dth + dph * dph;
      const Point u = H.point(j, i);
      const double ph = b.phi.eval(u);
      Point gp = b.phi.grad(u);
      const double radial = dot(gp, u, d);
      double gt2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double t = gp[a] - radial * u[a];
        gt2 += t * t;
      }
      const double hv = H.at(j, i);
      for (double r : radii) {
        const double lr = std::log(r), rm1 = std::pow(r, m - 1);
        const double dr = rm1 * (m * (hv + c * ph * lr) + c * ph);
        const double tang = rm1 * (std::sqrt(gH2) + std::abs(c * lr) * std::sqrt(gt2));
        best = std::max(best, std::sqrt(dr * dr + tang * tang));
      }
    }
  }
  return best;
}

}  // namespace thinfb
