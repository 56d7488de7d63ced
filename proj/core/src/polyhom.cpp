#include "thinfb/polyhom.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

#include "thinfb/error.hpp"

namespace thinfb {

namespace {

using boost::multiprecision::cpp_int;

void check_dims(int dim, int degree) {
  if (dim < 2 || dim > 4) throw ValidationError("dim", "polynomial spaces support 2 <= d <= 4");
  if (degree < 0 || degree > 8) throw ValidationError("degree", "polynomial spaces support 0 <= m <= 8");
}

void all_exponents(int dim, int remaining, int pos, Exponent& cur, std::vector<Exponent>& out) {
  if (pos == dim - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[pos] = e;
    all_exponents(dim, remaining - e, pos + 1, cur, out);
  }
  cur[pos] = 0;
}

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

double monomial(const Exponent& a, const Point& x, int dim) {
  double r = 1.0;
  for (int i = 0; i < dim; ++i) r *= ipow(x[i], a[i]);
  return r;
}

// Cache of Gram matrices of monomials, keyed by (dim, degree, parity).
struct GramKey {
  int dim, degree, parity;
  bool operator<(const GramKey& o) const {
    return std::tie(dim, degree, parity) < std::tie(o.dim, o.degree, o.parity);
  }
};

const std::vector<double>& gram_matrix(int dim, int degree, Parity parity) {
  static std::mutex mu;
  static std::map<GramKey, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  const GramKey key{dim, degree, static_cast<int>(parity)};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const auto exps = monomials(dim, degree, parity);
  const std::size_t n = exps.size();
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Exponent s{};
      for (int k = 0; k < dim; ++k) s[k] = exps[i][k] + exps[j][k];
      g[i * n + j] = sphere_monomial_integral(s, dim);
    }
  }
  return cache.emplace(key, std::move(g)).first->second;
}

double gram_inner(const std::vector<double>& g, const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] == 0.0) continue;
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += g[i * n + j] * b[j];
    s += a[i] * row;
  }
  return s;
}

struct BasisKey {
  int dim, degree, parity;
  bool operator<(const BasisKey& o) const {
    return std::tie(dim, degree, parity) < std::tie(o.dim, o.degree, o.parity);
  }
};

}  // namespace

const char* to_string(Parity p) { return p == Parity::even ? "even" : "odd"; }

Parity parity_from_string(const std::string& s) {
  if (s == "even") return Parity::even;
  if (s == "odd") return Parity::odd;
  throw ValidationError("class", "expected 'even' or 'odd', got '" + s + "'");
}

std::vector<Exponent> monomials(int dim, int degree, Parity parity) {
  check_dims(dim, degree);
  std::vector<Exponent> all;
  Exponent cur{};
  all_exponents(dim, degree, 0, cur, all);
  std::vector<Exponent> out;
  const int want = parity == Parity::even ? 0 : 1;
  for (const auto& a : all)
    if (a[dim - 1] % 2 == want) out.push_back(a);
  return out;
}

double sphere_monomial_integral(const Exponent& alpha, int dim) {
  double num = 1.0;
  double total = 0.0;
  for (int i = 0; i < dim; ++i) {
    if (alpha[i] % 2 != 0) return 0.0;
    const double b = 0.5 * (alpha[i] + 1);
    num *= std::tgamma(b);
    total += b;
  }
  return 2.0 * num / std::tgamma(total);
}

HomPoly::HomPoly(int dim, int degree, Parity parity)
    : dim_(dim), degree_(degree), parity_(parity), exps_(monomials(dim, degree, parity)) {
  coeffs_.assign(exps_.size(), 0.0);
}

HomPoly::HomPoly(int dim, int degree, Parity parity, std::vector<double> coeffs)
    : HomPoly(dim, degree, parity) {
  if (coeffs.size() != exps_.size())
    throw ValidationError("coeffs", "coefficient count does not match the monomial set");
  coeffs_ = std::move(coeffs);
}

double HomPoly::eval_q(const Point& x) const {
  double s = 0.0;
  for (std::size_t k = 0; k < exps_.size(); ++k)
    if (coeffs_[k] != 0.0) s += coeffs_[k] * monomial(exps_[k], x, dim_);
  return s;
}

Point HomPoly::grad_q(const Point& x) const {
  Point g{};
  for (std::size_t k = 0; k < exps_.size(); ++k) {
    if (coeffs_[k] == 0.0) continue;
    const Exponent& a = exps_[k];
    for (int i = 0; i < dim_; ++i) {
      if (a[i] == 0) continue;
      double t = coeffs_[k] * a[i];
      for (int j = 0; j < dim_; ++j) t *= ipow(x[j], j == i ? a[j] - 1 : a[j]);
      g[i] += t;
    }
  }
  return g;
}

double HomPoly::eval(const Point& x) const {
  if (parity_ == Parity::even) return eval_q(x);
  Point y = x;
  y[dim_ - 1] = std::abs(y[dim_ - 1]);
  return eval_q(y);
}

Point HomPoly::grad(const Point& x) const {
  if (parity_ == Parity::even) return grad_q(x);
  Point y = x;
  const double s = x[dim_ - 1] < 0.0 ? -1.0 : 1.0;
  y[dim_ - 1] = std::abs(y[dim_ - 1]);
  Point g = grad_q(y);
  g[dim_ - 1] *= s;
  return g;
}

std::vector<double> HomPoly::laplacian_coeffs() const {
  if (degree_ < 2) return {};
  const auto lower = monomials(dim_, degree_ - 2, parity_);
  std::map<Exponent, std::size_t> index;
  for (std::size_t i = 0; i < lower.size(); ++i) index[lower[i]] = i;
  std::vector<double> out(lower.size(), 0.0);
  for (std::size_t k = 0; k < exps_.size(); ++k) {
    for (int i = 0; i < dim_; ++i) {
      const int e = exps_[k][i];
      if (e < 2) continue;
      Exponent b = exps_[k];
      b[i] -= 2;
      out[index.at(b)] += coeffs_[k] * e * (e - 1);
    }
  }
  return out;
}

double HomPoly::harmonicity_residual() const {
  double r = 0.0;
  for (double c : laplacian_coeffs()) r = std::max(r, std::abs(c));
  return r;
}

double HomPoly::inner(const HomPoly& o) const {
  if (o.dim_ != dim_ || o.degree_ != degree_ || o.parity_ != parity_)
    throw ValidationError("poly", "inner product between different polynomial spaces");
  return gram_inner(gram_matrix(dim_, degree_, parity_), coeffs_, o.coeffs_);
}

double HomPoly::l2_norm() const { return std::sqrt(std::max(0.0, inner(*this))); }

HomPoly& HomPoly::operator+=(const HomPoly& o) {
  if (o.dim_ != dim_ || o.degree_ != degree_ || o.parity_ != parity_)
    throw ValidationError("poly", "sum of polynomials from different spaces");
  for (std::size_t k = 0; k < coeffs_.size(); ++k) coeffs_[k] += o.coeffs_[k];
  return *this;
}

HomPoly& HomPoly::operator-=(const HomPoly& o) { return *this += -1.0 * o; }

HomPoly& HomPoly::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  return *this;
}

bool HomPoly::is_zero() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c == 0.0; });
}

std::vector<std::vector<Rational>> harmonic_nullspace_exact(int dim, int degree, Parity parity) {
  const auto cols = monomials(dim, degree, parity);
  const std::size_t nc = cols.size();
  if (degree < 2) {
    std::vector<std::vector<Rational>> out;
    for (std::size_t j = 0; j < nc; ++j) {
      std::vector<Rational> v(nc, Rational(0));
      v[j] = 1;
      out.push_back(std::move(v));
    }
    return out;
  }
  const auto rows = monomials(dim, degree - 2, parity);
  std::map<Exponent, std::size_t> index;
  for (std::size_t i = 0; i < rows.size(); ++i) index[rows[i]] = i;
  std::vector<std::vector<Rational>> a(rows.size(), std::vector<Rational>(nc, Rational(0)));
  for (std::size_t j = 0; j < nc; ++j)
    for (int i = 0; i < dim; ++i) {
      const int e = cols[j][i];
      if (e < 2) continue;
      Exponent b = cols[j];
      b[i] -= 2;
      a[index.at(b)][j] += e * (e - 1);
    }

  // Reduced row echelon form.
  std::vector<int> pivot_col;
  std::size_t r = 0;
  for (std::size_t c = 0; c < nc && r < a.size(); ++c) {
    std::size_t p = r;
    while (p < a.size() && a[p][c] == 0) ++p;
    if (p == a.size()) continue;
    std::swap(a[p], a[r]);
    const Rational inv = Rational(1) / a[r][c];
    for (auto& v : a[r]) v *= inv;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i == r || a[i][c] == 0) continue;
      const Rational f = a[i][c];
      for (std::size_t k = c; k < nc; ++k) a[i][k] -= f * a[r][k];
    }
    pivot_col.push_back(static_cast<int>(c));
    ++r;
  }

  std::vector<bool> is_pivot(nc, false);
  for (int c : pivot_col) is_pivot[c] = true;
  std::vector<std::vector<Rational>> out;
  for (std::size_t f = 0; f < nc; ++f) {
    if (is_pivot[f]) continue;
    std::vector<Rational> v(nc, Rational(0));
    v[f] = 1;
    for (std::size_t i = 0; i < pivot_col.size(); ++i) v[pivot_col[i]] = -a[i][f];
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<HomPoly> basis(int dim, int degree, Parity parity) {
  check_dims(dim, degree);
  static std::mutex mu;
  static std::map<BasisKey, std::vector<HomPoly>> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({dim, degree, static_cast<int>(parity)});
    if (it != cache.end()) return it->second;
  }
  const auto null = harmonic_nullspace_exact(dim, degree, parity);
  const auto& g = gram_matrix(dim, degree, parity);
  std::vector<std::vector<double>> q;
  for (const auto& v : null) {
    std::vector<double> c(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) c[k] = v[k].convert_to<double>();
    // Modified Gram-Schmidt, two passes.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : q) {
        const double t = gram_inner(g, b, c);
        for (std::size_t k = 0; k < c.size(); ++k) c[k] -= t * b[k];
      }
    const double nrm = std::sqrt(gram_inner(g, c, c));
    for (double& x : c) x /= nrm;
    q.push_back(std::move(c));
  }
  std::vector<HomPoly> out;
  for (auto& c : q) out.emplace_back(dim, degree, parity, std::move(c));
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(BasisKey{dim, degree, static_cast<int>(parity)}, out);
  return out;
}

int spherical_harmonic_dimension(int dim, int degree) {
  auto binom = [](int n, int k) -> long {
    if (k < 0 || n < k || n < 0) return 0;
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  return static_cast<int>(binom(degree + dim - 1, dim - 1) - binom(degree + dim - 3, dim - 1));
}

std::vector<double> basis_coordinates(const HomPoly& p) {
  const auto b = basis(p.dim(), p.degree(), p.parity());
  std::vector<double> c;
  c.reserve(b.size());
  for (const auto& e : b) c.push_back(e.inner(p));
  return c;
}

HomPoly from_basis_coordinates(int dim, int degree, Parity parity, const std::vector<double>& c) {
  const auto b = basis(dim, degree, parity);
  if (c.size() != b.size()) throw ValidationError("coords", "coordinate count does not match dim P_m");
  HomPoly p(dim, degree, parity);
  for (std::size_t j = 0; j < b.size(); ++j) p += c[j] * b[j];
  return p;
}

HomPoly project_to_Pm(const std::function<double(const Point&)>& data, int dim, int degree,
                      Parity parity, int resolution) {
  const auto quad = SphereQuadrature::make(dim, resolution);
  const auto b = basis(dim, degree, parity);
  HomPoly out(dim, degree, parity);
  std::vector<double> values(quad.size());
  for (std::size_t a = 0; a < quad.size(); ++a) {
    values[a] = data(quad.nodes[a]);
    if (!std::isfinite(values[a])) throw QuadratureError("projection data is not finite");
  }
  for (const auto& e : b) {
    double s = 0.0;
    for (std::size_t a = 0; a < quad.size(); ++a) s += quad.weights[a] * values[a] * e.eval(quad.nodes[a]);
    out += s * e;
  }
  return out;
}

HomPoly project_to_Pm(const SphereMeasure& data, int degree, Parity parity) {
  if (data.points.empty() || data.points.size() != data.masses.size())
    throw QuadratureError("measure has no atoms to integrate against");
  for (double m : data.masses)
    if (!std::isfinite(m)) throw QuadratureError("measure has non-finite masses");
  const auto b = basis(data.dim, degree, parity);
  HomPoly out(data.dim, degree, parity);
  for (const auto& e : b) {
    double s = 0.0;
    for (std::size_t a = 0; a < data.points.size(); ++a) s += data.masses[a] * e.eval(data.points[a]);
    out += s * e;
  }
  return out;
}

namespace {

// Value whose minimum over the equator decides cone membership.
double cone_objective(const HomPoly& p, const Point& x) {
  if (p.parity() == Parity::even) return p.eval_q(x);
  return -p.grad_q(x)[p.dim() - 1];
}

Point equator_point(int dim, double a, double b) {
  if (dim == 3) return {std::cos(a), std::sin(a), 0.0, 0.0};
  // dim == 4: spherical coordinates on the 2-sphere {x_4 = 0}.
  return {std::sin(a) * std::cos(b), std::sin(a) * std::sin(b), std::cos(a), 0.0};
}

}  // namespace

ConeMembership cone_check(const HomPoly& p) {
  const int d = p.dim();
  ConeMembership out;
  double scale = 0.0;
  for (double c : p.coeffs()) scale = std::max(scale, std::abs(c));
  const double tol = 1e-12 * std::max(1.0, scale);

  if (d == 2) {
    const Point a{1.0, 0.0, 0.0, 0.0}, b{-1.0, 0.0, 0.0, 0.0};
    const double va = cone_objective(p, a), vb = cone_objective(p, b);
    out.witness = va <= vb ? a : b;
    out.margin = std::min(va, vb);
    out.is_plus = out.margin >= -tol;
    return out;
  }

  // Coarse sampling followed by local refinement of the best candidates.
  struct Cand {
    double v, a, b;
  };
  std::vector<Cand> cands;
  const double pi = std::numbers::pi;
  if (d == 3) {
    const int n = 720;
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * pi * i / n;
      cands.push_back({cone_objective(p, equator_point(3, a, 0.0)), a, 0.0});
    }
  } else {
    // Fibonacci lattice on S^2.
    const int n = 2000;
    const double golden = pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / n;
      const double a = std::acos(z);
      const double b = std::fmod(golden * i, 2.0 * pi);
      cands.push_back({cone_objective(p, equator_point(4, a, b)), a, b});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.v < y.v; });
  const std::size_t nref = std::min<std::size_t>(4, cands.size());
  const double step0 = d == 3 ? 2.0 * pi / 720 : 0.1;
  Cand best = cands.front();
  for (std::size_t c = 0; c < nref; ++c) {
    Cand cur = cands[c];
    double step = step0;
    while (step > 1e-13) {
      bool moved = false;
      const int ndir = d == 3 ? 1 : 2;
      for (int dir = 0; dir < ndir; ++dir)
        for (double sgn : {-1.0, 1.0}) {
          Cand t = cur;
          (dir == 0 ? t.a : t.b) += sgn * step;
          t.v = cone_objective(p, equator_point(d, t.a, t.b));
          if (t.v < cur.v) {
            cur = t;
            moved = true;
          }
        }
      if (!moved) step *= 0.5;
    }
    if (cur.v < best.v) best = cur;
  }
  out.witness = equator_point(d, best.a, best.b);
  out.margin = best.v;
  out.is_plus = out.margin >= -tol;
  return out;
}

namespace {

std::string dyadic_fraction(double c) {
  if (c == 0.0) return "0/1";
  int e = 0;
  const double f = std::frexp(c, &e);
  long long m = static_cast<long long>(std::ldexp(f, 53));
  int ex = e - 53;
  while (m % 2 == 0 && ex < 0) {
    m /= 2;
    ++ex;
  }
  cpp_int num = m;
  cpp_int den = 1;
  if (ex >= 0)
    num <<= ex;
  else
    den <<= -ex;
  return num.str() + "/" + den.str();
}

double parse_fraction(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ValidationError("coefficient", "cannot parse '" + s + "'");
    return v;
  }
  const cpp_int num(s.substr(0, slash));
  const cpp_int den(s.substr(slash + 1));
  if (den == 0) throw ValidationError("coefficient", "zero denominator in '" + s + "'");
  const bool pow2 = den > 0 && (den & (den - 1)) == 0;
  const cpp_int limit = cpp_int(1) << 53;
  if (pow2 && abs(num) < limit) {
    const unsigned shift = boost::multiprecision::msb(den);
    return std::ldexp(num.convert_to<double>(), -static_cast<int>(shift));
  }
  return Rational(num, den).convert_to<double>();
}

}  // namespace

void write_text(std::ostream& os, const HomPoly& p) {
  os << "# thinfb-poly dim=" << p.dim() << " degree=" << p.degree() << " class=" << to_string(p.parity())
     << "\n";
  for (std::size_t k = 0; k < p.exponents().size(); ++k) {
    if (p.coeffs()[k] == 0.0) continue;
    for (int i = 0; i < p.dim(); ++i) os << p.exponents()[k][i] << ' ';
    os << ": " << dyadic_fraction(p.coeffs()[k]) << "\n";
  }
}

std::string to_text(const HomPoly& p) {
  std::ostringstream os;
  write_text(os, p);
  return os.str();
}

HomPoly read_text(std::istream& is) {
  int dim = -1, degree = -1;
  int parity = -1;
  std::vector<std::pair<Exponent, double>> terms;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        if (k == "dim") dim = std::stoi(v);
        if (k == "degree") degree = std::stoi(v);
        if (k == "class") parity = static_cast<int>(parity_from_string(v));
      }
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ValidationError("poly", "missing ':' in line '" + line + "'");
    std::istringstream es(line.substr(0, colon));
    Exponent a{};
    int n = 0, e = 0;
    while (es >> e) {
      if (n >= 4) throw ValidationError("poly", "too many exponents in line '" + line + "'");
      a[n++] = e;
    }
    std::string coef = line.substr(colon + 1);
    coef.erase(0, coef.find_first_not_of(" \t"));
    coef.erase(coef.find_last_not_of(" \t\r") + 1);
    if (dim < 0) dim = n;
    if (n != dim) throw ValidationError("poly", "inconsistent number of exponents");
    int deg = 0;
    for (int i = 0; i < n; ++i) deg += a[i];
    if (degree < 0) degree = deg;
    if (deg != degree) throw ValidationError("poly", "monomial degree differs from polynomial degree");
    if (parity < 0) parity = a[dim - 1] % 2;
    terms.emplace_back(a, parse_fraction(coef));
  }
  if (dim < 0 || degree < 0) throw ValidationError("poly", "empty polynomial text without header");
  if (parity < 0) parity = 0;
  HomPoly p(dim, degree, static_cast<Parity>(parity));
  for (const auto& [a, c] : terms) {
    const auto it = std::find(p.exponents().begin(), p.exponents().end(), a);
    if (it == p.exponents().end())
      throw ValidationError("poly", "monomial outside the parity class of the polynomial");
    p.coeffs()[it - p.exponents().begin()] += c;
  }
  return p;
}

HomPoly from_text(const std::string& s) {
  std::istringstream is(s);
  return read_text(is);
}

}  // namespace thinfb
