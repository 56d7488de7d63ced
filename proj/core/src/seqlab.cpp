#include "thinfb/seqlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "thinfb/dichotomy.hpp"
#include "thinfb/error.hpp"
#include "thinfb/parallel.hpp"
#include "thinfb/rng.hpp"

namespace thinfb {

namespace {

// Relative slack for envelope comparisons; the envelopes chain pow/exp/log.
constexpr double kSlack = 1e-9;

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

double cap_of(const SeqParams& p, double e) { return p.A * std::pow(e, 1.0 + p.gamma); }

// alpha_n - alpha_{n+1} by parts; w_n - w_{n+1} is exact when the two are close.
double alpha_drop(const SeqRun& run, double mu, int k) {
  const double e0 = run.e[k], e1 = run.e[k + 1];
  return (run.w[k] - run.w[k + 1]) + mu * (e0 - e1) * (e0 + e1);
}

}  // namespace

void SeqParams::validate() const {
  if (!(A >= 1.0) || !std::isfinite(A)) throw ValidationError("A", "must be >= 1");
  if (A_grow != 0.0 && !(A_grow >= 1.0 && std::isfinite(A_grow))) throw ValidationError("A_grow", "must be >= 1 or 0");
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("a", "must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma", "must lie in (0, 1]");
  if (!(e0 > 0.0 && e0 <= 1.0)) throw ValidationError("e0", "must lie in (0, 1]");
  if (!(w0 >= 0.0) || !std::isfinite(w0)) throw ValidationError("w0", "must be >= 0");
  if (w0 > cap_of(*this, e0)) throw ValidationError("w0", "exceeds A e0^{1+gamma}");
  if (n_steps < 1 || n_steps > 400) throw ValidationError("n_steps", "must lie in [1, 400]");
}

const char* to_string(Policy p) {
  switch (p) {
    case Policy::branch2: return "branch2";
    case Policy::adversarial: return "adversarial";
    case Policy::random: return "random";
  }
  return "?";
}

Policy policy_from_string(const std::string& s) {
  if (s == "branch2" || s == "deterministic") return Policy::branch2;
  if (s == "adversarial") return Policy::adversarial;
  if (s == "random") return Policy::random;
  throw ValidationError("policy", "unknown policy '" + s + "'");
}

SeqRun simulate(const SeqParams& params, Policy policy, std::uint64_t seed) {
  params.validate();
  SeqRun run;
  run.params = params;
  run.policy = policy;
  run.seed = seed;
  const int n = params.n_steps;
  run.w.assign(n + 1, 0.0);
  run.e.assign(n + 1, 0.0);
  run.branch.assign(n, 2);
  run.w[0] = params.w0;
  run.e[0] = params.e0;
  PortableRng rng(seed);
  for (int k = 0; k < n; ++k) {
    const double w = run.w[k], e = run.e[k];
    const double cap = cap_of(params, e);
    const double drop = w - params.a * e * e;
    bool one = false;
    switch (policy) {
      case Policy::branch2: break;
      case Policy::adversarial: one = drop >= 0.0; break;
      case Policy::random: one = drop >= 0.0 && rng.uniform() < 0.5; break;
    }
    // fl(w - a e^2) may exceed the exact value by half an ulp of w, which can
    // dwarf e^2; a few ulps of margin keep branch 1 valid in exact arithmetic.
    const double safe_drop = std::max(0.0, drop - 4.0 * std::numeric_limits<double>::epsilon() * w);
    double hi = std::min(one ? safe_drop : w, cap);
    if (policy == Policy::random) {
      const double u = rng.uniform();
      if (u >= 0.5) hi *= rng.uniform();
    }
    run.branch[k] = one ? 1 : 2;
    run.w[k + 1] = hi;
    run.e[k + 1] = one ? params.grow() * e : 0.5 * e;
  }
  return run;
}

std::string check_hypotheses(const SeqRun& run) {
  const SeqParams& p = run.params;
  const int n = static_cast<int>(run.branch.size());
  if (static_cast<int>(run.w.size()) != n + 1 || static_cast<int>(run.e.size()) != n + 1)
    return "length mismatch";
  if (!(run.e[0] <= 1.0)) return "e_0 > 1";
  for (int k = 0; k <= n; ++k) {
    if (!(run.w[k] >= 0.0)) return "w_" + std::to_string(k) + " < 0";
    if (!(run.e[k] >= 0.0)) return "e_" + std::to_string(k) + " < 0";
  }
  for (int k = 0; k < n; ++k) {
    const double w = run.w[k], e = run.e[k], wn = run.w[k + 1], en = run.e[k + 1];
    const std::string at = " at step " + std::to_string(k);
    if (!(wn <= cap_of(p, e))) return "cap w_{n+1} <= A e_n^{1+gamma} fails" + at;
    const bool b1 = wn <= w - p.a * e * e && en == p.grow() * e;
    const bool b2 = wn <= w && en == 0.5 * e;
    if (b1 == b2) return std::string(b1 ? "both branches hold" : "neither branch holds") + at;
    if ((run.branch[k] == 1) != b1) return "recorded branch disagrees with the data" + at;
  }
  return {};
}

std::optional<double> recurrence_constant(const SeqRun& run, double mu) {
  const double p = 2.0 / (1.0 + run.params.gamma);
  double c = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(run.branch.size());
  for (int k = 0; k < n; ++k) {
    const double a0 = run.w[k] + mu * run.e[k] * run.e[k];
    const double d = alpha_drop(run, mu, k);
    if (!(d > 0.0)) return std::nullopt;
    c = std::min(c, std::exp(std::log(d) - p * std::log(a0)));
  }
  return c;
}

SeqReport verify_bounds(const SeqRun& run) {
  SeqReport r;
  r.hypothesis_violation = check_hypotheses(run);
  const SeqParams& prm = run.params;
  const double g = prm.gamma;
  const double p = 2.0 / (1.0 + g);
  const int n = static_cast<int>(run.branch.size());
  const double grow2 = prm.grow() * prm.grow() - 1.0;

  for (double x : run.e) r.sum_e += x;
  r.tail.assign(n + 1, 0.0);
  for (int k = n; k >= 0; --k) r.tail[k] = run.e[k] + (k < n ? r.tail[k + 1] : 0.0);

  // Largest dyadic mu with a positive recurrence constant. For gamma < 1 the
  // tail argument also needs a - mu(A_grow^2 - 1) > 0.
  for (int j = 0; j <= 80; ++j) {
    const double mu = std::ldexp(1.0, -j);
    if (g < 1.0 && !(prm.a - mu * grow2 > 0.0)) continue;
    if (const auto c = recurrence_constant(run, mu)) {
      r.certified = true;
      r.mu = mu;
      r.c = *c;
      break;
    }
  }
  if (!r.certified) {
    r.counterexample = "no dyadic mu >= 2^-80 gives alpha_{n+1} < alpha_n at every step";
    return r;
  }
  r.alpha.resize(n + 1);
  for (int k = 0; k <= n; ++k) r.alpha[k] = run.w[k] + r.mu * run.e[k] * run.e[k];
  const double a0 = r.alpha[0];

  auto fail = [&](bool& flag, const std::string& what) {
    if (flag && r.counterexample.empty()) r.counterexample = what;
    flag = false;
  };

  r.envelope.assign(n + 1, 0.0);
  if (g == 1.0) {
    const double q = 1.0 - r.c;
    for (int k = 0; k <= n; ++k) {
      const double bound = std::pow(q, k) * a0;
      if (!(r.alpha[k] <= bound * (1.0 + kSlack)))
        fail(r.alpha_bound_ok, "alpha_" + std::to_string(k) + " = " + fmt(r.alpha[k]) + " > (1-c)^n alpha_0 = " + fmt(bound));
    }
    // e_n <= sqrt(alpha_n / mu) <= sqrt(alpha_0 / mu) (1-c)^{n/2}, summed geometrically.
    const double s = std::sqrt(q);
    r.env_c = 1.0 - s;
    r.env_C = std::sqrt(a0 / r.mu) / r.env_c;
    for (int k = 0; k <= n; ++k) r.envelope[k] = r.env_C * std::pow(s, k);
  } else {
    const double base = std::pow(a0, 1.0 - p);
    auto B = [&](double m) { return std::pow(base + r.c * (p - 1.0) * m, -1.0 / (p - 1.0)); };
    for (int k = 0; k <= n; ++k) {
      const double bound = B(k);
      if (!(r.alpha[k] <= bound * (1.0 + kSlack)))
        fail(r.alpha_bound_ok, "alpha_" + std::to_string(k) + " = " + fmt(r.alpha[k]) + " > recurrence bound " + fmt(bound));
    }
    r.C_e = 1.0 / std::min(0.75 * r.mu, prm.a - r.mu * grow2);
    for (int k = 0; k < n; ++k) {
      const double lhs = run.e[k] * run.e[k], rhs = r.C_e * alpha_drop(run, r.mu, k);
      if (!(lhs <= rhs * (1.0 + kSlack)))
        fail(r.pair_bound_ok, "e_" + std::to_string(k) + "^2 = " + fmt(lhs) + " > C_e (alpha_n - alpha_{n+1}) = " + fmt(rhs));
    }
    // Blocks [N 2^k, N 2^{k+1}): sum e_n <= sqrt(L C_e alpha_start) <= sqrt(L C_e B(start)).
    // Past the run, B(s) <= (c(p-1)s)^{-1/(p-1)} turns the block terms into a
    // geometric series K s^{-gamma/(1-gamma)} with ratio 2^{-gamma/(1-gamma)}.
    const double q = g / (1.0 - g);
    const double K = std::sqrt(r.C_e) * std::pow(r.c * (p - 1.0), -0.5 / (p - 1.0));
    auto env = [&](double N) {
      double sum = 0.0, s = N;
      for (; s <= n; s *= 2.0) sum += std::sqrt(s * r.C_e * B(s));
      return sum + K * std::pow(s, -q) / (1.0 - std::exp2(-q));
    };
    for (int k = 1; k <= n; ++k) {
      r.envelope[k] = env(k);
      r.env_C = std::max(r.env_C, r.envelope[k] * std::pow(k, q));
    }
    r.envelope[0] = run.e[0] + r.envelope[1];
    r.env_c = q;
  }
  for (int k = 0; k <= n; ++k)
    if (!(r.tail[k] <= r.envelope[k] * (1.0 + kSlack)))
      fail(r.envelope_ok, "tail sum at N = " + std::to_string(k) + " is " + fmt(r.tail[k]) + " > envelope " + fmt(r.envelope[k]));

  // Observed tail rate over N in [n/8, n/2], clear of the truncation end.
  std::vector<double> xs, ys;
  for (int k = std::max(1, n / 8); k <= n / 2; ++k) {
    if (!(r.tail[k] > 0.0)) continue;
    xs.push_back(g == 1.0 ? static_cast<double>(k) : std::log(static_cast<double>(k)));
    ys.push_back(std::log(r.tail[k]));
  }
  if (xs.size() >= 3) {
    const double slope = linear_fit(xs, ys).slope;
    r.tail_rate = g == 1.0 ? 1.0 - std::exp(slope) : -slope;
  }
  return r;
}

LadderReport sigma_ladder(const SeqParams& base, Policy policy, int j_min, int j_max, std::uint64_t seed) {
  if (j_min < 0 || j_max < j_min) throw ValidationError("ladder", "need 0 <= j_min <= j_max");
  LadderReport out;
  for (int j = j_min; j <= j_max; ++j) {
    SeqParams p = base;
    p.e0 = std::ldexp(1.0, -j);
    p.w0 = cap_of(p, p.e0);
    const SeqRun run = simulate(p, policy, seed);
    double s = 0.0;
    for (double x : run.e) s += x;
    if (!out.sums.empty() && !(s < out.sums.back())) out.monotone = false;
    out.j.push_back(j);
    out.e0.push_back(p.e0);
    out.sums.push_back(s);
  }
  return out;
}

BatchReport verify_batch(const SeqParams& params, int runs, std::uint64_t seed0) {
  params.validate();
  if (runs < 1) throw ValidationError("runs", "must be >= 1");
  std::vector<SeqReport> reps(runs);
  parallel_for(0, runs, [&](int i) {
    SeqReport r = verify_bounds(simulate(params, Policy::random, seed0 + static_cast<std::uint64_t>(i)));
    r.alpha.clear();
    r.alpha.shrink_to_fit();
    r.tail.clear();
    r.envelope.clear();
    reps[i] = std::move(r);
  });
  BatchReport b;
  b.runs = runs;
  b.min_mu = b.min_c = std::numeric_limits<double>::infinity();
  for (int i = 0; i < runs; ++i) {
    const SeqReport& r = reps[i];
    if (!r.hypothesis_violation.empty()) ++b.hypothesis_failures;
    if (!r.certified) ++b.uncertified;
    if (r.certified && !(r.alpha_bound_ok && r.pair_bound_ok && r.envelope_ok)) ++b.envelope_violations;
    if (r.certified) {
      b.min_mu = std::min(b.min_mu, r.mu);
      b.min_c = std::min(b.min_c, r.c);
      b.max_env_C = std::max(b.max_env_C, r.env_C);
    }
    if (!r.ok() && b.first_counterexample.empty())
      b.first_counterexample = "seed " + std::to_string(seed0 + static_cast<std::uint64_t>(i)) + ": " +
                               (r.hypothesis_violation.empty() ? r.counterexample : r.hypothesis_violation);
  }
  return b;
}

}  // namespace thinfb
