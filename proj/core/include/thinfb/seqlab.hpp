#pragma once

// Scalar model of the multi-scale iteration: Weiss energies w_n and errors
// e_n driven by the two-branch dichotomy
//   branch 1: w_{n+1} <= w_n - a e_n^2,  e_{n+1} = A_grow e_n
//   branch 2: w_{n+1} <= w_n,            e_{n+1} = e_n / 2
// with the cap w_{n+1} <= A e_n^{1+gamma} on every step. verify_bounds
// certifies the potential alpha_n = w_n + mu e_n^2 and checks the tail sums
// sum_{n>=N} e_n against envelopes built from the certified constants.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace thinfb {

struct SeqParams {
  double A = 2.0;       // cap constant, A >= 1
  double A_grow = 0.0;  // branch 1 expansion; 0 means "same as A"
  double a = 0.1;       // branch 1 energy drop, in (0, 1)
  double gamma = 1.0;   // in (0, 1]
  double e0 = 0.05;     // in (0, 1]
  double w0 = 0.0;      // 0 <= w0 <= A e0^{1+gamma}
  int n_steps = 200;

  double grow() const { return A_grow > 0.0 ? A_grow : A; }
  void validate() const;  // throws ValidationError
};

enum class Policy { branch2, adversarial, random };
const char* to_string(Policy p);
Policy policy_from_string(const std::string& s);

struct SeqRun {
  SeqParams params;
  Policy policy = Policy::branch2;
  std::uint64_t seed = 0;
  std::vector<int> branch;  // branch[n] in {1, 2} takes step n -> n+1
  std::vector<double> w, e;  // n_steps + 1 entries
};

SeqRun simulate(const SeqParams& params, Policy policy, std::uint64_t seed = 0);

// Empty when every step satisfies exactly one branch and the cap, checked in
// plain floating point with no tolerance.
std::string check_hypotheses(const SeqRun& run);

struct SeqReport {
  std::string hypothesis_violation;  // empty when conforming
  // alpha recurrence alpha_{n+1} <= alpha_n - c alpha_n^{2/(1+gamma)}
  bool certified = false;
  double mu = 0.0;
  double c = 0.0;
  std::vector<double> alpha;
  // gamma < 1: e_n^2 <= C_e (alpha_n - alpha_{n+1}) with C_e = 1 / min(3mu/4, a - mu(A_grow^2 - 1))
  double C_e = 0.0;
  // Envelope on the tail T_N = sum_{n=N}^{n_steps} e_n.
  //   gamma = 1: C (1 - c_env)^N with c_env = 1 - sqrt(1 - c), C = sqrt(alpha_0/mu) / c_env
  //   gamma < 1: dyadic Cauchy-Schwarz sum of sqrt(L C_e B(s)), B the recurrence bound on
  //   alpha, with a closed-form geometric remainder past the end of the run
  // env_C is sup_N envelope(N) * N^{gamma/(1-gamma)} for gamma < 1.
  double env_C = 0.0;
  double env_c = 0.0;
  std::vector<double> tail, envelope;
  bool alpha_bound_ok = true;
  bool pair_bound_ok = true;
  bool envelope_ok = true;
  // Least-squares rate of the observed tail: log T_N against N (gamma = 1,
  // rate = 1 - exp(slope)) or log N (gamma < 1, rate = -slope).
  double tail_rate = 0.0;
  double sum_e = 0.0;
  std::string counterexample;  // first envelope or bound violation

  bool ok() const { return hypothesis_violation.empty() && certified && alpha_bound_ok && pair_bound_ok && envelope_ok; }
};

SeqReport verify_bounds(const SeqRun& run);

// Certify the recurrence for one mu; returns c when every step decreases.
std::optional<double> recurrence_constant(const SeqRun& run, double mu);

struct LadderReport {
  std::vector<int> j;
  std::vector<double> e0, sums;
  bool monotone = true;  // sums strictly decreasing in j
};
// e0 = 2^{-j} for j in [j_min, j_max], w0 = A e0^{1+gamma}.
LadderReport sigma_ladder(const SeqParams& base, Policy policy, int j_min = 3, int j_max = 10,
                          std::uint64_t seed = 0);

struct BatchReport {
  int runs = 0;
  int hypothesis_failures = 0;
  int uncertified = 0;
  int envelope_violations = 0;
  double min_mu = 0.0, min_c = 0.0, max_env_C = 0.0;
  std::string first_counterexample;
};
// Random-policy runs with seeds seed0, seed0 + 1, ...
BatchReport verify_batch(const SeqParams& params, int runs, std::uint64_t seed0);

}  // namespace thinfb
