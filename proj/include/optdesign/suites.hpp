#pragma once

// Invariant suites shared by the command-line `verify` subcommand and the
// acceptance harness: matrix-identity sweeps, adversarial-fixture replays,
// and a Monte-Carlo success-rate harness for the randomized exchange rounder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"
#include "optdesign/localsearch.hpp"
#include "optdesign/oracle.hpp"
#include "optdesign/regret.hpp"
#include "optdesign/relaxation.hpp"
#include "optdesign/rng.hpp"
#include "optdesign/rounding.hpp"

namespace optdesign {

struct CheckResult {
  std::string name;
  bool passed = false;
  long cases = 0;
  long failures = 0;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool all_passed() const {
    for (const CheckResult& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

namespace suites_detail {

inline Vector rand_vector(Rng& rng, int d, double scale = 1.0) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = scale * rng.next_gaussian();
  return v;
}

inline Matrix rand_pd(Rng& rng, int d, double ridge = 0.5) {
  Matrix g(d, d + 2);
  for (int j = 0; j < d + 2; ++j)
    for (int i = 0; i < d; ++i) g(i, j) = rng.next_gaussian();
  Matrix m = g * g.transpose() / static_cast<double>(d + 2);
  m += ridge * Matrix::Identity(d, d);
  return m;
}

inline Matrix rand_psd(Rng& rng, int d, int rank) {
  Matrix g(d, rank);
  for (int j = 0; j < rank; ++j)
    for (int i = 0; i < d; ++i) g(i, j) = rng.next_gaussian();
  return g * g.transpose() / static_cast<double>(rank);
}

inline std::string margin_note(double margin) {
  std::ostringstream os;
  os << "worst margin " << margin;
  return os.str();
}

inline CheckResult finish(std::string name, long cases, long failures, double worst_margin) {
  CheckResult out;
  out.name = std::move(name);
  out.cases = cases;
  out.failures = failures;
  out.passed = failures == 0 && cases > 0;
  out.detail = margin_note(worst_margin);
  return out;
}

}  // namespace suites_detail

// det(M + vv') = det(M)(1 + v'M^{-1}v), through the rank-two delta with an
// empty removal slot.
inline CheckResult check_rank_one_determinant_growth(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < cases; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix m = rand_pd(rng, d);
    Vector v = rand_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    const double growth = std::exp(rank_two_logdet_delta(f, Vector::Zero(d), v));
    const double expected = 1.0 + inv_quad(f, v);
    const double margin = 1e-9 * expected - std::abs(growth - expected);
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
  }
  return finish("rank-one-determinant-growth", cases, fail, worst);
}

// det(M - uu' + ww') >= det(M)(1 - u'M^{-1}u)(1 + w'M^{-1}w) when u'M^{-1}u <= 1.
inline CheckResult check_exchange_determinant_floor(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0, checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  while (checked < cases) {
    const int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = rand_pd(rng, d);
    Vector u = rand_vector(rng, d, 0.5);
    Vector w = rand_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    const double a = inv_quad(f, u);
    if (a >= 1.0 - 1e-9) continue;
    Matrix rebuilt = m - u * u.transpose() + w * w.transpose();
    const double det_m = std::exp(f.log_det_cache);
    const double lhs = rebuilt.determinant();
    const double rhs = det_m * (1.0 - a) * (1.0 + inv_quad(f, w));
    const double margin = (lhs - rhs + 1e-9 * det_m) / det_m;
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
    ++checked;
  }
  return finish("exchange-determinant-floor", checked, fail, worst);
}

// tr((M - vv' + uu')^{-1} W) <= tr(M^{-1}W) + <W,M^{-1}vv'M^{-1}>/(1 - 2v'M^{-1}v)
//                                            - <W,M^{-1}uu'M^{-1}>/(1 + 2u'M^{-1}u)
// when 2 v'M^{-1}v < 1 (v removed, u added).
inline CheckResult check_exchange_trace_ceiling(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0, checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  while (checked < cases) {
    const int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = rand_pd(rng, d);
    Matrix wgt = rand_psd(rng, d, d);
    Vector v = rand_vector(rng, d, 0.3);
    Vector u = rand_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    const double a = inv_quad(f, v);
    if (2.0 * a >= 0.95) continue;
    Vector mv = solve_spd(f, v);
    Vector mu = solve_spd(f, u);
    const double bound = mv.dot(wgt * mv) / (1.0 - 2.0 * a) -
                         mu.dot(wgt * mu) / (1.0 + 2.0 * inv_quad(f, u));
    const double exact = rank_two_weighted_trace_delta(f, wgt, v, u);
    const double margin = bound + 1e-9 - exact;
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
    ++checked;
  }
  return finish("exchange-trace-ceiling", checked, fail, worst);
}

// <A, B> >= d det(A)^{1/d} det(B)^{1/d} for positive definite pairs.
inline CheckResult check_inner_product_geometric_mean(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < cases; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix a = rand_pd(rng, d);
    Matrix b = rand_pd(rng, d);
    const double lhs = (a * b).trace();
    const double rhs = d * std::exp((psd_factorize(a).log_det_cache +
                                     psd_factorize(b).log_det_cache) /
                                    static_cast<double>(d));
    const double margin = lhs - rhs + 1e-9 * (1.0 + std::abs(rhs));
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
  }
  return finish("inner-product-geometric-mean", cases, fail, worst);
}

// <A, B^2> >= tr(B)^2 / tr(A^{-1}) and <A, B> <= sqrt(tr(A) <A, B^2>).
inline CheckResult check_trace_cauchy_schwarz_pair(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < cases; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix a = rand_pd(rng, d);
    Matrix b = rand_pd(rng, d);
    const double ab2 = (a * b * b).trace();
    const double tr_b = b.trace();
    const double lower = ab2 - tr_b * tr_b / trace_inverse(psd_factorize(a)) +
                         1e-9 * (1.0 + ab2);
    const double ab = (a * b).trace();
    const double upper = std::sqrt(a.trace() * ab2) + 1e-9 * (1.0 + ab) - ab;
    const double margin = std::min(lower, upper);
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
  }
  return finish("trace-cauchy-schwarz-pair", cases, fail, worst);
}

// <Z, A> <= sqrt(d)/alpha + lambda_min(Z) and
// alpha <Z, A^{1/2}> <= d + alpha sqrt(d) lambda_min(Z), plus the
// normalizer bracket alpha lambda_min(Z) - l in [1, sqrt(d)].
inline CheckResult check_smoothed_objective_brackets(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < cases; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_below(6));
    const double scale = std::pow(10.0, -2.0 + 4.0 * rng.next_uniform());
    Matrix z;
    if (trial % 5 == 0 && d > 1) {
      z = scale * rand_psd(rng, d, d - 1);
    } else {
      z = scale * rand_pd(rng, d);
    }
    const double alpha = 8.0 * std::sqrt(static_cast<double>(d));
    ActionMatrix a = compute_action_matrix(z, alpha);
    CospectralReport rep = cospectral_bounds_check(z, a);
    const double gap = alpha * min_eigenvalue(z) - a.l_value;
    const double bracket = std::min(gap - 1.0 + 1e-9,
                                    std::sqrt(static_cast<double>(d)) + 1e-9 - gap);
    const double margin = std::min({rep.margin_action + 1e-8, rep.margin_sqrt + 1e-8, bracket});
    worst = std::min(worst, margin);
    if (!rep.pass || bracket < 0.0) ++fail;
  }
  return finish("smoothed-objective-brackets", cases, fail, worst);
}

// tr(A) = 1 within 1e-12 and tr(A^{1/2}) <= sqrt(d) for every action matrix.
inline CheckResult check_action_trace_normalization(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < cases; ++trial) {
    const int d = 1 + static_cast<int>(rng.next_below(6));
    const double scale = std::pow(10.0, -2.0 + 4.0 * rng.next_uniform());
    Matrix z = scale * rand_pd(rng, d);
    const double alpha = (1.0 + 7.0 * rng.next_uniform()) * std::sqrt(static_cast<double>(d));
    ActionMatrix a = compute_action_matrix(z, alpha);
    const double unit = 1e-12 - std::abs(a.matrix.trace() - 1.0);
    const double cap = std::sqrt(static_cast<double>(d)) + 1e-9 - a.sqrt_matrix.trace();
    const double margin = std::min(unit, cap);
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
  }
  return finish("action-trace-normalization", cases, fail, worst);
}

// <vv', Z^{-1}> <= alpha <vv', A^{1/2}> <= alpha lambda_min(Z) <vv', Z^{-1}>
// whenever lambda_min(Z) >= 1/4 and alpha = 8 sqrt(d).
inline CheckResult check_inverse_sandwich_quarter_floor(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0, checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  while (checked < cases) {
    const int d = 2 + static_cast<int>(rng.next_below(4));
    Matrix z = rand_pd(rng, d);
    if (min_eigenvalue(z) < 0.25) continue;
    const double alpha = 8.0 * std::sqrt(static_cast<double>(d));
    ActionMatrix a = compute_action_matrix(z, alpha);
    Vector v = rand_vector(rng, d);
    const double quad_inv = inv_quad(psd_factorize(z), v);
    const double mid = alpha * v.dot(a.sqrt_matrix * v);
    const double upper = alpha * min_eigenvalue(z) * quad_inv;
    const double lo = mid - quad_inv + 1e-9 * (1.0 + quad_inv);
    const double hi = upper + 1e-9 * (1.0 + upper) - mid;
    const double margin = std::min(lo, hi);
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
    ++checked;
  }
  return finish("inverse-sandwich-quarter-floor", checked, fail, worst);
}

// (x - c1)/(c2 + c3 sqrt(x)) and (x - c1)/(c2 + c3 x) are increasing on a
// grid over [0, 64] for nonnegative c1, c3 and positive c2.
inline CheckResult check_ratio_forms_monotone(long cases, std::uint64_t seed) {
  Rng rng = Rng::from_seed(seed);
  long fail = 0, points = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long trial = 0; trial < cases; ++trial) {
    const double c1 = std::abs(rng.next_gaussian());
    const double c2 = std::abs(rng.next_gaussian()) + 1e-6;
    const double c3 = std::abs(rng.next_gaussian());
    auto f = [&](double x) { return (x - c1) / (c2 + c3 * std::sqrt(x)); };
    auto g = [&](double x) { return (x - c1) / (c2 + c3 * x); };
    double prev_f = f(0.0), prev_g = g(0.0);
    for (double x = 0.25; x <= 64.0; x += 0.25) {
      const double fx = f(x), gx = g(x);
      const double margin = std::min(fx - prev_f + 1e-12, gx - prev_g + 1e-12);
      worst = std::min(worst, margin);
      if (margin < 0.0) ++fail;
      prev_f = fx;
      prev_g = gx;
      ++points;
    }
  }
  return suites_detail::finish("ratio-forms-monotone", points, fail, worst);
}

// Incremental rank-two deltas against explicitly rebuilt and refactorized
// matrices.
inline CheckResult check_rank_two_rebuild_match(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0, checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  while (checked < cases) {
    const int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = rand_pd(rng, d);
    Matrix wgt = rand_psd(rng, d, d);
    Vector u = rand_vector(rng, d, 0.3);
    Vector w = rand_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    if (2.0 * inv_quad(f, u) >= 0.9) continue;
    Matrix rebuilt = m - u * u.transpose() + w * w.transpose();
    PsdFactorization rf = psd_factorize(rebuilt);

    const double ld = rank_two_logdet_delta(f, u, w);
    const double ld_expect = rf.log_det_cache - f.log_det_cache;
    const double det_margin = 1e-9 * (1.0 + std::abs(ld_expect)) - std::abs(ld - ld_expect);

    const double td = rank_two_weighted_trace_delta(f, wgt, u, w);
    const double td_expect = weighted_trace_inverse(rf, wgt) - weighted_trace_inverse(f, wgt);
    const double tr_margin = 1e-9 * (1.0 + std::abs(td_expect)) - std::abs(td - td_expect);

    const double margin = std::min(det_margin, tr_margin);
    worst = std::min(worst, margin);
    if (margin < 0.0) ++fail;
    ++checked;
  }
  return finish("rank-two-rebuild-match", checked, fail, worst);
}

// Grid-scan candidate selection against the rebuild-everything oracle for
// all three objectives.
inline CheckResult check_best_exchange_oracle_match(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0, checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  while (checked < cases) {
    const int d = 2 + static_cast<int>(rng.next_below(3));
    const int n = 2 * d + 2 + static_cast<int>(rng.next_below(5));
    std::vector<Vector> vecs;
    vecs.reserve(n);
    for (int i = 0; i < n; ++i) vecs.push_back(rand_vector(rng, d, 0.8));
    const int b = d + 1 + static_cast<int>(rng.next_below(2));
    std::vector<int> subset(b);
    for (int i = 0; i < b; ++i) subset[i] = i;
    Matrix z = Matrix::Zero(d, d);
    for (int i : subset) z.noalias() += vecs[i] * vecs[i].transpose();
    if (min_eigenvalue(z) < 1e-4) continue;
    GramState state(vecs, subset);
    std::vector<int> removals = subset;
    std::vector<int> additions;
    for (int i = b; i < n; ++i) additions.push_back(i);

    const double alpha = 2.0 + 2.0 * rng.next_uniform();
    for (ObjectiveKind kind : {ObjectiveKind::D, ObjectiveKind::A, ObjectiveKind::E}) {
      ExchangeChoice pick = best_exchange(vecs, state, kind, removals, additions,
                                          kind == ObjectiveKind::E ? alpha : 0.0);
      ExchangePick oracle = brute_force_best_exchange(vecs, subset, kind,
                                                      kind == ObjectiveKind::E ? alpha : 0.0);
      double margin;
      if (pick.found != oracle.found) {
        margin = -1.0;
      } else if (!pick.found) {
        margin = 0.0;
      } else {
        margin = 1e-9 * (1.0 + std::abs(oracle.value)) - std::abs(pick.value - oracle.value);
      }
      worst = std::min(worst, margin);
      if (margin < 0.0) ++fail;
      ++checked;
    }
  }
  return finish("best-exchange-oracle-match", checked, fail, worst);
}

// Exact conditional expectations against an independent slot-by-slot sum
// that recomputes every mass and every per-slot value with dense algebra.
inline CheckResult check_conditional_expectation_match(long cases, std::uint64_t seed) {
  using namespace suites_detail;
  Rng rng = Rng::from_seed(seed);
  long fail = 0, checked = 0;
  double worst = std::numeric_limits<double>::infinity();
  static const StepQuantity quantities[] = {
      StepQuantity::Delta,  StepQuantity::DeltaPlus, StepQuantity::DeltaMinus,
      StepQuantity::GammaD, StepQuantity::GainD,     StepQuantity::LossD,
      StepQuantity::GammaA, StepQuantity::GainA,     StepQuantity::LossA};
  while (checked < cases) {
    const int d = 2 + static_cast<int>(rng.next_below(3));
    const int n = 6 + static_cast<int>(rng.next_below(6));
    std::vector<Vector> vecs;
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      vecs.push_back(rand_vector(rng, d, 0.6));
      x(i) = 0.05 + 0.9 * rng.next_uniform();
    }
    std::vector<int> subset;
    for (int i = 0; i < n; ++i)
      if (rng.next_uniform() < 0.5) subset.push_back(i);
    if (static_cast<int>(subset.size()) < d) continue;
    Matrix z = Matrix::Zero(d, d);
    for (int i : subset) z.noalias() += vecs[i] * vecs[i].transpose();
    if (min_eigenvalue(z) < 0.05) continue;

    SamplingConfig cfg;
    cfg.alpha = 0.4 + 1.2 * rng.next_uniform();
    cfg.k = 8.0 + 8.0 * rng.next_uniform();
    cfg.eps = 0.05;
    cfg.weight = rand_psd(rng, d, d) + 0.2 * Matrix::Identity(d, d);

    // Direct dense recomputation of the sampling step.
    ActionMatrix action = compute_action_matrix(z, cfg.alpha);
    Matrix shifted_inv =
        (cfg.alpha * z - action.l_value * Matrix::Identity(d, d)).inverse();
    Matrix a_full = shifted_inv * shifted_inv;
    Matrix z_inv = z.inverse();
    std::vector<char> member(n, 0);
    for (int i : subset) member[i] = 1;

    for (StepQuantity q : quantities) {
      double direct = 0.0;
      for (int i = 0; i < n; ++i) {
        const Vector& v = vecs[i];
        const double s = v.dot(action.sqrt_matrix * v);
        if (member[i]) {
          if (!(2.0 * cfg.alpha * s <= 0.5)) continue;
          const double mass = (1.0 - x(i)) * (1.0 - 2.0 * cfg.alpha * s) / cfg.k;
          if (mass <= 0.0) continue;
          double val = 0.0, sign = -1.0;
          const double quad = v.dot(z_inv * v);
          const Vector zi = z_inv * v;
          switch (q) {
            case StepQuantity::Delta:
              val = v.dot(a_full * v) / (1.0 - 2.0 * cfg.alpha * v.dot(shifted_inv * v));
              break;
            case StepQuantity::DeltaMinus:
              val = v.dot(a_full * v) / (1.0 - 2.0 * cfg.alpha * v.dot(shifted_inv * v));
              sign = 1.0;
              break;
            case StepQuantity::GammaD:
              val = (1.0 + 5.0 * cfg.eps) * quad;
              break;
            case StepQuantity::LossD:
              val = quad;
              sign = 1.0;
              break;
            case StepQuantity::GammaA:
              val = zi.dot(cfg.weight * zi) / (1.0 - 2.0 * v.dot(zi));
              break;
            case StepQuantity::LossA:
              val = zi.dot(cfg.weight * zi) / (1.0 - 2.0 * v.dot(zi));
              sign = 1.0;
              break;
            default:
              continue;
          }
          direct += sign * mass * val;
        } else {
          if (x(i) <= 0.0) continue;
          const double mass = x(i) * (1.0 + 2.0 * cfg.alpha * s) / cfg.k;
          double val = 0.0;
          const double quad = v.dot(z_inv * v);
          const Vector zi = z_inv * v;
          switch (q) {
            case StepQuantity::Delta:
            case StepQuantity::DeltaPlus:
              val = v.dot(a_full * v) / (1.0 + 2.0 * cfg.alpha * v.dot(shifted_inv * v));
              break;
            case StepQuantity::GammaD:
              val = (1.0 - 4.0 * cfg.eps) * quad;
              break;
            case StepQuantity::GainD:
              val = quad;
              break;
            case StepQuantity::GammaA:
            case StepQuantity::GainA:
              val = zi.dot(cfg.weight * zi) / (1.0 + 2.0 * v.dot(zi));
              break;
            default:
              continue;
          }
          direct += mass * val;
        }
      }
      const double got = exact_conditional_expectation(vecs, subset, x, z, cfg, q);
      const double margin = 1e-9 * (1.0 + std::abs(direct)) - std::abs(got - direct);
      worst = std::min(worst, margin);
      if (margin < 0.0) ++fail;
      ++checked;
    }
  }
  return finish("conditional-expectation-match", checked, fail, worst);
}

inline SuiteReport run_lemma_suite(long cases = 1000, std::uint64_t seed_base = 0) {
  if (cases < 1) throw std::invalid_argument("run_lemma_suite: cases must be >= 1");
  SuiteReport rep;
  rep.suite = "lemmas";
  rep.checks.push_back(check_rank_one_determinant_growth(cases, seed_base + 10));
  rep.checks.push_back(check_exchange_determinant_floor(cases, seed_base + 11));
  rep.checks.push_back(check_exchange_trace_ceiling(cases, seed_base + 13));
  rep.checks.push_back(check_inner_product_geometric_mean(cases, seed_base + 14));
  rep.checks.push_back(check_trace_cauchy_schwarz_pair(cases, seed_base + 15));
  rep.checks.push_back(check_smoothed_objective_brackets(cases, seed_base + 25));
  rep.checks.push_back(check_action_trace_normalization(cases, seed_base + 24));
  rep.checks.push_back(check_inverse_sandwich_quarter_floor(cases, seed_base + 26));
  rep.checks.push_back(check_ratio_forms_monotone(std::max(1L, cases / 5), seed_base + 17));
  rep.checks.push_back(check_rank_two_rebuild_match(std::max(1L, cases / 5), seed_base + 9));
  rep.checks.push_back(check_best_exchange_oracle_match(std::max(1L, cases / 5), seed_base + 404));
  rep.checks.push_back(
      check_conditional_expectation_match(std::max(1L, cases / 5), seed_base + 33));
  return rep;
}

// ---------------------------------------------------------------------------
// Adversarial fixture replays.

inline SuiteReport run_trap_suite() {
  SuiteReport rep;
  rep.suite = "traps";

  {
    CheckResult c;
    c.name = "identity-start-exchange-cap";
    long fail = 0, cases = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (int b : {3, 6}) {
      TrapFixture fx = fixture_e_identity_trap(3, b, 10.0);
      Matrix z1 = gram_of_subset(fx.instance, fx.initial_subset);
      if (!z1.isApprox(Matrix::Identity(3, 3), 1e-10)) ++fail;
      ++cases;
      for (int i : fx.initial_subset) {
        for (std::size_t j = fx.initial_subset.size(); j < fx.instance.vectors.size(); ++j) {
          Matrix z2 = z1 - fx.instance.vectors[i] * fx.instance.vectors[i].transpose() +
                      fx.instance.vectors[j] * fx.instance.vectors[j].transpose();
          const double margin = fx.cap + 1e-9 - min_eigenvalue(z2);
          worst = std::min(worst, margin);
          if (margin < 0.0) ++fail;
          ++cases;
        }
      }
    }
    c.cases = cases;
    c.failures = fail;
    c.passed = fail == 0;
    c.detail = suites_detail::margin_note(worst);
    rep.checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "axis-start-strict-decrease";
    long fail = 0, cases = 0;
    const int b = 4;
    const double big_n = 100.0;
    TrapFixture fx = fixture_e_decreasing(b, big_n);
    Matrix z1 = gram_of_subset(fx.instance, fx.initial_subset);
    double best_after = -std::numeric_limits<double>::infinity();
    for (int i : fx.initial_subset) {
      for (int j = b; j < 2 * b; ++j) {
        Matrix z2 = z1 - fx.instance.vectors[i] * fx.instance.vectors[i].transpose() +
                    fx.instance.vectors[j] * fx.instance.vectors[j].transpose();
        const double lam = min_eigenvalue(z2);
        best_after = std::max(best_after, lam);
        if (!(lam < fx.start_min_eig - 1e-9)) ++fail;
        ++cases;
      }
    }
    const double formula = (b + big_n - 1.0 - std::sqrt(big_n * big_n + 1.0)) / 2.0;
    if (std::abs(fx.first_exchange_min_eig - formula) > 1e-9) ++fail;
    if (std::abs(best_after - formula) > 1e-9) ++fail;
    cases += 2;
    c.cases = cases;
    c.failures = fail;
    c.passed = fail == 0;
    std::ostringstream os;
    os << "best single exchange " << best_after << " vs closed form " << formula;
    c.detail = os.str();
    rep.checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "axis-start-search-stall";
    long fail = 0, cases = 0;
    TrapFixture fx = fixture_e_decreasing(4, 100.0);
    for (double eps : {0.05, 0.1, 0.3}) {
      ExchangeResult res = local_search_e(fx.instance, 4, eps, fx.optimum_min_eig,
                                          fx.initial_subset);
      if (!res.trace.steps.empty() ||
          res.trace.terminated_reason != TerminationReason::ImprovementTooSmall) {
        ++fail;
      }
      ++cases;
    }
    bool exhausted = false;
    try {
      local_search_e_auto(fx.instance, 4, 0.1, fx.initial_subset);
    } catch (const Exhausted&) {
      exhausted = true;
    }
    if (!exhausted) ++fail;
    ++cases;
    c.cases = cases;
    c.failures = fail;
    c.passed = fail == 0;
    c.detail = "stalls at b=4 for every target guess";
    rep.checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "axis-start-escape-at-larger-budget";
    long fail = 0;
    TrapFixture fx = fixture_e_decreasing(6, 100.0);
    const double eps = 1.0 / 12.0;
    ExchangeResult res = local_search_e(fx.instance, 6, eps, fx.optimum_min_eig,
                                        fx.initial_subset);
    if (res.trace.terminated_reason != TerminationReason::TargetReached) ++fail;
    if (!(res.solution.objective_value >=
          (1.0 - 2.0 * eps) * fx.optimum_min_eig * (1.0 - 1e-12))) {
      ++fail;
    }
    if (res.trace.steps.size() < 2 ||
        !(res.trace.steps[0].objective_after < res.trace.steps[0].objective_before)) {
      ++fail;
    }
    c.cases = 3;
    c.failures = fail;
    c.passed = fail == 0;
    std::ostringstream os;
    os << "reached " << res.solution.objective_value << " of target " << fx.optimum_min_eig;
    c.detail = os.str();
    rep.checks.push_back(c);
  }

  {
    CheckResult c;
    c.name = "smoothed-search-polynomial-stall";
    long fail = 0;
    TrapFixture fx = fixture_a_smoothed_trap(4, 20.0, 8);
    ExchangeResult res = local_search_e(fx.instance, 4, 0.25, 1.0, fx.initial_subset);
    if (!res.trace.steps.empty() ||
        res.trace.terminated_reason != TerminationReason::ImprovementTooSmall) {
      ++fail;
    }
    if (res.solution.membership !=
        membership_from_subset(fx.instance.n(), fx.initial_subset)) {
      ++fail;
    }
    if (std::abs(res.solution.objective_value - fx.start_min_eig) >
        1e-9 * std::max(1.0, fx.start_min_eig)) {
      ++fail;
    }
    c.cases = 3;
    c.failures = fail;
    c.passed = fail == 0;
    std::ostringstream os;
    os << "stuck at " << res.solution.objective_value << " with optimum "
       << fx.optimum_min_eig << " available";
    c.detail = os.str();
    rep.checks.push_back(c);
  }

  return rep;
}

// ---------------------------------------------------------------------------
// Monte-Carlo success-rate harness for the randomized exchange rounder.

struct MonteCarloOptions {
  int runs = 200;
  std::uint64_t seed_base = 100;
  int threads = 0;  // 0: hardware concurrency, capped by OPTDESIGN_THREADS
  int dim = 3;
  int ground = 900;
  double budget = 600.0;
  double eps = 0.01;
  std::uint64_t gen_seed = 7;
};

namespace suites_detail {

inline int resolve_threads(int requested, int runs) {
  int t = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  if (const char* env = std::getenv("OPTDESIGN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) t = std::min(t, cap);
  }
  return std::min(t, std::max(1, runs));
}

struct McRunOutcome {
  bool terminated = false;
  std::int64_t iterations = 0;
  double objective = 0.0;
  double cost = 0.0;
  bool tau1_in_time = false;
  bool floor_held = false;
  bool regret_ok = false;
  int k = 0;
};

}  // namespace suites_detail

inline SuiteReport run_montecarlo_suite(const MonteCarloOptions& opts = {}) {
  using suites_detail::McRunOutcome;
  if (opts.runs < 1) throw std::invalid_argument("run_montecarlo_suite: runs must be >= 1");
  SuiteReport rep;
  rep.suite = "montecarlo";

  DesignInstance inst = with_cardinality_budget(
      gen_gaussian(opts.dim, opts.ground, opts.gen_seed), opts.budget);
  DesignInstance run_inst = inst;
  run_inst.budgets /= 1.0 + 100.0 * opts.eps;

  const int threads = suites_detail::resolve_threads(opts.threads, opts.runs);

  auto run_kind = [&](ObjectiveKind kind) {
    FractionalSolution rel = solve_relaxation(run_inst, kind, 1e-7);
    FractionalSolution sparse = sparsify_to_extreme_point(run_inst, rel);
    WhitenedProblem wp = whiten_for_rounding(run_inst, sparse);

    std::vector<McRunOutcome> outcomes(opts.runs);
    auto worker = [&](int lo, int hi) {
      for (int r = lo; r < hi; ++r) {
        RoundingConfig cfg;
        cfg.objective_kind = kind;
        cfg.eps = opts.eps;
        cfg.seed = opts.seed_base + static_cast<std::uint64_t>(r);
        RoundingResult res = randomized_exchange(run_inst, cfg, wp);
        McRunOutcome& out = outcomes[r];
        out.terminated = res.terminated;
        out.iterations = res.iterations;
        out.objective = res.solution.objective_value;
        out.cost = res.solution.costs_used(0);
        out.k = res.k;
        const std::int64_t tau_bound = 16 * static_cast<std::int64_t>(res.k);
        out.tau1_in_time = res.phases.tau1 && *res.phases.tau1 <= tau_bound;
        out.floor_held = res.phases.tau1 && res.phases.min_lambda_after_tau1 >= 0.25;
        Matrix z0 = Matrix::Zero(inst.dim, inst.dim);
        for (int i : res.initial_subset)
          z0.noalias() += wp.whitened.vectors[i] * wp.whitened.vectors[i].transpose();
        RegretReport rr = verify_regret_bound(wp.whitened.vectors, res.trace, z0, res.alpha);
        out.regret_ok = rr.pass;
      }
    };
    if (threads <= 1) {
      worker(0, opts.runs);
    } else {
      std::vector<std::thread> pool;
      const int chunk = (opts.runs + threads - 1) / threads;
      for (int t = 0; t < threads; ++t) {
        const int lo = t * chunk, hi = std::min(opts.runs, (t + 1) * chunk);
        if (lo < hi) pool.emplace_back(worker, lo, hi);
      }
      for (std::thread& th : pool) th.join();
    }
    return std::make_pair(rel.objective_value, outcomes);
  };

  auto [cp_d, runs_d] = run_kind(ObjectiveKind::D);
  auto [cp_a, runs_a] = run_kind(ObjectiveKind::A);

  const double inv_d = 1.0 / static_cast<double>(opts.dim);
  auto rate_row = [&](const char* name, const std::vector<McRunOutcome>& rows,
                      auto&& predicate) {
    CheckResult c;
    c.name = name;
    long ok = 0;
    for (const McRunOutcome& r : rows)
      if (predicate(r)) ++ok;
    c.cases = static_cast<long>(rows.size());
    c.failures = c.cases - ok;
    const double frac = static_cast<double>(ok) / static_cast<double>(rows.size());
    c.passed = frac >= 0.9;
    std::ostringstream os;
    os << ok << "/" << rows.size() << " runs";
    c.detail = os.str();
    rep.checks.push_back(c);
  };

  auto iter_ok = [&](const McRunOutcome& r) {
    const std::int64_t bound =
        16 * static_cast<std::int64_t>(r.k) +
        static_cast<std::int64_t>(std::ceil(2.0 * r.k / opts.eps));
    return r.terminated && r.iterations <= bound;
  };
  rate_row("determinant-guarantee-rate", runs_d, [&](const McRunOutcome& r) {
    return iter_ok(r) &&
           std::pow(r.objective, inv_d) >=
               (1.0 - 30.0 * opts.eps) * std::pow(cp_d, inv_d) - 1e-12 &&
           r.cost <= inst.budgets(0) + 1e-9;
  });
  rate_row("trace-guarantee-rate", runs_a, [&](const McRunOutcome& r) {
    return iter_ok(r) && r.objective <= (1.0 + opts.eps) * cp_a * (1.0 + 1e-9) &&
           r.cost <= inst.budgets(0) + 1e-9;
  });

  std::vector<McRunOutcome> pooled = runs_d;
  pooled.insert(pooled.end(), runs_a.begin(), runs_a.end());
  rate_row("phase-one-entry-rate", pooled,
           [](const McRunOutcome& r) { return r.tau1_in_time; });
  rate_row("phase-two-quarter-floor-rate", pooled,
           [](const McRunOutcome& r) { return r.floor_held; });

  {
    CheckResult c;
    c.name = "regret-bound-replay";
    long fail = 0;
    for (const McRunOutcome& r : pooled)
      if (!r.regret_ok) ++fail;
    c.cases = static_cast<long>(pooled.size());
    c.failures = fail;
    c.passed = fail == 0;
    std::ostringstream os;
    os << "every recorded trace replays the telescoped bound";
    c.detail = os.str();
    rep.checks.push_back(c);
  }

  return rep;
}

}  // namespace optdesign
