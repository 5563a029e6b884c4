#pragma once

// Exchange search over size-b support sets: Fedorov loops for the determinant
// and trace objectives, and a smoothed local search for the minimum
// eigenvalue driven by a target value lambda*.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"
#include "optdesign/regret.hpp"
#include "optdesign/trace.hpp"

namespace optdesign {

struct DegenerateInit : std::runtime_error {
  explicit DegenerateInit(const std::string& what) : std::runtime_error(what) {}
};

struct Exhausted : std::runtime_error {
  explicit Exhausted(const std::string& what) : std::runtime_error(what) {}
};

struct ExchangeResult {
  IntegralSolution solution;
  ExchangeTrace trace;
};

struct AutoEResult {
  IntegralSolution solution;
  ExchangeTrace trace;
  double lambda_star_used = 0.0;
  int guesses_tried = 0;
};

// One grid scan outcome. `value` is the log-det delta (D), the trace-inverse
// delta (A), or the smoothed gain-minus-loss phi (E) of the winning pair.
struct ExchangeChoice {
  int removed = -1;
  int added = -1;
  double value = 0.0;
  bool found = false;
};

namespace detail {

inline std::int64_t default_iter_cap(int b, int n) {
  const double cap = 8.0 * b * b * b * static_cast<double>(n);
  const double hi = 8.9e18;
  return static_cast<std::int64_t>(std::min(cap, hi));
}

inline std::vector<int> checked_subset(const std::vector<int>& init, int n, int b,
                                       const char* who) {
  if (static_cast<int>(init.size()) != b)
    throw std::invalid_argument(std::string(who) + ": init must have exactly b indices");
  std::vector<char> seen(n, 0);
  for (int idx : init) {
    if (idx < 0 || idx >= n)
      throw std::invalid_argument(std::string(who) + ": init index out of range");
    if (seen[idx]) throw std::invalid_argument(std::string(who) + ": duplicate init index");
    seen[idx] = 1;
  }
  return init;
}

// Candidate lists in ascending index order so that strict comparisons break
// ties toward the lowest (i, then j).
inline ExchangeChoice best_exchange_d(const std::vector<Vector>& vectors, const Matrix& gram,
                                      const PsdFactorization& fact,
                                      const std::vector<int>& removals,
                                      const std::vector<int>& additions) {
  ExchangeChoice best;
  best.value = -std::numeric_limits<double>::infinity();
  for (int i : removals) {
    for (int j : additions) {
      double delta;
      try {
        delta = rank_two_logdet_delta(fact, vectors[i], vectors[j]);
      } catch (const RemovalSingular&) {
        Matrix z = gram;
        z.noalias() -= vectors[i] * vectors[i].transpose();
        z.noalias() += vectors[j] * vectors[j].transpose();
        try {
          delta = psd_factorize(z).log_det_cache - fact.log_det_cache;
        } catch (const NotPositiveDefinite&) {
          continue;
        }
      }
      if (!best.found || delta > best.value) {
        best.removed = i;
        best.added = j;
        best.value = delta;
        best.found = true;
      }
    }
  }
  return best;
}

inline ExchangeChoice best_exchange_a(const std::vector<Vector>& vectors, const Matrix& gram,
                                      const PsdFactorization& fact,
                                      const std::vector<int>& removals,
                                      const std::vector<int>& additions) {
  ExchangeChoice best;
  best.value = std::numeric_limits<double>::infinity();
  const Matrix eye = Matrix::Identity(fact.dim, fact.dim);
  const double tr_base = trace_inverse(fact);
  for (int i : removals) {
    for (int j : additions) {
      double delta;
      try {
        delta = rank_two_weighted_trace_delta(fact, eye, vectors[i], vectors[j]);
      } catch (const RemovalSingular&) {
        Matrix z = gram;
        z.noalias() -= vectors[i] * vectors[i].transpose();
        z.noalias() += vectors[j] * vectors[j].transpose();
        try {
          delta = trace_inverse(psd_factorize(z)) - tr_base;
        } catch (const NotPositiveDefinite&) {
          continue;
        }
      }
      if (!best.found || delta < best.value) {
        best.removed = i;
        best.added = j;
        best.value = delta;
        best.found = true;
      }
    }
  }
  return best;
}

inline ExchangeChoice best_exchange_e(const std::vector<Vector>& vectors,
                                      const ActionMatrix& action,
                                      const std::vector<int>& removals,
                                      const std::vector<int>& additions) {
  ExchangeChoice best;
  best.value = -std::numeric_limits<double>::infinity();
  for (int i : removals) {
    const double gate =
        2.0 * action.alpha * vectors[i].dot(action.sqrt_matrix * vectors[i]);
    if (!(gate < 1.0)) continue;
    for (int j : additions) {
      const DeltaTerms dt = delta_terms(action, vectors[i], vectors[j]);
      if (!best.found || dt.delta > best.value) {
        best.removed = i;
        best.added = j;
        best.value = dt.delta;
        best.found = true;
      }
    }
  }
  return best;
}

}  // namespace detail

// Exact argmax/argmin over the full removal x addition grid; ties go to the
// lowest removal index, then the lowest addition index. For E the candidates
// are scored against the action matrix of the current Gram at `alpha_for_e`,
// and removals violating 2a<vv',A^1/2> < 1 are skipped.
inline ExchangeChoice best_exchange(const std::vector<Vector>& vectors, const GramState& state,
                                    ObjectiveKind kind, std::vector<int> removals,
                                    std::vector<int> additions, double alpha_for_e = 0.0) {
  std::sort(removals.begin(), removals.end());
  std::sort(additions.begin(), additions.end());
  switch (kind) {
    case ObjectiveKind::D:
      return detail::best_exchange_d(vectors, state.gram(), state.factorization(), removals,
                                     additions);
    case ObjectiveKind::A:
      return detail::best_exchange_a(vectors, state.gram(), state.factorization(), removals,
                                     additions);
    case ObjectiveKind::E: {
      if (!(alpha_for_e > 0.0))
        throw std::invalid_argument("best_exchange: E scoring needs alpha_for_e > 0");
      const ActionMatrix action = compute_action_matrix(state.gram(), alpha_for_e);
      return detail::best_exchange_e(vectors, action, removals, additions);
    }
  }
  throw std::logic_error("best_exchange: unknown objective");
}

// Volume-greedy start: d rounds of largest orthogonal residual, then fill to
// b vectors by largest norm. Ties go to the lowest index.
inline std::vector<int> greedy_full_rank_init(const DesignInstance& inst, int b) {
  const int n = inst.n();
  const int d = inst.dim;
  if (b < d) throw std::invalid_argument("greedy_full_rank_init: need b >= dim");
  if (b > n) throw std::invalid_argument("greedy_full_rank_init: need b <= n");
  std::vector<int> chosen;
  chosen.reserve(b);
  std::vector<char> used(n, 0);
  Matrix basis = Matrix::Zero(d, d);
  int rank = 0;
  while (rank < d) {
    int pick = -1;
    double pick_res = 0.0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      Vector r = inst.vectors[i];
      if (rank > 0)
        r.noalias() -= basis.leftCols(rank) * (basis.leftCols(rank).transpose() * r);
      const double res = r.squaredNorm();
      if (res > pick_res) {
        pick_res = res;
        pick = i;
      }
    }
    if (pick < 0 || pick_res <= 1e-12 * inst.vectors[pick].squaredNorm())
      throw DegenerateInit("greedy_full_rank_init: no full-rank subset of size " +
                           std::to_string(b));
    Vector r = inst.vectors[pick];
    for (int pass = 0; pass < 2 && rank > 0; ++pass)
      r.noalias() -= basis.leftCols(rank) * (basis.leftCols(rank).transpose() * r);
    basis.col(rank) = r / r.norm();
    ++rank;
    used[pick] = 1;
    chosen.push_back(pick);
  }
  while (static_cast<int>(chosen.size()) < b) {
    int pick = -1;
    double pick_norm = -1.0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      const double nn = inst.vectors[i].squaredNorm();
      if (nn > pick_norm) {
        pick_norm = nn;
        pick = i;
      }
    }
    used[pick] = 1;
    chosen.push_back(pick);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// Determinant exchange loop. Keeps swapping while the best pair improves the
// determinant by a factor of at least 1 + d/(4 b^3); the sub-threshold swap
// at the end is evaluated but never applied, so the returned set is the last
// iterate that met the factor and the trace holds only kept exchanges.
inline ExchangeResult fedorov_d(const DesignInstance& inst, int b,
                                const std::optional<std::vector<int>>& init = std::nullopt,
                                std::int64_t iter_cap = -1) {
  const int n = inst.n();
  const int d = inst.dim;
  if (b < d) throw std::invalid_argument("fedorov_d: need b >= dim");
  if (b > n) throw std::invalid_argument("fedorov_d: need b <= n");
  if (iter_cap < 0) iter_cap = detail::default_iter_cap(b, n);
  const std::vector<int> start =
      init ? detail::checked_subset(*init, n, b, "fedorov_d") : greedy_full_rank_init(inst, b);
  GramState state;
  try {
    state = GramState(inst.vectors, start);
  } catch (const NotPositiveDefinite&) {
    throw DegenerateInit("fedorov_d: initial subset is rank-deficient");
  }
  std::vector<char> member(n, 0);
  for (int idx : start) member[idx] = 1;
  const double min_step = std::log1p(d / (4.0 * b * b * b));
  ExchangeTrace trace;
  int t = 1;
  while (true) {
    if (static_cast<std::int64_t>(trace.steps.size()) >= iter_cap) {
      trace.terminated_reason = TerminationReason::IterationCap;
      break;
    }
    std::vector<int> removals;
    std::vector<int> additions;
    for (int i = 0; i < n; ++i) (member[i] ? removals : additions).push_back(i);
    if (additions.empty()) break;
    const ExchangeChoice pick = detail::best_exchange_d(inst.vectors, state.gram(),
                                                        state.factorization(), removals, additions);
    if (!pick.found || pick.value < min_step) break;
    ExchangeStep step;
    step.t = t;
    step.removed = pick.removed;
    step.added = pick.added;
    step.objective_before = std::exp(state.log_det());
    step.delta_minus = inv_quad(state.factorization(), inst.vectors[pick.removed]);
    step.delta_plus = inv_quad(state.factorization(), inst.vectors[pick.added]);
    state.apply_exchange(inst.vectors, pick.removed, pick.added);
    member[pick.removed] = 0;
    member[pick.added] = 1;
    step.objective_after = std::exp(state.log_det());
    step.lambda_min_after = state.min_eig();
    trace.steps.push_back(step);
    ++t;
  }
  ExchangeResult out;
  out.solution = make_solution(inst, state.subset(), ObjectiveKind::D);
  out.trace = std::move(trace);
  return out;
}

// Trace exchange loop: same shape as fedorov_d, swapping while the best pair
// shrinks tr(Z^-1) by a factor of at least eps/b. Removals whose Woodbury
// precondition 2 v'Z^-1 v < 1 fails are scored by full refactorization.
inline ExchangeResult fedorov_a(const DesignInstance& inst, int b, double eps,
                                const std::optional<std::vector<int>>& init = std::nullopt,
                                std::int64_t iter_cap = -1) {
  const int n = inst.n();
  const int d = inst.dim;
  if (b < d) throw std::invalid_argument("fedorov_a: need b >= dim");
  if (b > n) throw std::invalid_argument("fedorov_a: need b <= n");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("fedorov_a: eps must lie in (0, 1)");
  if (iter_cap < 0) iter_cap = detail::default_iter_cap(b, n);
  const std::vector<int> start =
      init ? detail::checked_subset(*init, n, b, "fedorov_a") : greedy_full_rank_init(inst, b);
  GramState state;
  try {
    state = GramState(inst.vectors, start);
  } catch (const NotPositiveDefinite&) {
    throw DegenerateInit("fedorov_a: initial subset is rank-deficient");
  }
  std::vector<char> member(n, 0);
  for (int idx : start) member[idx] = 1;
  ExchangeTrace trace;
  int t = 1;
  while (true) {
    if (static_cast<std::int64_t>(trace.steps.size()) >= iter_cap) {
      trace.terminated_reason = TerminationReason::IterationCap;
      break;
    }
    std::vector<int> removals;
    std::vector<int> additions;
    for (int i = 0; i < n; ++i) (member[i] ? removals : additions).push_back(i);
    if (additions.empty()) break;
    const double tr_before = trace_inverse(state.factorization());
    const ExchangeChoice pick = detail::best_exchange_a(inst.vectors, state.gram(),
                                                        state.factorization(), removals, additions);
    if (!pick.found) break;
    if (!(tr_before + pick.value <= (1.0 - eps / b) * tr_before)) break;
    ExchangeStep step;
    step.t = t;
    step.removed = pick.removed;
    step.added = pick.added;
    step.objective_before = tr_before;
    {
      const Vector zi = solve_spd(state.factorization(), inst.vectors[pick.removed]);
      const Vector zj = solve_spd(state.factorization(), inst.vectors[pick.added]);
      const double den_loss = 1.0 - 2.0 * inst.vectors[pick.removed].dot(zi);
      step.delta_minus = den_loss > 0.0 ? zi.squaredNorm() / den_loss
                                        : std::numeric_limits<double>::infinity();
      step.delta_plus =
          zj.squaredNorm() / (1.0 + 2.0 * inst.vectors[pick.added].dot(zj));
    }
    state.apply_exchange(inst.vectors, pick.removed, pick.added);
    member[pick.removed] = 0;
    member[pick.added] = 1;
    step.objective_after = trace_inverse(state.factorization());
    step.lambda_min_after = state.min_eig();
    trace.steps.push_back(step);
    ++t;
  }
  ExchangeResult out;
  out.solution = make_solution(inst, state.subset(), ObjectiveKind::A);
  out.trace = std::move(trace);
  return out;
}

// Smoothed min-eigenvalue local search toward a target lambda*. Each round
// recomputes the action matrix at alpha = sqrt(d)/(eps lambda*), restricts
// removals to 2 alpha <vv', A^1/2> < 1, and applies the argmax of
// gain-minus-loss while it stays at least eps lambda* / b and the Gram's
// smallest eigenvalue stays below (1 - 2 eps) lambda*. An empty removal set
// is reported as the termination reason, not an error. The Gram may pass
// through singular iterates, so no factorization is maintained here.
inline ExchangeResult local_search_e(const DesignInstance& inst, int b, double eps,
                                     double lambda_star,
                                     const std::optional<std::vector<int>>& init = std::nullopt,
                                     std::int64_t iter_cap = -1) {
  const int n = inst.n();
  const int d = inst.dim;
  if (b < d) throw std::invalid_argument("local_search_e: need b >= dim");
  if (b > n) throw std::invalid_argument("local_search_e: need b <= n");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("local_search_e: eps must lie in (0, 1)");
  if (!(lambda_star > 0.0))
    throw std::invalid_argument("local_search_e: lambda_star must be positive");
  if (iter_cap < 0) iter_cap = detail::default_iter_cap(b, n);
  std::vector<int> subset = init ? detail::checked_subset(*init, n, b, "local_search_e")
                                 : greedy_full_rank_init(inst, b);
  std::vector<char> member(n, 0);
  for (int idx : subset) member[idx] = 1;
  const double alpha = std::sqrt(static_cast<double>(d)) / (eps * lambda_star);
  const double phi_floor = eps * lambda_star / b;
  const double target = (1.0 - 2.0 * eps) * lambda_star;
  Matrix z = gram_of_subset(inst, subset);
  int since_rebuild = 0;
  double lam = min_eigenvalue(z);
  ExchangeTrace trace;
  int t = 1;
  while (true) {
    if (lam >= target) {
      trace.terminated_reason = TerminationReason::TargetReached;
      break;
    }
    if (static_cast<std::int64_t>(trace.steps.size()) >= iter_cap) {
      trace.terminated_reason = TerminationReason::IterationCap;
      break;
    }
    const ActionMatrix action = compute_action_matrix(z, alpha);
    std::vector<int> removals;
    std::vector<int> additions;
    for (int i = 0; i < n; ++i) {
      if (member[i]) {
        const double gate =
            2.0 * alpha * inst.vectors[i].dot(action.sqrt_matrix * inst.vectors[i]);
        if (gate < 1.0) removals.push_back(i);
      } else {
        additions.push_back(i);
      }
    }
    if (removals.empty()) {
      trace.terminated_reason = TerminationReason::EmptyRemovalSet;
      break;
    }
    if (additions.empty()) break;
    const ExchangeChoice pick =
        detail::best_exchange_e(inst.vectors, action, removals, additions);
    if (!pick.found || pick.value < phi_floor) break;
    const DeltaTerms dt =
        delta_terms(action, inst.vectors[pick.removed], inst.vectors[pick.added]);
    ExchangeStep step;
    step.t = t;
    step.removed = pick.removed;
    step.added = pick.added;
    step.objective_before = lam;
    step.delta_minus = dt.minus;
    step.delta_plus = dt.plus;
    z.noalias() += inst.vectors[pick.added] * inst.vectors[pick.added].transpose();
    z.noalias() -= inst.vectors[pick.removed] * inst.vectors[pick.removed].transpose();
    member[pick.removed] = 0;
    member[pick.added] = 1;
    std::replace(subset.begin(), subset.end(), pick.removed, pick.added);
    if (++since_rebuild >= 64) {
      z = gram_of_subset(inst, subset);
      since_rebuild = 0;
    }
    lam = min_eigenvalue(z);
    step.objective_after = lam;
    step.lambda_min_after = lam;
    trace.steps.push_back(step);
    ++t;
  }
  ExchangeResult out;
  out.solution = make_solution(inst, subset, ObjectiveKind::E);
  out.trace = std::move(trace);
  return out;
}

// Guessing loop around local_search_e. Starts at lambda* = lambda_min of the
// whole ground set's Gram, accepts a run whose result reaches
// (1 - accept_c * eps) lambda*, and otherwise decays lambda* by (1 - eps).
// Gives up once lambda* falls below (b/n) lambda_min(full Gram) (1 - eps),
// the value certified by the uniform fractional solution.
inline AutoEResult local_search_e_auto(const DesignInstance& inst, int b, double eps,
                                       const std::optional<std::vector<int>>& init = std::nullopt,
                                       std::int64_t iter_cap = -1, double accept_c = 10.0) {
  const int n = inst.n();
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("local_search_e_auto: eps must lie in (0, 1)");
  const double lam_full = min_eigenvalue(full_gram(inst));
  if (!(lam_full > 0.0))
    throw DegenerateInit("local_search_e_auto: ground set Gram is singular");
  const double lambda_floor = (static_cast<double>(b) / n) * lam_full * (1.0 - eps);
  double lambda_star = lam_full;
  int guesses = 0;
  while (true) {
    ++guesses;
    ExchangeResult run = local_search_e(inst, b, eps, lambda_star, init, iter_cap);
    if (run.solution.objective_value >= (1.0 - accept_c * eps) * lambda_star) {
      AutoEResult out;
      out.solution = std::move(run.solution);
      out.trace = std::move(run.trace);
      out.lambda_star_used = lambda_star;
      out.guesses_tried = guesses;
      return out;
    }
    lambda_star *= 1.0 - eps;
    if (lambda_star < lambda_floor)
      throw Exhausted("local_search_e_auto: lambda* decayed below " +
                      std::to_string(lambda_floor) + " after " + std::to_string(guesses) +
                      " guesses");
  }
}

}  // namespace optdesign
