#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"
#include "optdesign/regret.hpp"

namespace optdesign {

struct TooLarge : std::runtime_error {
  explicit TooLarge(const std::string& what) : std::runtime_error(what) {}
};

struct BruteForceResult {
  std::vector<int> subset;
  double value = 0.0;
  bool found = false;
  std::uint64_t leaves_evaluated = 0;
};

namespace detail {

// Log-domain score so D compares safely; +inf/-inf encode infeasible ranks.
inline double leaf_score(const DesignInstance& inst, const std::vector<int>& subset,
                         ObjectiveKind kind) {
  Matrix z = gram_of_subset(inst, subset);
  switch (kind) {
    case ObjectiveKind::D:
      try {
        return psd_factorize(z).log_det_cache;
      } catch (const NotPositiveDefinite&) {
        return -std::numeric_limits<double>::infinity();
      }
    case ObjectiveKind::A:
      try {
        return trace_inverse(psd_factorize(z));
      } catch (const NotPositiveDefinite&) {
        return std::numeric_limits<double>::infinity();
      }
    case ObjectiveKind::E:
      try {
        psd_factorize(z);
      } catch (const NotPositiveDefinite&) {
        return -std::numeric_limits<double>::infinity();
      }
      return min_eigenvalue(z);
  }
  return 0.0;
}

}  // namespace detail

// Exhaustive optimum over all budget-feasible subsets, depth-first with
// budget pruning. Rank-deficient subsets are scored -inf (D, E) or +inf (A).
// Ties keep the first optimum in include-first DFS order.
inline BruteForceResult brute_force_opt(const DesignInstance& inst, ObjectiveKind kind,
                                        int n_cap = 22) {
  const int n = inst.n();
  const int m = inst.m();
  if (n > n_cap) {
    throw TooLarge("brute_force_opt: n=" + std::to_string(n) + " exceeds cap " +
                   std::to_string(n_cap));
  }
  if (m == 0) throw std::invalid_argument("brute_force_opt: instance has no budget rows");

  const bool minimize = kind == ObjectiveKind::A;
  BruteForceResult best;
  best.value = minimize ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
  std::vector<int> chosen;
  chosen.reserve(n);

  // `used` is passed by value so each leaf sees the ascending-index sum, the
  // same association order the rest of the code uses for <c_j, z>.
  auto dfs = [&](auto&& self, int idx, Vector used) -> void {
    if (idx == n) {
      ++best.leaves_evaluated;
      const double score = detail::leaf_score(inst, chosen, kind);
      if (!std::isfinite(score)) return;
      const bool better = minimize ? score < best.value : score > best.value;
      if (better) {
        best.value = score;
        best.subset = chosen;
        best.found = true;
      }
      return;
    }
    bool fits = true;
    Vector used_with = used;
    for (int j = 0; j < m; ++j) {
      used_with(j) += inst.costs(j, idx);
      if (!(used_with(j) <= inst.budgets(j))) {
        fits = false;
        break;
      }
    }
    if (fits) {
      chosen.push_back(idx);
      self(self, idx + 1, used_with);
      chosen.pop_back();
    }
    self(self, idx + 1, std::move(used));
  };
  dfs(dfs, 0, Vector::Zero(m));

  if (best.found && kind == ObjectiveKind::D) best.value = std::exp(best.value);
  return best;
}

struct ExchangePick {
  int removed = -1;
  int added = -1;
  double value = 0.0;
  bool found = false;
};

// Verification twin of the local-search candidate selection: every pair is
// scored by full rebuild (fresh Gram, fresh factorization, fresh action
// matrix for E), ties broken by lowest (i, then j). The E objective needs
// the learning rate alpha and skips removals with 2 alpha <vv', A^{1/2}> >= 1.
inline ExchangePick brute_force_best_exchange(const std::vector<Vector>& vectors,
                                              const std::vector<int>& subset, ObjectiveKind kind,
                                              double alpha_for_e = 0.0) {
  const int n = static_cast<int>(vectors.size());
  std::vector<char> member(n, 0);
  for (int i : subset) member[i] = 1;
  std::vector<int> inside = subset;
  std::sort(inside.begin(), inside.end());
  std::vector<int> outside;
  for (int i = 0; i < n; ++i)
    if (!member[i]) outside.push_back(i);
  if (inside.size() * outside.size() > 1000000ull) {
    throw TooLarge("brute_force_best_exchange: candidate grid exceeds 1e6");
  }

  const int d = static_cast<int>(vectors.empty() ? 0 : vectors[0].size());
  auto gram_of = [&](const std::vector<int>& idx) {
    Matrix z = Matrix::Zero(d, d);
    for (int i : idx) z.noalias() += vectors[i] * vectors[i].transpose();
    return z;
  };
  Matrix z0 = gram_of(inside);

  ExchangePick best;
  const bool minimize = kind == ObjectiveKind::A;
  best.value = minimize ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();

  double base = 0.0;
  ActionMatrix action;
  if (kind == ObjectiveKind::D) {
    try {
      base = psd_factorize(z0).log_det_cache;
    } catch (const NotPositiveDefinite&) {
      base = -std::numeric_limits<double>::infinity();
    }
  } else if (kind == ObjectiveKind::A) {
    base = trace_inverse(psd_factorize(z0));
  } else {
    if (!(alpha_for_e > 0))
      throw std::invalid_argument("brute_force_best_exchange: E objective needs alpha");
    action = compute_action_matrix(z0, alpha_for_e);
  }

  for (int i : inside) {
    if (kind == ObjectiveKind::E) {
      const double gate = 2.0 * alpha_for_e * vectors[i].dot(action.sqrt_matrix * vectors[i]);
      if (!(gate < 1.0)) continue;
    }
    std::vector<int> without;
    for (int s : inside)
      if (s != i) without.push_back(s);
    for (int j : outside) {
      double value;
      if (kind == ObjectiveKind::E) {
        value = delta_terms(action, vectors[i], vectors[j]).delta;
      } else {
        std::vector<int> next = without;
        next.push_back(j);
        std::sort(next.begin(), next.end());
        Matrix z1 = gram_of(next);
        if (kind == ObjectiveKind::D) {
          double score;
          try {
            score = psd_factorize(z1).log_det_cache;
          } catch (const NotPositiveDefinite&) {
            score = -std::numeric_limits<double>::infinity();
          }
          value = score - base;
        } else {
          double score;
          try {
            score = trace_inverse(psd_factorize(z1));
          } catch (const NotPositiveDefinite&) {
            score = std::numeric_limits<double>::infinity();
          }
          value = score - base;
        }
      }
      const bool better = minimize ? value < best.value : value > best.value;
      if (better) {
        best.value = value;
        best.removed = i;
        best.added = j;
        best.found = true;
      }
    }
  }
  return best;
}

enum class StepQuantity {
  Delta,       // Delta+ - Delta- of the regret machinery
  DeltaPlus,   // gain half only
  DeltaMinus,  // loss half only
  GammaD,      // (1-4 eps) g - (1+5 eps) l with g,l = <vv', Z^{-1}>
  GainD,       // g alone
  LossD,       // l alone
  GammaA,      // weighted Woodbury gain - loss with weight W
  GainA,
  LossA
};

struct SamplingConfig {
  double alpha = 0.0;
  double k = 0.0;
  double eps = 0.0;  // GammaD coefficients
  Matrix weight;     // GammaA weight (X^{-1}); size 0 means identity
};

// Exact expectation of a per-step quantity under the randomized-exchange
// sampling distributions: removal i in S gated by
// 2 alpha <vv', A^{1/2}> <= 1/2 with mass (1-x(i))(1-2 alpha <..>)/k, addition
// j outside S with mass x(j)(1+2 alpha <..>)/k, remaining mass on the empty
// slot. All listed quantities split into an added-only and a removed-only
// term, so the expectation sums each side against its own distribution.
inline double exact_conditional_expectation(const std::vector<Vector>& vectors,
                                            const std::vector<int>& subset, const Vector& x,
                                            const Matrix& z, const SamplingConfig& cfg,
                                            StepQuantity quantity) {
  const int n = static_cast<int>(vectors.size());
  const int d = static_cast<int>(z.rows());
  std::vector<char> member(n, 0);
  for (int i : subset) member[i] = 1;
  ActionMatrix action = compute_action_matrix(z, cfg.alpha);

  const bool needs_z_inverse = quantity != StepQuantity::Delta &&
                               quantity != StepQuantity::DeltaPlus &&
                               quantity != StepQuantity::DeltaMinus;
  PsdFactorization zf;
  if (needs_z_inverse) zf = psd_factorize(z);
  Matrix w = cfg.weight.size() > 0 ? cfg.weight : Matrix::Identity(d, d);

  auto gain_value = [&](int j) -> double {
    const Vector& v = vectors[j];
    switch (quantity) {
      case StepQuantity::Delta:
      case StepQuantity::DeltaPlus:
        return delta_terms(action, Vector(), v).plus;
      case StepQuantity::GammaD:
        return (1.0 - 4.0 * cfg.eps) * inv_quad(zf, v);
      case StepQuantity::GainD:
        return inv_quad(zf, v);
      case StepQuantity::GammaA:
      case StepQuantity::GainA: {
        Vector zi = solve_spd(zf, v);
        return zi.dot(w * zi) / (1.0 + 2.0 * v.dot(zi));
      }
      default:
        return 0.0;
    }
  };
  auto loss_value = [&](int i) -> double {
    const Vector& v = vectors[i];
    switch (quantity) {
      case StepQuantity::Delta:
      case StepQuantity::DeltaMinus:
        return delta_terms(action, v, Vector()).minus;
      case StepQuantity::GammaD:
        return (1.0 + 5.0 * cfg.eps) * inv_quad(zf, v);
      case StepQuantity::LossD:
        return inv_quad(zf, v);
      case StepQuantity::GammaA:
      case StepQuantity::LossA: {
        Vector zi = solve_spd(zf, v);
        return zi.dot(w * zi) / (1.0 - 2.0 * v.dot(zi));
      }
      default:
        return 0.0;
    }
  };

  const bool use_gain = quantity != StepQuantity::DeltaMinus && quantity != StepQuantity::LossD &&
                        quantity != StepQuantity::LossA;
  const bool use_loss = quantity != StepQuantity::DeltaPlus && quantity != StepQuantity::GainD &&
                        quantity != StepQuantity::GainA;
  const double sign_loss =
      (quantity == StepQuantity::DeltaMinus || quantity == StepQuantity::LossD ||
       quantity == StepQuantity::LossA)
          ? 1.0
          : -1.0;

  double expectation = 0.0;
  if (use_gain) {
    for (int j = 0; j < n; ++j) {
      if (member[j] || x(j) == 0.0) continue;
      const double s = vectors[j].dot(action.sqrt_matrix * vectors[j]);
      const double mass = x(j) * (1.0 + 2.0 * cfg.alpha * s) / cfg.k;
      expectation += mass * gain_value(j);
    }
  }
  if (use_loss) {
    for (int i : subset) {
      const double s = vectors[i].dot(action.sqrt_matrix * vectors[i]);
      if (!(2.0 * cfg.alpha * s <= 0.5)) continue;
      const double mass = (1.0 - x(i)) * (1.0 - 2.0 * cfg.alpha * s) / cfg.k;
      if (mass <= 0.0) continue;
      expectation += sign_loss * mass * loss_value(i);
    }
  }
  return expectation;
}

}  // namespace optdesign
