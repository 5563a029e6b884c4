#pragma once
// Randomized rounding of a fractional design into a feasible subset under
// knapsack budgets: sparsify the relaxation, whiten so the fractional Gram
// is the identity, seed a random start by independent inclusion, then run
// sampled exchanges driven by the smoothed action matrix until the
// determinant or trace termination test fires.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"
#include "optdesign/regret.hpp"
#include "optdesign/relaxation.hpp"
#include "optdesign/rng.hpp"
#include "optdesign/trace.hpp"

namespace optdesign {

struct MassOverflow : std::runtime_error {
  explicit MassOverflow(const std::string& what) : std::runtime_error(what) {}
};

// Zeroed integer fields resolve to the standard formulas at run time:
// k = 16 d + d^2 + m, alpha = 8 sqrt(d), iter_cap = ceil(18 k / eps).
struct RoundingConfig {
  ObjectiveKind objective_kind = ObjectiveKind::D;
  double eps = 0.01;
  std::uint64_t seed = 0;
  int k = 0;
  double alpha = 0.0;
  std::int64_t iter_cap = 0;
  bool rescale_budgets = false;
};

struct PhaseRecord {
  std::optional<std::int64_t> tau1;  // first iteration with lambda_min >= 3/4, 1-indexed
  double min_lambda_after_tau1 = std::numeric_limits<double>::infinity();
  std::vector<double> lambda_history;
};

inline void phase_monitor_update(PhaseRecord& record, std::int64_t t, double lambda_min) {
  if (t != static_cast<std::int64_t>(record.lambda_history.size()) + 1) {
    throw std::invalid_argument("phase_monitor_update: iterations must arrive in order");
  }
  record.lambda_history.push_back(lambda_min);
  if (!record.tau1 && lambda_min >= 0.75) record.tau1 = t;
  if (record.tau1) {
    record.min_lambda_after_tau1 = std::min(record.min_lambda_after_tau1, lambda_min);
  }
}

// One iteration's sampling distributions, kept explicit so the sampler and
// the exact-expectation oracle agree term by term. Removals are restricted
// to members with 2 alpha <vv', A^{1/2}> <= 1/2; leftover mass on either
// side goes to the empty slot.
struct StepDistributions {
  std::vector<int> removal_index;
  std::vector<double> removal_mass;
  std::vector<int> addition_index;
  std::vector<double> addition_mass;
  double removal_total = 0.0;
  double addition_total = 0.0;
};

inline StepDistributions step_distributions(const std::vector<Vector>& vectors,
                                            const std::vector<char>& member, const Vector& x,
                                            const ActionMatrix& action, double k) {
  const int n = static_cast<int>(vectors.size());
  if (!(k > 0.0)) throw std::invalid_argument("step_distributions: k must be positive");
  StepDistributions out;
  for (int i = 0; i < n; ++i) {
    const double s = vectors[i].dot(action.sqrt_matrix * vectors[i]);
    if (member[i]) {
      if (!(2.0 * action.alpha * s <= 0.5)) continue;
      const double mass = (1.0 - x(i)) * (1.0 - 2.0 * action.alpha * s) / k;
      if (mass <= 0.0) continue;
      out.removal_index.push_back(i);
      out.removal_mass.push_back(mass);
      out.removal_total += mass;
    } else {
      if (x(i) <= 0.0) continue;
      const double mass = x(i) * (1.0 + 2.0 * action.alpha * s) / k;
      out.addition_index.push_back(i);
      out.addition_mass.push_back(mass);
      out.addition_total += mass;
    }
  }
  if (out.removal_total > 1.0 + 1e-9) {
    throw MassOverflow("step_distributions: removal mass " + std::to_string(out.removal_total));
  }
  if (out.addition_total > 1.0 + 1e-9) {
    throw MassOverflow("step_distributions: addition mass " + std::to_string(out.addition_total));
  }
  return out;
}

struct ExchangeDraw {
  int removed = -1;  // -1 marks the empty slot
  int added = -1;
};

namespace detail {

inline int sample_slot(const std::vector<int>& index, const std::vector<double>& mass,
                       double u) {
  double cum = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    cum += mass[i];
    if (u < cum) return index[i];
  }
  return -1;
}

}  // namespace detail

// One sampled exchange: i_t from the gated members, j_t from the outsiders,
// drawn independently from their own streams. Either slot may come back
// empty; the caller applies S <- S + j_t - i_t skipping empty slots.
inline ExchangeDraw exchange_step(const std::vector<Vector>& vectors,
                                  const std::vector<int>& subset, const Vector& x,
                                  const Matrix& z, double alpha, double k, Rng& removal_rng,
                                  Rng& addition_rng) {
  std::vector<char> member(vectors.size(), 0);
  for (int i : subset) member[i] = 1;
  const ActionMatrix action = compute_action_matrix(z, alpha);
  const StepDistributions dist = step_distributions(vectors, member, x, action, k);
  ExchangeDraw draw;
  draw.removed = detail::sample_slot(dist.removal_index, dist.removal_mass,
                                     removal_rng.next_uniform());
  draw.added = detail::sample_slot(dist.addition_index, dist.addition_mass,
                                   addition_rng.next_uniform());
  return draw;
}

// The rounding loop runs on whitened vectors v_i = X^{-1/2} u_i where X is
// the Gram of the sparsified fractional solution, so sum x(i) v_i v_i' = I.
struct WhitenedProblem {
  DesignInstance whitened;
  Vector x;
  Matrix x_gram;      // X in original coordinates
  Matrix inv_sqrt_x;  // X^{-1/2}
  Matrix weight;      // X^{-1}, the trace-termination weight
  double relaxation_objective = 0.0;
  double whitening_residual = 0.0;  // ||sum x(i) v_i v_i' - I||_F
};

inline WhitenedProblem whiten_for_rounding(const DesignInstance& inst,
                                           const FractionalSolution& sparse) {
  const int n = inst.n(), d = inst.dim;
  if (sparse.x.size() != n) {
    throw std::invalid_argument("whiten_for_rounding: solution size does not match instance");
  }
  WhitenedProblem out;
  out.x = sparse.x;
  out.x_gram = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    if (out.x(i) > 0.0) {
      out.x_gram.noalias() += out.x(i) * inst.vectors[i] * inst.vectors[i].transpose();
    }
  }
  try {
    psd_factorize(out.x_gram);
  } catch (const NotPositiveDefinite&) {
    throw RelaxationDegenerate("whiten_for_rounding: fractional Gram is singular");
  }
  out.inv_sqrt_x = inv_sqrt(out.x_gram);
  out.weight = out.inv_sqrt_x * out.inv_sqrt_x;
  out.relaxation_objective = sparse.objective_value;

  out.whitened = inst;
  out.whitened.label = inst.label.empty() ? "whitened" : inst.label + "-whitened";
  for (int i = 0; i < n; ++i) out.whitened.vectors[i] = out.inv_sqrt_x * inst.vectors[i];

  Matrix residual = -Matrix::Identity(d, d);
  for (int i = 0; i < n; ++i) {
    if (out.x(i) > 0.0) {
      residual.noalias() +=
          out.x(i) * out.whitened.vectors[i] * out.whitened.vectors[i].transpose();
    }
  }
  out.whitening_residual = residual.norm();
  if (out.whitening_residual > 1e-6) {
    throw RelaxationDegenerate("whiten_for_rounding: whitening residual " +
                               std::to_string(out.whitening_residual));
  }
  return out;
}

struct RoundingResult {
  IntegralSolution solution;
  ExchangeTrace trace;
  PhaseRecord phases;
  std::vector<int> initial_subset;  // S_0 from the independent-inclusion draw
  bool terminated = false;
  std::int64_t iterations = 0;  // exchange rounds performed (no-ops included)
  int k = 0;
  double alpha = 0.0;
  std::int64_t iter_cap = 0;
  double relaxation_objective = 0.0;
  double whitening_residual = 0.0;
  int short_vector_violations = 0;
  std::vector<std::string> warnings;
};

namespace detail {

struct SpectrumView {
  double lambda_min = 0.0;
  double det_root = 0.0;            // det(Z)^(1/d), 0 when singular
  double weighted_trace_inv = 0.0;  // <W, Z^-1>, +inf when singular
};

inline SpectrumView spectrum_view(const Matrix& z, const Matrix& w) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(z);
  const Vector& ev = es.eigenvalues();
  const int d = static_cast<int>(z.rows());
  SpectrumView out;
  out.lambda_min = ev(0);
  if (ev(0) > 0.0) {
    double log_det = 0.0;
    for (int i = 0; i < d; ++i) log_det += std::log(ev(i));
    out.det_root = std::exp(log_det / d);
    double wt = 0.0;
    for (int i = 0; i < d; ++i) {
      const Vector q = es.eigenvectors().col(i);
      wt += q.dot(w * q) / ev(i);
    }
    out.weighted_trace_inv = wt;
  } else {
    out.det_root = 0.0;
    out.weighted_trace_inv = std::numeric_limits<double>::infinity();
  }
  return out;
}

inline void warn_once(std::vector<std::string>& warnings, bool& flag, const std::string& msg) {
  if (!flag) {
    warnings.push_back(msg);
    flag = true;
  }
}

}  // namespace detail

// Core loop on a prepared whitened problem. `inst` is the instance whose
// budgets the relaxation was solved with; the returned solution is reported
// in its original coordinates.
inline RoundingResult randomized_exchange(const DesignInstance& inst, const RoundingConfig& cfg,
                                          const WhitenedProblem& prob) {
  const int n = inst.n(), m = inst.m(), d = inst.dim;
  if (cfg.objective_kind == ObjectiveKind::E) {
    throw std::invalid_argument("randomized_exchange: supports the determinant and trace objectives only");
  }
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) {
    throw std::invalid_argument("randomized_exchange: eps must lie in (0, 1)");
  }
  if (m < 1) throw std::invalid_argument("randomized_exchange: needs at least one budget row");

  RoundingResult res;
  const int k_formula = 16 * d + d * d + m;
  const double alpha_formula = 8.0 * std::sqrt(static_cast<double>(d));
  res.k = cfg.k > 0 ? cfg.k : k_formula;
  res.alpha = cfg.alpha > 0.0 ? cfg.alpha : alpha_formula;
  res.iter_cap = cfg.iter_cap > 0
                     ? cfg.iter_cap
                     : static_cast<std::int64_t>(std::ceil(18.0 * res.k / cfg.eps));
  if (cfg.k > 0 && cfg.k != k_formula) {
    res.warnings.push_back("k overridden away from 16d + d^2 + m");
  }
  if (cfg.alpha > 0.0 && std::abs(cfg.alpha - alpha_formula) > 1e-12 * alpha_formula) {
    res.warnings.push_back("alpha overridden away from 8 sqrt(d)");
  }
  if (cfg.eps > 0.01) res.warnings.push_back("eps above the guarantee window (0, 1/100]");
  if (d >= 22 && cfg.eps < std::exp(-std::sqrt(static_cast<double>(d)))) {
    res.warnings.push_back("eps below the guarantee window exp(-sqrt(d))");
  }

  bool budgets_ok = true;
  for (int j = 0; j < m; ++j) {
    const double cinf = inst.costs.row(j).maxCoeff();
    if (inst.budgets(j) < d * cinf / cfg.eps - 1e-9) {
      budgets_ok = false;
      res.warnings.push_back("budget row " + std::to_string(j) +
                             " below the guarantee precondition d*max(c)/eps");
    }
  }
  const bool guarantee_mode = budgets_ok && cfg.eps <= 0.01;

  res.relaxation_objective = prob.relaxation_objective;
  res.whitening_residual = prob.whitening_residual;
  const std::vector<Vector>& vecs = prob.whitened.vectors;
  const Matrix& weight = prob.weight;
  const double trace_weight = weight.trace();

  Rng base = Rng::from_seed(cfg.seed);
  Rng init_rng = base.split(0);
  Rng removal_rng = base.split(1);
  Rng addition_rng = base.split(2);

  std::vector<char> member(n, 0);
  Matrix z = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const double xi = prob.x(i);
    const bool take = xi >= 1.0 || (xi > 0.0 && init_rng.next_uniform() < xi);
    if (take) {
      member[i] = 1;
      res.initial_subset.push_back(i);
      z.noalias() += vecs[i] * vecs[i].transpose();
    }
  }

  const double eps = cfg.eps;
  const bool is_d = cfg.objective_kind == ObjectiveKind::D;
  bool cross_check_warned = false;
  int exchanges_applied = 0;

  for (std::int64_t t = 1; t <= res.iter_cap + 1; ++t) {
    const detail::SpectrumView view = detail::spectrum_view(z, weight);
    phase_monitor_update(res.phases, t, view.lambda_min);
    const double objective = is_d ? view.det_root : view.weighted_trace_inv;

    if (is_d ? (objective >= 1.0 - 10.0 * eps)
             : (objective <= (1.0 + eps) * trace_weight)) {
      res.terminated = true;
      res.trace.terminated_reason = TerminationReason::TargetReached;
      break;
    }
    if (t == res.iter_cap + 1) {
      res.trace.terminated_reason = TerminationReason::IterationCap;
      break;
    }

    if (!is_d && t % 100 == 0 && !cross_check_warned &&
        objective < std::numeric_limits<double>::infinity()) {
      std::vector<int> current;
      for (int i = 0; i < n; ++i)
        if (member[i]) current.push_back(i);
      const double unwhitened = evaluate_objective(inst, current, ObjectiveKind::A);
      if (std::abs(unwhitened - objective) > 1e-6 * std::max(1.0, std::abs(objective))) {
        detail::warn_once(res.warnings, cross_check_warned,
                          "whitened trace objective drifted from the unwhitened value");
      }
    }

    const ActionMatrix action = compute_action_matrix(z, res.alpha);
    const StepDistributions dist = step_distributions(vecs, member, prob.x, action, res.k);
    const int removed =
        detail::sample_slot(dist.removal_index, dist.removal_mass, removal_rng.next_uniform());
    const int added =
        detail::sample_slot(dist.addition_index, dist.addition_mass, addition_rng.next_uniform());

    if (guarantee_mode) {
      for (int idx : {removed, added}) {
        if (idx < 0) continue;
        const bool short_ok =
            is_d ? vecs[idx].squaredNorm() <= 1.05 * eps
                 : vecs[idx].dot(weight * vecs[idx]) <= 1.05 * (eps / d) * trace_weight;
        if (!short_ok) ++res.short_vector_violations;
      }
    }

    ExchangeStep step;
    step.t = static_cast<int>(t);
    step.removed = removed;
    step.added = added;
    step.objective_before = objective;
    if (removed >= 0) {
      step.delta_minus = delta_terms(action, vecs[removed], Vector()).minus;
      member[removed] = 0;
    }
    if (added >= 0) {
      step.delta_plus = delta_terms(action, Vector(), vecs[added]).plus;
      member[added] = 1;
    }
    if (added >= 0) z.noalias() += vecs[added] * vecs[added].transpose();
    if (removed >= 0) z.noalias() -= vecs[removed] * vecs[removed].transpose();
    if (removed >= 0 || added >= 0) {
      if (++exchanges_applied % 64 == 0) {
        z.setZero();
        for (int i = 0; i < n; ++i)
          if (member[i]) z.noalias() += vecs[i] * vecs[i].transpose();
      }
    }

    const detail::SpectrumView after = detail::spectrum_view(z, weight);
    step.objective_after = is_d ? after.det_root : after.weighted_trace_inv;
    step.lambda_min_after = after.lambda_min;
    res.trace.steps.push_back(step);
    res.iterations = t;
  }

  std::vector<int> final_subset;
  for (int i = 0; i < n; ++i)
    if (member[i]) final_subset.push_back(i);
  res.solution = make_solution(inst, final_subset, cfg.objective_kind);
  if (res.short_vector_violations > 0) {
    res.warnings.push_back("sampled " + std::to_string(res.short_vector_violations) +
                           " vectors above the short-vector bound");
  }
  return res;
}

// Pipeline variant that consumes an already-sparsified fractional solution
// for the budgets carried by `inst` (useful when many seeded runs share one
// relaxation solve).
inline RoundingResult randomized_exchange(const DesignInstance& inst, const RoundingConfig& cfg,
                                          const FractionalSolution& sparse) {
  return randomized_exchange(inst, cfg, whiten_for_rounding(inst, sparse));
}

// Full pipeline: optional budget rescale, relaxation, sparsification,
// whitening, then the sampled exchange loop.
inline RoundingResult randomized_exchange(const DesignInstance& inst, const RoundingConfig& cfg) {
  if (cfg.objective_kind == ObjectiveKind::E) {
    throw std::invalid_argument("randomized_exchange: supports the determinant and trace objectives only");
  }
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) {
    throw std::invalid_argument("randomized_exchange: eps must lie in (0, 1)");
  }
  validate_instance(inst);
  if (inst.m() < 1) {
    throw std::invalid_argument("randomized_exchange: needs at least one budget row");
  }

  DesignInstance run_inst = inst;
  std::vector<std::string> pre_warnings;
  if (cfg.rescale_budgets) {
    run_inst.budgets /= (1.0 + 100.0 * cfg.eps);
    for (int j = 0; j < inst.m(); ++j) {
      const double cinf = inst.costs.row(j).maxCoeff();
      if (inst.budgets(j) < 2.0 * inst.dim * cinf / cfg.eps - 1e-9) {
        pre_warnings.push_back("budget row " + std::to_string(j) +
                               " below the rescale precondition 2d*max(c)/eps");
      }
    }
  }

  FractionalSolution rel;
  try {
    rel = solve_relaxation(run_inst, cfg.objective_kind, 1e-7);
  } catch (const NotPositiveDefinite&) {
    throw RelaxationDegenerate("randomized_exchange: relaxation is degenerate");
  }
  const FractionalSolution sparse = sparsify_to_extreme_point(run_inst, rel);

  RoundingResult res = randomized_exchange(run_inst, cfg, whiten_for_rounding(run_inst, sparse));
  res.warnings.insert(res.warnings.begin(), pre_warnings.begin(), pre_warnings.end());
  // Cost reporting stays in terms of the caller's instance; budgets only
  // differ when rescaling was applied, and costs are budget-independent.
  return res;
}

struct OvershootRow {
  int constraint = 0;
  double budget = 0.0;
  double guarantee_cap = 0.0;  // (1 + eps) * run budget + 120 d max(c)
  double min_cost = 0.0;
  double mean_cost = 0.0;
  double max_cost = 0.0;
  double frac_over_guarantee = 0.0;
  double frac_over_budget = 0.0;
};

struct OvershootReport {
  int runs = 0;
  std::vector<OvershootRow> rows;
};

// Per-constraint cost statistics over repeated seeded runs. `run_budgets`
// names the budgets the rounder actually consumed (the rescaled ones when
// rescale was on); the budget-violation fraction is always measured against
// the instance's own budgets.
inline OvershootReport knapsack_overshoot_report(const std::vector<IntegralSolution>& solutions,
                                                 const DesignInstance& inst, double eps,
                                                 const std::optional<Vector>& run_budgets =
                                                     std::nullopt) {
  const int m = inst.m();
  if (run_budgets && run_budgets->size() != m) {
    throw std::invalid_argument("knapsack_overshoot_report: budget size mismatch");
  }
  OvershootReport report;
  report.runs = static_cast<int>(solutions.size());
  for (int j = 0; j < m; ++j) {
    OvershootRow row;
    row.constraint = j;
    row.budget = inst.budgets(j);
    const double base = run_budgets ? (*run_budgets)(j) : inst.budgets(j);
    row.guarantee_cap = (1.0 + eps) * base + 120.0 * inst.dim * inst.costs.row(j).maxCoeff();
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    int over_guarantee = 0, over_budget = 0;
    for (const IntegralSolution& sol : solutions) {
      if (sol.costs_used.size() != m) {
        throw std::invalid_argument("knapsack_overshoot_report: solution cost size mismatch");
      }
      const double c = sol.costs_used(j);
      sum += c;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
      if (c > row.guarantee_cap * (1.0 + 1e-12)) ++over_guarantee;
      if (c > row.budget * (1.0 + 1e-12)) ++over_budget;
    }
    if (report.runs > 0) {
      row.min_cost = lo;
      row.mean_cost = sum / report.runs;
      row.max_cost = hi;
      row.frac_over_guarantee = static_cast<double>(over_guarantee) / report.runs;
      row.frac_over_budget = static_cast<double>(over_budget) / report.runs;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace optdesign
