#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"
#include "optdesign/oracle.hpp"
#include "optdesign/relaxation.hpp"
#include "optdesign/rng.hpp"
#include "optdesign/rounding.hpp"

namespace od = optdesign;

namespace {

od::DesignInstance unit_cost_instance(int d, int n, std::uint64_t seed, double budget) {
  od::DesignInstance inst = od::gen_gaussian(d, n, seed);
  inst.costs = od::Matrix::Ones(1, n);
  inst.budgets = od::Vector::Constant(1, budget);
  return inst;
}

// A four-vector instance whose fractional optimum is the all-ones vector:
// a doubled orthogonal basis with the budget equal to n.
od::DesignInstance doubled_basis_instance() {
  od::DesignInstance inst;
  inst.dim = 2;
  inst.label = "doubled-basis";
  od::Vector e1(2), e2(2);
  e1 << 1.0, 0.0;
  e2 << 0.0, 1.0;
  inst.vectors = {e1, e2, e1, e2};
  inst.costs = od::Matrix::Ones(1, 4);
  inst.budgets = od::Vector::Constant(1, 4.0);
  return inst;
}

// Replays a rounding run: membership per iteration, whitened Gram before
// each recorded step, and the after-state, asserting the recorded values.
struct ReplayState {
  std::vector<char> member;
  od::Matrix z;
};

ReplayState replay_start(const od::WhitenedProblem& prob, const od::RoundingResult& res) {
  ReplayState st;
  st.member.assign(prob.whitened.vectors.size(), 0);
  st.z = od::Matrix::Zero(prob.whitened.dim, prob.whitened.dim);
  for (int i : res.initial_subset) {
    st.member[i] = 1;
    st.z += prob.whitened.vectors[i] * prob.whitened.vectors[i].transpose();
  }
  return st;
}

void replay_apply(ReplayState& st, const od::WhitenedProblem& prob, const od::ExchangeStep& step) {
  if (step.added >= 0) {
    ASSERT_EQ(st.member[step.added], 0);
    st.member[step.added] = 1;
    st.z += prob.whitened.vectors[step.added] * prob.whitened.vectors[step.added].transpose();
  }
  if (step.removed >= 0) {
    ASSERT_EQ(st.member[step.removed], 1);
    st.member[step.removed] = 0;
    st.z -= prob.whitened.vectors[step.removed] * prob.whitened.vectors[step.removed].transpose();
  }
}

std::vector<int> subset_of(const std::vector<char>& member) {
  std::vector<int> s;
  for (int i = 0; i < static_cast<int>(member.size()); ++i)
    if (member[i]) s.push_back(i);
  return s;
}

double det_root_of(const od::Matrix& z) {
  Eigen::SelfAdjointEigenSolver<od::Matrix> es(z);
  if (es.eigenvalues()(0) <= 0.0) return 0.0;
  double log_det = 0.0;
  for (int i = 0; i < z.rows(); ++i) log_det += std::log(es.eigenvalues()(i));
  return std::exp(log_det / z.rows());
}

// The Monte-Carlo geometry: unit costs, budget 2d/eps, rescaled run budget
// d/eps, one shared relaxation per objective.
struct McSetup {
  od::DesignInstance inst;      // original budget 400
  od::DesignInstance run_inst;  // rescaled budget 200
  od::FractionalSolution sparse_d, sparse_a;
  od::WhitenedProblem wp_d, wp_a;
};

const McSetup& mc_setup() {
  static const McSetup s = [] {
    McSetup out;
    out.inst = unit_cost_instance(2, 500, 23, 400.0);
    out.run_inst = out.inst;
    out.run_inst.budgets /= 2.0;  // 1 + 100 eps at eps = 1/100
    out.sparse_d = od::sparsify_to_extreme_point(
        out.run_inst, od::solve_relaxation(out.run_inst, od::ObjectiveKind::D, 1e-7));
    out.sparse_a = od::sparsify_to_extreme_point(
        out.run_inst, od::solve_relaxation(out.run_inst, od::ObjectiveKind::A, 1e-7));
    out.wp_d = od::whiten_for_rounding(out.run_inst, out.sparse_d);
    out.wp_a = od::whiten_for_rounding(out.run_inst, out.sparse_a);
    return out;
  }();
  return s;
}

// A tight-budget sphere instance: the whole fractional solution lives on a
// handful of long whitened vectors, so random starts are singular or far
// from the identity and runs pass through real low-eigenvalue states.
struct WanderSetup {
  od::DesignInstance inst;
  od::FractionalSolution sparse_d, sparse_a;
  od::WhitenedProblem wp_d, wp_a;
};

const WanderSetup& wander_setup() {
  static const WanderSetup s = [] {
    WanderSetup out;
    out.inst = unit_cost_instance(3, 12, 19, 3.0);
    for (od::Vector& v : out.inst.vectors) v /= v.norm();
    out.sparse_d = od::sparsify_to_extreme_point(
        out.inst, od::solve_relaxation(out.inst, od::ObjectiveKind::D, 1e-7));
    out.sparse_a = od::sparsify_to_extreme_point(
        out.inst, od::solve_relaxation(out.inst, od::ObjectiveKind::A, 1e-7));
    out.wp_d = od::whiten_for_rounding(out.inst, out.sparse_d);
    out.wp_a = od::whiten_for_rounding(out.inst, out.sparse_a);
    return out;
  }();
  return s;
}

od::RoundingConfig wander_config(std::uint64_t seed, std::int64_t cap) {
  od::RoundingConfig cfg;
  cfg.objective_kind = od::ObjectiveKind::D;
  cfg.eps = 0.01;
  cfg.seed = seed;
  cfg.iter_cap = cap;
  return cfg;
}

}  // namespace

TEST(PhaseMonitor, RecordsFirstCrossingAndThePostCrossingMinimum) {
  od::PhaseRecord rec;
  od::phase_monitor_update(rec, 1, 0.1);
  od::phase_monitor_update(rec, 2, 0.8);
  od::phase_monitor_update(rec, 3, 0.5);
  ASSERT_TRUE(rec.tau1.has_value());
  EXPECT_EQ(*rec.tau1, 2);
  EXPECT_DOUBLE_EQ(rec.min_lambda_after_tau1, 0.5);
  ASSERT_EQ(rec.lambda_history.size(), 3u);
  EXPECT_DOUBLE_EQ(rec.lambda_history[0], 0.1);
}

TEST(PhaseMonitor, LeavesTheCrossingEmptyWhenNeverReached) {
  od::PhaseRecord rec;
  od::phase_monitor_update(rec, 1, 0.1);
  od::phase_monitor_update(rec, 2, 0.7);
  EXPECT_FALSE(rec.tau1.has_value());
  EXPECT_TRUE(std::isinf(rec.min_lambda_after_tau1));
}

TEST(PhaseMonitor, RejectsOutOfOrderIterations) {
  od::PhaseRecord rec;
  od::phase_monitor_update(rec, 1, 0.1);
  EXPECT_THROW(od::phase_monitor_update(rec, 3, 0.2), std::invalid_argument);
  EXPECT_THROW(od::phase_monitor_update(rec, 1, 0.2), std::invalid_argument);
}

// d = 1 with z = [[1]] pins the action matrix by hand: alpha z - l = 1, so
// A = A^{1/2} = 1 and the quadratic form of either unit vector is 1.
// Removal mass (1 - 0.5)(1 - 0.2)/18 = 1/45; addition mass
// 0.5 (1 + 0.2)/18 = 1/30.
TEST(StepSampling, TwoPointToyMatchesHandComputedMasses) {
  od::Vector one(1);
  one << 1.0;
  const std::vector<od::Vector> vecs = {one, one};
  od::Vector x(2);
  x << 0.5, 0.5;
  const std::vector<char> member = {1, 0};
  od::Matrix z(1, 1);
  z << 1.0;
  const double alpha = 0.1, k = 18.0;

  const od::ActionMatrix action = od::compute_action_matrix(z, alpha);
  EXPECT_NEAR(action.l_value, -0.9, 1e-10);
  const od::StepDistributions dist = od::step_distributions(vecs, member, x, action, k);
  ASSERT_EQ(dist.removal_index.size(), 1u);
  ASSERT_EQ(dist.addition_index.size(), 1u);
  EXPECT_EQ(dist.removal_index[0], 0);
  EXPECT_EQ(dist.addition_index[0], 1);
  EXPECT_NEAR(dist.removal_mass[0], 1.0 / 45.0, 1e-12);
  EXPECT_NEAR(dist.addition_mass[0], 1.0 / 30.0, 1e-12);

  const int draws = 100000;
  od::Rng removal_rng = od::Rng::from_seed(1234).split(1);
  od::Rng addition_rng = od::Rng::from_seed(1234).split(2);
  int removed_hits = 0, added_hits = 0;
  const std::vector<int> subset = {0};
  for (int i = 0; i < draws; ++i) {
    const od::ExchangeDraw draw =
        od::exchange_step(vecs, subset, x, z, alpha, k, removal_rng, addition_rng);
    if (draw.removed >= 0) {
      EXPECT_EQ(draw.removed, 0);
      ++removed_hits;
    }
    if (draw.added >= 0) {
      EXPECT_EQ(draw.added, 1);
      ++added_hits;
    }
  }
  const double pr = 1.0 / 45.0, pa = 1.0 / 30.0;
  EXPECT_NEAR(removed_hits / static_cast<double>(draws), pr,
              3.0 * std::sqrt(pr * (1.0 - pr) / draws));
  EXPECT_NEAR(added_hits / static_cast<double>(draws), pa,
              3.0 * std::sqrt(pa * (1.0 - pa) / draws));
}

TEST(StepSampling, IntegralCoordinatesGetNoMass) {
  od::DesignInstance inst = doubled_basis_instance();
  od::Vector x = od::Vector::Ones(4);
  const od::WhitenedProblem prob =
      od::whiten_for_rounding(inst, od::make_fractional(inst, x, od::ObjectiveKind::D));
  const std::vector<char> member = {1, 1, 1, 0};
  od::Matrix z = od::Matrix::Zero(2, 2);
  for (int i = 0; i < 3; ++i)
    z += prob.whitened.vectors[i] * prob.whitened.vectors[i].transpose();
  od::Vector x_mixed(4);
  x_mixed << 1.0, 1.0, 1.0, 0.0;
  const od::ActionMatrix action = od::compute_action_matrix(z, 8.0 * std::sqrt(2.0));
  const od::StepDistributions dist =
      od::step_distributions(prob.whitened.vectors, member, x_mixed, action, 37.0);
  EXPECT_EQ(dist.removal_index.size(), 0u);
  EXPECT_EQ(dist.addition_index.size(), 0u);
  EXPECT_DOUBLE_EQ(dist.removal_total, 0.0);
  EXPECT_DOUBLE_EQ(dist.addition_total, 0.0);

  od::Rng r1 = od::Rng::from_seed(5).split(1), r2 = od::Rng::from_seed(5).split(2);
  const od::ExchangeDraw draw = od::exchange_step(prob.whitened.vectors, {0, 1, 2}, x_mixed, z,
                                                  8.0 * std::sqrt(2.0), 37.0, r1, r2);
  EXPECT_EQ(draw.removed, -1);
  EXPECT_EQ(draw.added, -1);
}

// Whitened states with at most d^2 + m fractional coordinates keep both
// sampling totals valid at k = 16d + d^2 + m: removals below (d^2+m)/k and
// additions at most 1.
TEST(StepSampling, MassTotalsStayValidOnRandomWhitenedStates) {
  od::Rng rng = od::Rng::from_seed(37);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 3;
    const int n_ones = d + 1;
    const int n = n_ones + 2 + trial % 7 + (d * d + 1);
    const int nf = d * d + 1;
    std::vector<od::Vector> u(n);
    for (int i = 0; i < n; ++i) {
      u[i] = od::Vector(d);
      for (int r = 0; r < d; ++r) u[i](r) = rng.next_gaussian();
    }
    od::Vector x = od::Vector::Zero(n);
    for (int i = 0; i < n_ones; ++i) x(i) = 1.0;
    for (int i = n_ones; i < n_ones + nf; ++i) x(i) = 0.1 + 0.8 * rng.next_uniform();
    od::Matrix gram = od::Matrix::Zero(d, d);
    for (int i = 0; i < n; ++i)
      if (x(i) > 0.0) gram += x(i) * u[i] * u[i].transpose();
    const od::Matrix w = od::inv_sqrt(gram);
    std::vector<od::Vector> v(n);
    for (int i = 0; i < n; ++i) v[i] = w * u[i];

    std::vector<char> member(n, 0);
    od::Matrix z = od::Matrix::Zero(d, d);
    for (int i = 0; i < n; ++i) {
      const bool take = x(i) >= 1.0 || (x(i) > 0.0 && rng.next_bernoulli(0.5));
      if (take) {
        member[i] = 1;
        z += v[i] * v[i].transpose();
      }
    }

    const double k = 16 * d + d * d + 1;
    const od::ActionMatrix action =
        od::compute_action_matrix(z, 8.0 * std::sqrt(static_cast<double>(d)));
    const od::StepDistributions dist = od::step_distributions(v, member, x, action, k);
    EXPECT_GE(dist.removal_total, 0.0);
    EXPECT_GE(dist.addition_total, 0.0);
    EXPECT_LE(dist.removal_total, (d * d + 1) / k + 1e-12) << "trial " << trial;
    EXPECT_LE(dist.addition_total, 1.0 + 1e-12) << "trial " << trial;
    for (double mass : dist.removal_mass) EXPECT_GT(mass, 0.0);
    for (double mass : dist.addition_mass) EXPECT_GT(mass, 0.0);
  }
}

TEST(StepSampling, OverflowingMassThrows) {
  od::Vector one(1);
  one << 1.0;
  const std::vector<od::Vector> vecs = {one, one, one};
  od::Vector x(3);
  x << 0.9, 0.9, 0.9;
  const std::vector<char> member = {1, 0, 0};
  od::Matrix z(1, 1);
  z << 1.0;
  const od::ActionMatrix action = od::compute_action_matrix(z, 0.1);
  EXPECT_THROW(od::step_distributions(vecs, member, x, action, 1e-3), od::MassOverflow);
  EXPECT_THROW(od::step_distributions(vecs, member, x, action, 0.0), std::invalid_argument);
}

TEST(Whitening, FractionalGramWhitensToTheIdentity) {
  const McSetup& mc = mc_setup();
  EXPECT_LE(mc.wp_d.whitening_residual, 1e-8);
  EXPECT_LE(mc.wp_a.whitening_residual, 1e-8);
  const int d = mc.run_inst.dim;
  EXPECT_LE((mc.wp_d.weight * mc.wp_d.x_gram - od::Matrix::Identity(d, d)).norm(), 1e-8);
  EXPECT_NEAR(mc.wp_a.weight.trace(), mc.sparse_a.objective_value,
              1e-6 * mc.sparse_a.objective_value);
}

TEST(Whitening, RejectsDegenerateInputs) {
  od::DesignInstance inst = doubled_basis_instance();
  od::Vector zero = od::Vector::Zero(4);
  EXPECT_THROW(
      od::whiten_for_rounding(inst, od::make_fractional(inst, zero, od::ObjectiveKind::D)),
      od::RelaxationDegenerate);
  od::FractionalSolution bad = od::make_fractional(inst, od::Vector::Ones(4), od::ObjectiveKind::D);
  bad.x = od::Vector::Ones(3);
  EXPECT_THROW(od::whiten_for_rounding(inst, bad), std::invalid_argument);
}

// An integral fractional solution rounds without any exchange: the start is
// the support itself and the whitened Gram is already the identity.
TEST(RoundingPipeline, AllIntegralSolutionRoundsInstantly) {
  od::DesignInstance inst = doubled_basis_instance();
  const od::Vector ones = od::Vector::Ones(4);

  for (od::ObjectiveKind kind : {od::ObjectiveKind::D, od::ObjectiveKind::A}) {
    const od::FractionalSolution frac = od::make_fractional(inst, ones, kind);
    od::RoundingConfig cfg;
    cfg.objective_kind = kind;
    cfg.eps = 0.01;
    cfg.seed = 9;
    const od::RoundingResult res = od::randomized_exchange(inst, cfg, frac);
    EXPECT_TRUE(res.terminated);
    EXPECT_EQ(res.trace.terminated_reason, od::TerminationReason::TargetReached);
    EXPECT_EQ(res.iterations, 0);
    EXPECT_TRUE(res.trace.steps.empty());
    EXPECT_EQ(res.initial_subset, (std::vector<int>{0, 1, 2, 3}));
    ASSERT_EQ(res.phases.lambda_history.size(), 1u);
    EXPECT_NEAR(res.phases.lambda_history[0], 1.0, 1e-12);
    ASSERT_TRUE(res.phases.tau1.has_value());
    EXPECT_EQ(*res.phases.tau1, 1);
    EXPECT_NEAR(res.solution.objective_value, frac.objective_value,
                1e-12 * std::abs(frac.objective_value));

    const od::OvershootReport report =
        od::knapsack_overshoot_report({res.solution}, inst, cfg.eps);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(report.rows[0].frac_over_budget, 0.0);
    EXPECT_DOUBLE_EQ(report.rows[0].frac_over_guarantee, 0.0);
    EXPECT_DOUBLE_EQ(report.rows[0].max_cost, 4.0);
  }
}

TEST(RoundingPipeline, ValidatesConfigAndInstance) {
  od::DesignInstance inst = doubled_basis_instance();
  od::RoundingConfig cfg;
  cfg.objective_kind = od::ObjectiveKind::E;
  EXPECT_THROW(od::randomized_exchange(inst, cfg), std::invalid_argument);
  cfg.objective_kind = od::ObjectiveKind::D;
  cfg.eps = 0.0;
  EXPECT_THROW(od::randomized_exchange(inst, cfg), std::invalid_argument);
  cfg.eps = 1.0;
  EXPECT_THROW(od::randomized_exchange(inst, cfg), std::invalid_argument);
  cfg.eps = 0.01;
  od::DesignInstance no_rows = inst;
  no_rows.costs = od::Matrix(0, 4);
  no_rows.budgets = od::Vector(0);
  EXPECT_THROW(od::randomized_exchange(no_rows, cfg), std::invalid_argument);

  const od::FractionalSolution frac =
      od::make_fractional(inst, od::Vector::Ones(4), od::ObjectiveKind::D);
  od::RoundingConfig bad = cfg;
  bad.objective_kind = od::ObjectiveKind::E;
  EXPECT_THROW(od::randomized_exchange(inst, bad, frac), std::invalid_argument);
}

TEST(RoundingPipeline, IterationCapReturnsDiagnostics) {
  const WanderSetup& ws = wander_setup();
  const od::RoundingConfig cfg = wander_config(8, 2);
  const od::RoundingResult res = od::randomized_exchange(ws.inst, cfg, ws.wp_d);
  EXPECT_FALSE(res.terminated) << "initial det root "
                               << (res.phases.lambda_history.empty()
                                       ? -1.0
                                       : res.phases.lambda_history[0]);
  EXPECT_EQ(res.trace.terminated_reason, od::TerminationReason::IterationCap);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_EQ(res.trace.steps.size(), 2u);
  EXPECT_EQ(res.phases.lambda_history.size(), 3u);
  EXPECT_EQ(static_cast<int>(res.solution.membership.size()), ws.inst.n());
}

TEST(RoundingPipeline, DeterministicAcrossRepeatedRuns) {
  const WanderSetup& ws = wander_setup();
  const od::RoundingConfig cfg = wander_config(99, 200);
  const od::RoundingResult a = od::randomized_exchange(ws.inst, cfg, ws.wp_d);
  const od::RoundingResult b = od::randomized_exchange(ws.inst, cfg, ws.wp_d);
  EXPECT_EQ(a.initial_subset, b.initial_subset);
  ASSERT_EQ(a.trace.steps.size(), b.trace.steps.size());
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
    EXPECT_EQ(a.trace.steps[i].removed, b.trace.steps[i].removed);
    EXPECT_EQ(a.trace.steps[i].added, b.trace.steps[i].added);
  }
  EXPECT_EQ(a.solution.membership, b.solution.membership);
  EXPECT_EQ(a.phases.lambda_history, b.phases.lambda_history);
}

// Replaying the recorded exchanges from the recorded start must reproduce
// the phase history, the per-step objectives, and the membership rules: the
// chain never holds a zero-weight vector and never drops a unit-weight one.
TEST(RoundingPipeline, ReplayedRunMatchesItsRecord) {
  const WanderSetup& ws = wander_setup();
  const od::RoundingConfig cfg = wander_config(27, 1500);
  const od::RoundingResult res = od::randomized_exchange(ws.inst, cfg, ws.wp_d);
  ASSERT_GE(res.trace.steps.size(), 5u) << "terminated " << res.terminated << " after "
                                        << res.iterations << " iterations";

  ReplayState st = replay_start(ws.wp_d, res);
  const od::Vector& x = ws.wp_d.x;
  ASSERT_EQ(res.phases.lambda_history.size(), res.trace.steps.size() + 1);
  for (std::size_t t = 0; t < res.trace.steps.size(); ++t) {
    const od::ExchangeStep& step = res.trace.steps[t];
    EXPECT_EQ(step.t, static_cast<int>(t) + 1);
    EXPECT_NEAR(od::min_eigenvalue(st.z), res.phases.lambda_history[t], 1e-9);
    EXPECT_NEAR(det_root_of(st.z), step.objective_before, 1e-9);
    for (int i = 0; i < ws.inst.n(); ++i) {
      if (x(i) <= 0.0) EXPECT_EQ(st.member[i], 0);
      if (x(i) >= 1.0) EXPECT_EQ(st.member[i], 1);
    }
    replay_apply(st, ws.wp_d, step);
    EXPECT_NEAR(od::min_eigenvalue(st.z), step.lambda_min_after, 1e-9);
    EXPECT_NEAR(det_root_of(st.z), step.objective_after, 1e-9);
  }
  EXPECT_NEAR(od::min_eigenvalue(st.z), res.phases.lambda_history.back(), 1e-9);
  EXPECT_EQ(subset_of(st.member), od::subset_from_membership(res.solution.membership));

  std::optional<std::int64_t> tau;
  double post_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < res.phases.lambda_history.size(); ++i) {
    if (!tau && res.phases.lambda_history[i] >= 0.75) tau = static_cast<std::int64_t>(i) + 1;
    if (tau) post_min = std::min(post_min, res.phases.lambda_history[i]);
  }
  EXPECT_EQ(res.phases.tau1, tau);
  if (tau) EXPECT_DOUBLE_EQ(res.phases.min_lambda_after_tau1, post_min);
}

// Whenever the whitened Gram is nonsingular with det^{1/d} = lambda < 1,
// the exact conditional expectation of the determinant progress quantity
// clears ((1-4 eps)/lambda - (1+5 eps)) d/k. Every replayed state counts,
// the random start and the final subset included.
TEST(ProgressBounds, DeterminantGainClearsTheConditionalFloor) {
  const WanderSetup& ws = wander_setup();
  int checked = 0;
  for (std::uint64_t seed = 7; seed < 47; ++seed) {
    const od::RoundingConfig cfg = wander_config(seed, 1500);
    const od::RoundingResult res = od::randomized_exchange(ws.inst, cfg, ws.wp_d);
    ReplayState st = replay_start(ws.wp_d, res);
    for (std::size_t t = 0; t <= res.trace.steps.size(); ++t) {
      const double lambda = det_root_of(st.z);
      if (od::min_eigenvalue(st.z) > 1e-6 && lambda <= 0.995) {
        od::SamplingConfig scfg;
        scfg.alpha = res.alpha;
        scfg.k = res.k;
        scfg.eps = cfg.eps;
        const double expectation = od::exact_conditional_expectation(
            ws.wp_d.whitened.vectors, subset_of(st.member), ws.wp_d.x, st.z, scfg,
            od::StepQuantity::GammaD);
        const double floor = ((1.0 - 4.0 * cfg.eps) / lambda - (1.0 + 5.0 * cfg.eps)) *
                             ws.inst.dim / res.k;
        EXPECT_GE(expectation, floor - 1e-9)
            << "seed " << seed << " t " << t << " lambda " << lambda;
        ++checked;
      }
      if (t < res.trace.steps.size()) replay_apply(st, ws.wp_d, res.trace.steps[t]);
    }
  }
  EXPECT_GE(checked, 10) << "too few qualifying states";
}

// The trace analogue: above the fractional optimum and with the whitened
// Gram above I/4, the expected progress is at least
// (lambda_hat - 1) tr(W)/k for lambda_hat = <W, Z^{-1}>/tr(W).
TEST(ProgressBounds, TraceGainClearsTheConditionalFloor) {
  const WanderSetup& ws = wander_setup();
  const double trace_w = ws.wp_a.weight.trace();
  int checked = 0;
  for (std::uint64_t seed = 300; seed < 360; ++seed) {
    od::RoundingConfig cfg;
    cfg.objective_kind = od::ObjectiveKind::A;
    cfg.eps = 0.05;
    cfg.seed = seed;
    cfg.iter_cap = 1500;
    const od::RoundingResult res = od::randomized_exchange(ws.inst, cfg, ws.wp_a);
    ReplayState st = replay_start(ws.wp_a, res);
    for (std::size_t t = 0; t <= res.trace.steps.size(); ++t) {
      if (od::min_eigenvalue(st.z) >= 0.25) {
        const double obj =
            od::weighted_trace_inverse(od::psd_factorize(st.z), ws.wp_a.weight);
        const double lambda_hat = obj / trace_w;
        if (lambda_hat >= 1.0) {
          od::SamplingConfig scfg;
          scfg.alpha = res.alpha;
          scfg.k = res.k;
          scfg.eps = cfg.eps;
          scfg.weight = ws.wp_a.weight;
          const double expectation = od::exact_conditional_expectation(
              ws.wp_a.whitened.vectors, subset_of(st.member), ws.wp_a.x, st.z, scfg,
              od::StepQuantity::GammaA);
          const double floor = (lambda_hat - 1.0) / res.k * trace_w;
          EXPECT_GE(expectation, floor - 1e-9) << "seed " << seed << " t " << t;
          ++checked;
        }
      }
      if (t < res.trace.steps.size()) replay_apply(st, ws.wp_a, res.trace.steps[t]);
    }
  }
  EXPECT_GE(checked, 10) << "too few qualifying states";
}

// On runs whose exchanged vectors all have <vv', Z^{-1}> <= 4 eps, the
// determinant compounds at least exp(sum of (1-4e) gain - (1+5e) loss).
// At the guarantee geometry the start is already nonsingular and every
// realized exchange is short, so all 200 seeded runs must qualify.
TEST(ProgressBounds, DeterminantTelescopeHoldsOnShortVectorRuns) {
  const McSetup& mc = mc_setup();
  const double eps = 0.01;
  int runs_checked = 0;
  for (std::uint64_t seed = 100; seed < 300; ++seed) {
    od::RoundingConfig cfg;
    cfg.objective_kind = od::ObjectiveKind::D;
    cfg.eps = eps;
    cfg.seed = seed;
    const od::RoundingResult res = od::randomized_exchange(mc.run_inst, cfg, mc.wp_d);
    ReplayState st = replay_start(mc.wp_d, res);
    const double log_det_start = std::log(st.z.determinant());
    ASSERT_TRUE(std::isfinite(log_det_start)) << "seed " << seed;
    double gamma_sum = 0.0;
    bool qualifies = true;
    for (const od::ExchangeStep& step : res.trace.steps) {
      const od::PsdFactorization fact = od::psd_factorize(st.z);
      double g = 0.0, l = 0.0;
      if (step.added >= 0) g = od::inv_quad(fact, mc.wp_d.whitened.vectors[step.added]);
      if (step.removed >= 0) l = od::inv_quad(fact, mc.wp_d.whitened.vectors[step.removed]);
      if (g > 4.0 * eps || l > 4.0 * eps) {
        qualifies = false;
        break;
      }
      gamma_sum += (1.0 - 4.0 * eps) * g - (1.0 + 5.0 * eps) * l;
      replay_apply(st, mc.wp_d, step);
    }
    if (!qualifies) continue;
    ++runs_checked;
    EXPECT_GE(std::log(st.z.determinant()), log_det_start + gamma_sum - 1e-7)
        << "seed " << seed;
  }
  EXPECT_EQ(runs_checked, 200);
}

// Per-exchange form on trajectories with long vectors: with the scale
// eps' = max(g, l)/4 the step still satisfies
// log det(Z') >= log det(Z) + (1-4 eps') g - (1+5 eps') l whenever the loss
// side keeps 1 - l above 1/2.
TEST(ProgressBounds, PerExchangeDeterminantGrowthMatchesTheExponentialBound) {
  const WanderSetup& ws = wander_setup();
  int checked = 0;
  for (std::uint64_t seed = 7; seed < 47; ++seed) {
    const od::RoundingConfig cfg = wander_config(seed, 1500);
    const od::RoundingResult res = od::randomized_exchange(ws.inst, cfg, ws.wp_d);
    ReplayState st = replay_start(ws.wp_d, res);
    for (const od::ExchangeStep& step : res.trace.steps) {
      if (step.added < 0 && step.removed < 0) continue;
      od::Matrix z_before = st.z;
      double g = 0.0, l = 0.0;
      bool usable = true;
      try {
        const od::PsdFactorization fact = od::psd_factorize(z_before);
        if (step.added >= 0) g = od::inv_quad(fact, ws.wp_d.whitened.vectors[step.added]);
        if (step.removed >= 0) l = od::inv_quad(fact, ws.wp_d.whitened.vectors[step.removed]);
      } catch (const od::NotPositiveDefinite&) {
        usable = false;
      }
      replay_apply(st, ws.wp_d, step);
      const double scale = std::max(g, l) / 4.0;
      if (!usable || l > 0.5 || scale <= 0.0) continue;
      const double lhs = std::log(st.z.determinant());
      const double rhs = std::log(z_before.determinant()) + (1.0 - 4.0 * scale) * g -
                         (1.0 + 5.0 * scale) * l;
      EXPECT_GE(lhs, rhs - 1e-9) << "seed " << seed << " t " << step.t;
      ++checked;
    }
  }
  EXPECT_GE(checked, 10) << "too few qualifying steps";
}

// 200 seeded determinant runs at the guarantee geometry: every run should
// terminate, meet the objective bound against the fractional optimum at the
// rescaled budget, and stay within the original budget.
TEST(RoundingMonteCarlo, DeterminantRunsMeetTheirGuarantee) {
  const McSetup& mc = mc_setup();
  const double eps = 0.01;
  const double relax_root = std::sqrt(mc.sparse_d.objective_value);
  const double original_budget = mc.inst.budgets(0);

  int success = 0, phase_ok = 0, violations = 0;
  std::vector<od::IntegralSolution> solutions;
  for (std::uint64_t seed = 100; seed < 300; ++seed) {
    od::RoundingConfig cfg;
    cfg.objective_kind = od::ObjectiveKind::D;
    cfg.eps = eps;
    cfg.seed = seed;
    const od::RoundingResult res = od::randomized_exchange(mc.run_inst, cfg, mc.wp_d);
    solutions.push_back(res.solution);
    violations += res.short_vector_violations;
    const double root = std::sqrt(res.solution.objective_value);
    const bool objective_ok = root >= (1.0 - 30.0 * eps) * relax_root - 1e-12;
    const bool cost_ok = res.solution.costs_used(0) <= original_budget + 1e-9;
    if (res.terminated && objective_ok && cost_ok) ++success;
    const std::int64_t phase_window = 16 * static_cast<std::int64_t>(res.k);
    if (res.phases.tau1 && *res.phases.tau1 <= phase_window &&
        res.phases.min_lambda_after_tau1 >= 0.25) {
      ++phase_ok;
    }
  }
  EXPECT_GE(success, 180);
  EXPECT_GE(phase_ok, 180);
  EXPECT_EQ(violations, 0);

  od::Vector run_budgets = mc.run_inst.budgets;
  const od::OvershootReport report =
      od::knapsack_overshoot_report(solutions, mc.inst, eps, run_budgets);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.runs, 200);
  EXPECT_DOUBLE_EQ(report.rows[0].budget, 400.0);
  EXPECT_NEAR(report.rows[0].guarantee_cap, 1.01 * 200.0 + 120.0 * 2.0, 1e-9);
  EXPECT_LE(report.rows[0].frac_over_budget, 0.1);
  EXPECT_DOUBLE_EQ(report.rows[0].frac_over_guarantee, 0.0);
  EXPECT_LE(report.rows[0].min_cost, report.rows[0].mean_cost);
  EXPECT_LE(report.rows[0].mean_cost, report.rows[0].max_cost);

  // The one-call pipeline with budget rescaling reproduces the presolved
  // path: same relaxation, same whitening, same draws.
  od::RoundingConfig cfg;
  cfg.objective_kind = od::ObjectiveKind::D;
  cfg.eps = eps;
  cfg.seed = 100;
  cfg.rescale_budgets = true;
  const od::RoundingResult full = od::randomized_exchange(mc.inst, cfg);
  od::RoundingConfig pre = cfg;
  pre.rescale_budgets = false;
  const od::RoundingResult split = od::randomized_exchange(mc.run_inst, pre, mc.wp_d);
  EXPECT_EQ(full.terminated, split.terminated);
  EXPECT_EQ(full.trace.steps.size(), split.trace.steps.size());
  EXPECT_EQ(full.solution.membership, split.solution.membership);
}

TEST(RoundingMonteCarlo, TraceRunsMeetTheirGuarantee) {
  const McSetup& mc = mc_setup();
  const double eps = 0.01;
  const double relax_trace = mc.sparse_a.objective_value;
  const double original_budget = mc.inst.budgets(0);

  int success = 0;
  for (std::uint64_t seed = 100; seed < 300; ++seed) {
    od::RoundingConfig cfg;
    cfg.objective_kind = od::ObjectiveKind::A;
    cfg.eps = eps;
    cfg.seed = seed;
    const od::RoundingResult res = od::randomized_exchange(mc.run_inst, cfg, mc.wp_a);
    const bool objective_ok =
        res.solution.objective_value <= (1.0 + eps) * relax_trace * (1.0 + 1e-9);
    const bool cost_ok = res.solution.costs_used(0) <= original_budget + 1e-9;
    if (res.terminated && objective_ok && cost_ok) ++success;
  }
  EXPECT_GE(success, 180);
}

TEST(OvershootReport, ThreeOverlappingGroupsProduceThreeRows) {
  od::DesignInstance inst = od::gen_gaussian(2, 6, 77);
  inst.costs = od::Matrix::Zero(3, 6);
  for (int i = 0; i < 4; ++i) inst.costs(0, i) = 1.0;
  for (int i = 2; i < 6; ++i) inst.costs(1, i) = 1.0;
  inst.costs.row(2).setOnes();
  inst.budgets = od::Vector(3);
  inst.budgets << 3.0, 3.0, 5.0;

  std::vector<od::IntegralSolution> sols;
  for (const std::vector<int>& s :
       {std::vector<int>{0, 1, 2}, {2, 3, 4}, {0, 5}, {0, 1, 2, 3}}) {
    sols.push_back(od::make_solution(inst, s, od::ObjectiveKind::D));
  }
  const od::OvershootReport report = od::knapsack_overshoot_report(sols, inst, 0.05);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.runs, 4);
  // Group 0 costs: 3, 2, 1, 4 against budget 3.
  EXPECT_DOUBLE_EQ(report.rows[0].min_cost, 1.0);
  EXPECT_DOUBLE_EQ(report.rows[0].max_cost, 4.0);
  EXPECT_DOUBLE_EQ(report.rows[0].mean_cost, 2.5);
  EXPECT_DOUBLE_EQ(report.rows[0].frac_over_budget, 0.25);
  EXPECT_DOUBLE_EQ(report.rows[0].frac_over_guarantee, 0.0);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(report.rows[j].constraint, j);
    EXPECT_DOUBLE_EQ(report.rows[j].budget, inst.budgets(j));
    EXPECT_NEAR(report.rows[j].guarantee_cap, 1.05 * inst.budgets(j) + 120.0 * 2.0, 1e-9);
  }

  od::Vector run_budgets(3);
  run_budgets << 2.0, 2.0, 4.0;
  const od::OvershootReport rescaled =
      od::knapsack_overshoot_report(sols, inst, 0.05, run_budgets);
  EXPECT_NEAR(rescaled.rows[0].guarantee_cap, 1.05 * 2.0 + 240.0, 1e-9);
  EXPECT_DOUBLE_EQ(rescaled.rows[0].frac_over_budget, 0.25);
}
