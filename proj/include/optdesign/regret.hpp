#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "optdesign/linalg.hpp"
#include "optdesign/trace.hpp"

namespace optdesign {

struct BracketFailure : std::runtime_error {
  explicit BracketFailure(const std::string& what) : std::runtime_error(what) {}
};

struct DenominatorNonPositive : std::runtime_error {
  explicit DenominatorNonPositive(const std::string& what) : std::runtime_error(what) {}
};

struct PreconditionViolated : std::runtime_error {
  PreconditionViolated(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_index(step) {}
  int step_index;
};

// A = (alpha Z - l I)^{-2} with tr(A) = 1; sqrt_matrix is its PSD square
// root (alpha Z - l I)^{-1}. Both share Z's eigenbasis.
struct ActionMatrix {
  double alpha = 0.0;
  double l_value = 0.0;
  Matrix matrix;
  Matrix sqrt_matrix;
};

// The normalizer l is the unique value with alpha Z - l I > 0 and
// tr((alpha Z - l I)^{-2}) = 1; it lives in
// [alpha lambda_min - sqrt(d), alpha lambda_min - 1] where the trace is
// strictly increasing in l, so bisection converges.
inline ActionMatrix compute_action_matrix(const Matrix& z, double alpha) {
  const int d = static_cast<int>(z.rows());
  if (d < 1 || z.cols() != d) throw std::invalid_argument("compute_action_matrix: bad shape");
  if (!(alpha > 0)) throw std::invalid_argument("compute_action_matrix: alpha must be > 0");
  Eigen::SelfAdjointEigenSolver<Matrix> es(z);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("compute_action_matrix: eigensolver failed");
  const Vector& ev = es.eigenvalues();
  const double lam_min = ev(0);

  auto trace_at = [&](double l) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double gap = alpha * ev(i) - l;
      s += 1.0 / (gap * gap);
    }
    return s;
  };

  double lo = alpha * lam_min - std::sqrt(static_cast<double>(d));
  double hi = alpha * lam_min - 1.0;
  const double t_lo = trace_at(lo);
  const double t_hi = trace_at(hi);
  if (t_lo > 1.0 + 1e-9 || t_hi < 1.0 - 1e-9) {
    throw BracketFailure("compute_action_matrix: trace at bracket ends [" + std::to_string(t_lo) +
                         ", " + std::to_string(t_hi) + "] does not straddle 1");
  }
  double l = hi, t = t_hi;
  for (int it = 0; it < 60 && std::abs(t - 1.0) > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double t_mid = trace_at(mid);
    if (t_mid < 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    l = mid;
    t = t_mid;
  }
  if (std::abs(t - 1.0) > 1e-12) {
    // Final polish: the bracket is now tiny; take the midpoint.
    l = 0.5 * (lo + hi);
  }

  ActionMatrix out;
  out.alpha = alpha;
  out.l_value = l;
  Vector inv_gap(d);
  for (int i = 0; i < d; ++i) inv_gap(i) = 1.0 / (alpha * ev(i) - l);
  out.sqrt_matrix =
      es.eigenvectors() * inv_gap.asDiagonal() * es.eigenvectors().transpose();
  out.matrix = es.eigenvectors() * inv_gap.array().square().matrix().asDiagonal() *
               es.eigenvectors().transpose();
  return out;
}

struct DeltaTerms {
  double minus = 0.0;
  double plus = 0.0;
  double delta = 0.0;
};

// Gain/loss of a candidate exchange against the action matrix. A size-0
// vector marks an empty slot contributing 0.
inline DeltaTerms delta_terms(const ActionMatrix& a, const Vector& v_minus,
                              const Vector& v_plus) {
  DeltaTerms out;
  if (v_plus.size() > 0) {
    const double num = v_plus.dot(a.matrix * v_plus);
    const double den = 1.0 + 2.0 * a.alpha * v_plus.dot(a.sqrt_matrix * v_plus);
    out.plus = num / den;
  }
  if (v_minus.size() > 0) {
    const double num = v_minus.dot(a.matrix * v_minus);
    const double den = 1.0 - 2.0 * a.alpha * v_minus.dot(a.sqrt_matrix * v_minus);
    if (!(den > 0.0)) {
      throw DenominatorNonPositive("delta_terms: 1 - 2 alpha <vv', A^{1/2}> = " +
                                   std::to_string(den));
    }
    out.minus = num / den;
  }
  out.delta = out.plus - out.minus;
  return out;
}

struct RegretReport {
  bool pass = false;
  int prefixes_checked = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  int worst_prefix = -1;
};

// Replays a trace from z_initial and checks, for every prefix tau,
//   lambda_min(Z_{tau+1}) >= sum_{t<=tau} Delta_t - 2 sqrt(d)/alpha
//                            + lambda_min(Z_1) - 1e-6,
// recomputing each Delta_t from the replayed action matrix. Each removal
// must satisfy alpha <v v', A^{1/2}> < 1/2 or PreconditionViolated is
// thrown with the offending step.
inline RegretReport verify_regret_bound(const std::vector<Vector>& vectors,
                                        const ExchangeTrace& trace, const Matrix& z_initial,
                                        double alpha) {
  const int d = static_cast<int>(z_initial.rows());
  const double root_d = std::sqrt(static_cast<double>(d));
  const double lambda_init = min_eigenvalue(z_initial);

  RegretReport report;
  report.pass = true;
  Matrix z = z_initial;
  double sum_delta = 0.0;

  auto check_prefix = [&](int prefix) {
    const double lhs = min_eigenvalue(z);
    const double rhs = sum_delta - 2.0 * root_d / alpha + lambda_init;
    const double margin = lhs - rhs;
    if (margin < report.worst_margin) {
      report.worst_margin = margin;
      report.worst_prefix = prefix;
    }
    if (margin < -1e-6) report.pass = false;
    ++report.prefixes_checked;
  };

  check_prefix(0);
  static const Vector kEmpty;
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const ExchangeStep& st = trace.steps[k];
    ActionMatrix a = compute_action_matrix(z, alpha);
    const Vector& v_minus = st.removed >= 0 ? vectors[st.removed] : kEmpty;
    const Vector& v_plus = st.added >= 0 ? vectors[st.added] : kEmpty;
    if (v_minus.size() > 0) {
      const double half_check = alpha * v_minus.dot(a.sqrt_matrix * v_minus);
      if (!(half_check < 0.5)) {
        throw PreconditionViolated(
            static_cast<int>(k + 1),
            "alpha <vv', A^{1/2}> = " + std::to_string(half_check) + " >= 1/2");
      }
    }
    sum_delta += delta_terms(a, v_minus, v_plus).delta;
    if (v_plus.size() > 0) z.noalias() += v_plus * v_plus.transpose();
    if (v_minus.size() > 0) z.noalias() -= v_minus * v_minus.transpose();
    check_prefix(static_cast<int>(k + 1));
  }
  return report;
}

struct CospectralReport {
  bool pass = false;
  double margin_action = 0.0;  // sqrt(d)/alpha + lambda_min - <Z, A>
  double margin_sqrt = 0.0;    // d + alpha sqrt(d) lambda_min - alpha <Z, A^{1/2}>
};

// <Z, A> <= sqrt(d)/alpha + lambda_min(Z) and
// alpha <Z, A^{1/2}> <= d + alpha sqrt(d) lambda_min(Z), for A built from Z.
inline CospectralReport cospectral_bounds_check(const Matrix& z, const ActionMatrix& a) {
  const int d = static_cast<int>(z.rows());
  const double root_d = std::sqrt(static_cast<double>(d));
  const double lam_min = min_eigenvalue(z);
  const double za = (z * a.matrix).trace();
  const double zs = (z * a.sqrt_matrix).trace();
  CospectralReport out;
  out.margin_action = root_d / a.alpha + lam_min + 1e-8 - za;
  out.margin_sqrt = d + a.alpha * root_d * lam_min + 1e-8 - a.alpha * zs;
  out.pass = out.margin_action >= 0.0 && out.margin_sqrt >= 0.0;
  return out;
}

}  // namespace optdesign
