#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"

namespace optdesign {

struct Infeasible : std::runtime_error {
  explicit Infeasible(const std::string& what) : std::runtime_error(what) {}
};

struct RelaxationDegenerate : std::runtime_error {
  explicit RelaxationDegenerate(const std::string& what) : std::runtime_error(what) {}
};

struct NotApplicable : std::runtime_error {
  explicit NotApplicable(const std::string& what) : std::runtime_error(what) {}
};

// objective_value is in raw objective units: det(X) for D, tr(X^{-1}) for A,
// lambda_min(X) for E. duality_gap_estimate is in the units of the maximized
// concave surrogate instead: log det for D, -tr(X^{-1}) for A, lambda_min
// for E.
struct FractionalSolution {
  Vector x;
  Matrix gram;
  ObjectiveKind objective_kind = ObjectiveKind::D;
  double objective_value = 0.0;
  double duality_gap_estimate = 0.0;
  std::vector<int> fractional_support;
};

namespace detail {

inline std::vector<int> strict_fractional_support(const Vector& x) {
  std::vector<int> out;
  for (int i = 0; i < x.size(); ++i)
    if (x(i) > 0.0 && x(i) < 1.0) out.push_back(i);
  return out;
}

inline void snap_to_bounds(Vector& x, double tol = 1e-9) {
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) <= tol) x(i) = 0.0;
    if (x(i) >= 1.0 - tol) x(i) = 1.0;
  }
}

// argmax <g, s> over the box alone.
inline Vector lmo_box_only(const Vector& g) {
  Vector s = Vector::Zero(g.size());
  for (int i = 0; i < g.size(); ++i)
    if (g(i) > 0.0) s(i) = 1.0;
  return s;
}

// Fractional knapsack: fill by gain density, lowest index on ties.
inline Vector lmo_single_knapsack(const Vector& g, const Vector& c, double b) {
  const int n = static_cast<int>(g.size());
  Vector s = Vector::Zero(n);
  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    if (g(i) <= 0.0) continue;
    if (c(i) <= 0.0) {
      s(i) = 1.0;
      continue;
    }
    order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int bb) {
    const double ra = g(a) / c(a), rb = g(bb) / c(bb);
    if (ra != rb) return ra > rb;
    return a < bb;
  });
  double remaining = b;
  for (int i : order) {
    if (remaining <= 0.0) break;
    const double take = std::min(1.0, remaining / c(i));
    s(i) = take;
    remaining -= take * c(i);
  }
  return s;
}

// Bounded-variable primal simplex with Bland's rule for
// max <g, s> over {0 <= s <= 1, C s <= b}. Slacks start basic, so the
// initial point is feasible and no phase one is needed.
inline Vector lmo_simplex(const Vector& g, const Matrix& C, const Vector& b) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(C.rows());
  const int total = n + m;
  const double inf = std::numeric_limits<double>::infinity();
  auto upper = [&](int j) { return j < n ? 1.0 : inf; };
  auto cost = [&](int j) { return j < n ? g(j) : 0.0; };
  auto column = [&](int j) -> Vector {
    if (j < n) return C.col(j);
    Vector e = Vector::Zero(m);
    e(j - n) = 1.0;
    return e;
  };

  std::vector<int> basis(m);
  std::vector<char> basic(total, 0), at_upper(total, 0);
  for (int j = 0; j < m; ++j) {
    basis[j] = n + j;
    basic[n + j] = 1;
  }
  const double tol = 1e-10 * (1.0 + (n > 0 ? g.cwiseAbs().maxCoeff() : 0.0));
  const int cap = 2000 * (total + 1);
  Matrix bmat(m, m);
  Vector xb(m);

  for (int iter = 0;; ++iter) {
    if (iter > cap) throw std::runtime_error("lmo_simplex: iteration cap exceeded");
    for (int jj = 0; jj < m; ++jj) bmat.col(jj) = column(basis[jj]);
    Eigen::PartialPivLU<Matrix> lu(bmat);
    Vector rhs = b;
    for (int j = 0; j < n; ++j)
      if (!basic[j] && at_upper[j]) rhs -= column(j);
    xb = lu.solve(rhs);

    Vector cb(m);
    for (int jj = 0; jj < m; ++jj) cb(jj) = cost(basis[jj]);
    Eigen::PartialPivLU<Matrix> lut(Matrix(bmat.transpose()));
    Vector y = lut.solve(cb);

    int enter = -1;
    for (int j = 0; j < total; ++j) {
      if (basic[j]) continue;
      const double r = cost(j) - y.dot(column(j));
      if (at_upper[j] ? r < -tol : r > tol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) {
      Vector s = Vector::Zero(n);
      for (int j = 0; j < n; ++j)
        if (!basic[j] && at_upper[j]) s(j) = 1.0;
      for (int jj = 0; jj < m; ++jj)
        if (basis[jj] < n) s(basis[jj]) = std::min(1.0, std::max(0.0, xb(jj)));
      return s;
    }

    const double sgn = at_upper[enter] ? -1.0 : 1.0;
    Vector w = lu.solve(column(enter));
    double tmax = upper(enter);  // entering variable's own range (lo = 0)
    int leave = -1;
    for (int jj = 0; jj < m; ++jj) {
      const double delta = -sgn * w(jj);
      double t = inf;
      if (delta > 1e-12) {
        if (upper(basis[jj]) == inf) continue;
        t = (upper(basis[jj]) - xb(jj)) / delta;
      } else if (delta < -1e-12) {
        t = xb(jj) / (-delta);
      } else {
        continue;
      }
      t = std::max(t, 0.0);
      const double near = std::isfinite(tmax) ? 1e-13 * (1.0 + std::abs(tmax)) : 0.0;
      if (t < tmax - near || (t < tmax + near && leave >= 0 && basis[jj] < basis[leave])) {
        tmax = t;
        leave = jj;
      }
    }
    if (tmax == inf) throw std::runtime_error("lmo_simplex: unbounded direction");
    if (leave < 0) {
      at_upper[enter] = !at_upper[enter];
      continue;
    }
    const int leaving = basis[leave];
    const double delta = -sgn * w(leave);
    basic[leaving] = 0;
    at_upper[leaving] = delta > 0.0;
    basis[leave] = enter;
    basic[enter] = 1;
    at_upper[enter] = 0;
  }
}

inline Vector lp_box_knapsack(const Vector& g, const Matrix& C, const Vector& b) {
  if (C.rows() == 0) return lmo_box_only(g);
  if (C.rows() == 1) return lmo_single_knapsack(g, C.row(0), b(0));
  return lmo_simplex(g, C, b);
}

template <class F>
inline double golden_section_max(double lo, double hi, F&& f, double tol = 1e-10) {
  if (!(hi > lo)) return lo;
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Euclidean projection onto {0 <= x <= 1, <c, x> <= b}; supports at most one
// budget row (all E-design consumers are single-budget).
inline Vector project_box_knapsack(const Vector& y, const Matrix& C, const Vector& b) {
  Vector x = y.cwiseMax(0.0).cwiseMin(1.0);
  if (C.rows() == 0) return x;
  if (C.rows() > 1)
    throw std::invalid_argument("project_box_knapsack: only one budget row supported");
  Vector c = C.row(0);
  if (c.maxCoeff() <= 0.0) return x;
  if (c.dot(x) <= b(0)) return x;
  auto clipped = [&](double theta) -> Vector {
    return (y - theta * c).cwiseMax(0.0).cwiseMin(1.0);
  };
  double lo = 0.0, hi = 1.0;
  while (c.dot(clipped(hi)) > b(0) && hi < 1e18) hi *= 2.0;
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo + hi);
    (c.dot(clipped(mid)) > b(0) ? lo : hi) = mid;
  }
  return clipped(hi);
}

inline double concave_value(ObjectiveKind kind, const Matrix& x) {
  try {
    PsdFactorization f = psd_factorize(x);
    return kind == ObjectiveKind::D ? f.log_det_cache : -trace_inverse(f);
  } catch (const NotPositiveDefinite&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

inline FractionalSolution make_fractional(const DesignInstance& inst, const Vector& x,
                                          ObjectiveKind kind, double gap_estimate = 0.0) {
  FractionalSolution sol;
  sol.x = x;
  sol.gram = Matrix::Zero(inst.dim, inst.dim);
  for (int i = 0; i < inst.n(); ++i)
    if (x(i) != 0.0) sol.gram.noalias() += x(i) * inst.vectors[i] * inst.vectors[i].transpose();
  sol.objective_kind = kind;
  switch (kind) {
    case ObjectiveKind::D:
      try {
        sol.objective_value = std::exp(psd_factorize(sol.gram).log_det_cache);
      } catch (const NotPositiveDefinite&) {
        sol.objective_value = 0.0;
      }
      break;
    case ObjectiveKind::A:
      try {
        sol.objective_value = trace_inverse(psd_factorize(sol.gram));
      } catch (const NotPositiveDefinite&) {
        sol.objective_value = std::numeric_limits<double>::infinity();
      }
      break;
    case ObjectiveKind::E:
      sol.objective_value = min_eigenvalue(sol.gram);
      break;
  }
  sol.duality_gap_estimate = gap_estimate;
  sol.fractional_support = detail::strict_fractional_support(x);
  return sol;
}

namespace detail {

inline FractionalSolution solve_relaxation_e(const DesignInstance& inst, const Vector& x0,
                                             double tol, int max_iters) {
  if (inst.m() > 1)
    throw std::invalid_argument("solve_relaxation: E objective supports at most one budget row");
  const int n = inst.n();
  double grad_scale = 0.0;
  for (const Vector& u : inst.vectors) grad_scale = std::max(grad_scale, u.squaredNorm());
  if (grad_scale <= 0.0) throw RelaxationDegenerate("solve_relaxation: zero ground set");

  Vector x = x0;
  Vector xsum = Vector::Zero(n);
  double best_bound = std::numeric_limits<double>::infinity();
  Vector xbar = x;
  double fbar = 0.0, gap = std::numeric_limits<double>::infinity();
  int t = 0;
  auto gram_of = [&](const Vector& z) {
    Matrix g = Matrix::Zero(inst.dim, inst.dim);
    for (int i = 0; i < n; ++i)
      if (z(i) != 0.0) g.noalias() += z(i) * inst.vectors[i] * inst.vectors[i].transpose();
    return g;
  };
  while (t < max_iters) {
    ++t;
    auto [lam, w] = min_eigenpair(gram_of(x));
    Vector g(n);
    for (int i = 0; i < n; ++i) {
      const double proj = inst.vectors[i].dot(w);
      g(i) = proj * proj;
    }
    // lambda_min(M) <= w' M w for every unit w, so the LP value over the
    // feasible set is a global upper bound.
    Vector s = lp_box_knapsack(g, inst.costs, inst.budgets);
    best_bound = std::min(best_bound, g.dot(s));
    xsum += x;
    if (t % 16 == 0 || t == max_iters) {
      xbar = xsum / t;
      fbar = min_eigenvalue(gram_of(xbar));
      gap = best_bound - fbar;
      if (gap <= tol * std::max(1.0, std::abs(fbar))) break;
    }
    const double step = std::sqrt(static_cast<double>(n)) /
                        (std::max(g.norm(), 1e-12) * std::sqrt(static_cast<double>(t)));
    x = project_box_knapsack(x + step * g, inst.costs, inst.budgets);
  }
  xbar = xsum / t;
  snap_to_bounds(xbar);
  FractionalSolution sol = make_fractional(inst, xbar, ObjectiveKind::E);
  sol.duality_gap_estimate = best_bound - sol.objective_value;
  return sol;
}

}  // namespace detail

// Conditional-gradient solve of the fractional problem. D maximizes log det,
// A minimizes tr(X^{-1}); both use pairwise steps (mass moves from the worst
// active atom to the best vertex) with exact golden-section line search, and
// stop when the linearization gap drops below tol * max(1, |objective|).
// E runs projected supergradient ascent and returns the averaged iterate.
inline FractionalSolution solve_relaxation(const DesignInstance& inst, ObjectiveKind kind,
                                           double tol = 1e-6, int max_iters = 20000) {
  validate_instance(inst);
  if (!(tol > 0.0)) throw std::invalid_argument("solve_relaxation: tol must be > 0");
  if (max_iters < 1) throw std::invalid_argument("solve_relaxation: max_iters must be >= 1");
  const int n = inst.n(), m = inst.m(), d = inst.dim;
  for (int j = 0; j < m; ++j)
    if (inst.budgets(j) < 0.0) throw Infeasible("solve_relaxation: negative budget");

  double delta = 1.0;
  for (int j = 0; j < m; ++j) {
    const double total = inst.costs.row(j).sum();
    if (total > 0.0) delta = std::min(delta, inst.budgets(j) / total);
  }
  if (!(delta > 0.0))
    throw RelaxationDegenerate("solve_relaxation: no strictly feasible interior start");
  Vector x = Vector::Constant(n, delta);

  if (kind == ObjectiveKind::E) return detail::solve_relaxation_e(inst, x, tol, max_iters);

  struct Atom {
    double weight;
    Matrix gram;
  };
  auto key_of = [n](const Vector& v) { return std::vector<double>(v.data(), v.data() + n); };
  auto gram_of = [&](const Vector& z) {
    Matrix g = Matrix::Zero(d, d);
    for (int i = 0; i < n; ++i)
      if (z(i) != 0.0) g.noalias() += z(i) * inst.vectors[i] * inst.vectors[i].transpose();
    return g;
  };
  std::map<std::vector<double>, Atom> atoms;
  Matrix gram = gram_of(x);
  atoms.emplace(key_of(x), Atom{1.0, gram});

  double gap = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    PsdFactorization fact = psd_factorize(gram);
    Vector g(n);
    for (int i = 0; i < n; ++i) {
      g(i) = kind == ObjectiveKind::D ? inv_quad(fact, inst.vectors[i])
                                      : solve_spd(fact, inst.vectors[i]).squaredNorm();
    }
    Vector s = detail::lp_box_knapsack(g, inst.costs, inst.budgets);
    const double fcur =
        kind == ObjectiveKind::D ? fact.log_det_cache : -trace_inverse(fact);
    gap = g.dot(s - x);
    if (gap <= tol * std::max(1.0, std::abs(fcur))) break;

    auto worst = atoms.begin();
    double worst_score = std::numeric_limits<double>::infinity();
    for (auto it = atoms.begin(); it != atoms.end(); ++it) {
      const double score =
          g.dot(Eigen::Map<const Vector>(it->first.data(), n));
      if (score < worst_score) {
        worst_score = score;
        worst = it;
      }
    }
    Vector away = Eigen::Map<const Vector>(worst->first.data(), n);
    Vector dir_x = s - away;
    double gamma_max = worst->second.weight;
    Matrix gram_s = gram_of(s);
    Matrix dir_gram = gram_s - worst->second.gram;
    bool plain_fw = dir_x.cwiseAbs().maxCoeff() == 0.0 || g.dot(dir_x) <= 0.0;
    if (plain_fw) {
      dir_x = s - x;
      dir_gram = gram_s - gram;
      gamma_max = 1.0;
      if (dir_x.cwiseAbs().maxCoeff() == 0.0) break;
    }

    Matrix base = gram;
    auto along = [&](double t) { return detail::concave_value(kind, base + t * dir_gram); };
    const double gamma = detail::golden_section_max(0.0, gamma_max, along);
    if (!(along(gamma) > fcur)) break;  // line search cannot resolve further progress

    x += gamma * dir_x;
    gram += gamma * dir_gram;
    auto [sit, fresh] = atoms.emplace(key_of(s), Atom{0.0, gram_s});
    if (!fresh) sit->second.gram = gram_s;
    if (plain_fw) {
      for (auto& [k, a] : atoms) a.weight *= 1.0 - gamma;
      sit->second.weight += gamma;
    } else {
      worst->second.weight -= gamma;
      sit->second.weight += gamma;
    }
    for (auto it = atoms.begin(); it != atoms.end();) {
      if (it->second.weight <= 1e-14 && it != sit)
        it = atoms.erase(it);
      else
        ++it;
    }
    if ((iter + 1) % 64 == 0) {
      double total = 0.0;
      for (auto& [k, a] : atoms) total += a.weight;
      Vector rebuilt = Vector::Zero(n);
      for (auto& [k, a] : atoms) {
        a.weight /= total;
        rebuilt += a.weight * Eigen::Map<const Vector>(k.data(), n);
      }
      x = rebuilt;
      gram = gram_of(x);
    }
  }

  detail::snap_to_bounds(x);
  FractionalSolution sol = make_fractional(inst, x, kind, gap);
  if (kind == ObjectiveKind::D && sol.objective_value <= 0.0)
    throw RelaxationDegenerate("solve_relaxation: optimum Gram is singular");
  if (kind == ObjectiveKind::A && !std::isfinite(sol.objective_value))
    throw RelaxationDegenerate("solve_relaxation: optimum Gram is singular");
  return sol;
}

// Walks null-space directions of the tight constraints (Gram equalities over
// the fractional coordinates plus tight budget rows) until the fractional
// support has size at most d(d+1)/2 + m <= d^2 + m. The Gram matrix and
// budget feasibility are preserved along every move.
inline FractionalSolution sparsify_to_extreme_point(const DesignInstance& inst,
                                                    const FractionalSolution& sol) {
  const int n = inst.n(), m = inst.m(), d = inst.dim;
  Vector x = sol.x;
  const int row_gram = d * (d + 1) / 2;
  const int iter_cap = 4 * (n + m + row_gram) + 16;

  for (int round = 0; round < iter_cap; ++round) {
    std::vector<int> frac;
    for (int i = 0; i < n; ++i)
      if (x(i) > 0.0 && x(i) < 1.0) frac.push_back(i);
    const int f = static_cast<int>(frac.size());
    if (f == 0) break;

    std::vector<int> tight;
    for (int j = 0; j < m; ++j) {
      const double used = inst.costs.row(j).dot(x);
      if (inst.budgets(j) - used <= 1e-10 * std::max(1.0, std::abs(inst.budgets(j))))
        tight.push_back(j);
    }
    Matrix sys(row_gram + static_cast<int>(tight.size()), f);
    int r = 0;
    for (int p = 0; p < d; ++p) {
      for (int q = p; q < d; ++q) {
        for (int c = 0; c < f; ++c)
          sys(r, c) = inst.vectors[frac[c]](p) * inst.vectors[frac[c]](q);
        ++r;
      }
    }
    for (int j : tight) {
      for (int c = 0; c < f; ++c) sys(r, c) = inst.costs(j, frac[c]);
      ++r;
    }

    Eigen::FullPivLU<Matrix> lu(sys);
    if (lu.dimensionOfKernel() == 0) break;
    Vector h = lu.kernel().col(0);
    double hmax = h.cwiseAbs().maxCoeff();
    if (!(hmax > 0.0)) break;
    h /= hmax;
    for (int c = 0; c < f; ++c) {
      if (h(c) != 0.0) {
        if (h(c) < 0.0) h = -h;
        break;
      }
    }

    // Largest step keeping the box and every budget row satisfied.
    double t = std::numeric_limits<double>::infinity();
    int block_coord = -1;
    double block_bound = 0.0;
    for (int c = 0; c < f; ++c) {
      if (h(c) == 0.0) continue;
      const double room = h(c) > 0.0 ? (1.0 - x(frac[c])) / h(c) : x(frac[c]) / (-h(c));
      if (room < t) {
        t = room;
        block_coord = c;
        block_bound = h(c) > 0.0 ? 1.0 : 0.0;
      }
    }
    for (int j = 0; j < m; ++j) {
      double along = 0.0;
      for (int c = 0; c < f; ++c) along += inst.costs(j, frac[c]) * h(c);
      if (along > 1e-14) {
        const double slack = inst.budgets(j) - inst.costs.row(j).dot(x);
        const double room = std::max(0.0, slack) / along;
        if (room < t) {
          t = room;
          block_coord = -1;
        }
      }
    }
    if (!std::isfinite(t)) break;

    auto apply = [&](double step) {
      for (int c = 0; c < f; ++c) x(frac[c]) = std::min(1.0, std::max(0.0, x(frac[c]) + step * h(c)));
    };
    Vector saved = x;
    apply(t);
    for (int guard = 0; guard < 64; ++guard) {
      bool ok = true;
      for (int j = 0; j < m; ++j)
        if (inst.costs.row(j).dot(x) > inst.budgets(j) * (1.0 + 1e-12) + 1e-14) ok = false;
      if (ok) break;
      x = saved;
      t = std::nextafter(t, 0.0);
      apply(t);
    }
    if (block_coord >= 0) x(frac[block_coord]) = block_bound;
  }

  FractionalSolution out = make_fractional(inst, x, sol.objective_kind, sol.duality_gap_estimate);
  return out;
}

struct ShortVectorReport {
  bool pass = true;
  double max_value = 0.0;
  double threshold = 0.0;
  int checked = 0;
};

namespace detail {

inline void require_budget_precondition(const DesignInstance& inst, double eps,
                                        const char* where) {
  for (int j = 0; j < inst.m(); ++j) {
    const double cinf = inst.costs.row(j).cwiseAbs().maxCoeff();
    if (!(inst.budgets(j) >= inst.dim * cinf / eps)) {
      throw NotApplicable(std::string(where) + ": budget row " + std::to_string(j) +
                          " below d*max(c)/eps");
    }
  }
}

// Coordinates within 1e-6 of a bound are treated as integral here: the
// short-vector bounds apply to interior coordinates of an optimal solution,
// and a saturated coordinate off its bound by solver inexactness must not
// be scored as fractional.
inline std::vector<int> verifier_fractional_support(const Vector& x) {
  std::vector<int> out;
  for (int i = 0; i < x.size(); ++i)
    if (x(i) > 1e-6 && x(i) < 1.0 - 1e-6) out.push_back(i);
  return out;
}

}  // namespace detail

// Near-optimal fractional solutions have short whitened vectors on their
// fractional support: ||X^{-1/2} u_i||^2 <= eps, checked with 5% slack for
// solver inexactness.
inline ShortVectorReport verify_short_vectors_d(const DesignInstance& inst, const Vector& x,
                                                double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("verify_short_vectors_d: eps must be > 0");
  detail::require_budget_precondition(inst, eps, "verify_short_vectors_d");
  ShortVectorReport rep;
  rep.threshold = 1.05 * eps;
  std::vector<int> frac = detail::verifier_fractional_support(x);
  if (frac.empty()) return rep;
  FractionalSolution sol = make_fractional(inst, x, ObjectiveKind::D);
  PsdFactorization fact = psd_factorize(sol.gram);
  for (int i : frac) {
    rep.max_value = std::max(rep.max_value, inv_quad(fact, inst.vectors[i]));
    ++rep.checked;
  }
  rep.pass = rep.max_value <= rep.threshold;
  return rep;
}

// A-design analogue: <X^{-1}, v_i v_i'> = ||X^{-1} u_i||^2 against
// (eps/d) * tr(X^{-1}).
inline ShortVectorReport verify_short_vectors_a(const DesignInstance& inst, const Vector& x,
                                                double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("verify_short_vectors_a: eps must be > 0");
  detail::require_budget_precondition(inst, eps, "verify_short_vectors_a");
  ShortVectorReport rep;
  std::vector<int> frac = detail::verifier_fractional_support(x);
  FractionalSolution sol = make_fractional(inst, x, ObjectiveKind::A);
  PsdFactorization fact = psd_factorize(sol.gram);
  rep.threshold = 1.05 * (eps / inst.dim) * trace_inverse(fact);
  if (frac.empty()) return rep;
  for (int i : frac) {
    rep.max_value = std::max(rep.max_value, solve_spd(fact, inst.vectors[i]).squaredNorm());
    ++rep.checked;
  }
  rep.pass = rep.max_value <= rep.threshold;
  return rep;
}

// Componentwise scaling y = factor * x. The objective transforms exactly:
// det gains factor^d, tr(X^{-1}) gains 1/factor, lambda_min gains factor.
inline FractionalSolution scale_solution(const FractionalSolution& sol, double factor) {
  if (!(factor > 0.0 && factor <= 1.0))
    throw std::invalid_argument("scale_solution: factor must be in (0, 1]");
  FractionalSolution out = sol;
  out.x = factor * sol.x;
  out.gram = factor * sol.gram;
  const int d = static_cast<int>(sol.gram.rows());
  switch (sol.objective_kind) {
    case ObjectiveKind::D:
      out.objective_value = std::pow(factor, d) * sol.objective_value;
      break;
    case ObjectiveKind::A:
      out.objective_value = sol.objective_value / factor;
      break;
    case ObjectiveKind::E:
      out.objective_value = factor * sol.objective_value;
      break;
  }
  out.fractional_support = detail::strict_fractional_support(out.x);
  return out;
}

}  // namespace optdesign
