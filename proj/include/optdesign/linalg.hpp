#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace optdesign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

struct RemovalSingular : std::runtime_error {
  explicit RemovalSingular(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t matrix_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&h](std::uint64_t bits) {
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  eat(static_cast<std::uint64_t>(m.rows()));
  eat(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::uint64_t bits;
      double x = m(i, j);
      std::memcpy(&bits, &x, sizeof bits);
      eat(bits);
    }
  }
  return h;
}

// Cholesky factorization of a symmetric positive definite matrix with a
// scale-invariant pivot floor of d * machine_eps * trace(M).
struct PsdFactorization {
  int dim = 0;
  Matrix lower_triangular_factor;
  double log_det_cache = 0.0;  // 2 * sum(log(diag(L)))
  std::uint64_t source_hash = 0;
};

inline PsdFactorization psd_factorize(const Matrix& m) {
  const int d = static_cast<int>(m.rows());
  if (m.cols() != d) throw std::invalid_argument("psd_factorize: matrix must be square");
  const double pivot_floor =
      static_cast<double>(d) * std::numeric_limits<double>::epsilon() * m.trace();
  Matrix l = Matrix::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    double pivot = m(j, j);
    for (int k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > pivot_floor)) {
      throw NotPositiveDefinite("psd_factorize: pivot " + std::to_string(pivot) + " at column " +
                                std::to_string(j) + " below floor " + std::to_string(pivot_floor));
    }
    l(j, j) = std::sqrt(pivot);
    for (int i = j + 1; i < d; ++i) {
      double s = m(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  PsdFactorization f;
  f.dim = d;
  f.lower_triangular_factor = std::move(l);
  f.log_det_cache = 2.0 * f.lower_triangular_factor.diagonal().array().log().sum();
  f.source_hash = matrix_hash(m);
  return f;
}

// v' M^{-1} v through one forward solve.
inline double inv_quad(const PsdFactorization& f, const Vector& v) {
  Vector y = f.lower_triangular_factor.triangularView<Eigen::Lower>().solve(v);
  return y.squaredNorm();
}

inline Vector solve_spd(const PsdFactorization& f, const Vector& b) {
  Vector y = f.lower_triangular_factor.triangularView<Eigen::Lower>().solve(b);
  return f.lower_triangular_factor.transpose().triangularView<Eigen::Upper>().solve(y);
}

// tr(M^{-1}) = ||L^{-1}||_F^2.
inline double trace_inverse(const PsdFactorization& f) {
  Matrix linv = f.lower_triangular_factor.triangularView<Eigen::Lower>().solve(
      Matrix::Identity(f.dim, f.dim));
  return linv.squaredNorm();
}

// tr(M^{-1} W) for symmetric W.
inline double weighted_trace_inverse(const PsdFactorization& f, const Matrix& w) {
  Matrix y = f.lower_triangular_factor.triangularView<Eigen::Lower>().solve(w);
  Matrix x = f.lower_triangular_factor.transpose().triangularView<Eigen::Upper>().solve(y);
  return x.trace();
}

inline std::pair<double, Vector> min_eigenpair(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error("min_eigenpair: eigensolver failed");
  return {es.eigenvalues()(0), es.eigenvectors().col(0)};
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("min_eigenvalue: eigensolver failed");
  return es.eigenvalues()(0);
}

// M^{-1/2} through the eigendecomposition; rejects near-singular input.
inline Matrix inv_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error("inv_sqrt: eigensolver failed");
  const Vector& ev = es.eigenvalues();
  const double lmax = ev(ev.size() - 1);
  if (!(ev(0) > 1e-12 * lmax)) {
    throw NotPositiveDefinite("inv_sqrt: min eigenvalue " + std::to_string(ev(0)) +
                              " too small relative to max " + std::to_string(lmax));
  }
  return es.eigenvectors() * ev.array().rsqrt().matrix().asDiagonal() *
         es.eigenvectors().transpose();
}

// log det(M - uu' + ww') - log det(M), evaluated exactly as
// log(1 - u'M^{-1}u) + log(1 + w'(M - uu')^{-1}w).
inline double rank_two_logdet_delta(const PsdFactorization& f, const Vector& u, const Vector& w) {
  const auto& lt = f.lower_triangular_factor.triangularView<Eigen::Lower>();
  Vector yu = lt.solve(u);
  Vector yw = lt.solve(w);
  const double a = yu.squaredNorm();
  const double c = yw.squaredNorm();
  const double s = yu.dot(yw);
  if (a >= 1.0 - 1e-12) {
    throw RemovalSingular("rank_two_logdet_delta: u'M^{-1}u = " + std::to_string(a));
  }
  return std::log1p(-a) + std::log1p(c + s * s / (1.0 - a));
}

// tr((M - uu' + ww')^{-1} W) - tr(M^{-1} W) via the 2x2 Woodbury correction.
// Requires 2 u'M^{-1}u < 1 so the correction matrix is provably nonsingular.
inline double rank_two_weighted_trace_delta(const PsdFactorization& f, const Matrix& w_weight,
                                            const Vector& u, const Vector& w) {
  Vector mu = solve_spd(f, u);
  Vector mw = solve_spd(f, w);
  const double a = u.dot(mu);
  const double s = u.dot(mw);
  const double c = w.dot(mw);
  if (2.0 * a >= 1.0 - 1e-12) {
    throw RemovalSingular("rank_two_weighted_trace_delta: 2 u'M^{-1}u = " + std::to_string(2 * a));
  }
  Vector wmu = w_weight * mu;
  Vector wmw = w_weight * mw;
  const double p = mu.dot(wmu);
  const double q = mu.dot(wmw);
  const double r = mw.dot(wmw);
  const double det_k = (a - 1.0) * (1.0 + c) - s * s;
  return -((1.0 + c) * p - 2.0 * s * q + (a - 1.0) * r) / det_k;
}

namespace detail {

// LINPACK-style rank-one Cholesky update: L -> chol(L L' + x x').
inline void cholesky_update(Matrix& l, Vector x) {
  const int d = static_cast<int>(l.rows());
  for (int k = 0; k < d; ++k) {
    const double r = std::hypot(l(k, k), x(k));
    const double c = r / l(k, k);
    const double s = x(k) / l(k, k);
    l(k, k) = r;
    for (int i = k + 1; i < d; ++i) {
      l(i, k) = (l(i, k) + s * x(i)) / c;
      x(i) = c * x(i) - s * l(i, k);
    }
  }
}

// Rank-one downdate: L -> chol(L L' - x x'); returns false if the result
// is not safely positive definite.
inline bool cholesky_downdate(Matrix& l, Vector x, double pivot_floor) {
  const int d = static_cast<int>(l.rows());
  for (int k = 0; k < d; ++k) {
    const double r2 = (l(k, k) - x(k)) * (l(k, k) + x(k));
    if (!(r2 > pivot_floor)) return false;
    const double r = std::sqrt(r2);
    const double c = r / l(k, k);
    const double s = x(k) / l(k, k);
    l(k, k) = r;
    for (int i = k + 1; i < d; ++i) {
      l(i, k) = (l(i, k) - s * x(i)) / c;
      x(i) = c * x(i) - s * l(i, k);
    }
  }
  return true;
}

}  // namespace detail

// Subset Gram matrix with an incrementally maintained factorization.
// Rank-two exchanges update the factor in O(d^2); a full refactorization
// runs every 64 updates (and after any downdate failure) to bound drift.
class GramState {
 public:
  static constexpr int kRefactorPeriod = 64;

  GramState() = default;

  GramState(const std::vector<Vector>& ground_set, std::vector<int> subset)
      : subset_(std::move(subset)) {
    if (ground_set.empty()) throw std::invalid_argument("GramState: empty ground set");
    dim_ = static_cast<int>(ground_set[0].size());
    member_.assign(ground_set.size(), 0);
    gram_ = Matrix::Zero(dim_, dim_);
    for (int idx : subset_) {
      gram_.noalias() += ground_set[idx] * ground_set[idx].transpose();
      member_[idx] = 1;
    }
    refactorize();
  }

  int dim() const { return dim_; }
  const std::vector<int>& subset() const { return subset_; }
  bool contains(int idx) const { return member_[idx] != 0; }
  const Matrix& gram() const { return gram_; }
  const PsdFactorization& factorization() const { return fact_; }
  double min_eig() const { return min_eig_; }
  int refactor_counter() const { return refactor_counter_; }
  double log_det() const { return fact_.log_det_cache; }

  // Applies S <- S + {in} - {out}; either index may be -1 (no-op slot).
  void apply_exchange(const std::vector<Vector>& ground_set, int out_idx, int in_idx) {
    if (in_idx >= 0) {
      if (member_[in_idx]) throw std::invalid_argument("apply_exchange: added index already in set");
      const Vector& w = ground_set[in_idx];
      gram_.noalias() += w * w.transpose();
      subset_.push_back(in_idx);
      member_[in_idx] = 1;
    }
    if (out_idx >= 0) {
      if (!member_[out_idx]) throw std::invalid_argument("apply_exchange: removed index not in set");
      const Vector& u = ground_set[out_idx];
      gram_.noalias() -= u * u.transpose();
      for (std::size_t p = 0; p < subset_.size(); ++p) {
        if (subset_[p] == out_idx) {
          subset_[p] = subset_.back();
          subset_.pop_back();
          break;
        }
      }
      member_[out_idx] = 0;
    }

    ++refactor_counter_;
    if (refactor_counter_ >= kRefactorPeriod) {
      refactorize();
      return;
    }

    bool incremental_ok = true;
    Matrix l = fact_.lower_triangular_factor;
    if (in_idx >= 0) detail::cholesky_update(l, ground_set[in_idx]);
    if (out_idx >= 0) {
      const double floor = static_cast<double>(dim_) *
                           std::numeric_limits<double>::epsilon() * gram_.trace();
      incremental_ok = detail::cholesky_downdate(l, ground_set[out_idx], floor);
    }
    if (!incremental_ok) {
      refactorize();
      return;
    }
    fact_.lower_triangular_factor = std::move(l);
    fact_.log_det_cache = 2.0 * fact_.lower_triangular_factor.diagonal().array().log().sum();
    fact_.source_hash = matrix_hash(gram_);
    min_eig_ = min_eigenvalue(gram_);
  }

  void refactorize() {
    fact_ = psd_factorize(gram_);
    min_eig_ = min_eigenvalue(gram_);
    refactor_counter_ = 0;
  }

 private:
  int dim_ = 0;
  std::vector<int> subset_;
  std::vector<char> member_;
  Matrix gram_;
  PsdFactorization fact_;
  double min_eig_ = 0.0;
  int refactor_counter_ = 0;
};

}  // namespace optdesign
