#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "optdesign/linalg.hpp"
#include "optdesign/rng.hpp"

namespace optdesign {

enum class ObjectiveKind { D, A, E };

inline const char* objective_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::D: return "d";
    case ObjectiveKind::A: return "a";
    case ObjectiveKind::E: return "e";
  }
  return "?";
}

inline ObjectiveKind objective_from_name(std::string_view s) {
  if (s == "d" || s == "D") return ObjectiveKind::D;
  if (s == "a" || s == "A") return ObjectiveKind::A;
  if (s == "e" || s == "E") return ObjectiveKind::E;
  throw std::invalid_argument("unknown objective: " + std::string(s));
}

struct FlaggedDegenerate : std::runtime_error {
  explicit FlaggedDegenerate(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  ParseError(int line, const std::string& field, const std::string& detail)
      : std::runtime_error("parse error at line " + std::to_string(line) + " (" + field +
                           "): " + detail),
        line_number(line),
        field_name(field) {}
  int line_number;
  std::string field_name;
};

// Selection problem data: n vectors in R^d, m cost rows with budgets.
// m = 0 means no explicit constraint rows; a cardinality budget can be
// materialized as a single all-ones row via with_cardinality_budget.
struct DesignInstance {
  int dim = 0;
  std::vector<Vector> vectors;
  Matrix costs;    // m x n
  Vector budgets;  // m
  std::string label;

  int n() const { return static_cast<int>(vectors.size()); }
  int m() const { return static_cast<int>(budgets.size()); }
};

struct IntegralSolution {
  std::vector<int> membership;  // z in {0,1}^n
  ObjectiveKind objective_kind = ObjectiveKind::D;
  double objective_value = 0.0;
  Vector costs_used;  // m entries, <c_j, z>
};

namespace textio {

// Shortest decimal form that parses back to the same bits.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace textio

inline Matrix full_gram(const DesignInstance& inst) {
  Matrix z = Matrix::Zero(inst.dim, inst.dim);
  for (const Vector& v : inst.vectors) z.noalias() += v * v.transpose();
  return z;
}

inline Matrix gram_of_subset(const DesignInstance& inst, const std::vector<int>& subset) {
  Matrix z = Matrix::Zero(inst.dim, inst.dim);
  for (int i : subset) z.noalias() += inst.vectors[i] * inst.vectors[i].transpose();
  return z;
}

inline std::vector<int> membership_from_subset(int n, const std::vector<int>& subset) {
  std::vector<int> z(n, 0);
  for (int i : subset) z[i] = 1;
  return z;
}

inline std::vector<int> subset_from_membership(const std::vector<int>& z) {
  std::vector<int> s;
  for (int i = 0; i < static_cast<int>(z.size()); ++i)
    if (z[i]) s.push_back(i);
  return s;
}

// Throws FlaggedDegenerate when the ground set cannot support a full-rank
// design, and std::invalid_argument on malformed cost data.
inline void validate_instance(const DesignInstance& inst) {
  if (inst.dim < 1) throw std::invalid_argument("instance: dim must be >= 1");
  if (inst.n() < inst.dim) {
    throw FlaggedDegenerate("instance '" + inst.label + "': n=" + std::to_string(inst.n()) +
                            " < d=" + std::to_string(inst.dim));
  }
  for (const Vector& v : inst.vectors) {
    if (v.size() != inst.dim) throw std::invalid_argument("instance: vector dimension mismatch");
  }
  if (inst.costs.rows() != inst.m() ||
      (inst.m() > 0 && inst.costs.cols() != inst.n())) {
    throw std::invalid_argument("instance: cost matrix shape mismatch");
  }
  if (inst.m() > 0 && inst.costs.minCoeff() < 0.0) {
    throw std::invalid_argument("instance: negative cost entry");
  }
  try {
    psd_factorize(full_gram(inst));
  } catch (const NotPositiveDefinite&) {
    throw FlaggedDegenerate("instance '" + inst.label + "': vectors do not span R^d");
  }
}

inline DesignInstance with_cardinality_budget(DesignInstance inst, double b) {
  const int m = inst.m(), n = inst.n();
  Matrix costs(m + 1, n);
  if (m > 0) costs.topRows(m) = inst.costs;
  costs.row(m).setOnes();
  Vector budgets(m + 1);
  if (m > 0) budgets.head(m) = inst.budgets;
  budgets(m) = b;
  inst.costs = std::move(costs);
  inst.budgets = std::move(budgets);
  return inst;
}

// From-scratch objective of a subset: raw determinant (D), trace of the
// inverse (A, +inf when singular), or the minimum eigenvalue (E).
inline double evaluate_objective(const DesignInstance& inst, const std::vector<int>& subset,
                                 ObjectiveKind kind) {
  Matrix z = gram_of_subset(inst, subset);
  switch (kind) {
    case ObjectiveKind::D:
      try {
        return std::exp(psd_factorize(z).log_det_cache);
      } catch (const NotPositiveDefinite&) {
        return 0.0;
      }
    case ObjectiveKind::A:
      try {
        return trace_inverse(psd_factorize(z));
      } catch (const NotPositiveDefinite&) {
        return std::numeric_limits<double>::infinity();
      }
    case ObjectiveKind::E:
      return min_eigenvalue(z);
  }
  return 0.0;
}

inline IntegralSolution make_solution(const DesignInstance& inst, const std::vector<int>& subset,
                                      ObjectiveKind kind) {
  IntegralSolution sol;
  sol.membership = membership_from_subset(inst.n(), subset);
  sol.objective_kind = kind;
  sol.objective_value = evaluate_objective(inst, subset, kind);
  sol.costs_used = Vector::Zero(inst.m());
  for (int j = 0; j < inst.m(); ++j) {
    double used = 0.0;
    for (int i = 0; i < inst.n(); ++i)
      if (sol.membership[i]) used += inst.costs(j, i);
    sol.costs_used(j) = used;
  }
  return sol;
}

inline DesignInstance gen_gaussian(int d, int n, std::uint64_t seed) {
  if (d < 1 || n < d) throw std::invalid_argument("gen_gaussian: need n >= d >= 1");
  DesignInstance inst;
  inst.dim = d;
  inst.vectors.reserve(n);
  Rng rng = Rng::from_seed(seed);
  for (int i = 0; i < n; ++i) {
    Vector v(d);
    for (int j = 0; j < d; ++j) v(j) = rng.next_gaussian();
    inst.vectors.push_back(std::move(v));
  }
  inst.costs = Matrix(0, n);
  inst.budgets = Vector(0);
  inst.label = "gaussian d=" + std::to_string(d) + " n=" + std::to_string(n) +
               " seed=" + std::to_string(seed);
  return inst;
}

// Adversarial fixtures. Each carries its start set, its designated optimum,
// and the behavior the test suite replays against the exchange machinery.
struct TrapFixture {
  enum class Kind {
    ExchangeCapped,         // every single exchange from the start has min_eig <= cap
    ExchangeStrictDecrease, // every single exchange strictly lowers min_eig
    LocalSearchStall        // smoothed local search makes no improving exchange
  };

  DesignInstance instance;
  std::vector<int> initial_subset;
  std::vector<int> optimal_subset;
  Kind kind = Kind::ExchangeCapped;
  double start_min_eig = 0.0;
  double optimum_min_eig = 0.0;
  double cap = 0.0;                     // ExchangeCapped
  double first_exchange_min_eig = 0.0;  // ExchangeStrictDecrease
  std::string note;
};

// Start at a set whose Gram is the identity; no single exchange can push the
// minimum eigenvalue above 1, yet the ground set contains a perfectly
// conditioned solution N*e_1..N*e_d.
inline TrapFixture fixture_e_identity_trap(int d, int b, double big_n) {
  if (d < 3) throw std::invalid_argument("fixture_e_identity_trap: need d >= 3");
  if (b < d) throw std::invalid_argument("fixture_e_identity_trap: need b >= d");
  TrapFixture fx;
  DesignInstance& inst = fx.instance;
  inst.dim = d;
  if (b == d) {
    for (int i = 0; i < d; ++i) inst.vectors.push_back(Vector::Unit(d, i));
  } else {
    // b rows with orthonormal columns, so the start Gram is the identity.
    Rng rng = Rng::from_seed(0x1de27);
    Matrix g(b, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < b; ++i) g(i, j) = rng.next_gaussian();
    Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(b, d);
    for (int i = 0; i < b; ++i) inst.vectors.push_back(q.row(i).transpose());
  }
  for (int i = 0; i < d; ++i) inst.vectors.push_back(big_n * Vector::Unit(d, i));
  const int n = b + d;
  inst.costs = Matrix::Ones(1, n);
  inst.budgets = Vector::Constant(1, static_cast<double>(b));
  inst.label = "fixture-e1 d=" + std::to_string(d) + " b=" + std::to_string(b) +
               " N=" + textio::format_double(big_n);
  for (int i = 0; i < b; ++i) fx.initial_subset.push_back(i);
  for (int i = 0; i < d; ++i) fx.optimal_subset.push_back(b + i);
  fx.kind = TrapFixture::Kind::ExchangeCapped;
  fx.cap = 1.0;
  fx.start_min_eig = 1.0;
  fx.optimum_min_eig = big_n * big_n;
  fx.note = "identity start; every single exchange keeps min_eig <= 1";
  return fx;
}

// b/2 copies each of e_1, e_2, sqrt(N/2)(1,1), sqrt(N/2)(1,-1); from the
// axis-only start every exchange strictly decreases the minimum eigenvalue
// although the rotated pairs reach bN/2.
inline TrapFixture fixture_e_decreasing(int b, double big_n) {
  if (b < 2 || b % 2 != 0) throw std::invalid_argument("fixture_e_decreasing: need even b >= 2");
  if (!(big_n > 1.0)) throw std::invalid_argument("fixture_e_decreasing: need N > 1");
  TrapFixture fx;
  DesignInstance& inst = fx.instance;
  inst.dim = 2;
  const double w_scale = std::sqrt(big_n / 2.0);
  Vector v1(2), v2(2), w1(2), w2(2);
  v1 << 1, 0;
  v2 << 0, 1;
  w1 << w_scale, w_scale;
  w2 << w_scale, -w_scale;
  const int half = b / 2;
  for (int c = 0; c < half; ++c) inst.vectors.push_back(v1);
  for (int c = 0; c < half; ++c) inst.vectors.push_back(v2);
  for (int c = 0; c < half; ++c) inst.vectors.push_back(w1);
  for (int c = 0; c < half; ++c) inst.vectors.push_back(w2);
  const int n = 2 * b;
  inst.costs = Matrix::Ones(1, n);
  inst.budgets = Vector::Constant(1, static_cast<double>(b));
  inst.label = "fixture-e2 b=" + std::to_string(b) + " N=" + textio::format_double(big_n);
  for (int i = 0; i < b; ++i) fx.initial_subset.push_back(i);
  for (int i = 0; i < b; ++i) fx.optimal_subset.push_back(b + i);
  fx.kind = TrapFixture::Kind::ExchangeStrictDecrease;
  fx.start_min_eig = b / 2.0;
  fx.optimum_min_eig = b * big_n / 2.0;
  fx.first_exchange_min_eig = (b + big_n - 1.0 - std::sqrt(big_n * big_n + 1.0)) / 2.0;
  fx.note = "axis start; every exchange strictly decreases min_eig";
  return fx;
}

// M copies each of (N, 1/N), (N, -1/N), (N^4, 1)/sqrt(b), (N^4, -1)/sqrt(b).
// The v-only start is badly conditioned but regret-smoothed local search with
// target 1 finds no improving exchange.
inline TrapFixture fixture_a_smoothed_trap(int b, double big_n, int m_copies) {
  if (b < 3) throw std::invalid_argument("fixture_a_smoothed_trap: need b >= 3");
  if (m_copies < b) throw std::invalid_argument("fixture_a_smoothed_trap: need M >= b");
  TrapFixture fx;
  DesignInstance& inst = fx.instance;
  inst.dim = 2;
  const double root_b = std::sqrt(static_cast<double>(b));
  Vector v1(2), v2(2), w1(2), w2(2);
  v1 << big_n, 1.0 / big_n;
  v2 << big_n, -1.0 / big_n;
  w1 << std::pow(big_n, 4) / root_b, 1.0 / root_b;
  w2 << std::pow(big_n, 4) / root_b, -1.0 / root_b;
  for (int c = 0; c < m_copies; ++c) inst.vectors.push_back(v1);
  for (int c = 0; c < m_copies; ++c) inst.vectors.push_back(v2);
  for (int c = 0; c < m_copies; ++c) inst.vectors.push_back(w1);
  for (int c = 0; c < m_copies; ++c) inst.vectors.push_back(w2);
  const int n = 4 * m_copies;
  inst.costs = Matrix::Ones(1, n);
  inst.budgets = Vector::Constant(1, static_cast<double>(b));
  inst.label = "fixture-a3 b=" + std::to_string(b) + " N=" + textio::format_double(big_n) +
               " M=" + std::to_string(m_copies);
  const int v1_take = (b + 1) / 2, v2_take = b / 2;
  for (int i = 0; i < v1_take; ++i) fx.initial_subset.push_back(i);
  for (int i = 0; i < v2_take; ++i) fx.initial_subset.push_back(m_copies + i);
  const int w1_take = (b + 1) / 2, w2_take = b / 2;
  for (int i = 0; i < w1_take; ++i) fx.optimal_subset.push_back(2 * m_copies + i);
  for (int i = 0; i < w2_take; ++i) fx.optimal_subset.push_back(3 * m_copies + i);
  fx.kind = TrapFixture::Kind::LocalSearchStall;
  fx.start_min_eig = min_eigenvalue(gram_of_subset(inst, fx.initial_subset));
  fx.optimum_min_eig = min_eigenvalue(gram_of_subset(inst, fx.optimal_subset));
  fx.note = "ill-conditioned start; smoothed local search with target 1 stalls";
  return fx;
}

// Text format:
//   optdesign v1 d=<d> n=<n> m=<m>
//   <n lines of d reals>
//   m lines: budget=<b_j> then n reals
//   optional: label=<text>
inline void save_instance(const DesignInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_instance: cannot open " + path);
  out << "optdesign v1 d=" << inst.dim << " n=" << inst.n() << " m=" << inst.m() << "\n";
  for (const Vector& v : inst.vectors) {
    for (int j = 0; j < inst.dim; ++j) {
      if (j) out << ' ';
      out << textio::format_double(v(j));
    }
    out << "\n";
  }
  for (int j = 0; j < inst.m(); ++j) {
    out << "budget=" << textio::format_double(inst.budgets(j));
    for (int i = 0; i < inst.n(); ++i) out << ' ' << textio::format_double(inst.costs(j, i));
    out << "\n";
  }
  if (!inst.label.empty()) out << "label=" << inst.label << "\n";
  if (!out) throw std::runtime_error("save_instance: write failed for " + path);
}

inline DesignInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_instance: cannot open " + path);
  std::string line;
  int line_no = 0;

  auto next_line = [&](const char* field) {
    while (std::getline(in, line)) {
      ++line_no;
      return true;
    }
    throw ParseError(line_no, field, "unexpected end of file");
  };

  next_line("header");
  auto header = textio::split_ws(line);
  if (header.size() != 5 || header[0] != "optdesign" || header[1] != "v1")
    throw ParseError(line_no, "header", "expected 'optdesign v1 d=<d> n=<n> m=<m>'");
  auto keyed_int = [&](std::string_view tok, std::string_view key) {
    if (tok.substr(0, key.size()) != key)
      throw ParseError(line_no, "header", "expected '" + std::string(key) + "<int>'");
    int v = 0;
    if (!textio::parse_int(tok.substr(key.size()), v))
      throw ParseError(line_no, "header", "bad integer in '" + std::string(tok) + "'");
    return v;
  };
  DesignInstance inst;
  inst.dim = keyed_int(header[2], "d=");
  const int n = keyed_int(header[3], "n=");
  const int m = keyed_int(header[4], "m=");
  if (inst.dim < 1 || n < 0 || m < 0) throw ParseError(line_no, "header", "sizes out of range");

  inst.vectors.reserve(n);
  for (int i = 0; i < n; ++i) {
    next_line("vector");
    auto toks = textio::split_ws(line);
    if (static_cast<int>(toks.size()) != inst.dim) {
      throw ParseError(line_no, "vector",
                       "expected " + std::to_string(inst.dim) + " reals, got " +
                           std::to_string(toks.size()));
    }
    Vector v(inst.dim);
    for (int j = 0; j < inst.dim; ++j) {
      if (!textio::parse_double(toks[j], v(j)))
        throw ParseError(line_no, "vector", "bad real '" + std::string(toks[j]) + "'");
    }
    inst.vectors.push_back(std::move(v));
  }

  inst.costs = Matrix(m, n);
  inst.budgets = Vector(m);
  for (int j = 0; j < m; ++j) {
    next_line("budgets");
    auto toks = textio::split_ws(line);
    if (toks.empty() || toks[0].substr(0, 7) != "budget=")
      throw ParseError(line_no, "budgets", "expected 'budget=<b>'");
    if (!textio::parse_double(toks[0].substr(7), inst.budgets(j)))
      throw ParseError(line_no, "budgets", "bad budget '" + std::string(toks[0]) + "'");
    if (static_cast<int>(toks.size()) != n + 1) {
      throw ParseError(line_no, "budgets",
                       "expected " + std::to_string(n) + " cost entries, got " +
                           std::to_string(toks.size() - 1));
    }
    for (int i = 0; i < n; ++i) {
      if (!textio::parse_double(toks[i + 1], inst.costs(j, i)))
        throw ParseError(line_no, "budgets", "bad cost '" + std::string(toks[i + 1]) + "'");
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("label=", 0) == 0) {
      inst.label = line.substr(6);
    } else {
      throw ParseError(line_no, "trailer", "unexpected content '" + line + "'");
    }
  }
  return inst;
}

}  // namespace optdesign
