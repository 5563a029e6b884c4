#pragma once

// Network-design applications: choosing a subgraph that minimizes total
// effective resistance (a trace objective over projected incidence vectors)
// or maximizes algebraic connectivity (a minimum-eigenvalue objective).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "optdesign/instance.hpp"
#include "optdesign/linalg.hpp"
#include "optdesign/localsearch.hpp"
#include "optdesign/rounding.hpp"

namespace optdesign {

struct Disconnected : std::runtime_error {
  explicit Disconnected(const std::string& what) : std::runtime_error(what) {}
};

struct GraphEdge {
  int u = 0;
  int v = 0;
  double cost = 1.0;
};

struct Graph {
  int n_vertices = 0;
  std::vector<GraphEdge> edges;
  bool connected = false;

  int m() const { return static_cast<int>(edges.size()); }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

inline bool edges_connect(int n, const std::vector<GraphEdge>& edges,
                          const std::vector<int>* membership) {
  if (n <= 0) return false;
  UnionFind uf(n);
  int components = n;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (membership && !(*membership)[i]) continue;
    if (uf.unite(edges[i].u, edges[i].v)) --components;
  }
  return components == 1;
}

}  // namespace detail

// Validates a simple undirected graph and computes its connectivity flag.
inline Graph make_graph(int n_vertices, std::vector<GraphEdge> edges) {
  if (n_vertices < 1) throw std::invalid_argument("make_graph: need at least one vertex");
  std::set<std::pair<int, int>> seen;
  for (const GraphEdge& e : edges) {
    if (e.u < 0 || e.u >= n_vertices || e.v < 0 || e.v >= n_vertices)
      throw std::invalid_argument("make_graph: endpoint out of range");
    if (e.u == e.v) throw std::invalid_argument("make_graph: self-loop");
    if (!(e.cost >= 0.0)) throw std::invalid_argument("make_graph: negative edge cost");
    if (!seen.insert({std::min(e.u, e.v), std::max(e.u, e.v)}).second)
      throw std::invalid_argument("make_graph: duplicate edge");
  }
  Graph g;
  g.n_vertices = n_vertices;
  g.edges = std::move(edges);
  g.connected = detail::edges_connect(n_vertices, g.edges, nullptr);
  return g;
}

// Text format: first line "graph <n> <m>", then m lines "u v cost", 0-indexed.
inline Graph parse_graph(std::istream& in) {
  std::string line;
  int line_no = 0;
  auto next_line = [&](const char* field) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty()) return;
    }
    throw ParseError(line_no, field, "unexpected end of input");
  };

  next_line("header");
  auto header = textio::split_ws(line);
  if (header.size() != 3 || header[0] != "graph")
    throw ParseError(line_no, "header", "expected 'graph <n> <m>'");
  int n = 0, m = 0;
  if (!textio::parse_int(header[1], n) || !textio::parse_int(header[2], m))
    throw ParseError(line_no, "header", "bad integer in '" + line + "'");
  if (n < 1 || m < 0) throw ParseError(line_no, "header", "sizes out of range");

  std::vector<GraphEdge> edges;
  edges.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    next_line("edge");
    auto toks = textio::split_ws(line);
    if (toks.size() != 3) throw ParseError(line_no, "edge", "expected 'u v cost'");
    GraphEdge e;
    if (!textio::parse_int(toks[0], e.u) || !textio::parse_int(toks[1], e.v))
      throw ParseError(line_no, "edge", "bad endpoint in '" + line + "'");
    if (!textio::parse_double(toks[2], e.cost))
      throw ParseError(line_no, "edge", "bad cost '" + std::string(toks[2]) + "'");
    edges.push_back(e);
  }
  try {
    return make_graph(n, std::move(edges));
  } catch (const std::invalid_argument& ex) {
    throw ParseError(line_no, "edge", ex.what());
  }
}

inline void format_graph(const Graph& g, std::ostream& out) {
  out << "graph " << g.n_vertices << " " << g.m() << "\n";
  for (const GraphEdge& e : g.edges)
    out << e.u << " " << e.v << " " << textio::format_double(e.cost) << "\n";
}

inline Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_graph: cannot open " + path);
  return parse_graph(in);
}

inline void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_graph: cannot open " + path);
  format_graph(g, out);
  if (!out) throw std::runtime_error("save_graph: write failed for " + path);
}

// Orthonormal rows spanning the complement of the all-one direction,
// built as the Householder completion of 1/sqrt(n): deterministic, and the
// reflection fixes nothing else about the coordinate order.
inline Matrix complement_basis(int n) {
  if (n < 1) throw std::invalid_argument("complement_basis: need n >= 1");
  Matrix h = Matrix::Identity(n, n);
  Vector w = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  w(0) -= 1.0;
  const double wn2 = w.squaredNorm();
  if (wn2 > 0.0) h -= (2.0 / wn2) * (w * w.transpose());
  return h.rightCols(n - 1).transpose();
}

// Laplacian of the selected edges (unit edge weight; costs are budget data).
inline Matrix subgraph_laplacian(const Graph& g, const std::vector<int>& membership) {
  if (static_cast<int>(membership.size()) != g.m())
    throw std::invalid_argument("subgraph_laplacian: membership size mismatch");
  Matrix l = Matrix::Zero(g.n_vertices, g.n_vertices);
  for (int i = 0; i < g.m(); ++i) {
    if (!membership[i]) continue;
    const GraphEdge& e = g.edges[i];
    l(e.u, e.u) += 1.0;
    l(e.v, e.v) += 1.0;
    l(e.u, e.v) -= 1.0;
    l(e.v, e.u) -= 1.0;
  }
  return l;
}

inline Graph subgraph_of(const Graph& g, const std::vector<int>& membership) {
  if (static_cast<int>(membership.size()) != g.m())
    throw std::invalid_argument("subgraph_of: membership size mismatch");
  Graph sub;
  sub.n_vertices = g.n_vertices;
  for (int i = 0; i < g.m(); ++i)
    if (membership[i]) sub.edges.push_back(g.edges[i]);
  sub.connected = detail::edges_connect(g.n_vertices, g.edges, &membership);
  return sub;
}

// Incidence vectors projected onto the complement of the all-one vector, so
// the working dimension is n-1 and subset Grams are nonsingular exactly for
// connected edge sets. The cost row carries the edge costs; the budget
// defaults to the total cost and is overwritten by the solvers.
inline DesignInstance edge_design_instance(const Graph& g) {
  if (g.n_vertices < 2)
    throw std::invalid_argument("edge_design_instance: need at least two vertices");
  if (!g.connected) throw Disconnected("edge_design_instance: graph is not connected");
  const int n = g.n_vertices;
  const Matrix q = complement_basis(n);
  DesignInstance inst;
  inst.dim = n - 1;
  inst.vectors.reserve(g.edges.size());
  double total_cost = 0.0;
  for (const GraphEdge& e : g.edges) {
    inst.vectors.push_back(q.col(e.u) - q.col(e.v));
    total_cost += e.cost;
  }
  inst.costs = Matrix(1, g.m());
  for (int i = 0; i < g.m(); ++i) inst.costs(0, i) = g.edges[i].cost;
  inst.budgets = Vector::Constant(1, total_cost);
  inst.label = "graph n=" + std::to_string(n) + " m=" + std::to_string(g.m());
  return inst;
}

// Sum of pairwise effective resistances, n * tr(pinv(L)), evaluated as the
// trace inverse of the projected Gram; +inf when the selection is
// disconnected.
inline double total_effective_resistance(const Graph& g, const std::vector<int>& membership) {
  if (static_cast<int>(membership.size()) != g.m())
    throw std::invalid_argument("total_effective_resistance: membership size mismatch");
  if (!detail::edges_connect(g.n_vertices, g.edges, &membership))
    return std::numeric_limits<double>::infinity();
  const Matrix q = complement_basis(g.n_vertices);
  const Matrix m = q * subgraph_laplacian(g, membership) * q.transpose();
  try {
    return g.n_vertices * trace_inverse(psd_factorize(m));
  } catch (const NotPositiveDefinite&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct ReffResult {
  Graph subgraph;
  std::vector<int> edge_membership;
  double total_reff = std::numeric_limits<double>::infinity();
  bool feasible = false;
  RoundingResult rounding;
};

inline ReffResult solve_total_reff(const Graph& g, double budget, double eps,
                                   std::uint64_t seed = 0) {
  DesignInstance inst = edge_design_instance(g);
  inst.budgets(0) = budget;
  RoundingConfig cfg;
  cfg.objective_kind = ObjectiveKind::A;
  cfg.eps = eps;
  cfg.seed = seed;
  ReffResult out;
  out.rounding = randomized_exchange(inst, cfg);
  out.edge_membership = out.rounding.solution.membership;
  out.subgraph = subgraph_of(g, out.edge_membership);
  out.feasible = out.subgraph.connected;
  out.total_reff = out.feasible ? g.n_vertices * out.rounding.solution.objective_value
                                : std::numeric_limits<double>::infinity();
  return out;
}

struct ConnectivityResult {
  Graph subgraph;
  std::vector<int> edge_membership;
  double lambda2 = 0.0;
  AutoEResult search;
};

// Requires unit edge costs; the budget is the number of edges to keep.
inline ConnectivityResult solve_connectivity(const Graph& g, int budget, double eps,
                                             std::int64_t iter_cap = -1) {
  for (const GraphEdge& e : g.edges)
    if (e.cost != 1.0)
      throw std::invalid_argument("solve_connectivity: edge costs must all be 1");
  const DesignInstance inst = edge_design_instance(g);
  ConnectivityResult out;
  out.search = local_search_e_auto(inst, budget, eps, std::nullopt, iter_cap);
  out.edge_membership = out.search.solution.membership;
  out.subgraph = subgraph_of(g, out.edge_membership);
  out.lambda2 = out.search.solution.objective_value;
  return out;
}

}  // namespace optdesign
