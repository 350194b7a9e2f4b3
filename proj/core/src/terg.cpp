#include "dropfleet/terg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace dropfleet::terg {

RelocationGraph::RelocationGraph(int bucket_width_ticks)
    : bucket_width_(bucket_width_ticks) {
  if (bucket_width_ <= 0)
    throw std::invalid_argument("RelocationGraph: bucket width must be > 0");
}

int RelocationGraph::ensure_node(const TergNode& n) {
  auto [it, inserted] = index_.try_emplace(n, static_cast<int>(nodes_.size()));
  if (inserted) {
    nodes_.push_back(n);
    adjacency_.emplace_back();
  }
  return it->second;
}

void RelocationGraph::record_relocation(const TergNode& from, const TergNode& to) {
  if (hex_distance(from.cell, to.cell) > 1)
    throw std::invalid_argument("record_relocation: cells not adjacent");
  if (std::abs(from.bucket - to.bucket) > 1)
    throw std::invalid_argument("record_relocation: buckets not adjacent");
  const int a = ensure_node(from);
  const int b = ensure_node(to);
  adjacency_[static_cast<std::size_t>(a)][b] += 1.0;
  if (a != b) adjacency_[static_cast<std::size_t>(b)][a] += 1.0;
}

void RelocationGraph::record_transition(const sim::Transition& t) {
  if (!t.is_relocation) return;
  for (const sim::Leg& leg : t.legs) {
    const TergNode from{leg.from, bucket_of(leg.start_tick)};
    const TergNode to{leg.to, bucket_of(leg.end_tick)};
    record_relocation(from, to);
  }
}

int RelocationGraph::node_id(const TergNode& n) const {
  auto it = index_.find(n);
  return it == index_.end() ? -1 : it->second;
}

double RelocationGraph::weight(int a, int b) const {
  const auto& row = adjacency_.at(static_cast<std::size_t>(a));
  auto it = row.find(b);
  return it == row.end() ? 0.0 : it->second;
}

double RelocationGraph::degree(int id) const {
  double d = 0;
  for (const auto& [peer, w] : adjacency_.at(static_cast<std::size_t>(id)))
    if (peer != id) d += w;
  return d;
}

const std::map<int, double>& RelocationGraph::neighbors(int id) const {
  return adjacency_.at(static_cast<std::size_t>(id));
}

void RelocationGraph::dump_csv(std::ostream& out) const {
  out << "node_cell_q,node_cell_r,bucket,peer_cell_q,peer_cell_r,peer_bucket,weight\n";
  for (int a = 0; a < node_count(); ++a) {
    for (const auto& [b, w] : adjacency_[static_cast<std::size_t>(a)]) {
      if (b < a) continue;  // each undirected edge once
      const TergNode& na = nodes_[static_cast<std::size_t>(a)];
      const TergNode& nb = nodes_[static_cast<std::size_t>(b)];
      out << na.cell.q << ',' << na.cell.r << ',' << na.bucket << ','
          << nb.cell.q << ',' << nb.cell.r << ',' << nb.bucket << ',' << w
          << '\n';
    }
  }
}

LaplacianView laplacian(const RelocationGraph& g) {
  LaplacianView view;
  view.n = g.node_count();
  view.matrix.assign(static_cast<std::size_t>(view.n) * view.n, 0.0);
  view.degrees.assign(static_cast<std::size_t>(view.n), 0.0);
  for (int i = 0; i < view.n; ++i) {
    for (const auto& [j, w] : g.neighbors(i)) {
      if (j == i) continue;  // self-loops cancel in Deg - A
      view.matrix[static_cast<std::size_t>(i) * view.n + j] = -w;
      view.degrees[static_cast<std::size_t>(i)] += w;
    }
    view.matrix[static_cast<std::size_t>(i) * view.n + i] =
        view.degrees[static_cast<std::size_t>(i)];
  }
  return view;
}

EigenDecomposition jacobi_eigen(const std::vector<double>& symmetric, int n) {
  if (static_cast<std::size_t>(n) * n != symmetric.size())
    throw std::invalid_argument("jacobi_eigen: size mismatch");
  std::vector<double> a = symmetric;
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
  auto V = [&](int i, int j) -> double& { return v[static_cast<std::size_t>(i) * n + j]; };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EigenDecomposition out;
  out.values.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.values[static_cast<std::size_t>(i)] = A(i, i);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return out.values[static_cast<std::size_t>(x)] < out.values[static_cast<std::size_t>(y)];
  });
  std::vector<double> sorted_values(static_cast<std::size_t>(n));
  std::vector<double> sorted_vectors(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    sorted_values[static_cast<std::size_t>(k)] = out.values[static_cast<std::size_t>(order[k])];
    for (int i = 0; i < n; ++i)
      sorted_vectors[static_cast<std::size_t>(i) * n + k] = V(i, order[static_cast<std::size_t>(k)]);
  }
  out.values = std::move(sorted_values);
  out.vectors = std::move(sorted_vectors);
  return out;
}

namespace {

std::vector<int> connected_components(const RelocationGraph& g, int* count) {
  const int n = g.node_count();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int c = 0;
  std::vector<int> stack;
  for (int start = 0; start < n; ++start) {
    if (comp[static_cast<std::size_t>(start)] >= 0) continue;
    stack.push_back(start);
    comp[static_cast<std::size_t>(start)] = c;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto& [w, weight] : g.neighbors(u)) {
        if (weight <= 0 || w == u) continue;
        if (comp[static_cast<std::size_t>(w)] < 0) {
          comp[static_cast<std::size_t>(w)] = c;
          stack.push_back(w);
        }
      }
    }
    ++c;
  }
  *count = c;
  return comp;
}

}  // namespace

double Embedding::norm(int node) const {
  double s = 0;
  for (double x : coords[static_cast<std::size_t>(node)]) s += x * x;
  return std::sqrt(s);
}

Embedding exact_embedding(const RelocationGraph& g, int dim) {
  if (dim < 1) throw std::invalid_argument("exact_embedding: dim must be >= 1");
  const int n = g.node_count();
  if (n == 0) throw std::invalid_argument("exact_embedding: empty graph");
  Embedding e;
  e.dim = dim;
  e.coords.assign(static_cast<std::size_t>(n), std::vector<double>(dim, 0.0));
  e.component = connected_components(g, &e.component_count);
  if (e.component_count == 1 && dim >= n)
    throw std::invalid_argument("exact_embedding: dim too large for graph");
  e.lambda0.assign(static_cast<std::size_t>(e.component_count), 0.0);

  const LaplacianView full = laplacian(g);
  for (int c = 0; c < e.component_count; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (e.component[static_cast<std::size_t>(i)] == c) members.push_back(i);
    const int m = static_cast<int>(members.size());
    if (m == 1) {
      e.undersized_components.push_back(c);
      continue;  // a lone node embeds at the origin
    }
    std::vector<double> sub(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        sub[static_cast<std::size_t>(i) * m + j] = full.at(members[i], members[j]);
    const EigenDecomposition eig = jacobi_eigen(sub, m);
    e.lambda0[static_cast<std::size_t>(c)] = eig.values.front();
    const int usable = std::min(dim, m - 1);
    if (usable < dim) e.undersized_components.push_back(c);
    for (int k = 0; k < usable; ++k) {
      // Column k+1 (skip the constant eigenvector), sign-fixed on its first
      // nonzero coordinate.
      double sign = 0;
      for (int i = 0; i < m && sign == 0; ++i) {
        const double x = eig.vectors[static_cast<std::size_t>(i) * m + (k + 1)];
        if (std::abs(x) > 1e-12) sign = x > 0 ? 1.0 : -1.0;
      }
      if (sign == 0) sign = 1.0;
      for (int i = 0; i < m; ++i)
        e.coords[static_cast<std::size_t>(members[i])][static_cast<std::size_t>(k)] =
            sign * eig.vectors[static_cast<std::size_t>(i) * m + (k + 1)];
    }
  }
  return e;
}

Prop1Report check_prop1(const RelocationGraph& g, const Embedding& e) {
  Prop1Report report;
  const int n = g.node_count();
  if (n == 0) return report;
  int x = 0, y = 0;
  for (int i = 1; i < n; ++i) {
    if (g.degree(i) > g.degree(x)) x = i;
    if (g.degree(i) < g.degree(y)) y = i;
  }
  report.max_degree_node = x;
  report.min_degree_node = y;
  report.max_degree = g.degree(x);
  report.min_degree = g.degree(y);
  report.norm_at_max = e.norm(x);
  report.norm_at_min = e.norm(y);
  if (report.max_degree <= report.min_degree) {
    report.conclusive = false;  // all degrees equal
    return report;
  }
  report.conclusive = true;
  report.norm_ordering_holds = report.norm_at_max < report.norm_at_min;

  // Exchange inequality: with L_yy > L_xx,
  //   L_xx |f(y)|^2 + L_yy |f(x)|^2 <= L_xx |f(x)|^2 + L_yy |f(y)|^2
  // must hold exactly when |f(x)| <= |f(y)|.
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double li = g.degree(i), lj = g.degree(j);
      if (!(lj > li)) continue;
      const double ni2 = e.norm(i) * e.norm(i), nj2 = e.norm(j) * e.norm(j);
      const bool swapped_le = li * nj2 + lj * ni2 <= li * ni2 + lj * nj2 + 1e-12;
      const bool norm_le = e.norm(i) <= e.norm(j) + 1e-12;
      if (swapped_le != norm_le) report.exchange_identity_holds = false;
    }
  }
  return report;
}

void dump_embedding_csv(const RelocationGraph& g, const Embedding& e,
                        std::ostream& out) {
  out << "cell_q,cell_r,bucket,norm";
  for (int k = 0; k < e.dim; ++k) out << ",f" << k;
  out << '\n';
  for (int i = 0; i < g.node_count(); ++i) {
    const TergNode& node = g.nodes()[static_cast<std::size_t>(i)];
    out << node.cell.q << ',' << node.cell.r << ',' << node.bucket << ','
        << e.norm(i);
    for (double x : e.coords[static_cast<std::size_t>(i)]) out << ',' << x;
    out << '\n';
  }
}

}  // namespace dropfleet::terg
