#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dropfleet/hex.hpp"
#include "dropfleet/sim.hpp"

namespace dropfleet::terg {

/// Time-expanded state: a cell paired with a coarse time bucket.
struct TergNode {
  HexCoord cell;
  int bucket = 0;

  friend bool operator==(const TergNode&, const TergNode&) = default;
  friend auto operator<=>(const TergNode&, const TergNode&) = default;
};

/// Undirected multigraph over time-expanded states; edge weights count
/// completed empty relocation steps between adjacent states.
class RelocationGraph {
 public:
  explicit RelocationGraph(int bucket_width_ticks = 60);

  int bucket_width() const { return bucket_width_; }
  int bucket_of(int tick) const { return tick / bucket_width_; }

  /// Register one relocation step. The two states must be spatially
  /// adjacent-or-equal and at most one bucket apart; longer trips are split
  /// per step by the caller.
  void record_relocation(const TergNode& from, const TergNode& to);

  /// Split a completed relocation transition into its steps and record each.
  void record_transition(const sim::Transition& t);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  const std::vector<TergNode>& nodes() const { return nodes_; }
  int node_id(const TergNode& n) const;  // -1 if absent

  double weight(int a, int b) const;
  /// Weighted degree excluding self-loops (the Laplacian diagonal).
  double degree(int id) const;
  const std::map<int, double>& neighbors(int id) const;

  void dump_csv(std::ostream& out) const;

 private:
  int ensure_node(const TergNode& n);

  int bucket_width_;
  std::vector<TergNode> nodes_;
  std::map<TergNode, int> index_;
  std::vector<std::map<int, double>> adjacency_;
};

/// Dense Laplacian L = Deg - A over every node of the graph.
struct LaplacianView {
  int n = 0;
  std::vector<double> matrix;   // row-major n x n
  std::vector<double> degrees;  // weighted degrees (diagonal of L)

  double at(int i, int j) const { return matrix[static_cast<std::size_t>(i) * n + j]; }
};

LaplacianView laplacian(const RelocationGraph& g);

/// Eigendecomposition of a dense symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues ascending; eigenvectors are the matching columns of `vectors`.
struct EigenDecomposition {
  std::vector<double> values;
  std::vector<double> vectors;  // row-major n x n, column k = eigenvector k
};

EigenDecomposition jacobi_eigen(const std::vector<double>& symmetric, int n);

/// Spectral embedding of the graph: per connected component, the eigenvectors
/// of the D+1 smallest Laplacian eigenvalues with the constant one discarded.
/// Each eigenvector is sign-fixed so its first nonzero coordinate is positive.
struct Embedding {
  int dim = 0;
  std::vector<std::vector<double>> coords;  // per node, length dim
  std::vector<int> component;               // per node
  int component_count = 0;
  /// Components with fewer than D+1 nodes get zero-padded coordinates.
  std::vector<int> undersized_components;
  /// Smallest eigenvalue per component (should be ~0).
  std::vector<double> lambda0;

  double norm(int node) const;
};

Embedding exact_embedding(const RelocationGraph& g, int dim);

/// Numeric check of the degree/norm ordering claim and the underlying
/// exchange inequality on a graph plus its embedding.
struct Prop1Report {
  bool conclusive = false;       // false when all weighted degrees are equal
  bool norm_ordering_holds = false;
  bool exchange_identity_holds = true;
  int max_degree_node = -1;
  int min_degree_node = -1;
  double max_degree = 0;
  double min_degree = 0;
  double norm_at_max = 0;
  double norm_at_min = 0;
};

Prop1Report check_prop1(const RelocationGraph& g, const Embedding& e);

void dump_embedding_csv(const RelocationGraph& g, const Embedding& e,
                        std::ostream& out);

}  // namespace dropfleet::terg
