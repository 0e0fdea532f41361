#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rare {

// Undirected node-attributed graph. Immutable after construction: all
// mutation happens in build() / the generators, which validate the edge
// list and derive the CSR neighbor index.
class SparseGraph {
 public:
  SparseGraph() = default;

  // edges: undirected pairs, any orientation; duplicates/self-loops rejected.
  // attrs: row-major num_nodes x attr_dim. labels: empty or one per node.
  static SparseGraph build(int num_nodes, int attr_dim,
                           std::vector<std::pair<int, int>> edges,
                           std::vector<double> attrs,
                           std::vector<int> labels = {});

  int num_nodes() const { return num_nodes_; }
  int attr_dim() const { return attr_dim_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<double>& attrs() const { return attrs_; }
  double attr(int node, int j) const { return attrs_[static_cast<size_t>(node) * attr_dim_ + j]; }
  std::span<const double> attr_row(int node) const {
    return {attrs_.data() + static_cast<size_t>(node) * attr_dim_, static_cast<size_t>(attr_dim_)};
  }

  bool has_labels() const { return !labels_.empty(); }
  const std::vector<int>& labels() const { return labels_; }
  int num_classes() const;

  std::span<const int> neighbors(int node) const {
    return {nbr_.data() + nbr_offsets_[node],
            static_cast<size_t>(nbr_offsets_[node + 1] - nbr_offsets_[node])};
  }
  int degree(int node) const { return nbr_offsets_[node + 1] - nbr_offsets_[node]; }

  // Copy with different attributes, same structure/labels.
  SparseGraph with_attrs(std::vector<double> attrs) const;

  bool operator==(const SparseGraph& other) const;

 private:
  int num_nodes_ = 0;
  int attr_dim_ = 0;
  std::vector<std::pair<int, int>> edges_;  // src < dst, sorted, unique
  std::vector<double> attrs_;               // row-major
  std::vector<int> labels_;                 // empty if absent
  std::vector<int> nbr_offsets_;            // size num_nodes + 1
  std::vector<int> nbr_;                    // sorted per node, symmetric
};

// Symmetric CSR matrix; the normalized adjacency and the plain 0/1
// neighbor matrix both use this layout.
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // size rows + 1
  std::vector<int> col;
  std::vector<double> val;
  int nnz() const { return static_cast<int>(col.size()); }
};

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. Row
// pattern is the sorted neighbor list plus the diagonal; isolated nodes
// get self-loop weight 1.
struct NormalizedAdjacency : CsrMatrix {};

NormalizedAdjacency normalize_adjacency(const SparseGraph& g);

// Plain adjacency pattern (no self-loops), all values 1.
CsrMatrix neighbor_csr(const SparseGraph& g);

enum class KnnMetric { euclidean };

// Union-symmetrized KNN graph: edge (i,j) iff j is among i's k nearest
// or vice versa. Ties broken by lower point index. attrs = points.
SparseGraph knn_graph(const std::vector<double>& points, int num_points, int dim,
                      int k, KnnMetric metric = KnnMetric::euclidean);

// Stochastic block model with Gaussian node attributes. Block b has mean
// b * feature_shift * sign_j on coordinate j, where sign_j alternates
// +1/-1, so block means are separated by feature_shift * sqrt(dim) and
// within-row permutations do not preserve the block signature. Labels
// are block indices. Deterministic per seed.
SparseGraph generate_sbm(const std::vector<int>& block_sizes, double p_in,
                         double p_out, int feature_dim, double feature_shift,
                         uint64_t seed);

// Directory layout: attrs.csv (one row per node), edges.tsv (src<TAB>dst,
// src < dst), labels.txt (optional, one integer per line).
SparseGraph load_graph(const std::string& dir);
void save_graph(const SparseGraph& g, const std::string& dir);

// Collection of graphs sharing an attribute dimension, with optional
// per-graph labels (for graph classification).
struct GraphDataset {
  std::vector<SparseGraph> graphs;
  std::vector<int> labels;  // empty or one per graph
  int attr_dim = 0;
};

// Dataset directory: numbered subdirectories g0000/, g0001/, ... each a
// graph directory, plus optional graph_labels.txt.
GraphDataset load_dataset(const std::string& dir);
void save_dataset(const GraphDataset& ds, const std::string& dir);

// Disjoint union of graphs; node i of graphs[k] maps to offsets[k] + i.
SparseGraph block_diagonal(std::span<const SparseGraph> graphs,
                           std::vector<int>* offsets = nullptr);

}  // namespace rare
