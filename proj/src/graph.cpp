#include "rare/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "rare/errors.hpp"

namespace fs = std::filesystem;

namespace rare {

SparseGraph SparseGraph::build(int num_nodes, int attr_dim,
                               std::vector<std::pair<int, int>> edges,
                               std::vector<double> attrs,
                               std::vector<int> labels) {
  if (num_nodes < 0 || attr_dim < 0)
    throw config_error("SparseGraph: negative num_nodes or attr_dim");
  if (attrs.size() != static_cast<size_t>(num_nodes) * attr_dim)
    throw dim_error("SparseGraph: attrs size " + std::to_string(attrs.size()) +
                    " != num_nodes*attr_dim " +
                    std::to_string(static_cast<size_t>(num_nodes) * attr_dim));
  if (!labels.empty() && labels.size() != static_cast<size_t>(num_nodes))
    throw dim_error("SparseGraph: labels size != num_nodes");

  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
      throw config_error("SparseGraph: edge endpoint out of range: (" +
                         std::to_string(a) + "," + std::to_string(b) + ")");
    if (a == b)
      throw config_error("SparseGraph: self-loop at node " + std::to_string(a));
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw config_error("SparseGraph: duplicate edge");

  SparseGraph g;
  g.num_nodes_ = num_nodes;
  g.attr_dim_ = attr_dim;
  g.edges_ = std::move(edges);
  g.attrs_ = std::move(attrs);
  g.labels_ = std::move(labels);

  std::vector<int> deg(num_nodes, 0);
  for (const auto& [a, b] : g.edges_) {
    ++deg[a];
    ++deg[b];
  }
  g.nbr_offsets_.assign(num_nodes + 1, 0);
  for (int i = 0; i < num_nodes; ++i) g.nbr_offsets_[i + 1] = g.nbr_offsets_[i] + deg[i];
  g.nbr_.resize(g.nbr_offsets_[num_nodes]);
  std::vector<int> cursor(g.nbr_offsets_.begin(), g.nbr_offsets_.end() - 1);
  for (const auto& [a, b] : g.edges_) {
    g.nbr_[cursor[a]++] = b;
    g.nbr_[cursor[b]++] = a;
  }
  for (int i = 0; i < num_nodes; ++i)
    std::sort(g.nbr_.begin() + g.nbr_offsets_[i], g.nbr_.begin() + g.nbr_offsets_[i + 1]);
  return g;
}

int SparseGraph::num_classes() const {
  int c = 0;
  for (int l : labels_) c = std::max(c, l + 1);
  return c;
}

SparseGraph SparseGraph::with_attrs(std::vector<double> attrs) const {
  if (attrs.size() != attrs_.size())
    throw dim_error("with_attrs: attribute size mismatch");
  SparseGraph g = *this;
  g.attrs_ = std::move(attrs);
  return g;
}

bool SparseGraph::operator==(const SparseGraph& other) const {
  return num_nodes_ == other.num_nodes_ && attr_dim_ == other.attr_dim_ &&
         edges_ == other.edges_ && attrs_ == other.attrs_ && labels_ == other.labels_;
}

NormalizedAdjacency normalize_adjacency(const SparseGraph& g) {
  const int n = g.num_nodes();
  NormalizedAdjacency a;
  a.rows = a.cols = n;
  a.row_ptr.assign(n + 1, 0);
  std::vector<double> inv_sqrt(n);
  for (int i = 0; i < n; ++i) {
    a.row_ptr[i + 1] = a.row_ptr[i] + g.degree(i) + 1;
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  }
  a.col.resize(a.row_ptr[n]);
  a.val.resize(a.row_ptr[n]);
  for (int i = 0; i < n; ++i) {
    int p = a.row_ptr[i];
    bool diag_placed = false;
    for (int j : g.neighbors(i)) {
      if (!diag_placed && i < j) {
        a.col[p] = i;
        a.val[p] = inv_sqrt[i] * inv_sqrt[i];
        diag_placed = true;
        ++p;
      }
      a.col[p] = j;
      a.val[p] = inv_sqrt[i] * inv_sqrt[j];
      ++p;
    }
    if (!diag_placed) {
      a.col[p] = i;
      a.val[p] = inv_sqrt[i] * inv_sqrt[i];
    }
  }
  return a;
}

CsrMatrix neighbor_csr(const SparseGraph& g) {
  const int n = g.num_nodes();
  CsrMatrix a;
  a.rows = a.cols = n;
  a.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) a.row_ptr[i + 1] = a.row_ptr[i] + g.degree(i);
  a.col.resize(a.row_ptr[n]);
  a.val.assign(a.row_ptr[n], 1.0);
  for (int i = 0; i < n; ++i) {
    int p = a.row_ptr[i];
    for (int j : g.neighbors(i)) a.col[p++] = j;
  }
  return a;
}

SparseGraph knn_graph(const std::vector<double>& points, int num_points, int dim,
                      int k, KnnMetric) {
  if (points.size() != static_cast<size_t>(num_points) * dim)
    throw dim_error("knn_graph: points size != num_points*dim");
  if (k < 1 || k >= num_points)
    throw config_error("knn_graph: k must satisfy 1 <= k < num_points, got k=" +
                       std::to_string(k) + " with " + std::to_string(num_points) +
                       " points");

  std::vector<std::pair<int, int>> edges;
  std::vector<std::pair<double, int>> dist(num_points);
  for (int i = 0; i < num_points; ++i) {
    int m = 0;
    for (int j = 0; j < num_points; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int c = 0; c < dim; ++c) {
        double diff = points[static_cast<size_t>(i) * dim + c] -
                      points[static_cast<size_t>(j) * dim + c];
        d2 += diff * diff;
      }
      dist[m++] = {d2, j};
    }
    // ties broken by lower index: pairs compare (distance, index)
    std::partial_sort(dist.begin(), dist.begin() + k, dist.begin() + m);
    for (int t = 0; t < k; ++t) {
      int j = dist[t].second;
      edges.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return SparseGraph::build(num_points, dim, std::move(edges), points);
}

SparseGraph generate_sbm(const std::vector<int>& block_sizes, double p_in,
                         double p_out, int feature_dim, double feature_shift,
                         uint64_t seed) {
  if (block_sizes.empty()) throw config_error("generate_sbm: block_sizes empty");
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
    throw config_error("generate_sbm: need 0 <= p_out <= p_in <= 1");
  for (int s : block_sizes)
    if (s <= 0) throw config_error("generate_sbm: block size must be positive");

  int n = 0;
  std::vector<int> block;
  for (size_t b = 0; b < block_sizes.size(); ++b) {
    n += block_sizes[b];
    block.insert(block.end(), block_sizes[b], static_cast<int>(b));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double p = block[i] == block[j] ? p_in : p_out;
      if (unif(rng) < p) edges.emplace_back(i, j);
    }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> attrs(static_cast<size_t>(n) * feature_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < feature_dim; ++j) {
      double sign = (j % 2 == 0) ? 1.0 : -1.0;
      attrs[static_cast<size_t>(i) * feature_dim + j] =
          normal(rng) + block[i] * feature_shift * sign;
    }

  return SparseGraph::build(n, feature_dim, std::move(edges), std::move(attrs),
                            std::move(block));
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail_at(const std::string& file, int line, const std::string& what) {
  throw parse_error(file + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void save_graph(const SparseGraph& g, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/attrs.csv");
    for (int i = 0; i < g.num_nodes(); ++i) {
      for (int j = 0; j < g.attr_dim(); ++j) {
        if (j) out << ',';
        out << fmt_double(g.attr(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir + "/edges.tsv");
    for (const auto& [a, b] : g.edges()) out << a << '\t' << b << '\n';
  }
  if (g.has_labels()) {
    std::ofstream out(dir + "/labels.txt");
    for (int l : g.labels()) out << l << '\n';
  }
}

SparseGraph load_graph(const std::string& dir) {
  const std::string attrs_path = dir + "/attrs.csv";
  const std::string edges_path = dir + "/edges.tsv";
  const std::string labels_path = dir + "/labels.txt";

  std::ifstream attrs_in(attrs_path);
  if (!attrs_in) throw parse_error(attrs_path + ": cannot open");

  std::vector<double> attrs;
  int attr_dim = -1;
  int num_nodes = 0;
  std::string line;
  for (int lineno = 1; std::getline(attrs_in, line); ++lineno) {
    if (line.empty() && attrs_in.eof()) break;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      size_t pos = 0;
      double v;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        fail_at(attrs_path, lineno, "not a number: '" + cell + "'");
      }
      if (pos != cell.size()) fail_at(attrs_path, lineno, "trailing garbage: '" + cell + "'");
      attrs.push_back(v);
      ++cols;
    }
    if (cols == 0) fail_at(attrs_path, lineno, "empty row");
    if (attr_dim == -1)
      attr_dim = cols;
    else if (cols != attr_dim)
      fail_at(attrs_path, lineno,
              "expected " + std::to_string(attr_dim) + " columns, got " + std::to_string(cols));
    ++num_nodes;
  }
  if (attr_dim == -1) attr_dim = 0;

  std::vector<std::pair<int, int>> edges;
  std::ifstream edges_in(edges_path);
  if (!edges_in) throw parse_error(edges_path + ": cannot open");
  for (int lineno = 1; std::getline(edges_in, line); ++lineno) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    long a, b;
    char tab;
    if (!(ss >> a) || !ss.get(tab) || tab != '\t' || !(ss >> b))
      fail_at(edges_path, lineno, "expected 'src<TAB>dst'");
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
      fail_at(edges_path, lineno,
              "node index out of range [0," + std::to_string(num_nodes) + ")");
    if (a >= b) fail_at(edges_path, lineno, "edges must satisfy src < dst");
    edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
  }

  std::vector<int> labels;
  std::ifstream labels_in(labels_path);
  if (labels_in) {
    for (int lineno = 1; std::getline(labels_in, line); ++lineno) {
      if (line.empty()) continue;
      try {
        size_t pos = 0;
        labels.push_back(std::stoi(line, &pos));
      } catch (const std::exception&) {
        fail_at(labels_path, lineno, "not an integer: '" + line + "'");
      }
    }
    if (labels.size() != static_cast<size_t>(num_nodes))
      throw parse_error(labels_path + ": " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(num_nodes) + " nodes");
  }

  try {
    return SparseGraph::build(num_nodes, attr_dim, std::move(edges), std::move(attrs),
                              std::move(labels));
  } catch (const std::exception& e) {
    throw parse_error(dir + ": " + e.what());
  }
}

void save_dataset(const GraphDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < ds.graphs.size(); ++i) {
    std::snprintf(name, sizeof(name), "g%04zu", i);
    save_graph(ds.graphs[i], dir + "/" + name);
  }
  if (!ds.labels.empty()) {
    std::ofstream out(dir + "/graph_labels.txt");
    for (int l : ds.labels) out << l << '\n';
  }
}

GraphDataset load_dataset(const std::string& dir) {
  GraphDataset ds;
  std::vector<std::string> subdirs;
  if (!fs::is_directory(dir)) throw parse_error(dir + ": not a directory");
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) subdirs.push_back(entry.path().string());
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& sub : subdirs) ds.graphs.push_back(load_graph(sub));
  if (ds.graphs.empty()) throw parse_error(dir + ": no graph subdirectories");
  ds.attr_dim = ds.graphs[0].attr_dim();
  for (const auto& g : ds.graphs)
    if (g.attr_dim() != ds.attr_dim)
      throw parse_error(dir + ": graphs disagree on attribute dimension");

  std::ifstream labels_in(dir + "/graph_labels.txt");
  if (labels_in) {
    std::string line;
    for (int lineno = 1; std::getline(labels_in, line); ++lineno) {
      if (line.empty()) continue;
      try {
        ds.labels.push_back(std::stoi(line));
      } catch (const std::exception&) {
        fail_at(dir + "/graph_labels.txt", lineno, "not an integer: '" + line + "'");
      }
    }
    if (ds.labels.size() != ds.graphs.size())
      throw parse_error(dir + "/graph_labels.txt: label count != graph count");
  }
  return ds;
}

SparseGraph block_diagonal(std::span<const SparseGraph> graphs,
                           std::vector<int>* offsets) {
  if (graphs.empty()) throw config_error("block_diagonal: no graphs");
  const int dim = graphs[0].attr_dim();
  int n = 0;
  std::vector<int> off;
  for (const auto& g : graphs) {
    if (g.attr_dim() != dim) throw dim_error("block_diagonal: attribute dimension mismatch");
    off.push_back(n);
    n += g.num_nodes();
  }
  std::vector<std::pair<int, int>> edges;
  std::vector<double> attrs;
  attrs.reserve(static_cast<size_t>(n) * dim);
  for (size_t k = 0; k < graphs.size(); ++k) {
    for (const auto& [a, b] : graphs[k].edges())
      edges.emplace_back(a + off[k], b + off[k]);
    attrs.insert(attrs.end(), graphs[k].attrs().begin(), graphs[k].attrs().end());
  }
  if (offsets) *offsets = off;
  return SparseGraph::build(n, dim, std::move(edges), std::move(attrs));
}

}  // namespace rare
