#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rare/errors.hpp"
#include "rare/graph.hpp"

namespace rare {

// Handle into a Tape. Scalars are 1x1.
struct Var {
  int id = -1;
};

// Reverse-mode tape over dense row-major matrices. One training step owns
// one tape; recording order is the topological order, so backward() walks
// the op list in reverse. Broadcasting is limited to row-vector-over-matrix
// (add_rowvec, repeat_row); every other shape mismatch throws.
template <typename Real>
class Tape {
 public:
  struct Slot {
    int rows = 0, cols = 0;
    std::vector<Real> v;
    std::vector<Real> g;
    bool needs_grad = false;
  };

  int rows(Var a) const { return slots_[a.id].rows; }
  int cols(Var a) const { return slots_[a.id].cols; }
  const std::vector<Real>& value(Var a) const { return slots_[a.id].v; }
  const std::vector<Real>& grad(Var a) const { return slots_[a.id].g; }
  Real scalar(Var a) const { return slots_[a.id].v[0]; }

  Var constant(int rows, int cols, std::vector<Real> data) {
    return make(rows, cols, std::move(data), false);
  }
  Var leaf(int rows, int cols, std::vector<Real> data) {
    return make(rows, cols, std::move(data), true);
  }
  Var scalar_const(Real v) { return constant(1, 1, {v}); }

  // --- elementwise / linear algebra ---

  Var matmul(Var a, Var b) {
    auto& A = slots_[a.id];
    auto& B = slots_[b.id];
    if (A.cols != B.rows) shape_fail("matmul", a, b);
    const int m = A.rows, k = A.cols, n = B.cols;
    std::vector<Real> out(static_cast<size_t>(m) * n, Real(0));
    for (int i = 0; i < m; ++i)
      for (int l = 0; l < k; ++l) {
        const Real av = A.v[static_cast<size_t>(i) * k + l];
        if (av == Real(0)) continue;
        const Real* brow = &B.v[static_cast<size_t>(l) * n];
        Real* orow = &out[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    Var o = make(m, n, std::move(out), A.needs_grad || B.needs_grad);
    record([this, a, b, o, m, k, n]() {
      auto& A = slots_[a.id];
      auto& B = slots_[b.id];
      auto& O = slots_[o.id];
      if (A.needs_grad)
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            Real acc = 0;
            const Real* brow = &B.v[static_cast<size_t>(l) * n];
            const Real* grow = &O.g[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            A.g[static_cast<size_t>(i) * k + l] += acc;
          }
      if (B.needs_grad)
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            const Real av = A.v[static_cast<size_t>(i) * k + l];
            if (av == Real(0)) continue;
            Real* brow = &B.g[static_cast<size_t>(l) * n];
            const Real* grow = &O.g[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
    });
    return o;
  }

  Var add(Var a, Var b) { return binary("add", a, b, [](Real x, Real y) { return x + y; },
                                        [](Real, Real, Real go) { return std::pair<Real, Real>{go, go}; }); }
  Var sub(Var a, Var b) { return binary("sub", a, b, [](Real x, Real y) { return x - y; },
                                        [](Real, Real, Real go) { return std::pair<Real, Real>{go, -go}; }); }
  Var mul(Var a, Var b) { return binary("mul", a, b, [](Real x, Real y) { return x * y; },
                                        [](Real x, Real y, Real go) { return std::pair<Real, Real>{go * y, go * x}; }); }
  Var div(Var a, Var b) { return binary("div", a, b, [](Real x, Real y) { return x / y; },
                                        [](Real x, Real y, Real go) {
                                          return std::pair<Real, Real>{go / y, -go * x / (y * y)};
                                        }); }

  Var scale(Var a, Real c) {
    return unary(a, [c](Real x) { return c * x; }, [c](Real, Real go) { return c * go; });
  }

  Var affine(Var a, Real k, Real b) {
    return unary(a, [k, b](Real x) { return k * x + b; }, [k](Real, Real go) { return k * go; });
  }

  Var add_rowvec(Var a, Var v) {
    auto& A = slots_[a.id];
    auto& V = slots_[v.id];
    if (V.rows != 1 || V.cols != A.cols) shape_fail("add_rowvec", a, v);
    std::vector<Real> out(A.v);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out[static_cast<size_t>(i) * A.cols + j] += V.v[j];
    Var o = make(A.rows, A.cols, std::move(out), A.needs_grad || V.needs_grad);
    record([this, a, v, o]() {
      auto& A = slots_[a.id];
      auto& V = slots_[v.id];
      auto& O = slots_[o.id];
      if (A.needs_grad)
        for (size_t i = 0; i < A.g.size(); ++i) A.g[i] += O.g[i];
      if (V.needs_grad)
        for (int i = 0; i < A.rows; ++i)
          for (int j = 0; j < A.cols; ++j) V.g[j] += O.g[static_cast<size_t>(i) * A.cols + j];
    });
    return o;
  }

  Var leaky_relu(Var a, Real slope) {
    return unary(a, [slope](Real x) { return x >= Real(0) ? x : slope * x; },
                 [slope](Real x, Real go) { return x >= Real(0) ? go : slope * go; });
  }

  // slope is a 1x1 learnable
  Var prelu(Var a, Var slope) {
    auto& A = slots_[a.id];
    auto& S = slots_[slope.id];
    if (S.rows != 1 || S.cols != 1) shape_fail("prelu", a, slope);
    const Real s = S.v[0];
    std::vector<Real> out(A.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = A.v[i] >= Real(0) ? A.v[i] : s * A.v[i];
    Var o = make(A.rows, A.cols, std::move(out), A.needs_grad || S.needs_grad);
    record([this, a, slope, o, s]() {
      auto& A = slots_[a.id];
      auto& S = slots_[slope.id];
      auto& O = slots_[o.id];
      for (size_t i = 0; i < A.v.size(); ++i) {
        if (A.v[i] >= Real(0)) {
          if (A.needs_grad) A.g[i] += O.g[i];
        } else {
          if (A.needs_grad) A.g[i] += s * O.g[i];
          if (S.needs_grad) S.g[0] += A.v[i] * O.g[i];
        }
      }
    });
    return o;
  }

  Var log(Var a) {
    return unary(a, [](Real x) { return std::log(x); },
                 [](Real x, Real go) { return go / x; });
  }

  Var power(Var a, Real p) {
    return unary(a, [p](Real x) { return std::pow(x, p); },
                 [p](Real x, Real go) { return go * p * std::pow(x, p - Real(1)); });
  }

  Var abs(Var a) {
    return unary(a, [](Real x) { return std::fabs(x); },
                 [](Real x, Real go) { return x >= Real(0) ? go : -go; });
  }

  // Gradient is zero where the input is clamped. NaN passes through so a
  // poisoned forward value cannot be silently rescued.
  Var clamp(Var a, Real lo, Real hi) {
    return unary(a,
                 [lo, hi](Real x) { return std::isnan(x) ? x : std::min(hi, std::max(lo, x)); },
                 [lo, hi](Real x, Real go) { return (x < lo || x > hi) ? Real(0) : go; });
  }
  Var clamp_min(Var a, Real lo) {
    return unary(a, [lo](Real x) { return std::isnan(x) ? x : std::max(lo, x); },
                 [lo](Real x, Real go) { return x < lo ? Real(0) : go; });
  }

  // --- structural ops ---

  Var concat_rows(Var a, Var b) {
    auto& A = slots_[a.id];
    auto& B = slots_[b.id];
    if (A.cols != B.cols) shape_fail("concat_rows", a, b);
    std::vector<Real> out;
    out.reserve(A.v.size() + B.v.size());
    out.insert(out.end(), A.v.begin(), A.v.end());
    out.insert(out.end(), B.v.begin(), B.v.end());
    Var o = make(A.rows + B.rows, A.cols, std::move(out), A.needs_grad || B.needs_grad);
    record([this, a, b, o]() {
      auto& A = slots_[a.id];
      auto& B = slots_[b.id];
      auto& O = slots_[o.id];
      if (A.needs_grad)
        for (size_t i = 0; i < A.g.size(); ++i) A.g[i] += O.g[i];
      if (B.needs_grad)
        for (size_t i = 0; i < B.g.size(); ++i) B.g[i] += O.g[A.g.size() + i];
    });
    return o;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw dim_error("concat_cols: no inputs");
    const int m = slots_[parts[0].id].rows;
    int total = 0;
    bool ng = false;
    for (Var p : parts) {
      if (slots_[p.id].rows != m) shape_fail("concat_cols", parts[0], p);
      total += slots_[p.id].cols;
      ng = ng || slots_[p.id].needs_grad;
    }
    std::vector<Real> out(static_cast<size_t>(m) * total);
    int base = 0;
    for (Var p : parts) {
      auto& P = slots_[p.id];
      for (int i = 0; i < m; ++i)
        std::copy(P.v.begin() + static_cast<size_t>(i) * P.cols,
                  P.v.begin() + static_cast<size_t>(i + 1) * P.cols,
                  out.begin() + static_cast<size_t>(i) * total + base);
      base += P.cols;
    }
    Var o = make(m, total, std::move(out), ng);
    record([this, parts, o, m, total]() {
      auto& O = slots_[o.id];
      int base = 0;
      for (Var p : parts) {
        auto& P = slots_[p.id];
        if (P.needs_grad)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < P.cols; ++j)
              P.g[static_cast<size_t>(i) * P.cols + j] +=
                  O.g[static_cast<size_t>(i) * total + base + j];
        base += P.cols;
      }
    });
    return o;
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    auto& A = slots_[a.id];
    for (int i : idx)
      if (i < 0 || i >= A.rows)
        throw dim_error("gather_rows: index " + std::to_string(i) + " out of " +
                        std::to_string(A.rows) + " rows");
    const int c = A.cols;
    std::vector<Real> out(idx.size() * c);
    for (size_t r = 0; r < idx.size(); ++r)
      std::copy(A.v.begin() + static_cast<size_t>(idx[r]) * c,
                A.v.begin() + static_cast<size_t>(idx[r] + 1) * c, out.begin() + r * c);
    Var o = make(static_cast<int>(idx.size()), c, std::move(out), A.needs_grad);
    record([this, a, o, idx = std::move(idx), c]() {
      auto& A = slots_[a.id];
      auto& O = slots_[o.id];
      if (!A.needs_grad) return;
      for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < c; ++j)
          A.g[static_cast<size_t>(idx[r]) * c + j] += O.g[r * c + j];
    });
    return o;
  }

  // Rows of `a` placed at positions idx of an out_rows x cols zero matrix.
  // Indices must be unique.
  Var scatter_rows(Var a, std::vector<int> idx, int out_rows) {
    auto& A = slots_[a.id];
    if (static_cast<int>(idx.size()) != A.rows)
      throw dim_error("scatter_rows: " + std::to_string(idx.size()) + " indices for " +
                      std::to_string(A.rows) + " rows");
    for (int i : idx)
      if (i < 0 || i >= out_rows)
        throw dim_error("scatter_rows: index " + std::to_string(i) + " out of " +
                        std::to_string(out_rows) + " rows");
    const int c = A.cols;
    std::vector<Real> out(static_cast<size_t>(out_rows) * c, Real(0));
    for (size_t r = 0; r < idx.size(); ++r)
      std::copy(A.v.begin() + r * c, A.v.begin() + (r + 1) * c,
                out.begin() + static_cast<size_t>(idx[r]) * c);
    Var o = make(out_rows, c, std::move(out), A.needs_grad);
    record([this, a, o, idx = std::move(idx), c]() {
      auto& A = slots_[a.id];
      auto& O = slots_[o.id];
      if (!A.needs_grad) return;
      for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < c; ++j)
          A.g[r * c + j] += O.g[static_cast<size_t>(idx[r]) * c + j];
    });
    return o;
  }

  Var repeat_row(Var v, int times) {
    auto& V = slots_[v.id];
    if (V.rows != 1) shape_fail("repeat_row", v, v);
    std::vector<Real> out(static_cast<size_t>(times) * V.cols);
    for (int i = 0; i < times; ++i)
      std::copy(V.v.begin(), V.v.end(), out.begin() + static_cast<size_t>(i) * V.cols);
    Var o = make(times, V.cols, std::move(out), V.needs_grad);
    record([this, v, o, times]() {
      auto& V = slots_[v.id];
      auto& O = slots_[o.id];
      if (!V.needs_grad) return;
      for (int i = 0; i < times; ++i)
        for (int j = 0; j < V.cols; ++j) V.g[j] += O.g[static_cast<size_t>(i) * V.cols + j];
    });
    return o;
  }

  Var reshape(Var a, int rows, int cols) {
    auto& A = slots_[a.id];
    if (static_cast<size_t>(rows) * cols != A.v.size()) shape_fail("reshape", a, a);
    Var o = make(rows, cols, A.v, A.needs_grad);
    record([this, a, o]() {
      auto& A = slots_[a.id];
      auto& O = slots_[o.id];
      if (!A.needs_grad) return;
      for (size_t i = 0; i < A.g.size(); ++i) A.g[i] += O.g[i];
    });
    return o;
  }

  // --- reductions ---

  Var sum(Var a) {
    auto& A = slots_[a.id];
    Real acc = 0;
    for (Real x : A.v) acc += x;
    Var o = make(1, 1, {acc}, A.needs_grad);
    record([this, a, o]() {
      auto& A = slots_[a.id];
      auto& O = slots_[o.id];
      if (!A.needs_grad) return;
      for (size_t i = 0; i < A.g.size(); ++i) A.g[i] += O.g[0];
    });
    return o;
  }

  Var rowwise_inner(Var a, Var b) {
    auto& A = slots_[a.id];
    auto& B = slots_[b.id];
    if (A.rows != B.rows || A.cols != B.cols) shape_fail("rowwise_inner", a, b);
    std::vector<Real> out(A.rows);
    for (int i = 0; i < A.rows; ++i) {
      Real acc = 0;
      for (int j = 0; j < A.cols; ++j)
        acc += A.v[static_cast<size_t>(i) * A.cols + j] * B.v[static_cast<size_t>(i) * A.cols + j];
      out[i] = acc;
    }
    Var o = make(A.rows, 1, std::move(out), A.needs_grad || B.needs_grad);
    record([this, a, b, o]() {
      auto& A = slots_[a.id];
      auto& B = slots_[b.id];
      auto& O = slots_[o.id];
      for (int i = 0; i < A.rows; ++i) {
        const Real go = O.g[i];
        if (go == Real(0)) continue;
        for (int j = 0; j < A.cols; ++j) {
          const size_t p = static_cast<size_t>(i) * A.cols + j;
          if (A.needs_grad) A.g[p] += go * B.v[p];
          if (B.needs_grad) B.g[p] += go * A.v[p];
        }
      }
    });
    return o;
  }

  // Row L2 norms with a floor; gradient is zero on floored rows.
  Var row_l2_norm(Var a, Real floor = Real(0)) {
    auto& A = slots_[a.id];
    std::vector<Real> out(A.rows);
    for (int i = 0; i < A.rows; ++i) {
      Real acc = 0;
      for (int j = 0; j < A.cols; ++j) {
        Real x = A.v[static_cast<size_t>(i) * A.cols + j];
        acc += x * x;
      }
      out[i] = std::max(std::sqrt(acc), floor);
    }
    Var o = make(A.rows, 1, std::move(out), A.needs_grad);
    record([this, a, o, floor]() {
      auto& A = slots_[a.id];
      auto& O = slots_[o.id];
      if (!A.needs_grad) return;
      for (int i = 0; i < A.rows; ++i) {
        if (O.v[i] <= floor) continue;
        const Real s = O.g[i] / O.v[i];
        for (int j = 0; j < A.cols; ++j) {
          const size_t p = static_cast<size_t>(i) * A.cols + j;
          A.g[p] += s * A.v[p];
        }
      }
    });
    return o;
  }

  // --- sparse ops ---

  // adj is held by pointer and must outlive the tape.
  Var spmm(const CsrMatrix* adj, Var x) {
    auto& X = slots_[x.id];
    if (adj->cols != X.rows)
      throw dim_error("spmm: adjacency " + std::to_string(adj->rows) + "x" +
                      std::to_string(adj->cols) + " vs input rows " + std::to_string(X.rows));
    const int c = X.cols;
    std::vector<Real> out(static_cast<size_t>(adj->rows) * c, Real(0));
    for (int i = 0; i < adj->rows; ++i)
      for (int p = adj->row_ptr[i]; p < adj->row_ptr[i + 1]; ++p) {
        const Real v = static_cast<Real>(adj->val[p]);
        const Real* xrow = &X.v[static_cast<size_t>(adj->col[p]) * c];
        Real* orow = &out[static_cast<size_t>(i) * c];
        for (int j = 0; j < c; ++j) orow[j] += v * xrow[j];
      }
    Var o = make(adj->rows, c, std::move(out), X.needs_grad);
    record([this, adj, x, o, c]() {
      auto& X = slots_[x.id];
      auto& O = slots_[o.id];
      if (!X.needs_grad) return;
      for (int i = 0; i < adj->rows; ++i)
        for (int p = adj->row_ptr[i]; p < adj->row_ptr[i + 1]; ++p) {
          const Real v = static_cast<Real>(adj->val[p]);
          Real* xrow = &X.g[static_cast<size_t>(adj->col[p]) * c];
          const Real* grow = &O.g[static_cast<size_t>(i) * c];
          for (int j = 0; j < c; ++j) xrow[j] += v * grow[j];
        }
    });
    return o;
  }

  // Sparse matmul whose per-entry weights are a tensor: out[i] = sum_e w[e] x[col[e]].
  // w is nnz x 1 in the pattern's entry order.
  Var spmm_edges(const CsrMatrix* pattern, Var w, Var x) {
    auto& W = slots_[w.id];
    auto& X = slots_[x.id];
    if (W.rows != pattern->nnz() || W.cols != 1)
      throw dim_error("spmm_edges: weights " + std::to_string(W.rows) + "x" +
                      std::to_string(W.cols) + " vs nnz " + std::to_string(pattern->nnz()));
    if (pattern->cols != X.rows)
      throw dim_error("spmm_edges: pattern cols " + std::to_string(pattern->cols) +
                      " vs input rows " + std::to_string(X.rows));
    const int c = X.cols;
    std::vector<Real> out(static_cast<size_t>(pattern->rows) * c, Real(0));
    for (int i = 0; i < pattern->rows; ++i)
      for (int p = pattern->row_ptr[i]; p < pattern->row_ptr[i + 1]; ++p) {
        const Real v = W.v[p];
        const Real* xrow = &X.v[static_cast<size_t>(pattern->col[p]) * c];
        Real* orow = &out[static_cast<size_t>(i) * c];
        for (int j = 0; j < c; ++j) orow[j] += v * xrow[j];
      }
    Var o = make(pattern->rows, c, std::move(out), W.needs_grad || X.needs_grad);
    record([this, pattern, w, x, o, c]() {
      auto& W = slots_[w.id];
      auto& X = slots_[x.id];
      auto& O = slots_[o.id];
      for (int i = 0; i < pattern->rows; ++i) {
        const Real* grow = &O.g[static_cast<size_t>(i) * c];
        for (int p = pattern->row_ptr[i]; p < pattern->row_ptr[i + 1]; ++p) {
          const int j = pattern->col[p];
          if (W.needs_grad) {
            Real acc = 0;
            const Real* xrow = &X.v[static_cast<size_t>(j) * c];
            for (int q = 0; q < c; ++q) acc += grow[q] * xrow[q];
            W.g[p] += acc;
          }
          if (X.needs_grad) {
            Real* xg = &X.g[static_cast<size_t>(j) * c];
            for (int q = 0; q < c; ++q) xg[q] += W.v[p] * grow[q];
          }
        }
      }
    });
    return o;
  }

  // Softmax over contiguous segments of a k x 1 vector; segment ids must be
  // sorted ascending. Stabilized by subtracting the per-segment max.
  Var segment_softmax(Var logits, std::vector<int> segments) {
    auto& L = slots_[logits.id];
    if (L.cols != 1 || L.rows != static_cast<int>(segments.size()))
      throw dim_error("segment_softmax: logits " + std::to_string(L.rows) + "x" +
                      std::to_string(L.cols) + " vs " + std::to_string(segments.size()) +
                      " segment ids");
    for (size_t i = 1; i < segments.size(); ++i)
      if (segments[i] < segments[i - 1])
        throw dim_error("segment_softmax: segment ids must be sorted");
    const int k = L.rows;
    std::vector<Real> out(k);
    for (int s = 0; s < k;) {
      int e = s;
      while (e < k && segments[e] == segments[s]) ++e;
      Real mx = L.v[s];
      for (int i = s + 1; i < e; ++i) mx = std::max(mx, L.v[i]);
      Real denom = 0;
      for (int i = s; i < e; ++i) {
        out[i] = std::exp(L.v[i] - mx);
        denom += out[i];
      }
      for (int i = s; i < e; ++i) out[i] /= denom;
      s = e;
    }
    Var o = make(k, 1, std::move(out), L.needs_grad);
    record([this, logits, o, segments = std::move(segments), k]() {
      auto& L = slots_[logits.id];
      auto& O = slots_[o.id];
      if (!L.needs_grad) return;
      for (int s = 0; s < k;) {
        int e = s;
        while (e < k && segments[e] == segments[s]) ++e;
        Real dot = 0;
        for (int i = s; i < e; ++i) dot += O.g[i] * O.v[i];
        for (int i = s; i < e; ++i) L.g[i] += O.v[i] * (O.g[i] - dot);
        s = e;
      }
    });
    return o;
  }

  // --- backward ---

  void backward(Var loss) {
    auto& L = slots_[loss.id];
    if (L.rows != 1 || L.cols != 1)
      throw dim_error("backward: loss must be scalar, got " + std::to_string(L.rows) + "x" +
                      std::to_string(L.cols));
    L.g[0] = Real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  size_t num_slots() const { return slots_.size(); }

 private:
  std::vector<Slot> slots_;
  std::vector<std::function<void()>> ops_;

  Var make(int rows, int cols, std::vector<Real> data, bool needs_grad) {
    Slot s;
    s.rows = rows;
    s.cols = cols;
    s.v = std::move(data);
    if (s.v.size() != static_cast<size_t>(rows) * cols)
      throw dim_error("tensor: data size " + std::to_string(s.v.size()) + " != " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    s.g.assign(s.v.size(), Real(0));
    s.needs_grad = needs_grad;
    slots_.push_back(std::move(s));
    return Var{static_cast<int>(slots_.size() - 1)};
  }

  void record(std::function<void()> op) { ops_.push_back(std::move(op)); }

  template <typename F, typename G>
  Var unary(Var a, F fwd, G bwd) {
    auto& A = slots_[a.id];
    std::vector<Real> out(A.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(A.v[i]);
    Var o = make(A.rows, A.cols, std::move(out), A.needs_grad);
    record([this, a, o, bwd]() {
      auto& A = slots_[a.id];
      auto& O = slots_[o.id];
      if (!A.needs_grad) return;
      for (size_t i = 0; i < A.g.size(); ++i) A.g[i] += bwd(A.v[i], O.g[i]);
    });
    return o;
  }

  template <typename F, typename G>
  Var binary(const char* name, Var a, Var b, F fwd, G bwd) {
    auto& A = slots_[a.id];
    auto& B = slots_[b.id];
    if (A.rows != B.rows || A.cols != B.cols) shape_fail(name, a, b);
    std::vector<Real> out(A.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(A.v[i], B.v[i]);
    Var o = make(A.rows, A.cols, std::move(out), A.needs_grad || B.needs_grad);
    record([this, a, b, o, bwd]() {
      auto& A = slots_[a.id];
      auto& B = slots_[b.id];
      auto& O = slots_[o.id];
      for (size_t i = 0; i < O.g.size(); ++i) {
        auto [ga, gb] = bwd(A.v[i], B.v[i], O.g[i]);
        if (A.needs_grad) A.g[i] += ga;
        if (B.needs_grad) B.g[i] += gb;
      }
    });
    return o;
  }

  [[noreturn]] void shape_fail(const std::string& op, Var a, Var b) const {
    auto dims = [this](Var x) {
      return std::to_string(slots_[x.id].rows) + "x" + std::to_string(slots_[x.id].cols);
    };
    throw dim_error(op + ": incompatible shapes " + dims(a) + " and " + dims(b));
  }
};

}  // namespace rare
