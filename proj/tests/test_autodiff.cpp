#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rare/errors.hpp"
#include "rare/graph.hpp"
#include "rare/model.hpp"
#include "rare/optim.hpp"
#include "rare/tape.hpp"

using namespace rare;

namespace {

using Leaves = std::vector<std::vector<double>>;
using Shapes = std::vector<std::pair<int, int>>;

// Central finite differences vs the tape gradient for an arbitrary scalar
// expression over a set of leaves. Returns the max relative error with a
// small scale floor so near-zero gradients are compared absolutely.
template <typename BuildFn>
double max_grad_rel_error(Leaves vals, const Shapes& shapes, BuildFn build,
                          double step = 1e-5) {
  auto eval = [&](const Leaves& v) {
    Tape<double> t;
    std::vector<Var> leaves;
    for (size_t i = 0; i < v.size(); ++i)
      leaves.push_back(t.leaf(shapes[i].first, shapes[i].second, v[i]));
    return t.scalar(build(t, leaves));
  };

  Tape<double> t;
  std::vector<Var> leaves;
  for (size_t i = 0; i < vals.size(); ++i)
    leaves.push_back(t.leaf(shapes[i].first, shapes[i].second, vals[i]));
  Var loss = build(t, leaves);
  t.backward(loss);
  std::vector<std::vector<double>> grads;
  for (Var l : leaves) grads.push_back(t.grad(l));

  double worst = 0.0;
  for (size_t i = 0; i < vals.size(); ++i)
    for (size_t j = 0; j < vals[i].size(); ++j) {
      const double keep = vals[i][j];
      vals[i][j] = keep + step;
      const double up = eval(vals);
      vals[i][j] = keep - step;
      const double down = eval(vals);
      vals[i][j] = keep;
      const double fd = (up - down) / (2 * step);
      const double g = grads[i][j];
      const double rel = std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), 1e-3});
      worst = std::max(worst, rel);
    }
  return worst;
}

std::vector<double> randvec(size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (auto& x : out) x = u(rng);
  return out;
}

SparseGraph random_graph(int n, int dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng() % 3 == 0) edges.emplace_back(i, j);
  return SparseGraph::build(n, dim, std::move(edges), randvec(static_cast<size_t>(n) * dim, rng));
}

}  // namespace

TEST_CASE("segment_softmax basics") {
  Tape<double> t;
  SUBCASE("singleton segment is 1") {
    Var l = t.leaf(1, 1, {3.7});
    Var s = t.segment_softmax(l, {0});
    CHECK(t.value(s)[0] == 1.0);
  }
  SUBCASE("equal logits share a segment uniformly") {
    Var l = t.leaf(4, 1, {2.0, 2.0, 2.0, 2.0});
    Var s = t.segment_softmax(l, {0, 0, 0, 0});
    for (double v : t.value(s)) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("nonnegative and sums to 1 per segment") {
    std::mt19937_64 rng(1);
    std::vector<double> logits = randvec(9, rng, -50.0, 50.0);
    Var l = t.leaf(9, 1, logits);
    Var s = t.segment_softmax(l, {0, 0, 0, 1, 1, 2, 2, 2, 2});
    const auto& v = t.value(s);
    for (double x : v) CHECK(x >= 0.0);
    CHECK(std::fabs(v[0] + v[1] + v[2] - 1.0) <= 1e-12);
    CHECK(std::fabs(v[3] + v[4] - 1.0) <= 1e-12);
    CHECK(std::fabs(v[5] + v[6] + v[7] + v[8] - 1.0) <= 1e-12);
  }
  SUBCASE("huge logits do not overflow") {
    Var l = t.leaf(2, 1, {1000.0, 990.0});
    Var s = t.segment_softmax(l, {0, 0});
    CHECK(std::isfinite(t.value(s)[0]));
    CHECK(t.value(s)[0] + t.value(s)[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("spmm with an identity adjacency is the identity") {
  CsrMatrix eye;
  eye.rows = eye.cols = 1;
  eye.row_ptr = {0, 1};
  eye.col = {0};
  eye.val = {1.0};
  Tape<double> t;
  Var x = t.leaf(1, 3, {1.5, -2.0, 0.25});
  Var y = t.spmm(&eye, x);
  CHECK(t.value(y) == t.value(x));
}

TEST_CASE("shape mismatches name the op and shapes") {
  Tape<double> t;
  Var a = t.leaf(2, 3, std::vector<double>(6, 1.0));
  Var b = t.leaf(2, 3, std::vector<double>(6, 1.0));
  try {
    t.matmul(a, b);
    FAIL("expected dim_error");
  } catch (const dim_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(t.add(a, t.leaf(3, 2, std::vector<double>(6, 1.0))), dim_error);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> t;
  Var a = t.leaf(2, 2, {1, 2, 3, 4});
  CHECK_THROWS_AS(t.backward(a), dim_error);
}

TEST_CASE("grad of sum(W x) w.r.t. W is x broadcast over rows") {
  Tape<double> t;
  Var w = t.leaf(3, 2, {1, 2, 3, 4, 5, 6});
  Var x = t.leaf(2, 1, {10, 20});
  Var loss = t.sum(t.matmul(w, x));
  t.backward(loss);
  const auto& g = t.grad(w);
  CHECK(g == std::vector<double>{10, 20, 10, 20, 10, 20});
}

TEST_CASE("grad of ||W x||^2 matches finite differences to 1e-6") {
  std::mt19937_64 rng(123);
  Leaves vals{randvec(12, rng), randvec(4, rng)};
  Shapes shapes{{3, 4}, {4, 1}};
  double err = max_grad_rel_error(vals, shapes, [](Tape<double>& t, const std::vector<Var>& l) {
    Var z = t.matmul(l[0], l[1]);
    return t.sum(t.mul(z, z));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("a leaf unused by the loss keeps a zero gradient") {
  Tape<double> t;
  Var used = t.leaf(1, 2, {1.0, 2.0});
  Var unused = t.leaf(1, 2, {3.0, 4.0});
  t.backward(t.sum(used));
  CHECK(t.grad(unused) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("elementwise and structural ops pass finite differences") {
  std::mt19937_64 rng(17);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Leaves vals{randvec(12, rng), randvec(12, rng)};
    Shapes shapes{{4, 3}, {4, 3}};
    double err = max_grad_rel_error(vals, shapes, [](Tape<double>& t, const std::vector<Var>& l) {
      Var a = t.add(l[0], t.scale(l[1], 0.5));
      Var b = t.mul(t.leaky_relu(a, 0.2), t.abs(l[1]));
      Var c = t.concat_rows(b, t.gather_rows(b, {1, 3}));
      Var d = t.scatter_rows(c, {5, 0, 2, 4, 1, 3}, 6);
      Var n = t.row_l2_norm(d, 1e-12);
      return t.sum(t.mul(n, n));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("segment_softmax gradient passes finite differences") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    Leaves vals{randvec(7, rng)};
    Shapes shapes{{7, 1}};
    std::vector<int> seg{0, 0, 1, 1, 1, 2, 2};
    std::vector<double> weights = randvec(7, rng);
    double err = max_grad_rel_error(vals, shapes, [&](Tape<double>& t, const std::vector<Var>& l) {
      Var s = t.segment_softmax(l[0], seg);
      Var w = t.constant(7, 1, weights);
      return t.sum(t.mul(s, w));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("xavier_init respects the uniform bound") {
  SUBCASE("4x4") {
    auto p = xavier_init<double>("w", 4, 4, 9);
    const double bound = std::sqrt(6.0 / 8.0);
    for (double v : p.v) {
      CHECK(v <= bound);
      CHECK(v >= -bound);
    }
  }
  SUBCASE("1x1") {
    for (uint64_t s = 0; s < 50; ++s) {
      auto p = xavier_init<double>("w", 1, 1, s);
      CHECK(std::fabs(p.v[0]) <= std::sqrt(3.0));
    }
  }
  SUBCASE("deterministic per seed") {
    auto a = xavier_init<double>("w", 5, 3, 77);
    auto b = xavier_init<double>("w", 5, 3, 77);
    CHECK(a.v == b.v);
    auto c = xavier_init<double>("w", 5, 3, 78);
    CHECK(a.v != c.v);
  }
}

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  Param<double> p("p", 2, 2, {1, 2, 3, 4});
  std::vector<Param<double>*> params{&p};
  AdamState<double> state;
  state.init(params, {});
  adam_step(params, state);
  CHECK(p.v == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("adam first step is about -lr * sign(g)") {
  Param<double> p("p", 1, 3, {0.0, 0.0, 0.0});
  p.g = {2.5, -0.3, 1e-10};
  std::vector<Param<double>*> params{&p};
  AdamState<double> state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  state.init(params, cfg);
  adam_step(params, state);
  CHECK(p.v[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.v[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(std::fabs(p.v[2]) < 0.1);  // |g| ~ eps, update shrinks
}

TEST_CASE("adam descends a scalar quadratic") {
  Param<double> x("x", 1, 1, {1.0});
  std::vector<Param<double>*> params{&x};
  AdamState<double> state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  state.init(params, cfg);
  double prev = x.v[0] * x.v[0];
  for (int step = 0; step < 2; ++step) {
    x.g[0] = 2.0 * x.v[0];
    adam_step(params, state);
    const double now = x.v[0] * x.v[0];
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("composite layers pass finite differences over 20 seeds") {
  double worst_gat = 0, worst_gin = 0, worst_mlp = 0, worst_mse = 0, worst_isce = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed * 31 + 7);
    SparseGraph g = random_graph(6, 3, seed);
    GraphContext ctx = GraphContext::build(g);

    RunConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.hidden = 4;
    cfg.latent_dim = 3;

    {  // one GAT layer, all parameters as leaves
      auto model = RareModel<double>::init(cfg, 3, seed);
      auto& layer = model.online.gat_layers[0];
      Leaves vals;
      Shapes shapes;
      std::vector<Param<double>*> ps;
      layer.collect(ps);
      for (auto* p : ps) {
        vals.push_back(p->v);
        shapes.emplace_back(p->rows, p->cols);
      }
      std::vector<double> x = randvec(18, rng);
      double err = max_grad_rel_error(vals, shapes, [&](Tape<double>& t, const std::vector<Var>& l) {
        Var xin = t.constant(6, 3, x);
        std::vector<Var> outs;
        for (int k = 0; k < 2; ++k) {
          Var hp = t.matmul(xin, l[k * 3 + 0]);
          Var ssrc = t.matmul(hp, l[k * 3 + 1]);
          Var sdst = t.matmul(hp, l[k * 3 + 2]);
          Var logit = t.leaky_relu(
              t.add(t.gather_rows(ssrc, ctx.entry_row), t.gather_rows(sdst, ctx.adj.col)), 0.2);
          Var alpha = t.segment_softmax(logit, ctx.entry_row);
          outs.push_back(t.spmm_edges(&ctx.adj, alpha, hp));
        }
        Var cat = t.add_rowvec(t.concat_cols(outs), l[6]);
        return t.sum(t.mul(cat, cat));
      });
      worst_gat = std::max(worst_gat, err);
    }

    {  // one GIN layer via the layer object itself
      cfg.backbone = Backbone::gin;
      auto model = RareModel<double>::init(cfg, 3, seed);
      auto& layer = model.online.gin_layers[0];
      std::vector<Param<double>*> ps;
      layer.collect(ps);
      Leaves vals;
      Shapes shapes;
      for (auto* p : ps) {
        vals.push_back(randvec(p->size(), rng));
        shapes.emplace_back(p->rows, p->cols);
      }
      std::vector<double> x = randvec(18, rng);
      double err = max_grad_rel_error(vals, shapes, [&](Tape<double>& t, const std::vector<Var>& l) {
        Var xin = t.constant(6, 3, x);
        Var agg = t.add(xin, t.spmm(&ctx.plain, xin));
        Var h1 = t.add_rowvec(t.matmul(agg, l[0]), l[1]);
        Var h2 = t.prelu(h1, l[2]);
        Var h3 = t.add_rowvec(t.matmul(h2, l[3]), l[4]);
        return t.sum(t.mul(h3, h3));
      });
      worst_gin = std::max(worst_gin, err);
    }

    {  // 2-layer MLP with PReLU
      Leaves vals{randvec(6, rng), randvec(2, rng), randvec(1, rng, 0.1, 0.5),
                  randvec(6, rng), randvec(3, rng)};
      Shapes shapes{{3, 2}, {1, 2}, {1, 1}, {2, 3}, {1, 3}};
      std::vector<double> x = randvec(12, rng);
      double err = max_grad_rel_error(vals, shapes, [&](Tape<double>& t, const std::vector<Var>& l) {
        Var xin = t.constant(4, 3, x);
        Var h = t.prelu(t.add_rowvec(t.matmul(xin, l[0]), l[1]), l[2]);
        Var o = t.add_rowvec(t.matmul(h, l[3]), l[4]);
        return t.sum(t.mul(o, o));
      });
      worst_mlp = std::max(worst_mlp, err);
    }

    {  // both losses on random row pairs
      Leaves vals{randvec(12, rng), randvec(12, rng)};
      Shapes shapes{{4, 3}, {4, 3}};
      double err_mse = max_grad_rel_error(vals, shapes, [](Tape<double>& t, const std::vector<Var>& l) {
        return latent_matching_loss(t, l[0], l[1], nullptr);
      });
      double err_isce = max_grad_rel_error(vals, shapes, [](Tape<double>& t, const std::vector<Var>& l) {
        return isce_loss(t, l[0], l[1], 2.0, nullptr);
      });
      worst_mse = std::max(worst_mse, err_mse);
      worst_isce = std::max(worst_isce, err_isce);
    }
  }
  CHECK(worst_gat < 1e-4);
  CHECK(worst_gin < 1e-4);
  CHECK(worst_mlp < 1e-4);
  CHECK(worst_mse < 1e-4);
  CHECK(worst_isce < 1e-4);
}
