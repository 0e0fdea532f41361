#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <unordered_map>
#include <vector>

#include "rare/config.hpp"
#include "rare/errors.hpp"
#include "rare/graph.hpp"
#include "rare/masking.hpp"
#include "rare/optim.hpp"
#include "rare/tape.hpp"

namespace rare {

// Per-graph buffers shared by every layer: the normalized adjacency, the
// plain 0/1 neighbor matrix, and the row id of each adjacency entry
// (attention segments).
struct GraphContext {
  NormalizedAdjacency adj;
  CsrMatrix plain;
  std::vector<int> entry_row;

  static GraphContext build(const SparseGraph& g) {
    GraphContext ctx;
    ctx.adj = normalize_adjacency(g);
    ctx.plain = neighbor_csr(g);
    ctx.entry_row.resize(ctx.adj.nnz());
    for (int i = 0; i < ctx.adj.rows; ++i)
      for (int p = ctx.adj.row_ptr[i]; p < ctx.adj.row_ptr[i + 1]; ++p) ctx.entry_row[p] = i;
    return ctx;
  }
};

// Binds Param objects to tape slots once per step. Trainable binders make
// leaves; the momentum network uses a constant binder, so nothing recorded
// through it can receive gradient.
template <typename Real>
class Binder {
 public:
  Binder(Tape<Real>* tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Var operator()(const Param<Real>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var v = trainable_ ? tape_->leaf(p.rows, p.cols, p.v) : tape_->constant(p.rows, p.cols, p.v);
    bound_.emplace(&p, v);
    return v;
  }

  // Copy tape gradients back into the bound params (their grads must have
  // been zeroed at step start; unbound params keep zero).
  void write_grads() {
    for (auto& [p, v] : bound_) const_cast<Param<Real>*>(p)->g = tape_->grad(v);
  }

 private:
  Tape<Real>* tape_;
  bool trainable_;
  std::unordered_map<const Param<Real>*, Var> bound_;
};

template <typename Real>
struct LinearLayer {
  Param<Real> W;  // in x out
  Param<Real> b;  // 1 x out

  Var forward(Tape<Real>& t, Binder<Real>& bind, Var x) const {
    return t.add_rowvec(t.matmul(x, bind(W)), bind(b));
  }
  void collect(std::vector<Param<Real>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// Multi-head graph attention over the normalized adjacency's pattern
// (self-loops included). Heads are concatenated; attention logits use
// LeakyReLU with slope 0.2.
template <typename Real>
struct GatLayer {
  int heads = 1;
  std::vector<Param<Real>> W;      // per head: in x head_dim
  std::vector<Param<Real>> a_src;  // per head: head_dim x 1
  std::vector<Param<Real>> a_dst;  // per head: head_dim x 1
  Param<Real> bias;                // 1 x heads*head_dim

  Var forward(Tape<Real>& t, Binder<Real>& bind, Var x, const GraphContext& ctx) const {
    std::vector<Var> outs;
    outs.reserve(heads);
    for (int k = 0; k < heads; ++k) {
      Var hp = t.matmul(x, bind(W[k]));
      Var s_src = t.matmul(hp, bind(a_src[k]));
      Var s_dst = t.matmul(hp, bind(a_dst[k]));
      Var logits = t.leaky_relu(
          t.add(t.gather_rows(s_src, ctx.entry_row), t.gather_rows(s_dst, ctx.adj.col)),
          Real(0.2));
      Var alpha = t.segment_softmax(logits, ctx.entry_row);
      outs.push_back(t.spmm_edges(&ctx.adj, alpha, hp));
    }
    Var cat = heads == 1 ? outs[0] : t.concat_cols(outs);
    return t.add_rowvec(cat, bind(bias));
  }
  void collect(std::vector<Param<Real>*>& out) {
    for (int k = 0; k < heads; ++k) {
      out.push_back(&W[k]);
      out.push_back(&a_src[k]);
      out.push_back(&a_dst[k]);
    }
    out.push_back(&bias);
  }
};

// Graph isomorphism layer: (1+eps)*h + sum over neighbors, then a 2-layer MLP.
template <typename Real>
struct GinLayer {
  double eps = 0.0;
  LinearLayer<Real> lin1;
  Param<Real> inner_slope;  // PReLU between the MLP layers
  LinearLayer<Real> lin2;

  Var forward(Tape<Real>& t, Binder<Real>& bind, Var x, const GraphContext& ctx) const {
    Var agg = t.add(t.scale(x, Real(1.0 + eps)), t.spmm(&ctx.plain, x));
    return lin2.forward(t, bind, t.prelu(lin1.forward(t, bind, agg), bind(inner_slope)));
  }
  void collect(std::vector<Param<Real>*>& out) {
    lin1.collect(out);
    out.push_back(&inner_slope);
    lin2.collect(out);
  }
};

// Backbone (L GAT or GIN layers with an activation after each) plus an MLP
// projector. The backbone output feeds downstream tasks; the projector is
// used during pre-training only.
template <typename Real>
struct Encoder {
  Backbone kind = Backbone::gat;
  std::string nonlinearity = "prelu";
  std::vector<GatLayer<Real>> gat_layers;
  std::vector<GinLayer<Real>> gin_layers;
  std::vector<Param<Real>> act_slopes;  // one per layer when nonlinearity == prelu
  LinearLayer<Real> projector;

  int num_layers() const {
    return static_cast<int>(kind == Backbone::gat ? gat_layers.size() : gin_layers.size());
  }

  Var activate(Tape<Real>& t, Binder<Real>& bind, Var h, int layer) const {
    if (nonlinearity == "prelu") return t.prelu(h, bind(act_slopes[layer]));
    return t.leaky_relu(h, Real(0.2));
  }

  Var backbone(Tape<Real>& t, Binder<Real>& bind, Var x, const GraphContext& ctx) const {
    Var h = x;
    for (int l = 0; l < num_layers(); ++l) {
      h = kind == Backbone::gat ? gat_layers[l].forward(t, bind, h, ctx)
                                : gin_layers[l].forward(t, bind, h, ctx);
      h = activate(t, bind, h, l);
    }
    return h;
  }

  Var forward(Tape<Real>& t, Binder<Real>& bind, Var x, const GraphContext& ctx) const {
    return projector.forward(t, bind, backbone(t, bind, x, ctx));
  }

  void collect(std::vector<Param<Real>*>& out) {
    if (kind == Backbone::gat)
      for (auto& l : gat_layers) l.collect(out);
    else
      for (auto& l : gin_layers) l.collect(out);
    for (auto& s : act_slopes) out.push_back(&s);
    projector.collect(out);
  }
};

// One graph layer that spreads information to masked positions, then an
// MLP that maps back to the latent dimension.
template <typename Real>
struct PredictorNet {
  Backbone kind = Backbone::gat;
  std::string nonlinearity = "prelu";
  GatLayer<Real> gat;
  GinLayer<Real> gin;
  Param<Real> act_slope;
  LinearLayer<Real> mlp;

  Var forward(Tape<Real>& t, Binder<Real>& bind, Var z, const GraphContext& ctx) const {
    Var h = kind == Backbone::gat ? gat.forward(t, bind, z, ctx) : gin.forward(t, bind, z, ctx);
    h = nonlinearity == "prelu" ? t.prelu(h, bind(act_slope)) : t.leaky_relu(h, Real(0.2));
    return mlp.forward(t, bind, h);
  }
  void collect(std::vector<Param<Real>*>& out) {
    if (kind == Backbone::gat)
      gat.collect(out);
    else
      gin.collect(out);
    out.push_back(&act_slope);
    mlp.collect(out);
  }
};

// The full model: online encoder, momentum encoder (identical shapes,
// updated only by EMA), predictor, decoder, and the two mask tokens.
template <typename Real>
struct RareModel {
  RunConfig cfg;
  int attr_dim = 0;
  Encoder<Real> online;
  Encoder<Real> target;
  PredictorNet<Real> predictor;
  LinearLayer<Real> decoder;
  Param<Real> raw_token;     // 1 x D
  Param<Real> latent_token;  // 1 x d

  static RareModel init(const RunConfig& cfg, int attr_dim, uint64_t seed);

  // Parameters updated by Adam, in a fixed order.
  std::vector<Param<Real>*> online_params() {
    std::vector<Param<Real>*> out;
    online.collect(out);
    predictor.collect(out);
    decoder.collect(out);
    if (!cfg.zero_tokens) {
      out.push_back(&raw_token);
      out.push_back(&latent_token);
    }
    return out;
  }
  std::vector<Param<Real>*> momentum_params() {
    std::vector<Param<Real>*> out;
    target.collect(out);
    return out;
  }
  // Canonical enumeration for checkpoints (includes the momentum copy and
  // tokens regardless of ablation flags).
  std::vector<Param<Real>*> all_params() {
    std::vector<Param<Real>*> out;
    online.collect(out);
    target.collect(out);
    predictor.collect(out);
    decoder.collect(out);
    out.push_back(&raw_token);
    out.push_back(&latent_token);
    return out;
  }
};

namespace detail {

template <typename Real>
GatLayer<Real> make_gat_layer(const std::string& prefix, int in_dim, int out_dim, int heads,
                              std::mt19937_64& seeds) {
  GatLayer<Real> l;
  l.heads = heads;
  const int head_dim = out_dim / heads;
  for (int k = 0; k < heads; ++k) {
    const std::string h = prefix + ".h" + std::to_string(k);
    l.W.push_back(xavier_init<Real>(h + ".W", in_dim, head_dim, seeds()));
    l.a_src.push_back(xavier_init<Real>(h + ".a_src", head_dim, 1, seeds()));
    l.a_dst.push_back(xavier_init<Real>(h + ".a_dst", head_dim, 1, seeds()));
  }
  l.bias = Param<Real>(prefix + ".bias", 1, out_dim, std::vector<Real>(out_dim, Real(0)));
  return l;
}

template <typename Real>
LinearLayer<Real> make_linear(const std::string& prefix, int in_dim, int out_dim,
                              std::mt19937_64& seeds) {
  LinearLayer<Real> l;
  l.W = xavier_init<Real>(prefix + ".W", in_dim, out_dim, seeds());
  l.b = Param<Real>(prefix + ".b", 1, out_dim, std::vector<Real>(out_dim, Real(0)));
  return l;
}

template <typename Real>
Param<Real> make_slope(const std::string& name) {
  return Param<Real>(name, 1, 1, {Real(0.25)});
}

template <typename Real>
GinLayer<Real> make_gin_layer(const std::string& prefix, int in_dim, int out_dim,
                              std::mt19937_64& seeds) {
  GinLayer<Real> l;
  l.lin1 = make_linear<Real>(prefix + ".lin1", in_dim, out_dim, seeds);
  l.inner_slope = make_slope<Real>(prefix + ".inner_slope");
  l.lin2 = make_linear<Real>(prefix + ".lin2", out_dim, out_dim, seeds);
  return l;
}

template <typename Real>
Encoder<Real> make_encoder(const std::string& prefix, const RunConfig& cfg, int attr_dim,
                           std::mt19937_64& seeds) {
  Encoder<Real> e;
  e.kind = cfg.backbone;
  e.nonlinearity = cfg.nonlinearity;
  int in_dim = attr_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    if (cfg.backbone == Backbone::gat)
      e.gat_layers.push_back(make_gat_layer<Real>(p, in_dim, cfg.hidden, cfg.heads, seeds));
    else
      e.gin_layers.push_back(make_gin_layer<Real>(p, in_dim, cfg.hidden, seeds));
    e.act_slopes.push_back(make_slope<Real>(p + ".slope"));
    in_dim = cfg.hidden;
  }
  e.projector = make_linear<Real>(prefix + ".proj", cfg.hidden, cfg.latent_dim, seeds);
  return e;
}

}  // namespace detail

template <typename Real>
RareModel<Real> RareModel<Real>::init(const RunConfig& cfg, int attr_dim, uint64_t seed) {
  cfg.validate();
  if (attr_dim < 1) throw config_error("model init: attribute dimension must be >= 1");
  RareModel<Real> m;
  m.cfg = cfg;
  m.attr_dim = attr_dim;
  std::mt19937_64 seeds(seed);
  m.online = detail::make_encoder<Real>("online", cfg, attr_dim, seeds);
  m.predictor.kind = cfg.backbone;
  m.predictor.nonlinearity = cfg.nonlinearity;
  if (cfg.backbone == Backbone::gat)
    m.predictor.gat =
        detail::make_gat_layer<Real>("pred.g", cfg.latent_dim, cfg.hidden, cfg.heads, seeds);
  else
    m.predictor.gin = detail::make_gin_layer<Real>("pred.g", cfg.latent_dim, cfg.hidden, seeds);
  m.predictor.act_slope = detail::make_slope<Real>("pred.slope");
  m.predictor.mlp = detail::make_linear<Real>("pred.mlp", cfg.hidden, cfg.latent_dim, seeds);
  m.decoder = detail::make_linear<Real>("decoder", cfg.latent_dim, attr_dim, seeds);
  if (cfg.zero_tokens) {
    m.raw_token = Param<Real>("token.raw", 1, attr_dim, std::vector<Real>(attr_dim, Real(0)));
    m.latent_token =
        Param<Real>("token.latent", 1, cfg.latent_dim, std::vector<Real>(cfg.latent_dim, Real(0)));
  } else {
    m.raw_token = xavier_init<Real>("token.raw", 1, attr_dim, seeds());
    m.latent_token = xavier_init<Real>("token.latent", 1, cfg.latent_dim, seeds());
  }
  // momentum encoder starts as an exact copy of the online encoder
  m.target = m.online;
  std::vector<Param<Real>*> tp;
  m.target.collect(tp);
  for (auto* p : tp) p->name = "target." + p->name.substr(std::string("online.").size());
  return m;
}

// theta_m <- mu * theta_m + (1 - mu) * theta_g, elementwise.
template <typename Real>
void ema_update(const std::vector<Param<Real>*>& target, const std::vector<Param<Real>*>& online,
                double mu) {
  if (target.size() != online.size())
    throw dim_error("ema_update: parameter list lengths differ");
  const Real m = static_cast<Real>(mu);
  for (size_t k = 0; k < target.size(); ++k) {
    if (target[k]->size() != online[k]->size())
      throw dim_error("ema_update: shape mismatch at " + target[k]->name);
    for (size_t i = 0; i < target[k]->size(); ++i)
      target[k]->v[i] = m * target[k]->v[i] + (Real(1) - m) * online[k]->v[i];
  }
}

// Dense n x D input of a masked view: raw attributes at own-role rows, the
// raw token broadcast to the others. Token rows carry gradient only through
// a trainable binder.
template <typename Real>
Var view_input(Tape<Real>& t, Binder<Real>& bind, const RareModel<Real>& m,
               const MaskedGraphView& view) {
  const SparseGraph& g = *view.graph;
  const int n = g.num_nodes();
  const int D = g.attr_dim();
  std::vector<Real> base(static_cast<size_t>(n) * D, Real(0));
  for (int i : view.own_idx())
    for (int j = 0; j < D; ++j)
      base[static_cast<size_t>(i) * D + j] = static_cast<Real>(g.attr(i, j));
  Var x = t.constant(n, D, std::move(base));
  const auto& tok_idx = view.token_idx();
  if (m.cfg.zero_tokens || tok_idx.empty()) return x;
  Var tok = t.scatter_rows(t.repeat_row(bind(m.raw_token), static_cast<int>(tok_idx.size())),
                           tok_idx, n);
  return t.add(x, tok);
}

// Whole-graph constant input (no masking, no tokens).
template <typename Real>
Var full_input(Tape<Real>& t, const SparseGraph& g) {
  std::vector<Real> data(g.attrs().begin(), g.attrs().end());
  return t.constant(g.num_nodes(), g.attr_dim(), std::move(data));
}

// Latent recomposition: visible rows from z_v, masked rows the latent token.
template <typename Real>
Var recompose(Tape<Real>& t, Binder<Real>& bind, Var z_v, const MaskPartition& part,
              const RareModel<Real>& m) {
  const int n = part.num_nodes();
  if (t.rows(z_v) != static_cast<int>(part.visible_idx.size()))
    throw dim_error("recompose: " + std::to_string(t.rows(z_v)) + " rows for " +
                    std::to_string(part.visible_idx.size()) + " visible nodes");
  Var out = t.scatter_rows(z_v, part.visible_idx, n);
  if (m.cfg.zero_tokens || part.masked_idx.empty()) return out;
  Var tok = t.scatter_rows(
      t.repeat_row(bind(m.latent_token), static_cast<int>(part.masked_idx.size())),
      part.masked_idx, n);
  return t.add(out, tok);
}

// Predictor forward restricted to the masked rows.
template <typename Real>
Var predict_masked(Tape<Real>& t, Binder<Real>& bind, const PredictorNet<Real>& p, Var z_tilde,
                   const GraphContext& ctx, const std::vector<int>& masked_idx) {
  if (masked_idx.empty()) throw config_error("predict_masked: empty masked set");
  return t.gather_rows(p.forward(t, bind, z_tilde, ctx), masked_idx);
}

// --- losses ---

// Mean over rows of the squared L2 row distance.
template <typename Real>
Var latent_matching_loss(Tape<Real>& t, Var pred, Var target, std::vector<double>* row_terms) {
  if (t.rows(pred) < 1) throw config_error("latent_matching_loss: needs >= 1 row");
  Var d = t.sub(pred, target);
  Var row = t.rowwise_inner(d, d);
  if (row_terms) row_terms->assign(t.value(row).begin(), t.value(row).end());
  return t.scale(t.sum(row), Real(1) / static_cast<Real>(t.rows(pred)));
}

// Mean over rows of the L1 row distance.
template <typename Real>
Var mae_loss(Tape<Real>& t, Var pred, Var target, std::vector<double>* row_terms) {
  if (t.rows(pred) < 1) throw config_error("mae_loss: needs >= 1 row");
  Var d = t.abs(t.sub(pred, target));
  Var ones = t.constant(t.cols(pred), 1, std::vector<Real>(t.cols(pred), Real(1)));
  Var row = t.matmul(d, ones);
  if (row_terms) row_terms->assign(t.value(row).begin(), t.value(row).end());
  return t.scale(t.sum(row), Real(1) / static_cast<Real>(t.rows(pred)));
}

// Scaled cosine error: -(1/m) sum_i t * log(clamp(1/2 + cos_i/2, 1e-12, 1)).
// The denominator is sqrt(|a|^2 |b|^2) with a floor, so identical rows give
// cosine exactly 1 and per-row loss exactly 0.
template <typename Real>
Var isce_loss(Tape<Real>& t, Var pred, Var target, Real scale_t,
              std::vector<double>* row_terms) {
  if (t.rows(pred) < 1) throw config_error("isce_loss: needs >= 1 row");
  if (scale_t < Real(1)) throw config_error("isce_loss: scale factor must be >= 1");
  Var dot_ab = t.rowwise_inner(pred, target);
  Var dot_aa = t.rowwise_inner(pred, pred);
  Var dot_bb = t.rowwise_inner(target, target);
  Var denom = t.power(t.clamp_min(t.mul(dot_aa, dot_bb), Real(1e-24)), Real(0.5));
  Var cosine = t.div(dot_ab, denom);
  Var term = t.clamp(t.affine(cosine, Real(0.5), Real(0.5)), Real(1e-12), Real(1));
  Var row = t.scale(t.log(term), -scale_t);
  if (row_terms) row_terms->assign(t.value(row).begin(), t.value(row).end());
  return t.scale(t.sum(row), Real(1) / static_cast<Real>(t.rows(pred)));
}

template <typename Real>
Var total_loss(Tape<Real>& t, Var loss_latent, Var loss_raw, Real alpha) {
  if (alpha < Real(0)) throw config_error("total_loss: alpha must be >= 0");
  return t.add(loss_latent, t.scale(loss_raw, alpha));
}

// --- training ---

struct StepResult {
  double loss = 0, loss_latent = 0, loss_raw = 0;
  std::vector<int> masked_idx;
  std::vector<double> latent_terms;  // per masked node
  std::vector<double> raw_terms;     // per masked node
};

// Momentum-branch output rows at the masked nodes, |V_m| x d. These are the
// latent matching targets; the training graph treats them as constants
// (detached), so finite-difference oracles freeze them across evaluations.
template <typename Real>
std::vector<Real> momentum_targets(const RareModel<Real>& model, const SparseGraph& g,
                                   const GraphContext& ctx, const MaskPartition& part) {
  Tape<Real> tape;
  Binder<Real> frozen(&tape, false);
  auto [gv, gm] = masked_views(g, part);
  Var x_m = model.cfg.momentum_input_full ? full_input<Real>(tape, g)
                                          : view_input(tape, frozen, model, gm);
  Var zm_all = model.target.forward(tape, frozen, x_m, ctx);
  Var z_m = tape.gather_rows(zm_all, part.masked_idx);
  return tape.value(z_m);
}

// One full forward/backward on a fresh tape; gradients land in the online
// params. The caller applies the optimizer and the EMA update. A non-null
// target_override replaces the momentum branch's output.
template <typename Real>
StepResult train_step(RareModel<Real>& model, const SparseGraph& g, const GraphContext& ctx,
                      const MaskPartition& part,
                      const std::vector<Real>* target_override = nullptr) {
  const RunConfig& cfg = model.cfg;
  Tape<Real> tape;
  Binder<Real> bind(&tape, true);
  Binder<Real> frozen(&tape, false);

  for (auto* p : model.online_params()) p->zero_grad();

  auto [gv, gm] = masked_views(g, part);
  const auto& masked_idx = part.masked_idx;
  if (masked_idx.empty()) throw config_error("train_step: no masked nodes");
  if (part.visible_idx.empty()) throw config_error("train_step: no visible nodes");
  const int m = static_cast<int>(masked_idx.size());

  Var x_v = view_input(tape, bind, model, gv);
  Var z_all = model.online.forward(tape, bind, x_v, ctx);

  Var zhat_m;
  if (cfg.no_predictor) {
    zhat_m = tape.gather_rows(z_all, masked_idx);
  } else {
    Var z_v = tape.gather_rows(z_all, part.visible_idx);
    Var z_tilde = recompose(tape, bind, z_v, part, model);
    zhat_m = predict_masked(tape, bind, model.predictor, z_tilde, ctx, masked_idx);
  }

  StepResult res;
  res.masked_idx = masked_idx;

  Var loss_latent;
  if (cfg.no_momentum_encoder) {
    loss_latent = tape.scalar_const(Real(0));
    res.latent_terms.assign(m, 0.0);
  } else {
    Var z_m;
    if (target_override) {
      z_m = tape.constant(m, cfg.latent_dim, *target_override);
    } else {
      Var x_m = cfg.momentum_input_full ? full_input<Real>(tape, g)
                                        : view_input(tape, frozen, model, gm);
      Var zm_all = model.target.forward(tape, frozen, x_m, ctx);
      z_m = tape.gather_rows(zm_all, masked_idx);
    }
    switch (cfg.latent_loss) {
      case LatentLoss::mse:
        loss_latent = latent_matching_loss(tape, zhat_m, z_m, &res.latent_terms);
        break;
      case LatentLoss::mae:
        loss_latent = mae_loss(tape, zhat_m, z_m, &res.latent_terms);
        break;
      case LatentLoss::isce:
        loss_latent =
            isce_loss(tape, zhat_m, z_m, static_cast<Real>(cfg.scale_t), &res.latent_terms);
        break;
    }
  }

  Var xhat_m = model.decoder.forward(tape, bind, zhat_m);
  std::vector<Real> xm_data(static_cast<size_t>(m) * g.attr_dim());
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < g.attr_dim(); ++j)
      xm_data[static_cast<size_t>(r) * g.attr_dim() + j] =
          static_cast<Real>(g.attr(masked_idx[r], j));
  Var x_m_raw = tape.constant(m, g.attr_dim(), std::move(xm_data));

  Var loss_raw;
  if (cfg.raw_loss == RawLoss::isce)
    loss_raw = isce_loss(tape, xhat_m, x_m_raw, static_cast<Real>(cfg.scale_t), &res.raw_terms);
  else
    loss_raw = latent_matching_loss(tape, xhat_m, x_m_raw, &res.raw_terms);

  Var loss = total_loss(tape, loss_latent, loss_raw, static_cast<Real>(cfg.alpha));

  tape.backward(loss);
  bind.write_grads();

  res.loss = static_cast<double>(tape.scalar(loss));
  res.loss_latent = static_cast<double>(tape.scalar(loss_latent));
  res.loss_raw = static_cast<double>(tape.scalar(loss_raw));
  return res;
}

struct TrainRecord {
  int iter = 0;
  double loss = 0, loss_latent = 0, loss_raw = 0;
  double wall_ms = 0;  // kept out of the metrics CSV (non-deterministic)
};

struct TrainReport {
  std::vector<TrainRecord> rows;
};

template <typename Real>
struct PretrainResult {
  RareModel<Real> model;
  TrainReport report;
};

using StepObserver = std::function<void(int iter, const StepResult&)>;

// Full pre-training loop: draw mask, build views, forward, both losses,
// Adam on the online params, EMA on the momentum encoder. Deterministic
// per seed; aborts on a non-finite loss.
template <typename Real>
PretrainResult<Real> pretrain(const SparseGraph& g, const RunConfig& cfg, uint64_t seed,
                              const StepObserver& observer = {}) {
  cfg.validate();
  if (!(cfg.mask_ratio > 0.0 && cfg.mask_ratio < 1.0))
    throw config_error("pretrain: --mask-ratio must be in (0,1)");

  PretrainResult<Real> out;
  out.model = RareModel<Real>::init(cfg, g.attr_dim(), seed);
  GraphContext ctx = GraphContext::build(g);

  auto online = out.model.online_params();
  auto momentum = out.model.momentum_params();
  std::vector<Param<Real>*> online_enc;
  out.model.online.collect(online_enc);

  AdamState<Real> adam;
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  adam.init(online, acfg);

  std::mt19937_64 mask_seeds(seed ^ 0x9e3779b97f4a7c15ull);
  const double mu = cfg.ema_swap ? 1.0 - cfg.momentum : cfg.momentum;

  for (int iter = 0; iter < cfg.epochs; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    MaskPartition part = draw_mask(g.num_nodes(), cfg.mask_ratio, mask_seeds());
    StepResult step = train_step(out.model, g, ctx, part);
    if (!std::isfinite(step.loss))
      throw numeric_error("pretrain: non-finite loss at iteration " + std::to_string(iter) +
                          " (L=" + std::to_string(step.loss) +
                          ", L_M=" + std::to_string(step.loss_latent) +
                          ", L_R=" + std::to_string(step.loss_raw) + ")");
    adam_step(online, adam);
    if (!cfg.no_momentum_encoder) ema_update(momentum, online_enc, mu);
    const auto t1 = std::chrono::steady_clock::now();
    TrainRecord rec;
    rec.iter = iter;
    rec.loss = step.loss;
    rec.loss_latent = step.loss_latent;
    rec.loss_raw = step.loss_raw;
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.report.rows.push_back(rec);
    if (observer) observer(iter, step);
  }
  return out;
}

// Pre-training over a multi-graph dataset: each iteration composes the next
// mini-batch block-diagonally and runs one step on it.
template <typename Real>
PretrainResult<Real> pretrain_dataset(const GraphDataset& ds, const RunConfig& cfg, uint64_t seed,
                                      const StepObserver& observer = {}) {
  cfg.validate();
  if (!(cfg.mask_ratio > 0.0 && cfg.mask_ratio < 1.0))
    throw config_error("pretrain: --mask-ratio must be in (0,1)");
  if (ds.graphs.empty()) throw config_error("pretrain: empty dataset");

  PretrainResult<Real> out;
  out.model = RareModel<Real>::init(cfg, ds.attr_dim, seed);

  auto online = out.model.online_params();
  auto momentum = out.model.momentum_params();
  std::vector<Param<Real>*> online_enc;
  out.model.online.collect(online_enc);

  AdamState<Real> adam;
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  adam.init(online, acfg);

  std::mt19937_64 mask_seeds(seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 shuffle_rng(seed ^ 0x6a09e667f3bcc908ull);
  const double mu = cfg.ema_swap ? 1.0 - cfg.momentum : cfg.momentum;
  const int num_graphs = static_cast<int>(ds.graphs.size());
  const int batch = std::min(cfg.batch_size, num_graphs);

  std::vector<int> order(num_graphs);
  for (int i = 0; i < num_graphs; ++i) order[i] = i;
  int pos = num_graphs;  // forces a shuffle before the first batch

  for (int iter = 0; iter < cfg.epochs; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SparseGraph> members;
    for (int b = 0; b < batch; ++b) {
      if (pos >= num_graphs) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        pos = 0;
      }
      members.push_back(ds.graphs[order[pos++]]);
    }
    SparseGraph composed = block_diagonal(members);
    GraphContext ctx = GraphContext::build(composed);
    MaskPartition part = draw_mask(composed.num_nodes(), cfg.mask_ratio, mask_seeds());
    StepResult step = train_step(out.model, composed, ctx, part);
    if (!std::isfinite(step.loss))
      throw numeric_error("pretrain: non-finite loss at iteration " + std::to_string(iter) +
                          " (L=" + std::to_string(step.loss) +
                          ", L_M=" + std::to_string(step.loss_latent) +
                          ", L_R=" + std::to_string(step.loss_raw) + ")");
    adam_step(online, adam);
    if (!cfg.no_momentum_encoder) ema_update(momentum, online_enc, mu);
    const auto t1 = std::chrono::steady_clock::now();
    TrainRecord rec;
    rec.iter = iter;
    rec.loss = step.loss;
    rec.loss_latent = step.loss_latent;
    rec.loss_raw = step.loss_raw;
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.report.rows.push_back(rec);
    if (observer) observer(iter, step);
  }
  return out;
}

// Inference embedding: the whole graph through the online backbone only
// (projector excluded), no masks, no tokens. Returns n x hidden row-major.
template <typename Real>
std::vector<double> embed(const RareModel<Real>& model, const SparseGraph& g) {
  if (g.attr_dim() != model.attr_dim)
    throw config_error("embed: graph attribute dimension " + std::to_string(g.attr_dim()) +
                       " != model dimension " + std::to_string(model.attr_dim));
  GraphContext ctx = GraphContext::build(g);
  Tape<Real> tape;
  Binder<Real> frozen(&tape, false);
  Var h = model.online.backbone(tape, frozen, full_input<Real>(tape, g), ctx);
  const auto& v = tape.value(h);
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace rare
