#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rare/masking.hpp"
#include "rare/model.hpp"

namespace rare {

struct GradCheckResult {
  double max_rel_error = 0.0;
  long entries_checked = 0;
  std::string worst_param;
};

namespace gradcheck_detail {

inline double step_loss(const RareModel<double>& model, const SparseGraph& g,
                        const GraphContext& ctx, const MaskPartition& part,
                        const std::vector<double>* targets) {
  RareModel<double> copy = model;
  return train_step(copy, g, ctx, part, targets).loss;
}

inline void sweep(const RareModel<double>& model, const SparseGraph& g, const GraphContext& ctx,
                  const MaskPartition& part, GradCheckResult& res) {
  // the matching targets are detached constants, so the finite-difference
  // oracle holds them fixed while perturbing the online parameters
  std::vector<double> targets;
  const std::vector<double>* targets_ptr = nullptr;
  if (!model.cfg.no_momentum_encoder) {
    targets = momentum_targets(model, g, ctx, part);
    targets_ptr = &targets;
  }
  RareModel<double> work = model;
  train_step(work, g, ctx, part, targets_ptr);
  auto params = work.online_params();
  const double h = 1e-5;
  for (size_t k = 0; k < params.size(); ++k)
    for (size_t j = 0; j < params[k]->size(); ++j) {
      RareModel<double> probe = model;
      auto pp = probe.online_params();
      pp[k]->v[j] += h;
      const double up = step_loss(probe, g, ctx, part, targets_ptr);
      pp[k]->v[j] -= 2 * h;
      const double down = step_loss(probe, g, ctx, part, targets_ptr);
      const double fd = (up - down) / (2 * h);
      const double grad = params[k]->g[j];
      const double rel = std::fabs(fd - grad) / std::max({std::fabs(fd), std::fabs(grad), 1e-3});
      ++res.entries_checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = params[k]->name;
      }
    }
}

}  // namespace gradcheck_detail

// Central finite differences (f64, step 1e-5) against the tape gradients on
// an 8-node random graph with D=5, d=4, for the total loss and for each loss
// alone, across `num_seeds` model/mask seeds.
inline GradCheckResult run_gradcheck(uint64_t seed, int num_seeds = 10) {
  GradCheckResult res;
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j)
      if (rng() % 3 == 0) edges.emplace_back(i, j);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> attrs(40);
  for (auto& a : attrs) a = u(rng);
  SparseGraph g = SparseGraph::build(8, 5, std::move(edges), std::move(attrs));
  GraphContext ctx = GraphContext::build(g);

  RunConfig base;
  base.layers = 2;
  base.heads = 2;
  base.hidden = 8;
  base.latent_dim = 4;

  for (int s = 0; s < num_seeds; ++s) {
    const uint64_t model_seed = seed + 1000ull * (s + 1);
    MaskPartition part = draw_mask(8, 0.5, seed + 31ull * s);
    {
      RunConfig cfg = base;  // total loss
      auto model = RareModel<double>::init(cfg, 5, model_seed);
      gradcheck_detail::sweep(model, g, ctx, part, res);
    }
    {
      RunConfig cfg = base;  // latent matching loss alone
      cfg.alpha = 0.0;
      auto model = RareModel<double>::init(cfg, 5, model_seed);
      gradcheck_detail::sweep(model, g, ctx, part, res);
    }
    {
      RunConfig cfg = base;  // reconstruction loss alone
      cfg.no_momentum_encoder = true;
      cfg.alpha = 1.0;
      auto model = RareModel<double>::init(cfg, 5, model_seed);
      gradcheck_detail::sweep(model, g, ctx, part, res);
    }
  }
  return res;
}

}  // namespace rare
