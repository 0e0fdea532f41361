#include "rare/masking.hpp"

#include <random>

#include "rare/errors.hpp"

namespace rare {

MaskPartition draw_mask(int num_nodes, double r, uint64_t seed) {
  if (!(r >= 0.0 && r <= 1.0))
    throw config_error("draw_mask: mask ratio must be in [0,1], got " + std::to_string(r));
  // a graph with one node cannot have both sides non-empty
  const bool redraw_allowed = r > 0.0 && r < 1.0 && num_nodes >= 2;
  for (;; ++seed) {
    MaskPartition p;
    p.ratio = r;
    p.mask.resize(num_nodes);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < num_nodes; ++i) {
      const bool masked = unif(rng) < r;
      p.mask[i] = masked ? 0 : 1;
      (masked ? p.masked_idx : p.visible_idx).push_back(i);
    }
    if (!redraw_allowed || (!p.masked_idx.empty() && !p.visible_idx.empty())) return p;
  }
}

MaskPartition invert(const MaskPartition& p) {
  MaskPartition q;
  q.ratio = 1.0 - p.ratio;
  q.mask.resize(p.mask.size());
  for (size_t i = 0; i < p.mask.size(); ++i) q.mask[i] = p.mask[i] ? 0 : 1;
  q.visible_idx = p.masked_idx;
  q.masked_idx = p.visible_idx;
  return q;
}

std::pair<MaskedGraphView, MaskedGraphView> masked_views(const SparseGraph& g,
                                                         const MaskPartition& p) {
  if (p.num_nodes() != g.num_nodes())
    throw dim_error("masked_views: partition over " + std::to_string(p.num_nodes()) +
                    " nodes for a " + std::to_string(g.num_nodes()) + "-node graph");
  MaskedGraphView gv{&g, &p, ViewRole::visible};
  MaskedGraphView gm{&g, &p, ViewRole::masked};
  return {gv, gm};
}

}  // namespace rare
