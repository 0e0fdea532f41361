#pragma once

#include <cstdint>
#include <vector>

#include "rare/graph.hpp"

namespace rare {

// Random binary node partition. mask[i] == 1 means node i is visible,
// 0 means masked; visible_idx and masked_idx are its sorted index sets.
struct MaskPartition {
  std::vector<uint8_t> mask;
  std::vector<int> visible_idx;
  std::vector<int> masked_idx;
  double ratio = 0.0;

  int num_nodes() const { return static_cast<int>(mask.size()); }
  bool is_visible(int i) const { return mask[i] != 0; }
};

// Each node is masked independently with probability r. For 0 < r < 1 a
// draw that leaves either side empty is redrawn with seed+1 (the losses
// divide by the masked count and the encoder needs a visible node); for
// r == 0 or r == 1 the degenerate result is returned as drawn.
MaskPartition draw_mask(int num_nodes, double r, uint64_t seed);

MaskPartition invert(const MaskPartition& p);

enum class ViewRole {
  visible,  // raw attributes at visible nodes, token elsewhere
  masked,   // raw attributes at masked nodes, token elsewhere
};

// Complementary masked view of a graph: same edges, per-node input row is
// the raw attribute when the node plays the view's role and the raw token
// otherwise. Row materialization is done by the model (the token is a
// trainable vector), so this is just the binding.
struct MaskedGraphView {
  const SparseGraph* graph = nullptr;
  const MaskPartition* partition = nullptr;
  ViewRole role = ViewRole::visible;

  const std::vector<int>& own_idx() const {
    return role == ViewRole::visible ? partition->visible_idx : partition->masked_idx;
  }
  const std::vector<int>& token_idx() const {
    return role == ViewRole::visible ? partition->masked_idx : partition->visible_idx;
  }
};

// (G_v, G_m): the visible-role view and its complement. Both share the
// base graph's edge set.
std::pair<MaskedGraphView, MaskedGraphView> masked_views(const SparseGraph& g,
                                                         const MaskPartition& p);

}  // namespace rare
