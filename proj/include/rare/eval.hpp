#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rare/config.hpp"
#include "rare/graph.hpp"
#include "rare/model.hpp"

namespace rare {

struct SplitFractions {
  double train = 0.1;
  double val = 0.1;
  double test = 0.8;
};

struct ProbeResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<double> accuracies;  // per run
  std::vector<uint64_t> seeds;     // per run
  int train_size = 0, val_size = 0, test_size = 0;
};

// Multinomial logistic regression on frozen embeddings: one affine layer +
// softmax cross-entropy, full-batch Adam, early stop on validation accuracy
// (patience 20, max 500 epochs). Accuracy on the test split, averaged over
// `runs` reseeded splits. A split missing a train-set class is resampled
// with the next seed, up to 10 attempts. jobs > 1 runs the independent
// seeds on that many threads; results are identical either way.
ProbeResult linear_probe(const std::vector<double>& embeddings, int num_rows, int dim,
                         const std::vector<int>& labels, SplitFractions split, int runs,
                         uint64_t seed, int jobs = 1);

// Non-parameterized graph-level pooling over node embeddings.
std::vector<double> pool_graph(const std::vector<double>& embeddings, int num_rows, int dim,
                               PoolMode mode);

// Row-wise attribute shuffling on floor(fraction * n) randomly chosen
// nodes: each selected node's attribute entries are permuted uniformly at
// random within its own row. Edges and labels untouched.
std::pair<SparseGraph, std::vector<int>> make_adversarial(const SparseGraph& g,
                                                          double outlier_fraction,
                                                          uint64_t seed);

struct RobustnessTrace {
  std::vector<int> outlier_idx;
  // per iteration: mean per-node loss term over (masked AND group); NaN when
  // the group has no masked member that iteration
  std::vector<double> raw_outlier, raw_normal, latent_outlier, latent_normal;
  double acc_adversarial = 0.0;
  double acc_clean = 0.0;
  TrainReport report;
};

// Pre-train on the corrupted graph and track both node groups' per-term
// means at every iteration, then probe on the corrupted and clean graphs.
template <typename Real>
RobustnessTrace robustness_run(const SparseGraph& g, const RunConfig& cfg,
                               double outlier_fraction, uint64_t seed);

// CSV emitters. All numeric fields use %.17g so identical runs produce
// byte-identical files; NaN group means are written as empty fields.
std::string metrics_csv(const TrainReport& report);
std::string robustness_csv(const RobustnessTrace& trace);
std::string probe_csv(const ProbeResult& result);

namespace detail {
double group_mean(const std::vector<int>& members, const std::vector<uint8_t>& in_group,
                  const std::vector<double>& terms);
}

template <typename Real>
RobustnessTrace robustness_run(const SparseGraph& g, const RunConfig& cfg,
                               double outlier_fraction, uint64_t seed) {
  if (!(outlier_fraction > 0.0 && outlier_fraction < 1.0))
    throw config_error("robustness: outlier fraction must be in (0,1)");
  RobustnessTrace trace;
  auto [adv, outliers] = make_adversarial(g, outlier_fraction, seed);
  trace.outlier_idx = outliers;
  std::vector<uint8_t> is_outlier(g.num_nodes(), 0);
  for (int i : outliers) is_outlier[i] = 1;
  std::vector<uint8_t> is_normal(g.num_nodes(), 1);
  for (int i : outliers) is_normal[i] = 0;

  auto observer = [&](int, const StepResult& step) {
    trace.raw_outlier.push_back(detail::group_mean(step.masked_idx, is_outlier, step.raw_terms));
    trace.raw_normal.push_back(detail::group_mean(step.masked_idx, is_normal, step.raw_terms));
    trace.latent_outlier.push_back(
        detail::group_mean(step.masked_idx, is_outlier, step.latent_terms));
    trace.latent_normal.push_back(
        detail::group_mean(step.masked_idx, is_normal, step.latent_terms));
  };

  PretrainResult<Real> pre = pretrain<Real>(adv, cfg, seed, observer);
  trace.report = pre.report;

  if (g.has_labels()) {
    const int runs = 5;
    ProbeResult on_adv = linear_probe(embed(pre.model, adv), g.num_nodes(), cfg.hidden,
                                      g.labels(), SplitFractions{}, runs, seed + 1);
    ProbeResult on_clean = linear_probe(embed(pre.model, g), g.num_nodes(), cfg.hidden,
                                        g.labels(), SplitFractions{}, runs, seed + 1);
    trace.acc_adversarial = on_adv.mean_accuracy;
    trace.acc_clean = on_clean.mean_accuracy;
  }
  return trace;
}

}  // namespace rare
