#include "rare/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "rare/errors.hpp"
#include "rare/optim.hpp"
#include "rare/tape.hpp"

namespace rare {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Split {
  std::vector<int> train, val, test;
};

Split make_split(int n, SplitFractions f, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_train = std::max(1, static_cast<int>(f.train * n));
  const int n_val = std::max(1, static_cast<int>(f.val * n));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + std::min(n, n_train + n_val));
  s.test.assign(idx.begin() + std::min(n, n_train + n_val), idx.end());
  return s;
}

bool covers_all_classes(const std::vector<int>& train, const std::vector<int>& labels,
                        int num_classes) {
  std::vector<uint8_t> seen(num_classes, 0);
  for (int i : train) seen[labels[i]] = 1;
  return std::all_of(seen.begin(), seen.end(), [](uint8_t b) { return b != 0; });
}

// accuracy and mean cross-entropy of the affine classifier on a subset
std::pair<double, double> evaluate_on(const std::vector<int>& subset,
                                      const std::vector<double>& emb, int dim,
                                      const std::vector<int>& labels, const Param<double>& W,
                                      const Param<double>& b, int num_classes) {
  if (subset.empty()) return {0.0, 0.0};
  int correct = 0;
  double ce = 0.0;
  std::vector<double> logits(num_classes);
  for (int i : subset) {
    for (int c = 0; c < num_classes; ++c) {
      double acc = b.v[c];
      for (int j = 0; j < dim; ++j)
        acc += emb[static_cast<size_t>(i) * dim + j] * W.v[static_cast<size_t>(j) * num_classes + c];
      logits[c] = acc;
    }
    int best = 0;
    double mx = logits[0];
    for (int c = 1; c < num_classes; ++c) {
      if (logits[c] > logits[best]) best = c;
      mx = std::max(mx, logits[c]);
    }
    double denom = 0.0;
    for (int c = 0; c < num_classes; ++c) denom += std::exp(logits[c] - mx);
    ce += -(logits[labels[i]] - mx - std::log(denom));
    correct += best == labels[i];
  }
  return {static_cast<double>(correct) / subset.size(), ce / subset.size()};
}

double run_probe_once(const std::vector<double>& emb, int dim, const std::vector<int>& labels,
                      int num_classes, const Split& split, uint64_t seed) {
  const int n_train = static_cast<int>(split.train.size());
  Param<double> W = xavier_init<double>("probe.W", dim, num_classes, seed);
  Param<double> b("probe.b", 1, num_classes, std::vector<double>(num_classes, 0.0));
  std::vector<Param<double>*> params{&W, &b};
  AdamState<double> adam;
  AdamConfig acfg;
  acfg.lr = 5e-2;
  adam.init(params, acfg);

  std::vector<double> x_train(static_cast<size_t>(n_train) * dim);
  std::vector<int> target_idx(n_train);
  for (int r = 0; r < n_train; ++r) {
    const int i = split.train[r];
    std::copy(emb.begin() + static_cast<size_t>(i) * dim,
              emb.begin() + static_cast<size_t>(i + 1) * dim,
              x_train.begin() + static_cast<size_t>(r) * dim);
    target_idx[r] = r * num_classes + labels[i];
  }
  std::vector<int> segments(static_cast<size_t>(n_train) * num_classes);
  for (int r = 0; r < n_train; ++r)
    for (int c = 0; c < num_classes; ++c) segments[static_cast<size_t>(r) * num_classes + c] = r;

  const int max_epochs = 500;
  const int patience = 20;
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<double> best_W = W.v, best_b = b.v;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    Tape<double> tape;
    for (auto* p : params) p->zero_grad();
    Var xv = tape.constant(n_train, dim, x_train);
    Var wv = tape.leaf(W.rows, W.cols, W.v);
    Var bv = tape.leaf(b.rows, b.cols, b.v);
    Var logits = tape.add_rowvec(tape.matmul(xv, wv), bv);
    Var flat = tape.reshape(logits, n_train * num_classes, 1);
    Var probs = tape.segment_softmax(flat, segments);
    Var picked = tape.gather_rows(probs, target_idx);
    Var ce = tape.scale(tape.sum(tape.log(tape.clamp_min(picked, 1e-300))),
                        -1.0 / static_cast<double>(n_train));
    // L2 on the weights keeps the boundary near max-margin when the train
    // split is tiny; the bias is left unpenalized
    Var loss = tape.add(ce, tape.scale(tape.sum(tape.mul(wv, wv)), 0.05));
    tape.backward(loss);
    W.g = tape.grad(wv);
    b.g = tape.grad(bv);
    adam_step(params, adam);

    // patience runs on validation accuracy; the validation loss breaks
    // plateau ties so a coarse accuracy (few validation points) cannot
    // freeze an underfit classifier
    const auto& probe_set = split.val.empty() ? split.train : split.val;
    auto [val_acc, val_loss] = evaluate_on(probe_set, emb, dim, labels, W, b, num_classes);
    const bool better =
        val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss - 1e-12);
    if (better) {
      best_acc = val_acc;
      best_loss = val_loss;
      best_W = W.v;
      best_b = b.v;
      since_best = 0;
    } else if (++since_best >= patience) {
      break;
    }
  }
  W.v = best_W;
  b.v = best_b;
  return evaluate_on(split.test, emb, dim, labels, W, b, num_classes).first;
}

}  // namespace

ProbeResult linear_probe(const std::vector<double>& embeddings, int num_rows, int dim,
                         const std::vector<int>& labels, SplitFractions split, int runs,
                         uint64_t seed, int jobs) {
  if (labels.size() != static_cast<size_t>(num_rows))
    throw dim_error("linear_probe: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(num_rows) + " rows");
  if (embeddings.size() != static_cast<size_t>(num_rows) * dim)
    throw dim_error("linear_probe: embedding size != num_rows*dim");
  if (runs < 1) throw config_error("linear_probe: runs must be >= 1");
  if (jobs < 1) throw config_error("linear_probe: jobs must be >= 1");
  const double frac_sum = split.train + split.val + split.test;
  if (std::fabs(frac_sum - 1.0) > 1e-9)
    throw config_error("linear_probe: split fractions must sum to 1");
  int num_classes = 0;
  for (int l : labels) {
    if (l < 0) throw config_error("linear_probe: negative label");
    num_classes = std::max(num_classes, l + 1);
  }
  if (num_classes < 2) throw config_error("linear_probe: need at least 2 classes");

  // splits are sampled up front so the run loop is embarrassingly parallel
  std::vector<Split> splits(runs);
  ProbeResult result;
  for (int run = 0; run < runs; ++run) {
    uint64_t run_seed = seed + static_cast<uint64_t>(run);
    bool ok = false;
    for (int attempt = 0; attempt < 10; ++attempt) {
      std::mt19937_64 rng(run_seed + static_cast<uint64_t>(attempt) * 1000003ull);
      splits[run] = make_split(num_rows, split, rng);
      if (covers_all_classes(splits[run].train, labels, num_classes)) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw config_error("linear_probe: could not sample a train split covering all classes "
                         "in 10 attempts");
    result.seeds.push_back(run_seed);
  }
  result.accuracies.assign(runs, 0.0);
  auto worker = [&](int begin, int step) {
    for (int run = begin; run < runs; run += step)
      result.accuracies[run] =
          run_probe_once(embeddings, dim, labels, num_classes, splits[run], result.seeds[run]);
  };
  if (jobs <= 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, runs);
    for (int tid = 0; tid < n_threads; ++tid) pool.emplace_back(worker, tid, n_threads);
    for (auto& th : pool) th.join();
  }
  result.train_size = static_cast<int>(splits[0].train.size());
  result.val_size = static_cast<int>(splits[0].val.size());
  result.test_size = static_cast<int>(splits[0].test.size());
  double mean = 0;
  for (double a : result.accuracies) mean += a;
  mean /= result.accuracies.size();
  double var = 0;
  for (double a : result.accuracies) var += (a - mean) * (a - mean);
  result.mean_accuracy = mean;
  result.std_accuracy = result.accuracies.size() > 1
                            ? std::sqrt(var / (result.accuracies.size() - 1))
                            : 0.0;
  return result;
}

std::vector<double> pool_graph(const std::vector<double>& embeddings, int num_rows, int dim,
                               PoolMode mode) {
  if (num_rows < 1) throw config_error("pool_graph: empty graph");
  if (embeddings.size() != static_cast<size_t>(num_rows) * dim)
    throw dim_error("pool_graph: embedding size != num_rows*dim");
  std::vector<double> out(embeddings.begin(), embeddings.begin() + dim);
  for (int i = 1; i < num_rows; ++i)
    for (int j = 0; j < dim; ++j) {
      const double v = embeddings[static_cast<size_t>(i) * dim + j];
      if (mode == PoolMode::max)
        out[j] = std::max(out[j], v);
      else
        out[j] += v;
    }
  if (mode == PoolMode::mean)
    for (double& v : out) v /= num_rows;
  return out;
}

std::pair<SparseGraph, std::vector<int>> make_adversarial(const SparseGraph& g,
                                                          double outlier_fraction,
                                                          uint64_t seed) {
  if (!(outlier_fraction > 0.0 && outlier_fraction < 1.0))
    throw config_error("make_adversarial: outlier fraction must be in (0,1)");
  const int n = g.num_nodes();
  const int count = static_cast<int>(std::floor(outlier_fraction * n + 1e-9));
  std::mt19937_64 rng(seed);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<int> outliers(idx.begin(), idx.begin() + count);
  std::sort(outliers.begin(), outliers.end());

  std::vector<double> attrs = g.attrs();
  const int dim = g.attr_dim();
  for (int i : outliers) {
    auto begin = attrs.begin() + static_cast<size_t>(i) * dim;
    std::shuffle(begin, begin + dim, rng);
  }
  return {g.with_attrs(std::move(attrs)), std::move(outliers)};
}

namespace detail {
double group_mean(const std::vector<int>& members, const std::vector<uint8_t>& in_group,
                  const std::vector<double>& terms) {
  double sum = 0;
  int count = 0;
  for (size_t r = 0; r < members.size(); ++r)
    if (in_group[members[r]]) {
      sum += terms[r];
      ++count;
    }
  return count ? sum / count : std::numeric_limits<double>::quiet_NaN();
}
}  // namespace detail

std::string metrics_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "iter,L,L_M,L_R\n";
  for (const auto& r : report.rows)
    out << r.iter << ',' << fmt(r.loss) << ',' << fmt(r.loss_latent) << ','
        << fmt(r.loss_raw) << '\n';
  return out.str();
}

std::string robustness_csv(const RobustnessTrace& trace) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt(v); };
  std::ostringstream out;
  out << "iter,L,L_M,L_R,L_R_outlier,L_R_normal,L_M_outlier,L_M_normal\n";
  for (size_t i = 0; i < trace.report.rows.size(); ++i) {
    const auto& r = trace.report.rows[i];
    out << r.iter << ',' << fmt(r.loss) << ',' << fmt(r.loss_latent) << ',' << fmt(r.loss_raw)
        << ',' << cell(trace.raw_outlier[i]) << ',' << cell(trace.raw_normal[i]) << ','
        << cell(trace.latent_outlier[i]) << ',' << cell(trace.latent_normal[i]) << '\n';
  }
  return out.str();
}

std::string probe_csv(const ProbeResult& result) {
  std::ostringstream out;
  out << "run,seed,accuracy\n";
  for (size_t i = 0; i < result.accuracies.size(); ++i)
    out << i << ',' << result.seeds[i] << ',' << fmt(result.accuracies[i]) << '\n';
  return out.str();
}

}  // namespace rare
