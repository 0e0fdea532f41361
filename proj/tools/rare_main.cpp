#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rare/checkpoint.hpp"
#include "rare/config.hpp"
#include "rare/errors.hpp"
#include "rare/eval.hpp"
#include "rare/gradcheck.hpp"
#include "rare/graph.hpp"
#include "rare/model.hpp"

using namespace rare;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGradcheckFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw config_error(flag + ": not an integer: '" + cell + "'");
    }
  }
  if (out.empty()) throw config_error(flag + ": empty list");
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw parse_error(path + ": cannot open for writing");
  out << content;
}

void write_matrix_csv(const std::string& path, const std::vector<double>& m, int rows, int cols) {
  std::ostringstream out;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (j) out << ',';
      out << fmt(m[static_cast<size_t>(i) * cols + j]);
    }
    out << '\n';
  }
  write_file(path, out.str());
}

std::vector<double> load_matrix_csv(const std::string& path, int& rows, int& cols) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open");
  std::vector<double> data;
  rows = 0;
  cols = -1;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        data.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw parse_error(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      ++c;
    }
    if (cols == -1)
      cols = c;
    else if (c != cols)
      throw parse_error(path + ":" + std::to_string(lineno) + ": ragged row");
    ++rows;
  }
  if (rows == 0) throw parse_error(path + ": empty matrix");
  return data;
}

std::vector<int> load_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open");
  std::vector<int> labels;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw parse_error(path + ":" + std::to_string(lineno) + ": not an integer: '" + line + "'");
    }
  }
  return labels;
}

// Training flags shared by `pretrain` and `robustness`. Values come from,
// in increasing priority: built-in defaults, --config JSON, explicit flags,
// with RARE_SEED as the seed fallback when neither flag nor file set it.
struct TrainFlags {
  std::string config_path;
  std::string backbone = "gat", precision = "f64", nonlinearity = "prelu";
  std::string latent_loss = "mse", raw_loss = "isce", momentum_input = "masked";
  std::string pooling = "mean";
  double mask_ratio = 0, alpha = 0, scale_t = 0, momentum = 0, lr = 0;
  int layers = 0, heads = 0, hidden = 0, latent_dim = 0, epochs = 0, batch_size = 0;
  uint64_t seed = 0;
  bool no_predictor = false, no_momentum_encoder = false, zero_tokens = false, ema_swap = false;
  std::string graph_dir, dataset_dir, sbm_blocks, knn_points;
  double sbm_p_in = 0, sbm_p_out = 0, sbm_shift = 0;
  int sbm_dim = 0, knn_k = 0;

  CLI::Option *o_backbone = nullptr, *o_precision = nullptr, *o_nonlinearity = nullptr,
              *o_latent_loss = nullptr, *o_raw_loss = nullptr, *o_momentum_input = nullptr,
              *o_pooling = nullptr, *o_mask_ratio = nullptr, *o_alpha = nullptr,
              *o_scale_t = nullptr, *o_momentum = nullptr, *o_lr = nullptr, *o_layers = nullptr,
              *o_heads = nullptr, *o_hidden = nullptr, *o_latent_dim = nullptr,
              *o_epochs = nullptr, *o_batch = nullptr, *o_seed = nullptr,
              *o_no_predictor = nullptr, *o_no_momentum = nullptr, *o_zero_tokens = nullptr,
              *o_ema_swap = nullptr, *o_graph = nullptr, *o_dataset = nullptr, *o_sbm = nullptr,
              *o_sbm_p_in = nullptr, *o_sbm_p_out = nullptr, *o_sbm_dim = nullptr,
              *o_sbm_shift = nullptr, *o_knn_points = nullptr, *o_knn_k = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "flat JSON config; flags override its keys");
    o_backbone = app->add_option("--backbone", backbone)->check(CLI::IsMember({"gat", "gin"}));
    o_mask_ratio = app->add_option("--mask-ratio", mask_ratio);
    o_alpha = app->add_option("--alpha", alpha);
    o_scale_t = app->add_option("--scale-t", scale_t);
    o_momentum = app->add_option("--momentum", momentum);
    o_layers = app->add_option("--layers", layers);
    o_heads = app->add_option("--heads", heads);
    o_hidden = app->add_option("--hidden", hidden);
    o_latent_dim = app->add_option("--latent-dim", latent_dim);
    o_lr = app->add_option("--lr", lr);
    o_epochs = app->add_option("--epochs", epochs);
    o_batch = app->add_option("--batch-size", batch_size);
    o_seed = app->add_option("--seed", seed, "master seed (env RARE_SEED as fallback)");
    o_precision = app->add_option("--precision", precision)->check(CLI::IsMember({"f32", "f64"}));
    o_nonlinearity =
        app->add_option("--nonlinearity", nonlinearity)->check(CLI::IsMember({"prelu", "leaky_relu"}));
    o_no_predictor = app->add_flag("--no-predictor", no_predictor);
    o_no_momentum = app->add_flag("--no-momentum-encoder", no_momentum_encoder);
    o_momentum_input =
        app->add_option("--momentum-input", momentum_input)->check(CLI::IsMember({"masked", "full"}));
    o_zero_tokens = app->add_flag("--zero-tokens", zero_tokens);
    o_latent_loss =
        app->add_option("--latent-loss", latent_loss)->check(CLI::IsMember({"mse", "mae", "isce"}));
    o_raw_loss = app->add_option("--raw-loss", raw_loss)->check(CLI::IsMember({"mse", "isce"}));
    o_ema_swap = app->add_flag("--ema-swap", ema_swap);
    o_pooling = app->add_option("--pool", pooling)->check(CLI::IsMember({"mean", "max", "sum"}));
    o_graph = app->add_option("--graph", graph_dir, "graph directory (attrs.csv/edges.tsv)");
    o_dataset = app->add_option("--dataset", dataset_dir, "multi-graph dataset directory");
    o_sbm = app->add_option("--sbm", sbm_blocks, "SBM block sizes, e.g. 50,50");
    o_sbm_p_in = app->add_option("--sbm-p-in", sbm_p_in);
    o_sbm_p_out = app->add_option("--sbm-p-out", sbm_p_out);
    o_sbm_dim = app->add_option("--sbm-dim", sbm_dim);
    o_sbm_shift = app->add_option("--sbm-shift", sbm_shift);
    o_knn_points = app->add_option("--knn-points", knn_points, "points CSV for a KNN graph");
    o_knn_k = app->add_option("--knn-k", knn_k);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = config_from_json(read_file(config_path));
    auto set = [](CLI::Option* o) { return o && o->count() > 0; };
    if (set(o_backbone)) cfg.backbone = backbone_from_string(backbone);
    if (set(o_mask_ratio)) cfg.mask_ratio = mask_ratio;
    if (set(o_alpha)) cfg.alpha = alpha;
    if (set(o_scale_t)) cfg.scale_t = scale_t;
    if (set(o_momentum)) cfg.momentum = momentum;
    if (set(o_layers)) cfg.layers = layers;
    if (set(o_heads)) cfg.heads = heads;
    if (set(o_hidden)) cfg.hidden = hidden;
    if (set(o_latent_dim)) cfg.latent_dim = latent_dim;
    if (set(o_lr)) cfg.lr = lr;
    if (set(o_epochs)) cfg.epochs = epochs;
    if (set(o_batch)) cfg.batch_size = batch_size;
    if (set(o_precision)) cfg.precision = precision_from_string(precision);
    if (set(o_nonlinearity)) cfg.nonlinearity = nonlinearity;
    if (set(o_no_predictor)) cfg.no_predictor = no_predictor;
    if (set(o_no_momentum)) cfg.no_momentum_encoder = no_momentum_encoder;
    if (set(o_momentum_input)) cfg.momentum_input_full = momentum_input == "full";
    if (set(o_zero_tokens)) cfg.zero_tokens = zero_tokens;
    if (set(o_latent_loss)) cfg.latent_loss = latent_loss_from_string(latent_loss);
    if (set(o_raw_loss)) cfg.raw_loss = raw_loss_from_string(raw_loss);
    if (set(o_ema_swap)) cfg.ema_swap = ema_swap;
    if (set(o_pooling)) cfg.pooling = pool_from_string(pooling);
    if (set(o_graph)) cfg.graph_dir = graph_dir;
    if (set(o_dataset)) cfg.dataset_dir = dataset_dir;
    if (set(o_sbm)) cfg.sbm_blocks = sbm_blocks;
    if (set(o_sbm_p_in)) cfg.sbm_p_in = sbm_p_in;
    if (set(o_sbm_p_out)) cfg.sbm_p_out = sbm_p_out;
    if (set(o_sbm_dim)) cfg.sbm_dim = sbm_dim;
    if (set(o_sbm_shift)) cfg.sbm_shift = sbm_shift;
    if (set(o_knn_points)) cfg.knn_points = knn_points;
    if (set(o_knn_k)) cfg.knn_k = knn_k;

    if (set(o_seed)) {
      cfg.seed = seed;
    } else if (config_path.empty() || cfg.seed == 0) {
      if (const char* env = std::getenv("RARE_SEED")) {
        try {
          cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
          throw config_error("RARE_SEED: not an integer: '" + std::string(env) + "'");
        }
      }
    }
    cfg.validate();
    return cfg;
  }
};

SparseGraph resolve_graph(const RunConfig& cfg) {
  const int sources = !cfg.graph_dir.empty() + !cfg.sbm_blocks.empty() + !cfg.knn_points.empty();
  if (sources != 1)
    throw config_error("exactly one of --graph, --sbm, --knn-points must be given");
  if (!cfg.graph_dir.empty()) return load_graph(cfg.graph_dir);
  if (!cfg.sbm_blocks.empty())
    return generate_sbm(parse_int_list(cfg.sbm_blocks, "--sbm"), cfg.sbm_p_in, cfg.sbm_p_out,
                        cfg.sbm_dim, cfg.sbm_shift, cfg.seed);
  int rows = 0, cols = 0;
  auto points = load_matrix_csv(cfg.knn_points, rows, cols);
  return knn_graph(points, rows, cols, cfg.knn_k);
}

template <typename Real>
void run_pretrain(const RunConfig& cfg, const std::string& out_ckpt,
                  const std::string& out_metrics) {
  PretrainResult<Real> result;
  if (!cfg.dataset_dir.empty()) {
    GraphDataset ds = load_dataset(cfg.dataset_dir);
    result = pretrain_dataset<Real>(ds, cfg, cfg.seed);
  } else {
    SparseGraph g = resolve_graph(cfg);
    result = pretrain<Real>(g, cfg, cfg.seed);
  }
  save_checkpoint(out_ckpt, result.model);
  write_file(out_metrics, metrics_csv(result.report));
  if (!result.report.rows.empty()) {
    const auto& last = result.report.rows.back();
    std::cout << "iterations: " << result.report.rows.size() << "\n"
              << "final loss: " << fmt(last.loss) << " (latent " << fmt(last.loss_latent)
              << ", raw " << fmt(last.loss_raw) << ")\n";
  }
  std::cout << "checkpoint: " << out_ckpt << "\nmetrics: " << out_metrics << "\n";
}

template <typename Real>
void run_embed(const std::string& ckpt, const std::string& graph_dir, const std::string& out) {
  RareModel<Real> model = load_checkpoint<Real>(ckpt);
  SparseGraph g = load_graph(graph_dir);
  auto emb = embed(model, g);
  write_matrix_csv(out, emb, g.num_nodes(), model.cfg.hidden);
  std::cout << "embeddings: " << out << " (" << g.num_nodes() << " x " << model.cfg.hidden
            << ")\n";
}

template <typename Real>
void run_graph_classify(const std::string& ckpt, const std::string& dataset_dir, PoolMode pool,
                        int runs, uint64_t seed, int jobs, const std::string& out) {
  RareModel<Real> model = load_checkpoint<Real>(ckpt);
  GraphDataset ds = load_dataset(dataset_dir);
  if (ds.labels.empty()) throw config_error(dataset_dir + ": graph_labels.txt required");
  const int dim = model.cfg.hidden;
  std::vector<double> features;
  features.reserve(ds.graphs.size() * dim);
  for (const auto& g : ds.graphs) {
    auto emb = embed(model, g);
    auto pooled = pool_graph(emb, g.num_nodes(), dim, pool);
    features.insert(features.end(), pooled.begin(), pooled.end());
  }
  ProbeResult res = linear_probe(features, static_cast<int>(ds.graphs.size()), dim, ds.labels,
                                 SplitFractions{}, runs, seed, jobs);
  std::cout << "graph classification accuracy: " << fmt(res.mean_accuracy) << " +- "
            << fmt(res.std_accuracy) << " over " << runs << " runs\n";
  if (!out.empty()) write_file(out, probe_csv(res));
}

template <typename Real>
void run_robustness(const RunConfig& cfg, double fraction, const std::vector<uint64_t>& seeds,
                    int jobs, const std::string& out_prefix) {
  SparseGraph g = resolve_graph(cfg);
  std::vector<RobustnessTrace> traces(seeds.size());
  auto worker = [&](size_t begin, size_t step) {
    for (size_t i = begin; i < seeds.size(); i += step)
      traces[i] = robustness_run<Real>(g, cfg, fraction, seeds[i]);
  };
  if (jobs <= 1 || seeds.size() == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    const size_t n_threads = std::min<size_t>(jobs, seeds.size());
    for (size_t tid = 0; tid < n_threads; ++tid) pool.emplace_back(worker, tid, n_threads);
    for (auto& th : pool) th.join();
  }
  for (size_t i = 0; i < seeds.size(); ++i) {
    const std::string path = out_prefix + "_seed" + std::to_string(seeds[i]) + ".csv";
    write_file(path, robustness_csv(traces[i]));
    const auto& tr = traces[i];
    const size_t q = tr.raw_outlier.size() - tr.raw_outlier.size() / 4;
    double mo = 0, mn = 0;
    int co = 0, cn = 0;
    for (size_t k = q; k < tr.raw_outlier.size(); ++k) {
      if (!std::isnan(tr.raw_outlier[k])) {
        mo += tr.raw_outlier[k];
        ++co;
      }
      if (!std::isnan(tr.raw_normal[k])) {
        mn += tr.raw_normal[k];
        ++cn;
      }
    }
    std::cout << "seed " << seeds[i] << ": final-quartile raw loss outliers="
              << (co ? fmt(mo / co) : "n/a") << " normal=" << (cn ? fmt(mn / cn) : "n/a")
              << " acc(adv)=" << fmt(tr.acc_adversarial) << " acc(clean)=" << fmt(tr.acc_clean)
              << " -> " << path << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rare: robust masked graph autoencoder pre-training and evaluation"};
  app.require_subcommand(1);
  int exit_code = kExitOk;

  // pretrain
  auto* cmd_pre = app.add_subcommand("pretrain", "pre-train on a graph or dataset");
  TrainFlags pre_flags;
  pre_flags.attach(cmd_pre);
  std::string pre_out = "checkpoint.rare", pre_metrics = "metrics.csv";
  cmd_pre->add_option("--out", pre_out, "checkpoint output path");
  cmd_pre->add_option("--metrics", pre_metrics, "metrics CSV output path");
  cmd_pre->callback([&]() {
    RunConfig cfg = pre_flags.resolve();
    if (cfg.precision == Precision::f32)
      run_pretrain<float>(cfg, pre_out, pre_metrics);
    else
      run_pretrain<double>(cfg, pre_out, pre_metrics);
  });

  // embed
  auto* cmd_embed = app.add_subcommand("embed", "write backbone embeddings for a graph");
  std::string em_ckpt, em_graph, em_out = "embeddings.csv";
  cmd_embed->add_option("--checkpoint", em_ckpt)->required();
  cmd_embed->add_option("--graph", em_graph)->required();
  cmd_embed->add_option("--out", em_out);
  cmd_embed->callback([&]() {
    RunConfig cfg = checkpoint_config(em_ckpt);
    if (cfg.precision == Precision::f32)
      run_embed<float>(em_ckpt, em_graph, em_out);
    else
      run_embed<double>(em_ckpt, em_graph, em_out);
  });

  // probe
  auto* cmd_probe = app.add_subcommand("probe", "linear probe on saved embeddings");
  std::string pr_emb, pr_labels, pr_out, pr_split = "0.1,0.1,0.8";
  int pr_runs = 10, pr_jobs = 1;
  uint64_t pr_seed = 0;
  cmd_probe->add_option("--embeddings", pr_emb)->required();
  cmd_probe->add_option("--labels", pr_labels)->required();
  cmd_probe->add_option("--runs", pr_runs);
  cmd_probe->add_option("--seed", pr_seed);
  cmd_probe->add_option("--split", pr_split, "train,val,test fractions");
  cmd_probe->add_option("--jobs", pr_jobs, "threads across probe runs");
  cmd_probe->add_option("--out", pr_out, "per-run CSV output path");
  cmd_probe->callback([&]() {
    int rows = 0, cols = 0;
    auto emb = load_matrix_csv(pr_emb, rows, cols);
    auto labels = load_labels_file(pr_labels);
    std::stringstream ss(pr_split);
    SplitFractions split;
    char comma;
    if (!(ss >> split.train >> comma >> split.val >> comma >> split.test))
      throw config_error("--split: expected three fractions like 0.1,0.1,0.8");
    ProbeResult res = linear_probe(emb, rows, cols, labels, split, pr_runs, pr_seed, pr_jobs);
    std::cout << "accuracy: " << fmt(res.mean_accuracy) << " +- " << fmt(res.std_accuracy)
              << " over " << pr_runs << " runs (train " << res.train_size << ", val "
              << res.val_size << ", test " << res.test_size << ")\n";
    if (!pr_out.empty()) write_file(pr_out, probe_csv(res));
  });

  // graph-classify
  auto* cmd_gc = app.add_subcommand("graph-classify", "pool embeddings per graph and probe");
  std::string gc_ckpt, gc_dataset, gc_pool = "mean", gc_out;
  int gc_runs = 10, gc_jobs = 1;
  uint64_t gc_seed = 0;
  cmd_gc->add_option("--checkpoint", gc_ckpt)->required();
  cmd_gc->add_option("--dataset", gc_dataset)->required();
  cmd_gc->add_option("--pool", gc_pool)->check(CLI::IsMember({"mean", "max", "sum"}));
  cmd_gc->add_option("--runs", gc_runs);
  cmd_gc->add_option("--seed", gc_seed);
  cmd_gc->add_option("--jobs", gc_jobs);
  cmd_gc->add_option("--out", gc_out);
  cmd_gc->callback([&]() {
    RunConfig cfg = checkpoint_config(gc_ckpt);
    if (cfg.precision == Precision::f32)
      run_graph_classify<float>(gc_ckpt, gc_dataset, pool_from_string(gc_pool), gc_runs, gc_seed,
                                gc_jobs, gc_out);
    else
      run_graph_classify<double>(gc_ckpt, gc_dataset, pool_from_string(gc_pool), gc_runs, gc_seed,
                                 gc_jobs, gc_out);
  });

  // robustness
  auto* cmd_rob = app.add_subcommand("robustness", "outlier-corruption harness");
  TrainFlags rob_flags;
  rob_flags.attach(cmd_rob);
  double rob_fraction = 0.05;
  std::string rob_seeds, rob_prefix = "robustness";
  int rob_jobs = 1;
  cmd_rob->add_option("--outlier-fraction", rob_fraction);
  cmd_rob->add_option("--seeds", rob_seeds, "comma-separated run seeds (default: --seed)");
  cmd_rob->add_option("--jobs", rob_jobs, "threads across seeds");
  cmd_rob->add_option("--out-prefix", rob_prefix);
  cmd_rob->callback([&]() {
    RunConfig cfg = rob_flags.resolve();
    std::vector<uint64_t> seeds;
    if (rob_seeds.empty()) {
      seeds.push_back(cfg.seed);
    } else {
      for (int s : parse_int_list(rob_seeds, "--seeds")) seeds.push_back(static_cast<uint64_t>(s));
    }
    if (cfg.precision == Precision::f32)
      run_robustness<float>(cfg, rob_fraction, seeds, rob_jobs, rob_prefix);
    else
      run_robustness<double>(cfg, rob_fraction, seeds, rob_jobs, rob_prefix);
  });

  // gradcheck
  auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  uint64_t grad_seed = 1;
  cmd_grad->add_option("--seed", grad_seed);
  cmd_grad->callback([&]() {
    GradCheckResult res = run_gradcheck(grad_seed);
    std::cout << "max relative gradient error: " << fmt(res.max_rel_error) << " over "
              << res.entries_checked << " entries (worst: " << res.worst_param << ")\n";
    if (!(res.max_rel_error < 1e-4)) exit_code = kExitGradcheckFail;
  });

  // gen-sbm
  auto* cmd_sbm = app.add_subcommand("gen-sbm", "generate a stochastic block model graph");
  std::string sbm_blocks, sbm_out;
  double sbm_p_in = 0.2, sbm_p_out = 0.02, sbm_shift = 1.0;
  int sbm_dim = 16;
  uint64_t sbm_seed = 0;
  cmd_sbm->add_option("--blocks", sbm_blocks)->required();
  cmd_sbm->add_option("--p-in", sbm_p_in);
  cmd_sbm->add_option("--p-out", sbm_p_out);
  cmd_sbm->add_option("--dim", sbm_dim);
  cmd_sbm->add_option("--shift", sbm_shift);
  cmd_sbm->add_option("--seed", sbm_seed);
  cmd_sbm->add_option("--out", sbm_out)->required();
  cmd_sbm->callback([&]() {
    SparseGraph g = generate_sbm(parse_int_list(sbm_blocks, "--blocks"), sbm_p_in, sbm_p_out,
                                 sbm_dim, sbm_shift, sbm_seed);
    save_graph(g, sbm_out);
    std::cout << "graph: " << sbm_out << " (" << g.num_nodes() << " nodes, " << g.num_edges()
              << " edges)\n";
  });

  // knn-graph
  auto* cmd_knn = app.add_subcommand("knn-graph", "KNN graph from a points CSV");
  std::string knn_points, knn_labels, knn_out;
  int knn_k = 10;
  cmd_knn->add_option("--points", knn_points)->required();
  cmd_knn->add_option("--k", knn_k);
  cmd_knn->add_option("--labels", knn_labels, "optional labels file to attach");
  cmd_knn->add_option("--out", knn_out)->required();
  cmd_knn->callback([&]() {
    int rows = 0, cols = 0;
    auto points = load_matrix_csv(knn_points, rows, cols);
    SparseGraph g = knn_graph(points, rows, cols, knn_k);
    if (!knn_labels.empty()) {
      auto labels = load_labels_file(knn_labels);
      g = SparseGraph::build(g.num_nodes(), g.attr_dim(), g.edges(), g.attrs(), labels);
    }
    save_graph(g, knn_out);
    std::cout << "graph: " << knn_out << " (" << g.num_nodes() << " nodes, " << g.num_edges()
              << " edges, k=" << knn_k << ")\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return exit_code;
}
