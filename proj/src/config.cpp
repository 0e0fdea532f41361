#include "rare/config.hpp"

#include <json.hpp>

#include "rare/errors.hpp"

namespace rare {

using nlohmann::json;

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw config_error(what);
  };
  require(layers >= 1, "--layers must be >= 1");
  require(heads >= 1, "--heads must be >= 1");
  require(hidden >= 1, "--hidden must be >= 1");
  require(hidden % heads == 0, "--hidden must be divisible by --heads");
  require(latent_dim >= 1, "--latent-dim must be >= 1");
  require(mask_ratio >= 0.0 && mask_ratio <= 1.0, "--mask-ratio must be in [0,1]");
  require(alpha >= 0.0, "--alpha must be >= 0");
  require(scale_t >= 1.0, "--scale-t must be >= 1");
  require(momentum >= 0.0 && momentum <= 1.0, "--momentum must be in [0,1]");
  require(lr > 0.0, "--lr must be > 0");
  require(epochs >= 0, "--epochs must be >= 0");
  require(batch_size >= 1, "--batch-size must be >= 1");
  require(nonlinearity == "prelu" || nonlinearity == "leaky_relu",
          "--nonlinearity must be prelu or leaky_relu");
}

std::string to_string(Backbone b) { return b == Backbone::gat ? "gat" : "gin"; }
std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }
std::string to_string(PoolMode m) {
  switch (m) {
    case PoolMode::mean: return "mean";
    case PoolMode::max: return "max";
    default: return "sum";
  }
}
std::string to_string(LatentLoss l) {
  switch (l) {
    case LatentLoss::mse: return "mse";
    case LatentLoss::mae: return "mae";
    default: return "isce";
  }
}
std::string to_string(RawLoss l) { return l == RawLoss::mse ? "mse" : "isce"; }

Backbone backbone_from_string(const std::string& s) {
  if (s == "gat") return Backbone::gat;
  if (s == "gin") return Backbone::gin;
  throw config_error("--backbone must be gat or gin, got '" + s + "'");
}
Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw config_error("--precision must be f32 or f64, got '" + s + "'");
}
PoolMode pool_from_string(const std::string& s) {
  if (s == "mean") return PoolMode::mean;
  if (s == "max") return PoolMode::max;
  if (s == "sum") return PoolMode::sum;
  throw config_error("--pool must be mean, max or sum, got '" + s + "'");
}
LatentLoss latent_loss_from_string(const std::string& s) {
  if (s == "mse") return LatentLoss::mse;
  if (s == "mae") return LatentLoss::mae;
  if (s == "isce") return LatentLoss::isce;
  throw config_error("--latent-loss must be mse, mae or isce, got '" + s + "'");
}
RawLoss raw_loss_from_string(const std::string& s) {
  if (s == "mse") return RawLoss::mse;
  if (s == "isce") return RawLoss::isce;
  throw config_error("--raw-loss must be mse or isce, got '" + s + "'");
}

std::string to_json(const RunConfig& c) {
  json j;
  j["backbone"] = to_string(c.backbone);
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["hidden"] = c.hidden;
  j["latent_dim"] = c.latent_dim;
  j["nonlinearity"] = c.nonlinearity;
  j["mask_ratio"] = c.mask_ratio;
  j["alpha"] = c.alpha;
  j["scale_t"] = c.scale_t;
  j["momentum"] = c.momentum;
  j["latent_loss"] = to_string(c.latent_loss);
  j["raw_loss"] = to_string(c.raw_loss);
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["precision"] = to_string(c.precision);
  j["no_predictor"] = c.no_predictor;
  j["no_momentum_encoder"] = c.no_momentum_encoder;
  j["momentum_input_full"] = c.momentum_input_full;
  j["zero_tokens"] = c.zero_tokens;
  j["ema_swap"] = c.ema_swap;
  j["pooling"] = to_string(c.pooling);
  j["graph_dir"] = c.graph_dir;
  j["dataset_dir"] = c.dataset_dir;
  j["sbm"] = c.sbm_blocks;
  j["sbm_p_in"] = c.sbm_p_in;
  j["sbm_p_out"] = c.sbm_p_out;
  j["sbm_dim"] = c.sbm_dim;
  j["sbm_shift"] = c.sbm_shift;
  j["knn_points"] = c.knn_points;
  j["knn_k"] = c.knn_k;
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw parse_error(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    if (j.contains("backbone")) c.backbone = backbone_from_string(j["backbone"]);
    if (j.contains("layers")) c.layers = j["layers"];
    if (j.contains("heads")) c.heads = j["heads"];
    if (j.contains("hidden")) c.hidden = j["hidden"];
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"];
    if (j.contains("nonlinearity")) c.nonlinearity = j["nonlinearity"];
    if (j.contains("mask_ratio")) c.mask_ratio = j["mask_ratio"];
    if (j.contains("alpha")) c.alpha = j["alpha"];
    if (j.contains("scale_t")) c.scale_t = j["scale_t"];
    if (j.contains("momentum")) c.momentum = j["momentum"];
    if (j.contains("latent_loss")) c.latent_loss = latent_loss_from_string(j["latent_loss"]);
    if (j.contains("raw_loss")) c.raw_loss = raw_loss_from_string(j["raw_loss"]);
    if (j.contains("lr")) c.lr = j["lr"];
    if (j.contains("epochs")) c.epochs = j["epochs"];
    if (j.contains("batch_size")) c.batch_size = j["batch_size"];
    if (j.contains("seed")) c.seed = j["seed"];
    if (j.contains("precision")) c.precision = precision_from_string(j["precision"]);
    if (j.contains("no_predictor")) c.no_predictor = j["no_predictor"];
    if (j.contains("no_momentum_encoder")) c.no_momentum_encoder = j["no_momentum_encoder"];
    if (j.contains("momentum_input_full")) c.momentum_input_full = j["momentum_input_full"];
    if (j.contains("zero_tokens")) c.zero_tokens = j["zero_tokens"];
    if (j.contains("ema_swap")) c.ema_swap = j["ema_swap"];
    if (j.contains("pooling")) c.pooling = pool_from_string(j["pooling"]);
    if (j.contains("graph_dir")) c.graph_dir = j["graph_dir"];
    if (j.contains("dataset_dir")) c.dataset_dir = j["dataset_dir"];
    if (j.contains("sbm")) c.sbm_blocks = j["sbm"];
    if (j.contains("sbm_p_in")) c.sbm_p_in = j["sbm_p_in"];
    if (j.contains("sbm_p_out")) c.sbm_p_out = j["sbm_p_out"];
    if (j.contains("sbm_dim")) c.sbm_dim = j["sbm_dim"];
    if (j.contains("sbm_shift")) c.sbm_shift = j["sbm_shift"];
    if (j.contains("knn_points")) c.knn_points = j["knn_points"];
    if (j.contains("knn_k")) c.knn_k = j["knn_k"];
  } catch (const json::exception& e) {
    throw parse_error(std::string("config: ") + e.what());
  }
  return c;
}

}  // namespace rare
