#pragma once

#include <cstdint>
#include <string>

namespace rare {

enum class Backbone { gat, gin };
enum class Precision { f32, f64 };
enum class PoolMode { mean, max, sum };
enum class LatentLoss { mse, mae, isce };
enum class RawLoss { mse, isce };

// Every knob of a training/evaluation run. Serialized verbatim into the
// checkpoint header so downstream commands always rebuild the exact
// architecture they were trained with.
struct RunConfig {
  // architecture
  Backbone backbone = Backbone::gat;
  int layers = 2;
  int heads = 4;
  int hidden = 256;
  int latent_dim = 64;
  std::string nonlinearity = "prelu";  // prelu | leaky_relu

  // objective
  double mask_ratio = 0.75;
  double alpha = 6.0;
  double scale_t = 2.0;
  double momentum = 0.1;
  LatentLoss latent_loss = LatentLoss::mse;
  RawLoss raw_loss = RawLoss::isce;

  // optimization
  double lr = 1e-3;
  int epochs = 200;
  int batch_size = 32;
  uint64_t seed = 0;
  Precision precision = Precision::f64;

  // ablations
  bool no_predictor = false;
  bool no_momentum_encoder = false;
  bool momentum_input_full = false;  // feed the unmasked graph to the momentum encoder
  bool zero_tokens = false;          // mask with zeros instead of learnable tokens
  bool ema_swap = false;             // weight mu on the online network instead

  // evaluation
  PoolMode pooling = PoolMode::mean;

  // dataset source (exactly one used per run)
  std::string graph_dir;
  std::string dataset_dir;
  std::string sbm_blocks;  // e.g. "50,50"
  double sbm_p_in = 0.2;
  double sbm_p_out = 0.02;
  int sbm_dim = 16;
  double sbm_shift = 1.0;
  std::string knn_points;  // CSV of points
  int knn_k = 10;

  void validate() const;  // throws config_error naming the offending field
};

std::string to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& json_text);

// enum <-> flag-value helpers
std::string to_string(Backbone b);
std::string to_string(Precision p);
std::string to_string(PoolMode m);
std::string to_string(LatentLoss l);
std::string to_string(RawLoss l);
Backbone backbone_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);
PoolMode pool_from_string(const std::string& s);
LatentLoss latent_loss_from_string(const std::string& s);
RawLoss raw_loss_from_string(const std::string& s);

}  // namespace rare
