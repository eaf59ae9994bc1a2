#pragma once

#include "cm/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cm::train {

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-3;  // not taken from any reference; see README
  int batch_size = 32;
  double weight_decay = 1e-4;  // likewise a local default
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  int early_stop_patience = 15;
  int max_epochs = 200;
  std::uint64_t seed = 42;

  void validate() const;
};

// First/second moment estimates per parameter plus a shared step counter.
struct AdamState {
  struct Moments {
    Array m;
    Array v;
  };
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Decoupled weight decay (param *= 1 - lr*wd) followed by a bias-corrected
// Adam update at the given learning rate. Every parameter must carry a grad.
void adam_step(ad::ParamStore& store, AdamState& state, double lr,
               const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double train_rmse = 0.0;
  double val_rmse = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::map<std::string, Array> best_params;
  double best_val_rmse = 0.0;
  int best_epoch = -1;
  std::vector<EpochStats> history;
};

// Mini-batch loop with per-epoch validation, reduce-on-plateau scheduling and
// early stopping on the validation RMSE. The model is left loaded with the
// best snapshot, which is also returned. Deterministic for a fixed seed.
TrainResult train(model::CryptoMamba& model, const std::vector<data::WindowSample>& train_w,
                  const std::vector<data::WindowSample>& val_w, const TrainConfig& config);

// Normalized-space predictions for a window list, batched for speed.
std::vector<double> predict_normalized(const model::CryptoMamba& model,
                                       const std::vector<data::WindowSample>& windows,
                                       int batch_size = 64);

// RMSE between predictions of `model` and window targets, normalized space.
double evaluate_rmse(const model::CryptoMamba& model,
                     const std::vector<data::WindowSample>& windows, int batch_size = 64);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

// --- checkpoint container ------------------------------------------------
// Binary layout (all integers and floats little-endian):
//   magic "CMCKPT1\n"
//   u32 config text length, config bytes (key=value lines)
//   f64 validation RMSE of the snapshot
//   u32 parameter count, then per parameter:
//     u32 path length, path bytes
//     u32 rank, u64 dims[rank]
//     f64 values[product(dims)]

struct Checkpoint {
  std::string config_text;
  double val_rmse = 0.0;
  std::map<std::string, std::pair<ad::Shape, Array>> params;
};

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ad::ParamStore& store, double val_rmse);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into the model; throws if any path or shape
// disagrees with the model's parameters.
void apply_checkpoint(model::CryptoMamba& model, const Checkpoint& ckpt);

}  // namespace cm::train
