#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "ssacl/model.hpp"
#include "ssacl/world.hpp"

namespace ssacl {

struct LossWeights {
  double alpha1 = 1.0;
  double alpha2 = 0.15;
  double alpha3 = 1.0;
};

// Eq. 8: alpha1*(ir+ar) + alpha2*(ac+cl) + alpha3*lm. Throws NonFiniteLoss
// naming the first non-finite component.
torch::Tensor total_loss(const torch::Tensor& ir, const torch::Tensor& ar,
                         const torch::Tensor& ac, const torch::Tensor& cl,
                         const torch::Tensor& lm, const LossWeights& w);

struct TrainConfig {
  double lambda = 0.1;
  double mask_ratio = 0.75;
  double tau_init = 0.07;
  std::int64_t batch_size = 32;
  int epochs = 18;
  double learning_rate = 2.5e-4;
  double weight_decay = 0.01;
  int warmup_epochs = 2;
  std::uint64_t seed = 7;
  LossWeights weights;

  ModelConfig model;

  bool augment = false;
  bool symmetric_cl = false;
  bool soft_target_matrix = false;
  bool include_root_in_ar = true;
  bool enable_ac = true;
  int val_every = 1;

  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir;

  static TrainConfig from_json(const json& doc);
  json to_json() const;
};

struct EpochMetrics {
  int epoch = 0;
  double ir = 0, ar = 0, ac = 0, cl = 0, lm = 0, total = 0;
  double lr = 0;
  std::optional<double> val_total;
};

struct TrainResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<EpochMetrics> history;
};

// Joint optimization of Eq. 8 over the train split; per-epoch metrics stream
// to <out>/metrics.jsonl, best-validation checkpoint retained. Deterministic
// given seed: all shuffling/masking randomness derives from (seed, epoch,
// step), so resuming from <out>/last.ckpt continues the exact run.
TrainResult train(const TrainConfig& cfg);

}  // namespace ssacl
