#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssacl/model.hpp"
#include "ssacl/world.hpp"

namespace ssacl {

// Linear head over frozen class-token features predicting pathology presence.
// Encoder parameters never change during probe training.
struct PathologyProbe {
  torch::nn::Linear head{nullptr};
  std::vector<std::string> pathology_order;
  std::vector<double> thresholds;  // per pathology, chosen on validation F1

  torch::Tensor logits(const torch::Tensor& features) const {
    return torch::nn::functional::linear(features, head->weight, head->bias);
  }
  std::vector<std::string> predict(const torch::Tensor& features_row) const;

  void save(const std::filesystem::path& path) const;
  static PathologyProbe load(const std::filesystem::path& path, std::int64_t width);
};

struct ProbeTrainConfig {
  int epochs = 300;
  double lr = 1e-2;
  std::uint64_t seed = 7;
};

struct ProbeResult {
  PathologyProbe probe;
  double val_macro_f1 = 0.0;
};

// Labels come from extract_entities on the ground-truth reports (silver
// entities). Only the linear head trains; `model` stays in eval/no-grad.
ProbeResult train_probe(SSACLModel& model, const WorldSpec& spec,
                        const std::vector<const Sample*>& train,
                        const std::vector<const Sample*>& val, const ProbeTrainConfig& cfg);

// Thresholded prediction mapped through pathologies_to_leaves; an empty
// prediction falls back to every leaf (unguided generation).
struct AnatomyInference {
  std::vector<std::string> pathologies;
  std::vector<std::string> active_leaves;  // leaf ids, leaf_order
};
AnatomyInference infer_anatomy(const PathologyProbe& probe, SSACLModel& model,
                               const torch::Tensor& image);

// Presence vector over all graph nodes: active leaves plus their ancestors.
torch::Tensor build_presence(const AnatomyGraph& graph,
                             const std::vector<std::string>& active_leaves);

}  // namespace ssacl
