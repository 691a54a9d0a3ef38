#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssacl/anatomy_graph.hpp"
#include "ssacl/graph_queries.hpp"
#include "ssacl/losses/alignment.hpp"
#include "ssacl/losses/reconstruction.hpp"
#include "ssacl/nn/report_decoder.hpp"
#include "ssacl/nn/text_encoder.hpp"
#include "ssacl/nn/visual_decoder.hpp"
#include "ssacl/nn/visual_encoder.hpp"
#include "ssacl/tokenizer.hpp"

namespace ssacl {

struct ModelConfig {
  std::int64_t width = 128;
  std::int64_t layers = 4;
  std::int64_t heads = 4;
  std::int64_t patch_size = 8;
  std::int64_t image_size = 64;
  std::int64_t channels = 1;
  std::int64_t max_report_len = 100;
  std::int64_t text_max_len = 128;
  std::int64_t pathology_slots = 4;
  double tau_init = 0.07;

  json to_json() const;
  static ModelConfig from_json(const json& doc);
};

struct PretrainFlags {
  double lambda = 0.1;
  double mask_ratio = 0.75;
  bool symmetric_cl = false;
  bool soft_target_matrix = false;
  bool include_root_in_ar = true;
  bool enable_ac = true;
};

struct LossBreakdown {
  torch::Tensor ir, ar, cl, ac, lm;
};

// The full SS-ACL model: text encoder (leaf prompts + reports), prompt-fused
// visual encoder, shared visual decoder, projection head and temperature for
// the contrastive losses, and the anatomy-guided report decoder.
struct SSACLModelImpl : torch::nn::Module {
  SSACLModelImpl(ModelConfig cfg, std::shared_ptr<const AnatomyGraph> graph,
                 Tokenizer tokenizer);

  // Leaf-name queries through the text encoder: [M, D] (jointly trained).
  torch::Tensor leaf_queries();
  // Eq.1-restored query set in node order, expanded per batch: [B, H, D].
  torch::Tensor restored_queries(std::int64_t batch);

  torch::Tensor tau() const;  // exp(log_tau), clamped positive

  struct PretrainBatch {
    torch::Tensor images;         // [B, C, H, W] preprocessed
    torch::Tensor text_ids;       // [B, L] with <bos>/<eos> (text encoder)
    torch::Tensor report_ids;     // [B, L'] without specials (LM loss)
    torch::Tensor pathology_ids;  // [B, slots]
    torch::Tensor presence;       // [B, H] bool over graph nodes
  };

  LossBreakdown pretrain_step(const PretrainBatch& batch, std::uint64_t mask_seed,
                              const PretrainFlags& flags);

  // Unmasked forward pass; ratio 0 keeps every patch visible.
  FusedOutput encode_unmasked(const torch::Tensor& images, bool need_attn = false);
  // Class-token features of the unmasked pass (probe input).
  torch::Tensor class_features(const torch::Tensor& images);
  // Projected, unit-norm image global (correlation side of grounding).
  torch::Tensor image_global(const torch::Tensor& images);
  // Unit-norm text global for arbitrary phrases.
  torch::Tensor text_global(const std::vector<std::string>& phrases);

  void save_checkpoint(const std::filesystem::path& path, const json& extra_meta = {}) const;
  static std::shared_ptr<SSACLModelImpl> load_checkpoint(const std::filesystem::path& path,
                                                         json* extra_meta = nullptr);

  ModelConfig cfg;
  std::shared_ptr<const AnatomyGraph> graph;
  Tokenizer tokenizer;

  TextEncoder text_encoder{nullptr};
  VisualEncoder visual_encoder{nullptr};
  VisualDecoder visual_decoder{nullptr};
  ReportDecoder report_decoder{nullptr};
  torch::nn::Linear img_proj{nullptr};
  torch::Tensor log_tau;

 private:
  torch::Tensor leaf_name_ids_;  // [M, Ln] cached token ids of leaf names
  // Internal nodes grouped by child count: (node index, child node indices).
  std::map<int, std::vector<std::pair<int, std::vector<int>>>> parent_groups_;
  std::vector<int> leaf_node_indices_;  // node indices of leaves, leaf_order
};
TORCH_MODULE(SSACLModel);

// Tokenizer vocabulary for a given world: template words + node names +
// pathology names.
Tokenizer make_tokenizer(const AnatomyGraph& graph);

}  // namespace ssacl
