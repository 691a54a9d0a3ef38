#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "ssacl/nn/attention.hpp"

namespace ssacl {

struct VisualConfig {
  std::int64_t image_size = 64;
  std::int64_t patch_size = 8;
  std::int64_t channels = 1;
  std::int64_t width = 128;
  std::int64_t layers = 4;
  std::int64_t heads = 4;
  std::int64_t n_nodes = 0;  // graph node count (prompt slots)

  std::int64_t grid() const { return image_size / patch_size; }
  std::int64_t num_patches() const { return grid() * grid(); }
  std::int64_t patch_dim() const { return patch_size * patch_size * channels; }
};

// Patchified images with the random mask bookkeeping: which patches are
// hidden, and their ground-truth pixels.
struct MaskedImageBatch {
  torch::Tensor patches;        // [B, P, patch_dim] all patch pixels
  torch::Tensor visible_idx;    // [B, V] long
  torch::Tensor masked_idx;     // [B, K] long (K may be 0)
  torch::Tensor masked_pixels;  // [B, K, patch_dim] ground truth for hidden patches
  std::int64_t num_patches = 0;
};

// Splits a preprocessed image batch into patches and hides exactly
// floor(ratio * num_patches) of them per sample. Deterministic in seed.
MaskedImageBatch mask_image(const torch::Tensor& images, double ratio, std::uint64_t seed,
                            const VisualConfig& cfg);

struct FusedOutput {
  torch::Tensor prompt_tokens;        // [B, H_nodes, D]
  torch::Tensor class_token;          // [B, D]
  torch::Tensor image_tokens;         // [B, V, D]
  std::vector<torch::Tensor> attn;    // per-layer probs when requested
};

// ViT-style encoder that prepends the anatomy prompt query set to the visible
// image tokens under a prompt-isolation attention topology.
struct VisualEncoderImpl : torch::nn::Module {
  explicit VisualEncoderImpl(const VisualConfig& cfg);

  // prompts: [B, H_nodes, D] restored query set in graph node order.
  FusedOutput fuse(const MaskedImageBatch& batch, const torch::Tensor& prompts,
                   const AttentionTopology& topology, bool need_attn = false);

  // Topology matching the fused layout of `batch`.
  AttentionTopology topology_for(const MaskedImageBatch& batch) const;

  VisualConfig cfg;
  torch::nn::Linear patch_embed{nullptr};
  torch::Tensor class_token;     // [1, 1, D]
  torch::Tensor img_pos_emb;     // [P, D]
  torch::Tensor prompt_pos_emb;  // [H_nodes, D] learned per-node positions
  TransformerStack stack{nullptr};
  torch::nn::LayerNorm final_ln{nullptr};
};
TORCH_MODULE(VisualEncoder);

}  // namespace ssacl
