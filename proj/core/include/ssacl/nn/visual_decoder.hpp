#pragma once

#include <torch/torch.h>

#include "ssacl/nn/attention.hpp"
#include "ssacl/nn/visual_encoder.hpp"

namespace ssacl {

// Transformer decoder isomorphic to the encoder; only the output head
// differs, mapping each token to one patch of pixels. One input token decodes
// to exactly one patch.
struct VisualDecoderImpl : torch::nn::Module {
  explicit VisualDecoderImpl(const VisualConfig& cfg);

  // Raw sequence decode: [B, L, D] -> [B, L, patch_dim]; no positional
  // information is added (token sets, e.g. child queries, carry none).
  torch::Tensor decode(const torch::Tensor& tokens);

  // Global reconstruction path: rebuilds the full patch grid from the fused
  // outputs, inserting the shared mask token (plus decoder positions) at
  // hidden positions, and returns predictions for the masked patches only:
  // [B, K, patch_dim].
  torch::Tensor decode_masked_grid(const FusedOutput& fused, const MaskedImageBatch& batch);

  VisualConfig cfg;
  torch::Tensor mask_token;         // [1, 1, D]
  torch::Tensor grid_pos_emb;      // [P, D] decoder-side patch positions
  torch::Tensor cls_pos_emb;       // [1, D]
  torch::Tensor prompt_pos_emb;    // [H_nodes, D]
  TransformerStack stack{nullptr};
  torch::nn::LayerNorm final_ln{nullptr};
  torch::nn::Linear head{nullptr};  // width -> patch_dim
};
TORCH_MODULE(VisualDecoder);

}  // namespace ssacl
