#include "ssacl/nn/visual_decoder.hpp"

#include "ssacl/errors.hpp"

namespace ssacl {

VisualDecoderImpl::VisualDecoderImpl(const VisualConfig& cfg_in) : cfg(cfg_in) {
  mask_token = register_parameter("mask_token", torch::randn({1, 1, cfg.width}) * 0.02);
  grid_pos_emb =
      register_parameter("grid_pos_emb", torch::randn({cfg.num_patches(), cfg.width}) * 0.02);
  cls_pos_emb = register_parameter("cls_pos_emb", torch::randn({1, cfg.width}) * 0.02);
  prompt_pos_emb =
      register_parameter("prompt_pos_emb", torch::randn({cfg.n_nodes, cfg.width}) * 0.02);
  stack = register_module("stack", TransformerStack(cfg.width, cfg.layers, cfg.heads));
  final_ln = register_module("final_ln",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.width})));
  head = register_module("head", torch::nn::Linear(cfg.width, cfg.patch_dim()));
}

torch::Tensor VisualDecoderImpl::decode(const torch::Tensor& tokens) {
  if (tokens.dim() != 3 || tokens.size(2) != cfg.width) {
    throw ShapeError("decode expects [B, L, width=" + std::to_string(cfg.width) + "] tokens");
  }
  return head(final_ln(stack(tokens)));
}

torch::Tensor VisualDecoderImpl::decode_masked_grid(const FusedOutput& fused,
                                                    const MaskedImageBatch& batch) {
  const auto B = fused.image_tokens.size(0);
  const auto P = cfg.num_patches();
  const auto K = batch.masked_idx.size(1);
  const auto V = batch.visible_idx.size(1);
  if (K == 0) {
    throw EmptyMaskError("no masked patches to reconstruct");
  }

  // Full grid: fused visible tokens scattered to their positions, the shared
  // mask token elsewhere; decoder positions added on top.
  auto grid = mask_token.expand({B, P, cfg.width})
                  .scatter(1, batch.visible_idx.unsqueeze(-1).expand({B, V, cfg.width}),
                           fused.image_tokens) +
              grid_pos_emb.unsqueeze(0);

  auto cls = (fused.class_token.unsqueeze(1) + cls_pos_emb.unsqueeze(0));
  auto prompts = fused.prompt_tokens + prompt_pos_emb.unsqueeze(0);
  auto seq = torch::cat({prompts, cls, grid}, 1);

  auto decoded = head(final_ln(stack(seq)));  // [B, n_nodes+1+P, patch_dim]
  auto patch_part = decoded.slice(1, cfg.n_nodes + 1, cfg.n_nodes + 1 + P);
  return torch::gather(patch_part, 1,
                       batch.masked_idx.unsqueeze(-1).expand({B, K, cfg.patch_dim()}));
}

}  // namespace ssacl
