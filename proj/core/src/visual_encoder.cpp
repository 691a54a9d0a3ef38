#include "ssacl/nn/visual_encoder.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ssacl/common.hpp"
#include "ssacl/errors.hpp"

namespace ssacl {

MaskedImageBatch mask_image(const torch::Tensor& images, double ratio, std::uint64_t seed,
                            const VisualConfig& cfg) {
  TORCH_CHECK(images.dim() == 4, "images must be [B, C, H, W]");
  if (ratio < 0.0 || ratio >= 1.0) {
    throw ValidationError("mask ratio must be in [0, 1)");
  }
  const auto B = images.size(0);
  const auto P = cfg.num_patches();
  const auto g = cfg.grid();
  const auto ps = cfg.patch_size;

  // [B, C, H, W] -> [B, P, ps*ps*C] in row-major patch order.
  auto patches = images
                     .unfold(2, ps, ps)
                     .unfold(3, ps, ps)  // [B, C, g, g, ps, ps]
                     .permute({0, 2, 3, 1, 4, 5})
                     .reshape({B, P, cfg.patch_dim()})
                     .contiguous();

  const auto K = static_cast<std::int64_t>(ratio * static_cast<double>(P));
  const auto V = P - K;

  auto visible_idx = torch::empty({B, V}, torch::kLong);
  auto masked_idx = torch::empty({B, K}, torch::kLong);
  for (std::int64_t b = 0; b < B; ++b) {
    std::vector<std::int64_t> perm(static_cast<std::size_t>(P));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
    std::shuffle(perm.begin(), perm.end(), rng);
    std::sort(perm.begin(), perm.begin() + K);
    std::sort(perm.begin() + K, perm.end());
    for (std::int64_t i = 0; i < K; ++i) masked_idx[b][i] = perm[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < V; ++i) {
      visible_idx[b][i] = perm[static_cast<std::size_t>(K + i)];
    }
  }

  MaskedImageBatch out;
  out.patches = patches;
  out.visible_idx = visible_idx;
  out.masked_idx = masked_idx;
  out.masked_pixels =
      K > 0 ? torch::gather(patches, 1,
                            masked_idx.unsqueeze(-1).expand({B, K, cfg.patch_dim()}))
            : torch::empty({B, 0, cfg.patch_dim()}, patches.options());
  out.num_patches = P;
  return out;
}

VisualEncoderImpl::VisualEncoderImpl(const VisualConfig& cfg_in) : cfg(cfg_in) {
  TORCH_CHECK(cfg.image_size % cfg.patch_size == 0, "patch size must divide image size");
  patch_embed = register_module("patch_embed", torch::nn::Linear(cfg.patch_dim(), cfg.width));
  class_token = register_parameter("class_token", torch::randn({1, 1, cfg.width}) * 0.02);
  img_pos_emb =
      register_parameter("img_pos_emb", torch::randn({cfg.num_patches(), cfg.width}) * 0.02);
  prompt_pos_emb =
      register_parameter("prompt_pos_emb", torch::randn({cfg.n_nodes, cfg.width}) * 0.02);
  stack = register_module("stack", TransformerStack(cfg.width, cfg.layers, cfg.heads));
  final_ln = register_module("final_ln",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.width})));
}

AttentionTopology VisualEncoderImpl::topology_for(const MaskedImageBatch& batch) const {
  return make_prompt_isolation_topology(cfg.n_nodes, batch.visible_idx.size(1));
}

FusedOutput VisualEncoderImpl::fuse(const MaskedImageBatch& batch, const torch::Tensor& prompts,
                                    const AttentionTopology& topology, bool need_attn) {
  const auto B = batch.patches.size(0);
  const auto V = batch.visible_idx.size(1);
  if (prompts.dim() != 3 || prompts.size(1) != cfg.n_nodes || prompts.size(2) != cfg.width) {
    throw ShapeError("prompts must be [B, " + std::to_string(cfg.n_nodes) + ", " +
                     std::to_string(cfg.width) + "]");
  }
  if (batch.patches.size(2) != cfg.patch_dim()) {
    throw ShapeError("patch pixels have dim " + std::to_string(batch.patches.size(2)) +
                     ", expected " + std::to_string(cfg.patch_dim()));
  }
  const auto S = cfg.n_nodes + 1 + V;
  if (topology.defined() && (topology.allowed.size(-1) != S || topology.allowed.size(-2) != S)) {
    throw ShapeError("topology does not match fused sequence length " + std::to_string(S));
  }

  auto visible = torch::gather(
      batch.patches, 1, batch.visible_idx.unsqueeze(-1).expand({B, V, cfg.patch_dim()}));
  auto tok = patch_embed(visible) + img_pos_emb.index_select(0, batch.visible_idx.flatten())
                                        .view({B, V, cfg.width});
  auto cls = class_token.expand({B, 1, cfg.width});
  auto prm = prompts + prompt_pos_emb.unsqueeze(0);
  auto seq = torch::cat({prm, cls, tok}, 1);

  FusedOutput out;
  if (need_attn) {
    auto [h, attns] = stack->forward_with_attn(seq, topology);
    seq = h;
    out.attn = std::move(attns);
  } else {
    seq = stack(seq, topology);
  }
  seq = final_ln(seq);
  out.prompt_tokens = seq.slice(1, 0, cfg.n_nodes);
  out.class_token = seq.select(1, cfg.n_nodes);
  out.image_tokens = seq.slice(1, cfg.n_nodes + 1, S);
  return out;
}

}  // namespace ssacl
