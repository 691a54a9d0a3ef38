#pragma once

#include <utility>
#include <vector>

#include <torch/torch.h>

namespace ssacl {

// Boolean matrix over a fused token sequence; allowed(i, j) means query
// position i may attend to key position j. Applied pre-softmax as -inf so
// forbidden edges carry exactly zero attention weight in every layer.
struct AttentionTopology {
  torch::Tensor allowed;  // [S, S] or [B, 1, S, S] bool; undefined = full attention

  bool defined() const { return allowed.defined(); }
};

// Sequence layout [prompts..., class, visible image tokens...]:
//   - prompt a attends to itself, the class token and the image tokens,
//     never to prompt b != a (token-wise masking across prompt tokens);
//   - class/image tokens attend to class + image tokens only, so global
//     reconstruction cannot route around the mask through prompts.
AttentionTopology make_prompt_isolation_topology(std::int64_t n_prompts,
                                                 std::int64_t n_visible);

struct MultiheadSelfAttentionImpl : torch::nn::Module {
  MultiheadSelfAttentionImpl(std::int64_t width, std::int64_t heads);

  // Returns (output, attention probabilities [B, heads, S, S]); probs are
  // only materialized for the caller when need_probs is set.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x,
                                                  const AttentionTopology& topology,
                                                  bool need_probs = false);

  torch::nn::Linear qkv{nullptr}, proj{nullptr};
  std::int64_t heads = 1;
};
TORCH_MODULE(MultiheadSelfAttention);

struct TransformerBlockImpl : torch::nn::Module {
  TransformerBlockImpl(std::int64_t width, std::int64_t heads);

  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x,
                                                  const AttentionTopology& topology,
                                                  bool need_probs = false);

  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr};
  MultiheadSelfAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TransformerBlock);

struct TransformerStackImpl : torch::nn::Module {
  TransformerStackImpl(std::int64_t width, std::int64_t layers, std::int64_t heads);

  torch::Tensor forward(const torch::Tensor& x, const AttentionTopology& topology = {});
  // Also returns every layer's attention probabilities.
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward_with_attn(
      const torch::Tensor& x, const AttentionTopology& topology = {});

  std::vector<TransformerBlock> blocks;
};
TORCH_MODULE(TransformerStack);

}  // namespace ssacl
