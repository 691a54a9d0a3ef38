#include "ssacl/nn/attention.hpp"

#include <cmath>

#include "ssacl/errors.hpp"

namespace ssacl {

AttentionTopology make_prompt_isolation_topology(std::int64_t n_prompts,
                                                 std::int64_t n_visible) {
  const std::int64_t S = n_prompts + 1 + n_visible;
  auto allowed = torch::zeros({S, S}, torch::kBool);
  // prompts: self + class + image tokens
  for (std::int64_t a = 0; a < n_prompts; ++a) {
    allowed[a][a] = true;
    allowed[a].slice(0, n_prompts, S).fill_(true);
  }
  // class + image tokens: everything except prompts
  allowed.slice(0, n_prompts, S).slice(1, n_prompts, S).fill_(true);
  return {allowed};
}

MultiheadSelfAttentionImpl::MultiheadSelfAttentionImpl(std::int64_t width, std::int64_t heads_in)
    : heads(heads_in) {
  TORCH_CHECK(width % heads == 0, "width must be divisible by heads");
  qkv = register_module("qkv", torch::nn::Linear(width, 3 * width));
  proj = register_module("proj", torch::nn::Linear(width, width));
}

std::pair<torch::Tensor, torch::Tensor> MultiheadSelfAttentionImpl::forward(
    const torch::Tensor& x, const AttentionTopology& topology, bool need_probs) {
  const auto B = x.size(0), S = x.size(1), D = x.size(2);
  const auto hd = D / heads;
  auto qkv_out = qkv(x).view({B, S, 3, heads, hd}).permute({2, 0, 3, 1, 4});
  auto q = qkv_out[0], k = qkv_out[1], v = qkv_out[2];  // [B, heads, S, hd]

  auto scores = torch::matmul(q, k.transpose(-1, -2)) / std::sqrt(static_cast<double>(hd));
  if (topology.defined()) {
    auto mask = topology.allowed;
    if (mask.dim() == 2) mask = mask.view({1, 1, S, S});
    scores = scores.masked_fill(mask.logical_not(),
                                -std::numeric_limits<float>::infinity());
  }
  auto probs = torch::softmax(scores, -1);
  auto out = torch::matmul(probs, v);  // [B, heads, S, hd]
  out = out.transpose(1, 2).reshape({B, S, D});
  return {proj(out), need_probs ? probs : torch::Tensor()};
}

TransformerBlockImpl::TransformerBlockImpl(std::int64_t width, std::int64_t heads) {
  ln1 = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  ln2 = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
  attn = register_module("attn", MultiheadSelfAttention(width, heads));
  fc1 = register_module("fc1", torch::nn::Linear(width, 4 * width));
  fc2 = register_module("fc2", torch::nn::Linear(4 * width, width));
}

std::pair<torch::Tensor, torch::Tensor> TransformerBlockImpl::forward(
    const torch::Tensor& x, const AttentionTopology& topology, bool need_probs) {
  auto [a, probs] = attn(ln1(x), topology, need_probs);
  auto h = x + a;
  h = h + fc2(torch::gelu(fc1(ln2(h))));
  return {h, probs};
}

TransformerStackImpl::TransformerStackImpl(std::int64_t width, std::int64_t layers,
                                           std::int64_t heads) {
  for (std::int64_t i = 0; i < layers; ++i) {
    blocks.push_back(
        register_module("block" + std::to_string(i), TransformerBlock(width, heads)));
  }
}

torch::Tensor TransformerStackImpl::forward(const torch::Tensor& x,
                                            const AttentionTopology& topology) {
  auto h = x;
  for (auto& b : blocks) h = b(h, topology, false).first;
  return h;
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> TransformerStackImpl::forward_with_attn(
    const torch::Tensor& x, const AttentionTopology& topology) {
  auto h = x;
  std::vector<torch::Tensor> attns;
  attns.reserve(blocks.size());
  for (auto& b : blocks) {
    auto [out, probs] = b(h, topology, true);
    h = out;
    attns.push_back(probs);
  }
  return {h, attns};
}

}  // namespace ssacl
