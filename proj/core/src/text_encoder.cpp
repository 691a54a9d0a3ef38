#include "ssacl/nn/text_encoder.hpp"

#include "ssacl/errors.hpp"

namespace ssacl {

TextEncoderImpl::TextEncoderImpl(const TextEncoderConfig& cfg_in) : cfg(cfg_in) {
  tok_emb = register_module("tok_emb", torch::nn::Embedding(cfg.vocab, cfg.width));
  pos_emb = register_parameter("pos_emb", torch::randn({cfg.max_len, cfg.width}) * 0.02);
  stack = register_module("stack", TransformerStack(cfg.width, cfg.layers, cfg.heads));
  final_ln = register_module("final_ln",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.width})));
}

TextEncoderImpl::Output TextEncoderImpl::forward(const torch::Tensor& token_ids) {
  TORCH_CHECK(token_ids.dim() == 2, "token_ids must be [B, L]");
  const auto L = token_ids.size(1);
  TORCH_CHECK(L <= cfg.max_len, "sequence longer than max_len");

  auto x = tok_emb(token_ids) + pos_emb.slice(0, 0, L).unsqueeze(0);
  auto not_pad = token_ids.ne(Tokenizer::kPad);  // [B, L]

  // Every position may attend to any non-pad position; self-attention stays
  // allowed so fully padded rows cannot produce NaN softmax rows.
  auto allowed = not_pad.view({-1, 1, 1, L}).expand({token_ids.size(0), 1, L, L}) |
                 torch::eye(L, torch::kBool).view({1, 1, L, L});
  auto h = stack(x, AttentionTopology{allowed});
  h = final_ln(h);

  auto valid = not_pad.unsqueeze(-1).to(h.dtype());
  auto counts = valid.sum(1).clamp_min(1.0);
  auto pooled = (h * valid).sum(1) / counts;
  auto global = torch::nn::functional::normalize(
      pooled, torch::nn::functional::NormalizeFuncOptions().dim(-1));
  return {h, global};
}

}  // namespace ssacl
