#pragma once

#include <torch/torch.h>

#include "ssacl/nn/attention.hpp"
#include "ssacl/tokenizer.hpp"

namespace ssacl {

struct TextEncoderConfig {
  std::int64_t vocab = 0;
  std::int64_t width = 128;
  std::int64_t layers = 4;
  std::int64_t heads = 4;
  std::int64_t max_len = 128;
};

// Bidirectional transformer encoder over word tokens. The same weights encode
// leaf prompts and full reports. The global embedding is the L2-normalized
// mean over non-pad token positions.
struct TextEncoderImpl : torch::nn::Module {
  explicit TextEncoderImpl(const TextEncoderConfig& cfg);

  struct Output {
    torch::Tensor tokens;  // [B, L, D]
    torch::Tensor global;  // [B, D], unit norm
  };
  Output forward(const torch::Tensor& token_ids);  // [B, L] long, pad id 0

  TextEncoderConfig cfg;
  torch::nn::Embedding tok_emb{nullptr};
  torch::Tensor pos_emb;
  TransformerStack stack{nullptr};
  torch::nn::LayerNorm final_ln{nullptr};
};
TORCH_MODULE(TextEncoder);

}  // namespace ssacl
