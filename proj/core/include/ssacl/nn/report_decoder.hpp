#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssacl/anatomy_graph.hpp"
#include "ssacl/nn/attention.hpp"
#include "ssacl/tokenizer.hpp"

namespace ssacl {

// Anatomy-pathology prefix for generation. Prefix positions the presence
// mask switches off are kept in the sequence but unattendable by report
// tokens (fixed sequence shapes).
struct GenerationPrefix {
  torch::Tensor tokens;    // [B, P, D] anatomy queries then pathology slots
  torch::Tensor presence;  // [B, P] bool
  std::int64_t n_anatomy = 0;
};

struct ReportDecoderConfig {
  std::int64_t vocab = 0;
  std::int64_t width = 128;
  std::int64_t layers = 4;
  std::int64_t heads = 4;
  std::int64_t max_report_len = 100;
  std::int64_t pathology_slots = 4;
};

// Autoregressive transformer decoder. Report positions use causal
// self-attention plus full attention to present prefix positions; absent
// prefix positions are attendable by nobody but themselves.
struct ReportDecoderImpl : torch::nn::Module {
  explicit ReportDecoderImpl(const ReportDecoderConfig& cfg);

  // Pathology entity tokens are embedded with the decoder's own input table
  // (shared vocabulary). pathology_ids: [B, slots] long, kPad for empty.
  GenerationPrefix build_prefix(const torch::Tensor& anatomy_queries,  // [B, H, D]
                                const torch::Tensor& pathology_ids,
                                const torch::Tensor& anatomy_presence);  // [B, H] bool

  // Teacher-forced logits for report_in ([B, T] long); position i's logits
  // depend only on the prefix and tokens < i.
  torch::Tensor forward_logits(const GenerationPrefix& prefix, const torch::Tensor& report_in);

  // Mean NLL over (non-pad) report positions; prefix positions excluded.
  // report_ids: [B, T] gold tokens without specials; <bos>/<eos> added here.
  torch::Tensor loss_lm(const GenerationPrefix& prefix, const torch::Tensor& report_ids);

  // Greedy decoding; stops per sample at <eos> or max_len tokens.
  std::vector<std::vector<std::int64_t>> generate(const GenerationPrefix& prefix,
                                                  std::int64_t max_len = 0);

  ReportDecoderConfig cfg;
  torch::nn::Embedding tok_emb{nullptr};
  torch::Tensor report_pos_emb;  // [max_report_len + 2, D]
  torch::Tensor type_emb;        // [3, D]: anatomy / pathology / text
  TransformerStack stack{nullptr};
  torch::nn::LayerNorm final_ln{nullptr};
  torch::nn::Linear lm_head{nullptr};

 private:
  AttentionTopology make_topology(const GenerationPrefix& prefix, std::int64_t report_len) const;
};
TORCH_MODULE(ReportDecoder);

}  // namespace ssacl
