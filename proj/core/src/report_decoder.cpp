#include "ssacl/nn/report_decoder.hpp"

#include "ssacl/errors.hpp"

namespace ssacl {

ReportDecoderImpl::ReportDecoderImpl(const ReportDecoderConfig& cfg_in) : cfg(cfg_in) {
  tok_emb = register_module("tok_emb", torch::nn::Embedding(cfg.vocab, cfg.width));
  report_pos_emb = register_parameter(
      "report_pos_emb", torch::randn({cfg.max_report_len + 2, cfg.width}) * 0.02);
  type_emb = register_parameter("type_emb", torch::randn({3, cfg.width}) * 0.02);
  stack = register_module("stack", TransformerStack(cfg.width, cfg.layers, cfg.heads));
  final_ln = register_module("final_ln",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.width})));
  lm_head = register_module("lm_head", torch::nn::Linear(cfg.width, cfg.vocab));
}

GenerationPrefix ReportDecoderImpl::build_prefix(const torch::Tensor& anatomy_queries,
                                                 const torch::Tensor& pathology_ids,
                                                 const torch::Tensor& anatomy_presence) {
  const auto H = anatomy_queries.size(1);
  if (anatomy_queries.size(2) != cfg.width) {
    throw ShapeError("anatomy queries width mismatch in build_prefix");
  }
  auto anat = anatomy_queries + type_emb[0];
  auto path = tok_emb(pathology_ids) + type_emb[1];  // [B, slots, D]

  GenerationPrefix prefix;
  prefix.tokens = torch::cat({anat, path}, 1);
  prefix.presence = torch::cat({anatomy_presence, pathology_ids.ne(Tokenizer::kPad)}, 1);
  prefix.n_anatomy = H;
  return prefix;
}

AttentionTopology ReportDecoderImpl::make_topology(const GenerationPrefix& prefix,
                                                   std::int64_t report_len) const {
  const auto B = prefix.tokens.size(0);
  const auto P = prefix.tokens.size(1);
  const auto S = P + report_len;
  auto allowed = torch::zeros({B, 1, S, S}, torch::kBool);

  // Prefix rows: present prefix positions plus self.
  auto present = prefix.presence.view({B, 1, 1, P}).expand({B, 1, P, P});
  allowed.slice(2, 0, P).slice(3, 0, P) =
      present | torch::eye(P, torch::kBool).view({1, 1, P, P});

  if (report_len > 0) {
    // Report rows: present prefix positions and causally earlier report tokens.
    allowed.slice(2, P, S).slice(3, 0, P) =
        prefix.presence.view({B, 1, 1, P}).expand({B, 1, report_len, P});
    allowed.slice(2, P, S).slice(3, P, S) =
        torch::ones({report_len, report_len}, torch::kBool).tril().view(
            {1, 1, report_len, report_len});
  }
  return {allowed};
}

torch::Tensor ReportDecoderImpl::forward_logits(const GenerationPrefix& prefix,
                                                const torch::Tensor& report_in) {
  const auto T = report_in.size(1);
  TORCH_CHECK(T <= cfg.max_report_len + 2, "report longer than positional table");

  auto text = tok_emb(report_in) + report_pos_emb.slice(0, 0, T).unsqueeze(0) + type_emb[2];
  auto seq = torch::cat({prefix.tokens, text}, 1);
  auto h = stack(seq, make_topology(prefix, T));
  h = final_ln(h.slice(1, prefix.tokens.size(1)));  // report positions only
  return lm_head(h);  // [B, T, vocab]
}

torch::Tensor ReportDecoderImpl::loss_lm(const GenerationPrefix& prefix,
                                         const torch::Tensor& report_ids) {
  const auto B = report_ids.size(0);
  const auto L = report_ids.size(1);
  TORCH_CHECK(L >= 1, "loss_lm needs at least one report token");

  auto bos = torch::full({B, 1}, Tokenizer::kBos, torch::kLong);
  auto in = torch::cat({bos, report_ids}, 1);  // [B, L+1]

  // Targets: gold tokens then <eos> right after the last non-pad position.
  auto lengths = report_ids.ne(Tokenizer::kPad).sum(1);  // [B]
  auto targets = torch::full({B, L + 1}, static_cast<std::int64_t>(Tokenizer::kPad),
                             torch::kLong);
  targets.slice(1, 0, L) = report_ids;
  for (std::int64_t b = 0; b < B; ++b) {
    const auto len = lengths[b].item<std::int64_t>();
    targets[b][len] = Tokenizer::kEos;
    // pad inputs after the sequence stay pad (already are)
  }

  auto logits = forward_logits(prefix, in);  // [B, L+1, vocab]
  auto flat_logits = logits.reshape({-1, cfg.vocab});
  auto flat_targets = targets.reshape({-1});
  auto nll = torch::nn::functional::cross_entropy(
      flat_logits, flat_targets,
      torch::nn::functional::CrossEntropyFuncOptions()
          .ignore_index(Tokenizer::kPad)
          .reduction(torch::kMean));
  return nll;
}

std::vector<std::vector<std::int64_t>> ReportDecoderImpl::generate(
    const GenerationPrefix& prefix, std::int64_t max_len) {
  torch::NoGradGuard no_grad;
  const auto B = prefix.tokens.size(0);
  if (max_len <= 0 || max_len > cfg.max_report_len) max_len = cfg.max_report_len;

  auto in = torch::full({B, 1}, Tokenizer::kBos, torch::kLong);
  std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(B));
  std::vector<bool> done(static_cast<std::size_t>(B), false);

  for (std::int64_t step = 0; step < max_len; ++step) {
    auto logits = forward_logits(prefix, in);        // [B, step+1, vocab]
    auto next = logits.select(1, step).argmax(-1);   // [B]
    auto next_col = next.unsqueeze(1);
    in = torch::cat({in, next_col}, 1);
    bool all_done = true;
    for (std::int64_t b = 0; b < B; ++b) {
      if (done[static_cast<std::size_t>(b)]) continue;
      const auto id = next[b].item<std::int64_t>();
      if (id == Tokenizer::kEos) {
        done[static_cast<std::size_t>(b)] = true;
      } else {
        out[static_cast<std::size_t>(b)].push_back(id);
        all_done = false;
      }
    }
    if (all_done) break;
  }
  return out;
}

}  // namespace ssacl
