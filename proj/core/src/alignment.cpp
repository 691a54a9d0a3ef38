#include "ssacl/losses/alignment.hpp"

#include "ssacl/errors.hpp"

namespace ssacl {

namespace {
torch::Tensor cosine_rows(const torch::Tensor& x) {
  return torch::nn::functional::normalize(x,
                                          torch::nn::functional::NormalizeFuncOptions().dim(-1));
}
}  // namespace

SimilarityBundle build_similarity(const torch::Tensor& leaf_tokens_unmasked,
                                  const torch::Tensor& text_globals, double lambda,
                                  const torch::Tensor& tau) {
  TORCH_CHECK(leaf_tokens_unmasked.dim() == 3, "leaf tokens must be [N, M, D]");
  TORCH_CHECK(text_globals.dim() == 2, "text globals must be [N, D]");
  auto tokens = cosine_rows(leaf_tokens_unmasked);
  auto texts = cosine_rows(text_globals);

  SimilarityBundle bundle;
  bundle.S_L = torch::einsum("iad,jbd->ijab", {tokens, tokens});
  bundle.S_T = torch::matmul(texts, texts.t());
  bundle.lambda = lambda;
  bundle.tau = tau;
  return bundle;
}

torch::Tensor loss_cl(const torch::Tensor& image_globals, const torch::Tensor& text_globals,
                      const torch::Tensor& tau, bool symmetric) {
  const auto N = image_globals.size(0);
  if (N < 2) {
    throw BatchTooSmall("loss_cl needs a batch of at least 2 pairs");
  }
  auto img = cosine_rows(image_globals);
  auto txt = cosine_rows(text_globals);
  auto logits = torch::matmul(img, txt.t()) / tau;  // [N, N], row i over text candidates

  auto i2t = -torch::log_softmax(logits, 1).diagonal().mean();
  if (!symmetric) return i2t;
  auto t2i = -torch::log_softmax(logits.t(), 1).diagonal().mean();
  return 0.5 * (i2t + t2i);
}

torch::Tensor loss_ac(const SimilarityBundle& bundle, bool soft_target_matrix) {
  const auto N = bundle.S_L.size(0);
  const auto M = bundle.S_L.size(2);
  auto log_probs = torch::log_softmax(bundle.S_L / bundle.tau, -1);  // over b

  // Soft weights are labels; no gradient flows into the text side here.
  auto s_t = bundle.S_T.detach();
  const double lambda = bundle.lambda;

  if (!soft_target_matrix) {
    auto diag = log_probs.diagonal(0, 2, 3);          // [N, N, M], entries (i,j,a,a)
    auto w = lambda * s_t + (1.0 - lambda);           // [N, N]
    auto weighted = w.unsqueeze(-1) * diag;
    return -weighted.sum() / static_cast<double>(M * N * N);
  }

  // Prose variant: per-(i,j) target matrix Y = lambda*s^T + (1-lambda)*I_M,
  // row-normalized, scored with cross-entropy over b.
  auto eye = torch::eye(M, bundle.S_L.options());
  auto y = lambda * s_t.unsqueeze(-1).unsqueeze(-1) + (1.0 - lambda) * eye;
  y = y / y.sum(-1, true).clamp_min(1e-12);
  return -(y * log_probs).sum() / static_cast<double>(M * N * N);
}

}  // namespace ssacl
