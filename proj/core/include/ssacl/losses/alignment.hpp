#pragma once

#include <torch/torch.h>

namespace ssacl {

// Unit-normed global embeddings of one (masked image, report) pair.
struct GlobalPair {
  torch::Tensor image_global;  // g^{I_mask}
  torch::Tensor text_global;   // g^T
};

// Leaf-token similarity structure for one mini-batch. S_L[i,j,a,b] is the
// cosine similarity between leaf token a of sample i and leaf token b of
// sample j (tokens from the unmasked pass); S_T[i,j] is the cosine between
// the global report embeddings.
struct SimilarityBundle {
  torch::Tensor S_L;   // [N, N, M, M]
  torch::Tensor S_T;   // [N, N]
  double lambda = 0.1;
  torch::Tensor tau;   // positive scalar (learnable upstream)
};

SimilarityBundle build_similarity(const torch::Tensor& leaf_tokens_unmasked,  // [N, M, D]
                                  const torch::Tensor& text_globals,          // [N, D]
                                  double lambda, const torch::Tensor& tau);

// Global image-text contrastive loss; negative mean log-softmax of the
// matched pair over text candidates (image->text as written; the symmetric
// text->image direction can be averaged in).
// Throws BatchTooSmall for N < 2.
torch::Tensor loss_cl(const torch::Tensor& image_globals, const torch::Tensor& text_globals,
                      const torch::Tensor& tau, bool symmetric = false);

// Anatomical consistency alignment: weighted NLL pulling same-index leaf
// tokens together across samples and pushing different leaves apart,
//   -(1/(M N^2)) sum_{i,j,a} (lambda*s_ij^T + 1 - lambda)
//                * log softmax_b(S_L[i,j,a,b]/tau) at b == a.
// The textual similarity acts as a label and is detached. soft_target_matrix
// switches to the full soft-target cross-entropy variant where the target
// row over b is lambda*s_ij^T + (1-lambda)*I_M, row-normalized.
torch::Tensor loss_ac(const SimilarityBundle& bundle, bool soft_target_matrix = false);

}  // namespace ssacl
