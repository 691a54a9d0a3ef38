#pragma once

#include <map>
#include <string>

#include <torch/torch.h>

#include "ssacl/anatomy_graph.hpp"
#include "ssacl/nn/visual_decoder.hpp"

namespace ssacl {

// Global masked-reconstruction loss: mean squared error over the hidden
// patches' pixels only. Throws EmptyMaskError when nothing is masked.
torch::Tensor loss_ir(const torch::Tensor& decoded_masked, const torch::Tensor& targets);

// Decodes the concatenated child-query sequence and pools the per-token patch
// outputs by elementwise mean into one predicted parent patch.
// child_queries: [B, k, D] -> [B, patch_dim].
torch::Tensor reconstruct_parent(VisualDecoder& decoder, const torch::Tensor& child_queries);

// Single-token decode of the unmasked parent query; detached, so the
// pseudo-label carries no gradient. parent_query: [B, D] -> [B, patch_dim].
torch::Tensor parent_pseudolabel(VisualDecoder& decoder, const torch::Tensor& parent_query);

struct ReconTargets {
  std::map<std::string, torch::Tensor> parent_patches;       // node id -> [B, patch_dim]
  std::map<std::string, torch::Tensor> parent_pseudolabels;  // node id -> [B, patch_dim]
};

// Hierarchical anatomy reconstruction: mean over parents and batch of the MSE
// between predicted parent patches and their pseudo-labels. Throws
// CoverageError listing the parents missing from either map.
torch::Tensor loss_ar(const AnatomyGraph& graph, const ReconTargets& targets,
                      bool include_root = true);

}  // namespace ssacl
