#include "ssacl/losses/reconstruction.hpp"

#include "ssacl/errors.hpp"

namespace ssacl {

torch::Tensor loss_ir(const torch::Tensor& decoded_masked, const torch::Tensor& targets) {
  if (decoded_masked.sizes() != targets.sizes()) {
    throw ShapeError("prediction/target shape mismatch in loss_ir");
  }
  if (decoded_masked.numel() == 0) {
    throw EmptyMaskError("loss_ir is undefined with zero masked patches");
  }
  return (decoded_masked - targets).pow(2).mean();
}

torch::Tensor reconstruct_parent(VisualDecoder& decoder, const torch::Tensor& child_queries) {
  TORCH_CHECK(child_queries.dim() == 3 && child_queries.size(1) >= 1,
              "child_queries must be [B, k>=1, D]");
  return decoder->decode(child_queries).mean(1);
}

torch::Tensor parent_pseudolabel(VisualDecoder& decoder, const torch::Tensor& parent_query) {
  TORCH_CHECK(parent_query.dim() == 2, "parent_query must be [B, D]");
  torch::NoGradGuard no_grad;
  return decoder->decode(parent_query.detach().unsqueeze(1)).squeeze(1).detach();
}

torch::Tensor loss_ar(const AnatomyGraph& graph, const ReconTargets& targets,
                      bool include_root) {
  std::string missing;
  std::vector<torch::Tensor> preds, labels;
  for (const auto& id : graph.internal_order()) {
    if (!include_root && id == graph.root()) continue;
    auto p = targets.parent_patches.find(id);
    auto l = targets.parent_pseudolabels.find(id);
    if (p == targets.parent_patches.end() || l == targets.parent_pseudolabels.end()) {
      missing += missing.empty() ? id : (", " + id);
      continue;
    }
    preds.push_back(p->second);
    labels.push_back(l->second);
  }
  if (!missing.empty()) {
    throw CoverageError("loss_ar missing parent reconstructions for: " + missing);
  }
  auto pred = torch::stack(preds);    // [n_parents, B, patch_dim]
  auto label = torch::stack(labels);
  return (pred - label).pow(2).mean();
}

}  // namespace ssacl
