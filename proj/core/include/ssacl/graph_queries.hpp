#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssacl/anatomy_graph.hpp"

namespace ssacl {

struct QueryEmbedding {
  std::string node_id;
  torch::Tensor vector;
  bool masked = false;
};

// Per-node embedding vectors for all graph nodes, ordered by node_order().
using PromptQuerySet = std::vector<QueryEmbedding>;

// Bottom-up parent restoration: every parent query is the elementwise mean of
// its children's queries, multi-level parents averaging already-restored
// children. Leaf vectors pass through unchanged.
//
// Throws MissingLeafError if a leaf lacks an embedding, ShapeError on width
// mismatch between leaf vectors.
PromptQuerySet restore_queries(const AnatomyGraph& graph,
                               const std::map<std::string, torch::Tensor>& leaf_queries);

// Tensor form used inside the model so restoration stays differentiable.
// leaf_queries is [M, D] or [B, M, D] in leaf_order; the result is [H, D] or
// [B, H, D] in node_order.
torch::Tensor restore_query_tensor(const AnatomyGraph& graph, const torch::Tensor& leaf_queries);

}  // namespace ssacl
