#include "ssacl/graph_queries.hpp"

#include <algorithm>

#include "ssacl/errors.hpp"

namespace ssacl {

PromptQuerySet restore_queries(const AnatomyGraph& graph,
                               const std::map<std::string, torch::Tensor>& leaf_queries) {
  std::int64_t width = -1;
  for (const auto& leaf : graph.leaf_order()) {
    auto it = leaf_queries.find(leaf);
    if (it == leaf_queries.end()) {
      throw MissingLeafError("leaf '" + leaf + "' has no query embedding");
    }
    if (it->second.dim() != 1) {
      throw ShapeError("leaf query '" + leaf + "' must be a 1-D vector");
    }
    if (width < 0) width = it->second.size(0);
    if (it->second.size(0) != width) {
      throw ShapeError("leaf query '" + leaf + "' has width " +
                       std::to_string(it->second.size(0)) + ", expected " +
                       std::to_string(width));
    }
  }

  std::map<std::string, torch::Tensor> restored;
  for (const auto& [id, q] : leaf_queries) restored[id] = q;

  // Children are strictly deeper than parents, so walking internal nodes by
  // decreasing level restores every child before its parent needs it.
  auto internals = graph.internal_order();
  std::sort(internals.begin(), internals.end(), [&](const auto& a, const auto& b) {
    return graph.node(a).level > graph.node(b).level;
  });
  for (const auto& id : internals) {
    const auto& children = graph.node(id).children;
    std::vector<torch::Tensor> rows;
    rows.reserve(children.size());
    for (const auto& c : children) rows.push_back(restored.at(c));
    restored[id] = torch::stack(rows).mean(0);
  }

  PromptQuerySet out;
  out.reserve(graph.node_count());
  for (const auto& id : graph.node_order()) {
    out.push_back({id, restored.at(id), false});
  }
  return out;
}

torch::Tensor restore_query_tensor(const AnatomyGraph& graph, const torch::Tensor& leaf_queries) {
  const bool batched = leaf_queries.dim() == 3;
  if (!batched && leaf_queries.dim() != 2) {
    throw ShapeError("leaf_queries must be [M, D] or [B, M, D]");
  }
  auto leaves = batched ? leaf_queries : leaf_queries.unsqueeze(0);
  const auto M = static_cast<std::int64_t>(graph.leaf_count());
  if (leaves.size(1) != M) {
    throw ShapeError("leaf_queries has " + std::to_string(leaves.size(1)) +
                     " rows, expected M=" + std::to_string(M));
  }

  const auto H = static_cast<std::int64_t>(graph.node_count());
  std::vector<torch::Tensor> rows(H);
  for (const auto& leaf : graph.leaf_order()) {
    rows[graph.node_index(leaf)] = leaves.select(1, graph.leaf_index(leaf));
  }
  auto internals = graph.internal_order();
  std::sort(internals.begin(), internals.end(), [&](const auto& a, const auto& b) {
    return graph.node(a).level > graph.node(b).level;
  });
  for (const auto& id : internals) {
    const auto& children = graph.node(id).children;
    std::vector<torch::Tensor> kids;
    kids.reserve(children.size());
    for (const auto& c : children) kids.push_back(rows[graph.node_index(c)]);
    rows[graph.node_index(id)] = torch::stack(kids, 1).mean(1);
  }
  auto out = torch::stack(rows, 1);  // [B, H, D]
  return batched ? out : out.squeeze(0);
}

}  // namespace ssacl
