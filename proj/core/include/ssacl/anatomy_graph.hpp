#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssacl/common.hpp"

namespace ssacl {

struct AnatomyNode {
  std::string id;
  std::string name;
  int level = 1;  // root = 1
  std::vector<std::string> children;

  bool is_leaf() const { return children.empty(); }
};

// Rooted tree of anatomical entities with parent->child inclusion edges and a
// pathology->leaf mapping. Immutable after load; safe to share across threads.
class AnatomyGraph {
 public:
  static AnatomyGraph from_json_text(const std::string& config_text);
  static AnatomyGraph load_file(const std::filesystem::path& path);

  const std::string& root() const { return root_; }
  const AnatomyNode& node(const std::string& id) const;
  bool has_node(const std::string& id) const { return nodes_.count(id) > 0; }

  // Depth-first preorder from the root; the canonical order for every
  // node-indexed tensor (prompt sequences, positional embeddings).
  const std::vector<std::string>& node_order() const { return node_order_; }
  // Leaves in node_order; the fixed total order behind every M-indexed tensor.
  const std::vector<std::string>& leaf_order() const { return leaf_order_; }
  // Non-leaf nodes in node_order (root first).
  const std::vector<std::string>& internal_order() const { return internal_order_; }

  std::size_t node_count() const { return node_order_.size(); }
  std::size_t leaf_count() const { return leaf_order_.size(); }
  int max_level() const { return max_level_; }

  bool is_leaf(const std::string& id) const { return node(id).is_leaf(); }
  std::optional<std::string> parent(const std::string& id) const;
  // Strict ancestors, nearest first (parent, grandparent, ..., root).
  std::vector<std::string> ancestors(const std::string& id) const;

  int node_index(const std::string& id) const;
  int leaf_index(const std::string& id) const;

  const std::map<std::string, std::vector<std::string>>& pathology_map() const {
    return pathology_map_;
  }
  // Pathology names sorted lexicographically; the canonical label order.
  const std::vector<std::string>& pathology_order() const { return pathology_order_; }

  // Union of the mapped leaf sets, deduplicated, ordered by leaf_order.
  // Throws UnknownPathologyError for names missing from the map.
  std::vector<std::string> pathologies_to_leaves(std::span<const std::string> pathologies) const;

  // Lookup by human-readable name (names are unique by validation).
  std::optional<std::string> node_id_by_name(const std::string& name) const;

  const std::string& config_text() const { return config_text_; }

 private:
  AnatomyGraph() = default;
  void validate_and_index();

  std::string root_;
  std::map<std::string, AnatomyNode> nodes_;
  std::map<std::string, std::vector<std::string>> pathology_map_;
  std::vector<std::string> pathology_order_;
  std::vector<std::string> node_order_;
  std::vector<std::string> leaf_order_;
  std::vector<std::string> internal_order_;
  std::map<std::string, std::string> parent_;
  std::map<std::string, int> node_index_;
  std::map<std::string, int> leaf_index_;
  std::map<std::string, std::string> name_to_id_;
  int max_level_ = 1;
  std::string config_text_;
};

}  // namespace ssacl
