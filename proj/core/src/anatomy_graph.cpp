#include "ssacl/anatomy_graph.hpp"

#include <algorithm>
#include <set>

#include "ssacl/errors.hpp"

namespace ssacl {

namespace {

// nlohmann merges duplicate object keys silently; detect them with a parse
// callback so duplicate node ids are rejected rather than absorbed.
void check_duplicate_keys(const std::string& text) {
  std::vector<std::set<std::string>> scopes;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      scopes.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      scopes.pop_back();
    } else if (event == json::parse_event_t::key) {
      const auto key = parsed.get<std::string>();
      if (!scopes.empty() && !scopes.back().insert(key).second) {
        throw ValidationError("duplicate id in config document: '" + key + "'");
      }
    }
    return true;
  };
  (void)json::parse(text, cb);
}

}  // namespace

AnatomyGraph AnatomyGraph::from_json_text(const std::string& config_text) {
  check_duplicate_keys(config_text);
  json doc;
  try {
    doc = json::parse(config_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("graph config is not valid JSON: ") + e.what());
  }
  if (!doc.contains("root") || !doc.contains("nodes")) {
    throw ValidationError("graph config must declare 'root' and 'nodes'");
  }

  AnatomyGraph g;
  g.config_text_ = config_text;
  g.root_ = doc.at("root").get<std::string>();
  for (const auto& [id, body] : doc.at("nodes").items()) {
    AnatomyNode n;
    n.id = id;
    n.name = body.value("name", id);
    if (body.contains("children")) {
      n.children = body.at("children").get<std::vector<std::string>>();
    }
    g.nodes_.emplace(id, std::move(n));
  }
  if (doc.contains("pathologies")) {
    for (const auto& [name, leaves] : doc.at("pathologies").items()) {
      g.pathology_map_[name] = leaves.get<std::vector<std::string>>();
    }
  }
  g.validate_and_index();
  return g;
}

AnatomyGraph AnatomyGraph::load_file(const std::filesystem::path& path) {
  return from_json_text(read_text_file(path));
}

void AnatomyGraph::validate_and_index() {
  if (!nodes_.count(root_)) {
    throw ValidationError("root node '" + root_ + "' is not declared in 'nodes'");
  }

  // Exactly one parent per non-root node; catches duplicate child listings.
  for (const auto& [id, n] : nodes_) {
    std::set<std::string> seen;
    for (const auto& c : n.children) {
      if (!nodes_.count(c)) {
        throw ValidationError("node '" + id + "' lists unknown child '" + c + "'");
      }
      if (!seen.insert(c).second) {
        throw ValidationError("node '" + id + "' lists child '" + c + "' twice");
      }
      auto [it, inserted] = parent_.emplace(c, id);
      if (!inserted) {
        throw ValidationError("node '" + c + "' has multiple parents ('" + it->second +
                              "' and '" + id + "')");
      }
    }
  }
  if (parent_.count(root_)) {
    throw ValidationError("root node '" + root_ + "' appears as a child (cycle)");
  }

  // Preorder traversal assigns levels and the canonical orders. An explicit
  // stack guards against pathological depth.
  std::vector<std::pair<std::string, int>> stack{{root_, 1}};
  std::set<std::string> visited;
  while (!stack.empty()) {
    auto [id, level] = stack.back();
    stack.pop_back();
    if (!visited.insert(id).second) {
      throw ValidationError("cycle detected at node '" + id + "'");
    }
    auto& n = nodes_.at(id);
    n.level = level;
    max_level_ = std::max(max_level_, level);
    node_index_[id] = static_cast<int>(node_order_.size());
    node_order_.push_back(id);
    if (n.is_leaf()) {
      leaf_index_[id] = static_cast<int>(leaf_order_.size());
      leaf_order_.push_back(id);
    } else {
      internal_order_.push_back(id);
    }
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      stack.emplace_back(*it, level + 1);
    }
  }
  if (visited.size() != nodes_.size()) {
    for (const auto& [id, n] : nodes_) {
      if (!visited.count(id)) {
        throw ValidationError("node '" + id + "' is unreachable from the root (forest)");
      }
    }
  }

  for (const auto& [id, n] : nodes_) {
    auto [it, inserted] = name_to_id_.emplace(n.name, id);
    if (!inserted) {
      throw ValidationError("node name '" + n.name + "' is shared by '" + it->second +
                            "' and '" + id + "'");
    }
  }

  for (const auto& [name, leaves] : pathology_map_) {
    for (const auto& leaf : leaves) {
      if (!nodes_.count(leaf)) {
        throw ValidationError("pathology '" + name + "' maps to unknown node '" + leaf + "'");
      }
      if (!nodes_.at(leaf).is_leaf()) {
        throw ValidationError("pathology '" + name + "' maps to non-leaf node '" + leaf + "'");
      }
    }
    pathology_order_.push_back(name);
  }
  std::sort(pathology_order_.begin(), pathology_order_.end());
}

const AnatomyNode& AnatomyGraph::node(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw ValidationError("unknown node id '" + id + "'");
  return it->second;
}

std::optional<std::string> AnatomyGraph::parent(const std::string& id) const {
  auto it = parent_.find(id);
  if (it == parent_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> AnatomyGraph::ancestors(const std::string& id) const {
  std::vector<std::string> out;
  auto cur = parent(id);
  while (cur) {
    out.push_back(*cur);
    cur = parent(*cur);
  }
  return out;
}

int AnatomyGraph::node_index(const std::string& id) const {
  auto it = node_index_.find(id);
  if (it == node_index_.end()) throw ValidationError("unknown node id '" + id + "'");
  return it->second;
}

int AnatomyGraph::leaf_index(const std::string& id) const {
  auto it = leaf_index_.find(id);
  if (it == leaf_index_.end()) throw ValidationError("node '" + id + "' is not a leaf");
  return it->second;
}

std::vector<std::string> AnatomyGraph::pathologies_to_leaves(
    std::span<const std::string> pathologies) const {
  std::set<int> indices;
  for (const auto& name : pathologies) {
    auto it = pathology_map_.find(name);
    if (it == pathology_map_.end()) {
      throw UnknownPathologyError("unknown pathology '" + name + "'");
    }
    for (const auto& leaf : it->second) indices.insert(leaf_index(leaf));
  }
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (int idx : indices) out.push_back(leaf_order_[idx]);
  return out;
}

std::optional<std::string> AnatomyGraph::node_id_by_name(const std::string& name) const {
  auto it = name_to_id_.find(name);
  if (it == name_to_id_.end()) return std::nullopt;
  return it->second;
}

}  // namespace ssacl
