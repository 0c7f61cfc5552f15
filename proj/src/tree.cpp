#include "hieradmm/tree.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "hieradmm/errors.hpp"

namespace hieradmm {

NodeId::NodeId(std::vector<int> path) : path_(std::move(path)) {
  if (path_.empty()) return;
  if (path_.size() < 2) {
    throw TreeError("node id '" + str() +
                    "' is invalid: non-root paths carry the leading 1 plus at "
                    "least one branch index");
  }
  if (path_.front() != 1) {
    throw TreeError("node id '" + str() + "' is invalid: first entry must be 1");
  }
  for (int d : path_) {
    if (d < 1) throw TreeError("node id '" + str() + "' has a non-positive entry");
  }
}

NodeId NodeId::parent() const {
  if (is_root()) throw TreeError("the root has no parent");
  if (path_.size() == 2) return root();
  std::vector<int> p(path_.begin(), path_.end() - 1);
  return NodeId(std::move(p));
}

NodeId NodeId::child(int index) const {
  if (index < 1) throw TreeError("child index must be positive");
  std::vector<int> p = path_;
  if (p.empty()) p.push_back(1);
  p.push_back(index);
  return NodeId(std::move(p));
}

bool NodeId::is_ancestor_of(const NodeId& other) const {
  if (path_.size() >= other.path_.size()) return false;
  return std::equal(path_.begin(), path_.end(), other.path_.begin());
}

std::string NodeId::str() const {
  if (is_root()) return "root";
  std::ostringstream out;
  for (std::size_t i = 0; i < path_.size(); ++i) {
    if (i) out << '.';
    out << path_[i];
  }
  return out.str();
}

NodeId NodeId::parse(const std::string& text) {
  if (text == "root" || text.empty()) return root();
  std::vector<int> path;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (p < end) {
    int value = 0;
    auto [next, ec] = std::from_chars(p, end, value);
    if (ec != std::errc() || (next < end && *next != '.')) {
      throw TreeError("cannot parse node id '" + text + "'");
    }
    path.push_back(value);
    p = next < end ? next + 1 : next;
  }
  return NodeId(std::move(path));
}

Tree Tree::from_nodes(std::vector<NodeId> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  if (nodes.empty() || !nodes.front().is_root()) {
    throw TreeError("tree must contain the root node");
  }
  Tree tree;
  tree.nodes_ = std::move(nodes);
  for (const NodeId& node : tree.nodes_) {
    tree.children_.emplace(node, std::vector<NodeId>{});
    if (node.is_root()) continue;
    auto parent = tree.children_.find(node.parent());
    if (parent == tree.children_.end()) {
      throw TreeError("node " + node.str() + " has no parent in the tree");
    }
    parent->second.push_back(node);
    tree.depth_ = std::max(tree.depth_, node.level());
  }
  return tree;
}

bool Tree::contains(const NodeId& node) const {
  return children_.count(node) > 0;
}

const std::vector<NodeId>& Tree::children(const NodeId& node) const {
  auto it = children_.find(node);
  if (it == children_.end()) throw TreeError("node " + node.str() + " not in tree");
  return it->second;
}

std::vector<NodeId> Tree::descendants(const NodeId& node) const {
  if (!contains(node)) throw TreeError("node " + node.str() + " not in tree");
  std::vector<NodeId> out;
  for (const NodeId& candidate : nodes_) {
    if (node.is_ancestor_of(candidate)) out.push_back(candidate);
  }
  return out;
}

std::vector<NodeId> Tree::ancestors(const NodeId& node) const {
  if (!contains(node)) throw TreeError("node " + node.str() + " not in tree");
  std::vector<NodeId> out;
  NodeId current = node;
  while (!current.is_root()) {
    current = current.parent();
    out.push_back(current);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<NodeId> Tree::leaves() const {
  std::vector<NodeId> out;
  for (const auto& [node, kids] : children_) {
    if (kids.empty()) out.push_back(node);
  }
  return out;
}

std::vector<NodeId> Tree::branching_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [node, kids] : children_) {
    if (!kids.empty()) out.push_back(node);
  }
  return out;
}

bool Tree::is_leaf(const NodeId& node) const {
  return children(node).empty();
}

std::vector<NodeId> Tree::leaf_descendants(const NodeId& branch) const {
  if (is_leaf(branch)) {
    throw TreeError("node " + branch.str() + " is a leaf, not a branching node");
  }
  std::vector<NodeId> out;
  for (const NodeId& candidate : descendants(branch)) {
    if (is_leaf(candidate)) out.push_back(candidate);
  }
  return out;
}

std::vector<NodeId> Tree::nodes_at_level(int level) const {
  if (level < 0) throw TreeError("level must be non-negative");
  std::vector<NodeId> out;
  for (const NodeId& node : nodes_) {
    if (node.level() == level) out.push_back(node);
  }
  return out;
}

}  // namespace hieradmm
