#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace hieradmm {

// Tuple address of a node in a rooted tree. The root is the empty tuple and
// prints as "root". Every other node carries the full path from the root,
// with a constant leading 1, so the children of the root are (1,1), (1,2), ...
// and a node's parent is obtained by dropping the last entry. A node's level
// is its distance from the root: 0 for the root, path length - 1 otherwise.
class NodeId {
 public:
  NodeId() = default;  // root
  explicit NodeId(std::vector<int> path);

  static NodeId root() { return NodeId(); }

  bool is_root() const { return path_.empty(); }
  int level() const { return path_.empty() ? 0 : static_cast<int>(path_.size()) - 1; }
  const std::vector<int>& path() const { return path_; }

  NodeId parent() const;          // throws TreeError on the root
  NodeId child(int index) const;  // append one entry (root children get the leading 1)

  // True when this node's path is a strict prefix of other's.
  bool is_ancestor_of(const NodeId& other) const;

  std::string str() const;                       // "root" or dot-joined, e.g. "1.2.1"
  static NodeId parse(const std::string& text);  // inverse of str()

  auto operator<=>(const NodeId&) const = default;

 private:
  std::vector<int> path_;
};

// Immutable rooted tree over NodeId addresses. Construction validates that the
// root is present and that every node's parent (path minus last entry) exists.
// All query results are in lexicographic path order, so vector indexing over
// node sets is deterministic.
class Tree {
 public:
  Tree() = default;  // empty placeholder; build real trees with from_nodes
  static Tree from_nodes(std::vector<NodeId> nodes);

  bool contains(const NodeId& node) const;
  std::size_t size() const { return nodes_.size(); }
  int depth() const { return depth_; }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<NodeId>& children(const NodeId& node) const;

  std::vector<NodeId> descendants(const NodeId& node) const;
  std::vector<NodeId> ancestors(const NodeId& node) const;  // root first
  std::vector<NodeId> leaves() const;
  std::vector<NodeId> branching_nodes() const;
  std::vector<NodeId> leaf_descendants(const NodeId& branch) const;
  std::vector<NodeId> nodes_at_level(int level) const;

  bool is_leaf(const NodeId& node) const;

 private:
  std::vector<NodeId> nodes_;  // sorted
  std::map<NodeId, std::vector<NodeId>> children_;
  int depth_ = 0;
};

}  // namespace hieradmm
