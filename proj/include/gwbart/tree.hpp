#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gwbart/design.hpp"
#include <json.hpp>

namespace gwbart {

/// Axis-aligned cut: points with x[variable] <= threshold go left.
struct SplitRule {
  int variable = 0;
  double threshold = 0.0;

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  std::optional<SplitRule> rule;
  double value = 0.0;  // step height when the node is a leaf

  bool is_leaf() const { return left < 0; }
};

/// Realized Galton-Watson quantities of one tree: total nodes X, leaves K,
/// extinction time T_ex = min{t : Z_t = 0} and generation sizes Z_0..Z_{T_ex-1}.
struct TreeMetrics {
  long long total_nodes = 0;
  long long leaves = 0;
  int extinction_time = 0;
  std::vector<long long> generation_sizes;
};

/// Full binary tree over [0,1]^p stored as a node arena. Node 0 is the root.
class BinaryTreePartition {
 public:
  BinaryTreePartition();
  explicit BinaryTreePartition(std::vector<TreeNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  TreeNode& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::vector<int> leaf_ids() const;
  std::vector<int> internal_ids() const;
  /// Internal nodes whose two children are both leaves.
  std::vector<int> prunable_ids() const;
  std::size_t leaf_count() const;
  int max_depth() const;

  /// Splits `leaf`; returns the ids of the new (left, right) children.
  std::pair<int, int> split(int leaf, SplitRule rule);
  /// Turns `id` back into a leaf. Both children must be leaves. Node ids are
  /// renumbered in breadth-first order afterwards.
  void collapse(int id);
  /// Renumbers nodes breadth-first, left to right.
  void compact();

  int find_leaf(std::span<const double> x) const;
  /// Leaf id of every design row.
  std::vector<int> route(const Design& design) const;
  /// Sum of leaf values at x.
  double predict(std::span<const double> x) const { return node(find_leaf(x)).value; }

  /// Leaf values in increasing node-id order.
  std::vector<double> heights() const;
  void set_heights(std::span<const double> values);

  /// Structure-only string; equal keys mean equal topology and rules.
  std::string canonical_key() const;

  /// Throws ConsistencyError unless every node has 0 or 2 children and
  /// parent/depth links are coherent.
  void validate() const;

  nlohmann::json to_json() const;
  static BinaryTreePartition from_json(const nlohmann::json& doc);

 private:
  std::vector<TreeNode> nodes_;
};

TreeMetrics metrics_of(const BinaryTreePartition& tree);

/// Active-queue sizes S_0 = 1, S_t = S_{t-1} - 1 + Y_t of the breadth-first
/// exploration, up to and including the first t with S_t = 0.
std::vector<long long> exploration_walk(const BinaryTreePartition& tree);

/// Design rows lying in each node's cell (index by node id).
std::vector<std::vector<int>> cell_members(const BinaryTreePartition& tree, const Design& design);

/// Distinct values of coordinate `variable` among `points`, sorted, with the
/// maximum dropped so both children of any listed cut are nonempty.
std::vector<double> eligible_thresholds(const Design& design, std::span<const int> points,
                                        int variable);

/// Coordinates with at least one eligible threshold among `points`.
std::vector<int> splittable_variables(const Design& design, std::span<const int> points);

}  // namespace gwbart
