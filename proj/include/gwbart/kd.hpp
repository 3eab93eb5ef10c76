#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwbart/design.hpp"
#include "gwbart/schedule.hpp"
#include "gwbart/tree.hpp"

namespace gwbart {

/// Complete, balanced k-d partition: layer d splits every cell on coordinate
/// d mod p at the lower median of the cell's points, for s rounds over all
/// p coordinates (K = 2^{s p} leaves).
struct KdTree {
  BinaryTreePartition tree;
  int rounds = 0;
  std::size_t dim = 0;

  std::size_t leaf_count() const { return tree.leaf_count(); }
  int layers() const { return rounds * static_cast<int>(dim); }
  nlohmann::json to_json() const;
};

/// Threshold is the ceil(m/2)-th smallest of the m in-cell values; points
/// <= threshold go left. If that value is the cell maximum (ties), the next
/// smaller distinct value is used. Throws CapacityError when n < 2^{s p} and
/// DegeneracyError when a cell cannot be split.
KdTree build_kd_tree(const Design& design, int rounds);

/// sqrt((1/n) sum f_i^2).
double empirical_norm(std::span<const double> values);

struct StepFit {
  BinaryTreePartition tree;    // input tree with leaf values set to leaf means
  std::vector<double> fitted;  // step function at the design points
  double error = 0.0;          // ||target - fitted||_n
};

/// Least-squares step heights on a fixed partition: each leaf gets the mean
/// of the targets it holds. Leaves without design points get 0.
StepFit project_step_function(const BinaryTreePartition& tree, const Design& design,
                              std::span<const double> target);

/// Exact log prior of a k-d tree next to the lower bounds used to show it
/// carries enough prior mass. With K leaves, L = log2 K layers, design size n
/// and dimension p (all logs natural):
///   per_node_alpha   K log(1 - a^L) - (K-1) log(pn) + sum_{d<L} 2^d log a
///   per_depth        K log(1 - a^L) - (K-1) log(pn) + sum_{d<L} 2^d log p(d)
///   alpha_power      K log(1 - a^L) - (K-1) log(pn) + (K-1) log a
///   alpha_one_minus  K log(a (1 - a)) - (K-1) log(pn)
///   closed_form      -K log(2n) - (K-1) log(pn)
/// per_node_alpha charges a once per internal node as the published chain
/// does; per_depth charges each node its schedule probability.
struct KdPriorMass {
  double exact_log = 0.0;
  double per_node_alpha = 0.0;
  double per_depth = 0.0;
  double alpha_power = 0.0;
  double alpha_one_minus = 0.0;
  double closed_form = 0.0;

  /// (name, value) for every bound, in chain order.
  std::vector<std::pair<std::string, double>> bounds() const;
  bool exact_dominates(const std::string& bound_name) const;
  nlohmann::json to_json() const;
};

/// Requires a GeometricDecay schedule with 1/n <= alpha < 1/2.
KdPriorMass kd_prior_mass(const KdTree& kd, const SplitSchedule& schedule, const Design& design);

/// Splits a k-d tree into T rooted subtrees by cutting below the top
/// ceil(log2 T) layers: branch b (breadth-first order at the cut depth) is
/// kept in tree b mod T and collapsed to a zero-height leaf in the others.
/// Leaf values of `kd_tree` are carried into the branches, so the sum of the
/// T step functions equals the step function of `kd_tree` everywhere.
/// Requires 1 <= T <= K/2.
std::vector<BinaryTreePartition> chop_ensemble(const KdTree& kd, int num_trees);
std::vector<BinaryTreePartition> chop_ensemble(const KdTree& kd, const BinaryTreePartition& valued,
                                               int num_trees);

}  // namespace gwbart
