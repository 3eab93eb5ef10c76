#pragma once

#include <cstddef>

#include "gwbart/design.hpp"
#include "gwbart/rng.hpp"
#include "gwbart/schedule.hpp"
#include "gwbart/tree.hpp"

namespace gwbart {

inline constexpr std::size_t kDefaultMaxNodes = std::size_t{1} << 20;

struct SampledTree {
  BinaryTreePartition tree;
  TreeMetrics metrics;
};

/// Draws a tree from the Galton-Watson prior by breadth-first queue
/// exploration. Each dequeued node at depth d splits with probability p(d);
/// the split variable is uniform over the coordinates that still have an
/// eligible threshold in the node's cell, and the threshold is uniform over
/// those eligible values. Nodes without any eligible threshold stay leaves.
///
/// Throws TruncationError when the tree would exceed `max_nodes`.
SampledTree sample_tree(const SplitSchedule& schedule, const Design& design, Rng& rng,
                        std::size_t max_nodes = kDefaultMaxNodes);

/// Same exploration without data: the pure branching process on shapes.
/// Consumes one uniform per explored node.
TreeMetrics sample_shape(const SplitSchedule& schedule, Rng& rng,
                         std::size_t max_nodes = kDefaultMaxNodes);

/// Exact log prior probability of `tree` under sample_tree:
///   sum over internal nodes of log p(d) - log(#splittable variables) - log(#eligible thresholds)
///   + sum over leaves of log(1 - p(d)) (0 for leaves that cannot split).
/// Throws ConsistencyError if a rule is not an eligible cut on `design`.
double tree_log_prior(const BinaryTreePartition& tree, const SplitSchedule& schedule,
                      const Design& design);

/// Log prior contribution of a leaf at `depth` whose cell holds `points`.
double leaf_log_prior(const SplitSchedule& schedule, int depth, const Design& design,
                      std::span<const int> points);

}  // namespace gwbart
