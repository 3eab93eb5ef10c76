#include "gwbart/prior.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gwbart/error.hpp"

namespace gwbart {

namespace {

double safe_log(double x) {
  return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

}  // namespace

SampledTree sample_tree(const SplitSchedule& schedule, const Design& design, Rng& rng,
                        std::size_t max_nodes) {
  if (design.rows() < 1 || design.cols() < 1) throw ParameterError("design must be at least 1 x 1");
  if (max_nodes < 1) throw ParameterError("max_nodes must be >= 1");

  BinaryTreePartition tree;
  std::vector<std::vector<int>> members(1);
  members[0].resize(design.rows());
  for (std::size_t i = 0; i < design.rows(); ++i) members[0][i] = static_cast<int>(i);

  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const int depth = tree.node(id).depth;
    if (!rng.bernoulli(schedule(depth))) continue;

    const auto& pts = members[static_cast<std::size_t>(id)];
    const auto vars = splittable_variables(design, pts);
    if (vars.empty()) continue;
    auto var = static_cast<int>(rng.index(design.cols()));
    if (std::find(vars.begin(), vars.end(), var) == vars.end()) {
      var = vars[rng.index(vars.size())];
    }
    const auto cuts = eligible_thresholds(design, pts, var);
    const double threshold = cuts[rng.index(cuts.size())];

    if (tree.size() + 2 > max_nodes) {
      throw TruncationError("prior draw exceeded max_nodes");
    }
    auto [l, r] = tree.split(id, {var, threshold});
    members.resize(tree.size());
    for (int i : members[static_cast<std::size_t>(id)]) {
      const double x = design(static_cast<std::size_t>(i), static_cast<std::size_t>(var));
      members[static_cast<std::size_t>(x <= threshold ? l : r)].push_back(i);
    }
    queue.push_back(l);
    queue.push_back(r);
  }
  auto metrics = metrics_of(tree);
  return {std::move(tree), std::move(metrics)};
}

TreeMetrics sample_shape(const SplitSchedule& schedule, Rng& rng, std::size_t max_nodes) {
  if (max_nodes < 1) throw ParameterError("max_nodes must be >= 1");
  TreeMetrics m;
  m.total_nodes = 1;
  long long current = 1;
  int t = 0;
  // Breadth-first exploration visits generation t completely before t + 1,
  // so per-generation counting reproduces the queue order draw for draw.
  while (current > 0) {
    m.generation_sizes.push_back(current);
    const double p = schedule(t);
    long long next = 0;
    for (long long i = 0; i < current; ++i) {
      if (rng.bernoulli(p)) next += 2;
    }
    m.total_nodes += next;
    if (static_cast<unsigned long long>(m.total_nodes) > max_nodes) {
      throw TruncationError("prior draw exceeded max_nodes");
    }
    current = next;
    ++t;
  }
  m.extinction_time = t;
  m.leaves = (m.total_nodes + 1) / 2;
  return m;
}

double leaf_log_prior(const SplitSchedule& schedule, int depth, const Design& design,
                      std::span<const int> points) {
  if (splittable_variables(design, points).empty()) return 0.0;
  return safe_log(1.0 - schedule(depth));
}

double tree_log_prior(const BinaryTreePartition& tree, const SplitSchedule& schedule,
                      const Design& design) {
  const auto members = cell_members(tree, design);
  double total = 0.0;
  for (std::size_t id = 0; id < tree.size(); ++id) {
    const auto& nd = tree.node(static_cast<int>(id));
    const auto& pts = members[id];
    if (nd.is_leaf()) {
      total += leaf_log_prior(schedule, nd.depth, design, pts);
      continue;
    }
    const auto vars = splittable_variables(design, pts);
    const auto& rule = *nd.rule;
    if (rule.variable < 0 || static_cast<std::size_t>(rule.variable) >= design.cols() ||
        std::find(vars.begin(), vars.end(), rule.variable) == vars.end()) {
      throw ConsistencyError("split variable has no eligible threshold at node " +
                             std::to_string(id));
    }
    const auto cuts = eligible_thresholds(design, pts, rule.variable);
    if (!std::binary_search(cuts.begin(), cuts.end(), rule.threshold)) {
      throw ConsistencyError("threshold is not an eligible observed value at node " +
                             std::to_string(id));
    }
    total += safe_log(schedule(nd.depth)) - std::log(static_cast<double>(vars.size())) -
             std::log(static_cast<double>(cuts.size()));
  }
  return total;
}

}  // namespace gwbart
