#include "gwbart/kd.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gwbart/error.hpp"
#include "gwbart/prior.hpp"

namespace gwbart {

nlohmann::json KdTree::to_json() const {
  auto doc = tree.to_json();
  doc["rounds"] = rounds;
  doc["dim"] = dim;
  return doc;
}

KdTree build_kd_tree(const Design& design, int rounds) {
  if (rounds < 0) throw ParameterError("rounds must be >= 0");
  const std::size_t p = design.cols();
  if (p == 0) throw ParameterError("design has no columns");
  const long long layers = static_cast<long long>(rounds) * static_cast<long long>(p);
  if (layers > 30) throw CapacityError("k-d tree would have more than 2^30 leaves");
  if (static_cast<long long>(design.rows()) < (1LL << layers)) {
    throw CapacityError("n = " + std::to_string(design.rows()) + " is smaller than 2^(s p) = " +
                        std::to_string(1LL << layers));
  }

  KdTree kd;
  kd.rounds = rounds;
  kd.dim = p;
  std::vector<std::vector<int>> members(1);
  members[0].resize(design.rows());
  for (std::size_t i = 0; i < design.rows(); ++i) members[0][i] = static_cast<int>(i);

  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const int depth = kd.tree.node(id).depth;
    if (depth >= layers) continue;
    const auto var = static_cast<int>(static_cast<std::size_t>(depth) % p);
    const auto& pts = members[static_cast<std::size_t>(id)];
    std::vector<double> v;
    v.reserve(pts.size());
    for (int i : pts) v.push_back(design(static_cast<std::size_t>(i), static_cast<std::size_t>(var)));
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    if (m < 2) {
      throw DegeneracyError("cell " + std::to_string(id) + " at depth " + std::to_string(depth) +
                            " holds fewer than two points");
    }
    double threshold = v[(m + 1) / 2 - 1];
    if (threshold == v.back()) {
      auto it = std::lower_bound(v.begin(), v.end(), v.back());
      if (it == v.begin()) {
        throw DegeneracyError("cell " + std::to_string(id) + " at depth " + std::to_string(depth) +
                              ": all " + std::to_string(m) + " points tie on coordinate " +
                              std::to_string(var));
      }
      threshold = *(it - 1);
    }
    auto [l, r] = kd.tree.split(id, {var, threshold});
    members.resize(kd.tree.size());
    for (int i : members[static_cast<std::size_t>(id)]) {
      const double x = design(static_cast<std::size_t>(i), static_cast<std::size_t>(var));
      members[static_cast<std::size_t>(x <= threshold ? l : r)].push_back(i);
    }
    queue.push_back(l);
    queue.push_back(r);
  }
  return kd;
}

double empirical_norm(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += v * v;
  return std::sqrt(ss / static_cast<double>(values.size()));
}

StepFit project_step_function(const BinaryTreePartition& tree, const Design& design,
                              std::span<const double> target) {
  if (target.size() != design.rows()) throw ParameterError("target length must equal n");
  StepFit fit{tree, std::vector<double>(design.rows()), 0.0};
  const auto leaf = tree.route(design);
  std::vector<double> sum(tree.size(), 0.0);
  std::vector<std::size_t> count(tree.size(), 0);
  for (std::size_t i = 0; i < leaf.size(); ++i) {
    sum[static_cast<std::size_t>(leaf[i])] += target[i];
    ++count[static_cast<std::size_t>(leaf[i])];
  }
  for (int id : fit.tree.leaf_ids()) {
    const auto k = static_cast<std::size_t>(id);
    fit.tree.node(id).value = count[k] ? sum[k] / static_cast<double>(count[k]) : 0.0;
  }
  std::vector<double> resid(design.rows());
  for (std::size_t i = 0; i < leaf.size(); ++i) {
    fit.fitted[i] = fit.tree.node(leaf[i]).value;
    resid[i] = target[i] - fit.fitted[i];
  }
  fit.error = empirical_norm(resid);
  return fit;
}

std::vector<std::pair<std::string, double>> KdPriorMass::bounds() const {
  return {{"per_node_alpha", per_node_alpha},
          {"per_depth", per_depth},
          {"alpha_power", alpha_power},
          {"alpha_one_minus", alpha_one_minus},
          {"closed_form", closed_form}};
}

bool KdPriorMass::exact_dominates(const std::string& bound_name) const {
  for (const auto& [name, value] : bounds()) {
    if (name == bound_name) return exact_log >= value;
  }
  throw ParameterError("unknown bound " + bound_name);
}

nlohmann::json KdPriorMass::to_json() const {
  nlohmann::json j{{"exact_log", exact_log}};
  for (const auto& [name, value] : bounds()) {
    j["bounds"][name] = {{"log_value", value}, {"exact_dominates", exact_log >= value}};
  }
  return j;
}

KdPriorMass kd_prior_mass(const KdTree& kd, const SplitSchedule& schedule, const Design& design) {
  if (schedule.kind() != ScheduleKind::GeometricDecay) {
    throw ParameterError("k-d prior mass bounds need a geometric schedule");
  }
  const auto n = static_cast<double>(design.rows());
  const double a = schedule.alpha();
  if (a < 1.0 / n) throw ParameterError("k-d prior mass bounds need alpha >= 1/n");

  KdPriorMass out;
  out.exact_log = tree_log_prior(kd.tree, schedule, design);

  const auto leaves = static_cast<double>(kd.leaf_count());
  const int layers = kd.layers();
  const double log_pn = std::log(static_cast<double>(design.cols()) * n);
  const double rules = -(leaves - 1.0) * log_pn;
  const double leaf_term = leaves * std::log1p(-std::pow(a, layers));

  double per_node = 0.0;
  double per_depth = 0.0;
  for (int d = 0; d < layers; ++d) {
    const double width = std::ldexp(1.0, d);
    per_node += width * std::log(a);
    per_depth += width * std::log(schedule(d));
  }
  out.per_node_alpha = leaf_term + rules + per_node;
  out.per_depth = leaf_term + rules + per_depth;
  out.alpha_power = leaf_term + rules + (leaves - 1.0) * std::log(a);
  out.alpha_one_minus = leaves * std::log(a * (1.0 - a)) + rules;
  out.closed_form = -leaves * std::log(2.0 * n) + rules;
  return out;
}

namespace {

void copy_subtree(const BinaryTreePartition& src, int src_id, BinaryTreePartition& dst, int dst_id) {
  const auto& nd = src.node(src_id);
  if (nd.is_leaf()) {
    dst.node(dst_id).value = nd.value;
    return;
  }
  auto [l, r] = dst.split(dst_id, *nd.rule);
  copy_subtree(src, nd.left, dst, l);
  copy_subtree(src, nd.right, dst, r);
}

void copy_top(const BinaryTreePartition& src, int src_id, BinaryTreePartition& dst, int dst_id,
              int cut_depth, const std::vector<int>& branch_group, int group,
              const std::vector<int>& branch_index) {
  const auto& nd = src.node(src_id);
  if (nd.depth == cut_depth) {
    if (branch_group[static_cast<std::size_t>(branch_index[static_cast<std::size_t>(src_id)])] == group) {
      copy_subtree(src, src_id, dst, dst_id);
    } else {
      dst.node(dst_id).value = 0.0;
    }
    return;
  }
  auto [l, r] = dst.split(dst_id, *nd.rule);
  copy_top(src, nd.left, dst, l, cut_depth, branch_group, group, branch_index);
  copy_top(src, nd.right, dst, r, cut_depth, branch_group, group, branch_index);
}

}  // namespace

std::vector<BinaryTreePartition> chop_ensemble(const KdTree& kd, int num_trees) {
  return chop_ensemble(kd, kd.tree, num_trees);
}

std::vector<BinaryTreePartition> chop_ensemble(const KdTree& kd, const BinaryTreePartition& valued,
                                               int num_trees) {
  const auto leaves = static_cast<long long>(kd.leaf_count());
  if (num_trees < 1 || (num_trees > 1 && 2LL * num_trees > leaves)) {
    throw ParameterError("chop_ensemble needs 1 <= T <= K/2");
  }
  if (valued.canonical_key() != kd.tree.canonical_key()) {
    throw ConsistencyError("valued tree does not match the k-d partition");
  }
  int cut = 0;
  while ((1 << cut) < num_trees) ++cut;

  // Breadth-first rank of each node at the cut depth.
  std::vector<int> branch_index(valued.size(), -1);
  int count = 0;
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const auto& nd = valued.node(id);
    if (nd.depth == cut) {
      branch_index[static_cast<std::size_t>(id)] = count++;
      continue;
    }
    queue.push_back(nd.left);
    queue.push_back(nd.right);
  }
  std::vector<int> branch_group(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) branch_group[static_cast<std::size_t>(b)] = b % num_trees;

  std::vector<BinaryTreePartition> out;
  out.reserve(static_cast<std::size_t>(num_trees));
  for (int t = 0; t < num_trees; ++t) {
    BinaryTreePartition tree;
    copy_top(valued, 0, tree, 0, cut, branch_group, t, branch_index);
    tree.compact();
    out.push_back(std::move(tree));
  }
  return out;
}

}  // namespace gwbart
