#include "gwbart/tree.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>

#include "gwbart/error.hpp"

namespace gwbart {

BinaryTreePartition::BinaryTreePartition() : nodes_(1) {}

BinaryTreePartition::BinaryTreePartition(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) nodes_.emplace_back();
  validate();
}

std::vector<int> BinaryTreePartition::leaf_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> BinaryTreePartition::internal_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> BinaryTreePartition::prunable_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& nd = nodes_[i];
    if (!nd.is_leaf() && node(nd.left).is_leaf() && node(nd.right).is_leaf()) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::size_t BinaryTreePartition::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int BinaryTreePartition::max_depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::pair<int, int> BinaryTreePartition::split(int leaf, SplitRule rule) {
  if (leaf < 0 || static_cast<std::size_t>(leaf) >= nodes_.size() || !node(leaf).is_leaf()) {
    throw ConsistencyError("split target is not a leaf");
  }
  const int depth = node(leaf).depth + 1;
  const int l = static_cast<int>(nodes_.size());
  const int r = l + 1;
  TreeNode child;
  child.parent = leaf;
  child.depth = depth;
  nodes_.push_back(child);
  nodes_.push_back(child);
  auto& nd = node(leaf);
  nd.left = l;
  nd.right = r;
  nd.rule = rule;
  return {l, r};
}

void BinaryTreePartition::collapse(int id) {
  auto& nd = node(id);
  if (nd.is_leaf() || !node(nd.left).is_leaf() || !node(nd.right).is_leaf()) {
    throw ConsistencyError("collapse needs an internal node with two leaf children");
  }
  const int l = nd.left;
  const int r = nd.right;
  nd.left = nd.right = -1;
  nd.rule.reset();
  node(l).parent = node(r).parent = -2;  // orphaned, dropped by compact()
  compact();
}

void BinaryTreePartition::compact() {
  std::vector<TreeNode> out;
  out.reserve(nodes_.size());
  std::deque<std::pair<int, int>> queue;  // (old id, new parent id)
  queue.emplace_back(0, -1);
  while (!queue.empty()) {
    auto [old_id, parent] = queue.front();
    queue.pop_front();
    TreeNode nd = node(old_id);
    const int new_id = static_cast<int>(out.size());
    nd.parent = parent;
    if (parent >= 0) {
      auto& p = out[static_cast<std::size_t>(parent)];
      if (p.left == -3) {
        p.left = new_id;
      } else {
        p.right = new_id;
      }
    }
    const bool leaf = nd.is_leaf();
    const int l = nd.left;
    const int r = nd.right;
    if (!leaf) nd.left = nd.right = -3;  // placeholder until children are placed
    out.push_back(nd);
    if (!leaf) {
      queue.emplace_back(l, new_id);
      queue.emplace_back(r, new_id);
    }
  }
  nodes_ = std::move(out);
}

int BinaryTreePartition::find_leaf(std::span<const double> x) const {
  int id = 0;
  while (!node(id).is_leaf()) {
    const auto& nd = node(id);
    id = x[static_cast<std::size_t>(nd.rule->variable)] <= nd.rule->threshold ? nd.left : nd.right;
  }
  return id;
}

std::vector<int> BinaryTreePartition::route(const Design& design) const {
  std::vector<int> out(design.rows());
  for (std::size_t i = 0; i < design.rows(); ++i) out[i] = find_leaf(design.row(i));
  return out;
}

std::vector<double> BinaryTreePartition::heights() const {
  std::vector<double> out;
  for (const auto& nd : nodes_) {
    if (nd.is_leaf()) out.push_back(nd.value);
  }
  return out;
}

void BinaryTreePartition::set_heights(std::span<const double> values) {
  std::size_t k = 0;
  for (auto& nd : nodes_) {
    if (!nd.is_leaf()) continue;
    if (k >= values.size()) throw ConsistencyError("too few heights for tree");
    nd.value = values[k++];
  }
  if (k != values.size()) throw ConsistencyError("too many heights for tree");
}

namespace {

void append_key(const BinaryTreePartition& t, int id, std::string& out) {
  const auto& nd = t.node(id);
  if (nd.is_leaf()) {
    out += 'L';
    return;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%d:%.17g ", nd.rule->variable, nd.rule->threshold);
  out += buf;
  append_key(t, nd.left, out);
  out += ' ';
  append_key(t, nd.right, out);
  out += ')';
}

}  // namespace

std::string BinaryTreePartition::canonical_key() const {
  std::string out;
  append_key(*this, 0, out);
  return out;
}

void BinaryTreePartition::validate() const {
  const auto n = static_cast<int>(nodes_.size());
  if (nodes_[0].parent != -1 || nodes_[0].depth != 0) {
    throw ConsistencyError("root must have no parent and depth 0");
  }
  std::vector<int> seen(nodes_.size(), 0);
  for (int i = 0; i < n; ++i) {
    const auto& nd = nodes_[static_cast<std::size_t>(i)];
    if ((nd.left < 0) != (nd.right < 0)) throw ConsistencyError("node with exactly one child");
    if (nd.is_leaf()) {
      if (nd.rule) throw ConsistencyError("leaf carries a split rule");
      continue;
    }
    if (!nd.rule) throw ConsistencyError("internal node without a split rule");
    for (int c : {nd.left, nd.right}) {
      if (c <= 0 || c >= n) throw ConsistencyError("child index out of range");
      const auto& ch = nodes_[static_cast<std::size_t>(c)];
      if (ch.parent != i || ch.depth != nd.depth + 1) {
        throw ConsistencyError("parent/depth link mismatch");
      }
      if (++seen[static_cast<std::size_t>(c)] > 1) throw ConsistencyError("node has two parents");
    }
  }
  for (int i = 1; i < n; ++i) {
    if (seen[static_cast<std::size_t>(i)] != 1) throw ConsistencyError("unreachable node");
  }
}

nlohmann::json BinaryTreePartition::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& nd = nodes_[i];
    nlohmann::json j;
    j["id"] = i;
    j["parent"] = nd.parent < 0 ? nlohmann::json(nullptr) : nlohmann::json(nd.parent);
    j["depth"] = nd.depth;
    if (nd.rule) {
      j["split"] = {{"var", nd.rule->variable}, {"threshold", nd.rule->threshold}};
    } else {
      j["split"] = nullptr;
    }
    nodes.push_back(std::move(j));
  }
  return {{"nodes", std::move(nodes)}};
}

BinaryTreePartition BinaryTreePartition::from_json(const nlohmann::json& doc) {
  const auto& arr = doc.at("nodes");
  std::vector<TreeNode> nodes(arr.size());
  for (const auto& j : arr) {
    const auto id = j.at("id").get<std::size_t>();
    if (id >= nodes.size()) throw ParseError("node id out of range");
    auto& nd = nodes[id];
    nd.parent = j.at("parent").is_null() ? -1 : j.at("parent").get<int>();
    nd.depth = j.at("depth").get<int>();
    if (!j.at("split").is_null()) {
      nd.rule = SplitRule{j["split"].at("var").get<int>(), j["split"].at("threshold").get<double>()};
    }
  }
  // Children are listed after their parent; the first child seen is the left one.
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const int p = nodes[i].parent;
    if (p < 0 || static_cast<std::size_t>(p) >= nodes.size()) throw ParseError("bad parent id");
    auto& par = nodes[static_cast<std::size_t>(p)];
    if (par.left < 0) {
      par.left = static_cast<int>(i);
    } else if (par.right < 0) {
      par.right = static_cast<int>(i);
    } else {
      throw ParseError("node with more than two children");
    }
  }
  return BinaryTreePartition(std::move(nodes));
}

TreeMetrics metrics_of(const BinaryTreePartition& tree) {
  TreeMetrics m;
  m.total_nodes = static_cast<long long>(tree.size());
  m.leaves = static_cast<long long>(tree.leaf_count());
  m.extinction_time = tree.max_depth() + 1;
  m.generation_sizes.assign(static_cast<std::size_t>(m.extinction_time), 0);
  for (const auto& nd : tree.nodes()) ++m.generation_sizes[static_cast<std::size_t>(nd.depth)];
  return m;
}

std::vector<long long> exploration_walk(const BinaryTreePartition& tree) {
  // Visit order is breadth-first; compact() trees are already stored that way
  // but arbitrary arenas are re-traversed here.
  std::vector<long long> walk{1};
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const auto& nd = tree.node(id);
    long long y = 0;
    if (!nd.is_leaf()) {
      queue.push_back(nd.left);
      queue.push_back(nd.right);
      y = 2;
    }
    walk.push_back(walk.back() - 1 + y);
  }
  return walk;
}

std::vector<std::vector<int>> cell_members(const BinaryTreePartition& tree, const Design& design) {
  std::vector<std::vector<int>> members(tree.size());
  members[0].resize(design.rows());
  for (std::size_t i = 0; i < design.rows(); ++i) members[0][i] = static_cast<int>(i);
  // Parents precede children in every arena produced by this library, but
  // walk explicitly to stay correct for hand-built trees.
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const auto& nd = tree.node(id);
    if (nd.is_leaf()) continue;
    auto& l = members[static_cast<std::size_t>(nd.left)];
    auto& r = members[static_cast<std::size_t>(nd.right)];
    for (int i : members[static_cast<std::size_t>(id)]) {
      const double x = design(static_cast<std::size_t>(i), static_cast<std::size_t>(nd.rule->variable));
      (x <= nd.rule->threshold ? l : r).push_back(i);
    }
    queue.push_back(nd.left);
    queue.push_back(nd.right);
  }
  return members;
}

std::vector<double> eligible_thresholds(const Design& design, std::span<const int> points,
                                        int variable) {
  std::vector<double> v;
  v.reserve(points.size());
  for (int i : points) v.push_back(design(static_cast<std::size_t>(i), static_cast<std::size_t>(variable)));
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  if (!v.empty()) v.pop_back();
  return v;
}

std::vector<int> splittable_variables(const Design& design, std::span<const int> points) {
  std::vector<int> out;
  if (points.size() < 2) return out;
  for (std::size_t j = 0; j < design.cols(); ++j) {
    const double first = design(static_cast<std::size_t>(points[0]), j);
    for (int i : points) {
      if (design(static_cast<std::size_t>(i), j) != first) {
        out.push_back(static_cast<int>(j));
        break;
      }
    }
  }
  return out;
}

}  // namespace gwbart
