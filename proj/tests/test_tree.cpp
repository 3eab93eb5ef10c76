#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "gwbart/design.hpp"
#include "gwbart/error.hpp"
#include "gwbart/prior.hpp"
#include "gwbart/rng.hpp"
#include "gwbart/schedule.hpp"
#include "gwbart/tree.hpp"

using namespace gwbart;

namespace {

Design four_points() { return Design::column({0.1, 0.2, 0.3, 0.4}); }

// All trees of depth <= cap reachable by the prior on `design`, built by
// branching on each leaf in breadth-first order: stay a leaf, or split on
// every (variable, eligible threshold).
std::vector<BinaryTreePartition> enumerate_trees(const Design& design, int cap) {
  struct Partial {
    BinaryTreePartition tree;
    std::vector<int> pending;
  };
  std::vector<BinaryTreePartition> done;
  std::vector<Partial> stack{{BinaryTreePartition{}, {0}}};
  while (!stack.empty()) {
    Partial cur = std::move(stack.back());
    stack.pop_back();
    if (cur.pending.empty()) {
      done.push_back(std::move(cur.tree));
      continue;
    }
    const int leaf = cur.pending.front();
    std::vector<int> rest(cur.pending.begin() + 1, cur.pending.end());
    stack.push_back({cur.tree, rest});
    if (cur.tree.node(leaf).depth >= cap) continue;
    const auto members = cell_members(cur.tree, design)[static_cast<std::size_t>(leaf)];
    for (std::size_t v = 0; v < design.cols(); ++v) {
      for (double c : eligible_thresholds(design, members, static_cast<int>(v))) {
        Partial next{cur.tree, rest};
        const auto [l, r] = next.tree.split(leaf, {static_cast<int>(v), c});
        next.pending.push_back(l);
        next.pending.push_back(r);
        stack.push_back(std::move(next));
      }
    }
  }
  return done;
}

}  // namespace

TEST_CASE("split probabilities follow the schedule formulas") {
  CHECK(split_probability(SplitSchedule::polynomial(0.5, 1.0), 0) == doctest::Approx(0.5));
  CHECK(split_probability(SplitSchedule::polynomial(0.5, 1.0), 3) == doctest::Approx(0.125));
  CHECK(split_probability(SplitSchedule::geometric(0.25, 0.25), 1) == doctest::Approx(0.0625));
  CHECK(split_probability(SplitSchedule::geometric(0.3), 2) == doctest::Approx(0.027));
  CHECK(split_probability(SplitSchedule::geometric(0.3, 1.0), 0) == doctest::Approx(1.0));
  CHECK(split_probability(SplitSchedule::table({0.9, 0.2}), 7) == doctest::Approx(0.2));
  CHECK(SplitSchedule::geometric(0.25).non_increasing());
  CHECK(SplitSchedule::constant(0.3).homogeneous());
}

TEST_CASE("invalid schedule parameters are rejected") {
  CHECK_THROWS_AS(SplitSchedule::geometric(0.5), ParameterError);
  CHECK_THROWS_AS(SplitSchedule::geometric(0.2, 1.5), ParameterError);
  CHECK_THROWS_AS(SplitSchedule::polynomial(1.0, 1.0), ParameterError);
  CHECK_THROWS_AS(SplitSchedule::polynomial(0.5, -1.0), ParameterError);
  CHECK_THROWS_AS(SplitSchedule::table({}), ParameterError);
  CHECK_THROWS_AS(SplitSchedule::table({1.2}), ParameterError);
  CHECK_THROWS_AS(split_probability(SplitSchedule::constant(0.3), -1), ParameterError);
}

TEST_CASE("degenerate schedules give forced shapes") {
  const auto design = Design::column({0.1, 0.3, 0.5, 0.7, 0.9});
  Rng rng(3);
  auto never = sample_tree(SplitSchedule::constant(0.0), design, rng);
  CHECK(never.metrics.total_nodes == 1);
  CHECK(never.metrics.leaves == 1);
  CHECK(never.metrics.extinction_time == 1);

  auto once = sample_tree(SplitSchedule::table({1.0, 0.0}), design, rng);
  CHECK(once.metrics.total_nodes == 3);
  CHECK(once.metrics.leaves == 2);
  CHECK(once.metrics.extinction_time == 2);
}

TEST_CASE("metrics of hand-built trees") {
  BinaryTreePartition single;
  auto m = metrics_of(single);
  CHECK(m.total_nodes == 1);
  CHECK(m.leaves == 1);
  CHECK(m.extinction_time == 1);

  BinaryTreePartition stump;
  stump.split(0, {0, 0.5});
  m = metrics_of(stump);
  CHECK(m.total_nodes == 3);
  CHECK(m.leaves == 2);
  CHECK(m.extinction_time == 2);

  // Left spine with three splits: the sandwich's lower end is attained with K = T_ex.
  BinaryTreePartition spine;
  int leaf = 0;
  for (double c : {0.5, 0.25, 0.125}) leaf = spine.split(leaf, {0, c}).first;
  m = metrics_of(spine);
  CHECK(m.total_nodes == 7);
  CHECK(m.leaves == 4);
  CHECK(m.extinction_time == 4);
  CHECK(m.leaves >= m.extinction_time);
  CHECK(m.leaves <= (1LL << m.extinction_time));
}

TEST_CASE("sampled trees satisfy the Galton-Watson identities") {
  const auto design = lattice_design(400, 2);
  Rng rng(11);
  for (const auto& s : {SplitSchedule::polynomial(0.95, 2.0), SplitSchedule::polynomial(0.5, 1.0),
                        SplitSchedule::geometric(0.25), SplitSchedule::geometric(0.4, 1.0)}) {
    for (int i = 0; i < 25'000; ++i) {
      const auto draw = sample_tree(s, design, rng);
      const auto& m = draw.metrics;
      REQUIRE(2 * m.leaves == m.total_nodes + 1);
      REQUIRE(m.generation_sizes.front() == 1);
      REQUIRE(std::accumulate(m.generation_sizes.begin(), m.generation_sizes.end(), 0LL) == m.total_nodes);
      for (std::size_t t = 1; t < m.generation_sizes.size(); ++t) {
        REQUIRE(m.generation_sizes[t] <= 2 * m.generation_sizes[t - 1]);
        REQUIRE(m.generation_sizes[t] > 0);
      }
      REQUIRE(static_cast<int>(m.generation_sizes.size()) == m.extinction_time);
      REQUIRE(m.extinction_time - 1 == draw.tree.max_depth());
      REQUIRE(m.leaves >= m.extinction_time);
      const auto walk = exploration_walk(draw.tree);
      REQUIRE(static_cast<long long>(walk.size()) == m.total_nodes + 1);
      REQUIRE(walk.back() == 0);
      for (std::size_t t = 0; t + 1 < walk.size(); ++t) REQUIRE(walk[t] > 0);
    }
  }
}

TEST_CASE("root split frequency under a homogeneous schedule") {
  // P(X = 3) = 0.3 * 0.7^2 by direct enumeration of the one-split shape.
  const auto design = lattice_design(1000, 1);
  Rng rng(5);
  const int n = 200'000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += sample_tree(SplitSchedule::constant(0.3), design, rng).metrics.total_nodes == 3;
  const double freq = static_cast<double>(hits) / n;
  const double expected = 0.3 * 0.7 * 0.7;
  CHECK(std::abs(freq - expected) < 4.0 * std::sqrt(expected * (1 - expected) / n));
}

TEST_CASE("tree_log_prior worked examples") {
  const auto design = four_points();
  BinaryTreePartition single;
  CHECK(tree_log_prior(single, SplitSchedule::constant(0.3), design) == doctest::Approx(std::log(0.7)));

  // Root split at the middle cut: both children keep one eligible cut.
  BinaryTreePartition stump;
  stump.split(0, {0, 0.2});
  const auto s = SplitSchedule::table({0.5, 0.25});
  CHECK(tree_log_prior(stump, s, design) == doctest::Approx(std::log(0.5 * (1.0 / 3.0) * 0.75 * 0.75)));
  CHECK(std::exp(tree_log_prior(stump, s, design)) == doctest::Approx(0.09375));

  // Singleton leaves cannot split, so they contribute nothing.
  BinaryTreePartition lopsided;
  lopsided.split(0, {0, 0.1});
  CHECK(tree_log_prior(lopsided, s, design) == doctest::Approx(std::log(0.5 / 3.0 * 0.75)));
}

TEST_CASE("tree_log_prior rejects rules the design cannot produce") {
  const auto design = four_points();
  BinaryTreePartition bad;
  bad.split(0, {0, 0.25});
  CHECK_THROWS_AS(tree_log_prior(bad, SplitSchedule::constant(0.3), design), ConsistencyError);
  BinaryTreePartition empty_side;
  empty_side.split(0, {0, 0.4});
  CHECK_THROWS_AS(tree_log_prior(empty_side, SplitSchedule::constant(0.3), design), ConsistencyError);
}

TEST_CASE("balanced depth-2 tree frequency matches its prior probability") {
  const auto design = four_points();
  const auto s = SplitSchedule::geometric(0.45);
  BinaryTreePartition balanced;
  const auto [l, r] = balanced.split(0, {0, 0.2});
  balanced.split(l, {0, 0.1});
  balanced.split(r, {0, 0.3});
  // Root: p(0) * 1/3 cuts; each child: p(1) * 1 cut; singleton leaves fixed.
  const double p0 = 0.45;
  const double p1 = 0.45 * 0.45;
  const double hand = p0 / 3.0 * p1 * p1;
  CHECK(std::exp(tree_log_prior(balanced, s, design)) == doctest::Approx(hand).epsilon(1e-12));

  const std::string key = balanced.canonical_key();
  Rng rng(2024);
  const int n = 1'000'000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += sample_tree(s, design, rng).tree.canonical_key() == key;
  const double freq = static_cast<double>(hits) / n;
  CHECK(std::abs(freq - hand) < 3.0 * std::sqrt(hand * (1 - hand) / n));
}

TEST_CASE("prior mass of depth <= 2 trees sums to the depth <= 2 frequency") {
  const auto design = Design::from_rows({{0.1, 0.7}, {0.4, 0.2}, {0.6, 0.9}, {0.8, 0.5}, {0.3, 0.35}});
  const auto s = SplitSchedule::polynomial(0.95, 1.0);
  const auto trees = enumerate_trees(design, 2);
  double mass_le2 = 0.0;
  std::map<std::string, double> by_key;
  for (const auto& t : trees) {
    // Depth-2 leaves of an enumerated tree may still split in the prior, so
    // the probability of "this shape and no deeper" is the tree's full prior.
    const double lp = tree_log_prior(t, s, design);
    mass_le2 += std::exp(lp);
    by_key[t.canonical_key()] += std::exp(lp);
  }
  CHECK(by_key.size() == trees.size());
  CHECK(mass_le2 < 1.0);

  Rng rng(99);
  const int n = 400'000;
  int shallow = 0;
  for (int i = 0; i < n; ++i) shallow += sample_tree(s, design, rng).tree.max_depth() <= 2;
  const double freq = static_cast<double>(shallow) / n;
  CHECK(std::abs(freq - mass_le2) < 4.0 * std::sqrt(mass_le2 * (1 - mass_le2) / n));

  // With a schedule that stops at depth 2 the enumeration is the whole prior.
  const auto capped = SplitSchedule::table({0.95, 0.475, 0.0});
  double total = 0.0;
  for (const auto& t : trees) total += std::exp(tree_log_prior(t, capped, design));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampling is bit-reproducible for a fixed seed") {
  const auto design = lattice_design(50, 3);
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 200; ++i) {
    const auto ta = sample_tree(SplitSchedule::polynomial(0.95, 1.0), design, a);
    const auto tb = sample_tree(SplitSchedule::polynomial(0.95, 1.0), design, b);
    REQUIRE(ta.tree.to_json().dump() == tb.tree.to_json().dump());
  }
}

TEST_CASE("truncation cap is enforced") {
  const auto design = lattice_design(4096, 1);
  Rng rng(1);
  CHECK_THROWS_AS(sample_tree(SplitSchedule::constant(1.0), design, rng, 64), TruncationError);
  CHECK_THROWS_AS(sample_shape(SplitSchedule::constant(1.0), rng, 64), TruncationError);
}

TEST_CASE("leaf cells partition the design and JSON round-trips") {
  const auto design = lattice_design(200, 2);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto draw = sample_tree(SplitSchedule::polynomial(0.95, 1.0), design, rng);
    draw.tree.validate();
    const auto members = cell_members(draw.tree, design);
    std::size_t covered = 0;
    for (int leaf : draw.tree.leaf_ids()) covered += members[static_cast<std::size_t>(leaf)].size();
    REQUIRE(covered == design.rows());
    const auto route = draw.tree.route(design);
    for (std::size_t r = 0; r < design.rows(); ++r) REQUIRE(draw.tree.node(route[r]).is_leaf());

    const auto back = BinaryTreePartition::from_json(draw.tree.to_json());
    REQUIRE(back.canonical_key() == draw.tree.canonical_key());
  }
  const auto doc = nlohmann::json::parse(R"({"nodes":[{"id":0,"parent":null,"depth":0,"split":{"var":0,"threshold":0.5}},
    {"id":1,"parent":0,"depth":1,"split":null},{"id":2,"parent":0,"depth":1,"split":null}]})");
  const auto t = BinaryTreePartition::from_json(doc);
  CHECK(t.leaf_count() == 2);
}

TEST_CASE("collapse renumbers breadth-first") {
  BinaryTreePartition t;
  const auto [l, r] = t.split(0, {0, 0.5});
  t.split(l, {0, 0.25});
  t.split(r, {0, 0.75});
  CHECK(t.size() == 7);
  t.collapse(l);
  CHECK(t.size() == 5);
  t.validate();
  CHECK(t.canonical_key() == "(0:0.5 L (0:0.75 L L))");
}
