#include "gwbart/bart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "gwbart/error.hpp"
#include "gwbart/prior.hpp"

namespace gwbart {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

struct LeafStats {
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
};

LeafStats stats_of(std::span<const int> points, std::span<const double> residuals) {
  LeafStats s;
  for (int i : points) {
    const double r = residuals[static_cast<std::size_t>(i)];
    ++s.count;
    s.sum += r;
    s.sum_sq += r * r;
  }
  return s;
}

double marginal(std::span<const int> points, std::span<const double> residuals, const BartConfig& c) {
  const auto s = stats_of(points, residuals);
  return leaf_marginal_loglik(s.count, s.sum, s.sum_sq, c.noise_variance, c.leaf_variance());
}

bool can_grow(const TreeNode& nd, const Design& design, std::span<const int> points,
              const BartConfig& config) {
  if (config.max_depth >= 0 && nd.depth >= config.max_depth) return false;
  return !splittable_variables(design, points).empty();
}

std::vector<int> growable_leaves(const BinaryTreePartition& tree, const Design& design,
                                 const std::vector<std::vector<int>>& members,
                                 const BartConfig& config) {
  std::vector<int> out;
  for (int id : tree.leaf_ids()) {
    if (can_grow(tree.node(id), design, members[static_cast<std::size_t>(id)], config)) {
      out.push_back(id);
    }
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> split_points(const Design& design,
                                                           std::span<const int> points,
                                                           SplitRule rule) {
  std::pair<std::vector<int>, std::vector<int>> out;
  for (int i : points) {
    const double x = design(static_cast<std::size_t>(i), static_cast<std::size_t>(rule.variable));
    (x <= rule.threshold ? out.first : out.second).push_back(i);
  }
  return out;
}

// log p(d) - log(#vars) - log(#cuts) for `rule` at a cell holding `points`.
double rule_log_prior(const SplitSchedule& schedule, int depth, const Design& design,
                      std::span<const int> points, SplitRule rule) {
  const auto vars = splittable_variables(design, points);
  if (std::find(vars.begin(), vars.end(), rule.variable) == vars.end()) {
    throw ConsistencyError("split variable has no eligible threshold in this cell");
  }
  const auto cuts = eligible_thresholds(design, points, rule.variable);
  if (!std::binary_search(cuts.begin(), cuts.end(), rule.threshold)) {
    throw ConsistencyError("threshold is not an eligible observed value in this cell");
  }
  return safe_log(schedule(depth)) - std::log(static_cast<double>(vars.size())) -
         std::log(static_cast<double>(cuts.size()));
}

// Same quantity without the schedule factor: log of the rule-proposal probability.
double rule_log_proposal(const Design& design, std::span<const int> points, SplitRule rule) {
  const auto vars = splittable_variables(design, points);
  const auto cuts = eligible_thresholds(design, points, rule.variable);
  return -std::log(static_cast<double>(vars.size())) - std::log(static_cast<double>(cuts.size()));
}

SplitRule draw_rule(const Design& design, std::span<const int> points, Rng& rng) {
  const auto vars = splittable_variables(design, points);
  const int var = vars[rng.index(vars.size())];
  const auto cuts = eligible_thresholds(design, points, var);
  return {var, cuts[rng.index(cuts.size())]};
}

double move_log_prob(const BartConfig& c, MoveType t) {
  switch (t) {
    case MoveType::Grow: return safe_log(c.moves.grow);
    case MoveType::Prune: return safe_log(c.moves.prune);
    case MoveType::Change: return safe_log(c.moves.change);
  }
  return kNegInf;
}

}  // namespace

double BartConfig::leaf_variance() const {
  return leaf_prior_variance ? *leaf_prior_variance : 1.0 / static_cast<double>(num_trees);
}

void BartConfig::validate() const {
  if (num_trees < 1) throw ParameterError("num_trees must be >= 1");
  if (!(leaf_variance() > 0.0)) throw ParameterError("leaf prior variance must be > 0");
  if (!(noise_variance > 0.0)) throw ParameterError("noise variance must be > 0");
  const double total = moves.grow + moves.prune + moves.change;
  if (moves.grow < 0.0 || moves.prune < 0.0 || moves.change < 0.0 || std::abs(total - 1.0) > 1e-12) {
    throw ParameterError("move probabilities must be non-negative and sum to 1");
  }
  if (moves.grow != moves.prune) throw ParameterError("grow and prune probabilities must be equal");
  if (moves_per_tree < 1) throw ParameterError("moves_per_tree must be >= 1");
  if (sweeps < 0 || burn_in < 0 || burn_in > sweeps) {
    throw ParameterError("need 0 <= burn_in <= sweeps");
  }
  if (thin < 1) throw ParameterError("thin must be >= 1");
}

double BartConfig::calibrated_leaf_variance(double k, int num_trees) {
  if (!(k > 0.0) || num_trees < 1) throw ParameterError("need k > 0 and T >= 1");
  const double sd = 0.5 / (k * std::sqrt(static_cast<double>(num_trees)));
  return sd * sd;
}

Ensemble Ensemble::stumps(int num_trees) {
  Ensemble e;
  e.trees.resize(static_cast<std::size_t>(num_trees));
  return e;
}

double Ensemble::predict(std::span<const double> x) const {
  double f = 0.0;
  for (const auto& t : trees) f += t.predict(x);
  return f;
}

std::vector<double> Ensemble::predict(const Design& design) const {
  std::vector<double> out(design.rows(), 0.0);
  for (const auto& t : trees) {
    for (std::size_t i = 0; i < design.rows(); ++i) out[i] += t.predict(design.row(i));
  }
  return out;
}

std::vector<std::size_t> Ensemble::tree_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(trees.size());
  for (const auto& t : trees) out.push_back(t.leaf_count());
  return out;
}

std::size_t Ensemble::max_tree_size() const {
  std::size_t m = 0;
  for (const auto& t : trees) m = std::max(m, t.leaf_count());
  return m;
}

nlohmann::json Ensemble::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : trees) {
    auto j = t.to_json();
    j["heights"] = t.heights();
    arr.push_back(std::move(j));
  }
  return {{"num_trees", trees.size()}, {"trees", std::move(arr)}};
}

Ensemble Ensemble::from_json(const nlohmann::json& doc) {
  Ensemble e;
  for (const auto& j : doc.at("trees")) {
    auto t = BinaryTreePartition::from_json(j);
    const auto h = j.at("heights").get<std::vector<double>>();
    t.set_heights(h);
    e.trees.push_back(std::move(t));
  }
  return e;
}

OutputScaling OutputScaling::fit(std::span<const double> y) {
  if (y.empty()) return identity();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  OutputScaling s;
  s.scale = *hi > *lo ? *hi - *lo : 1.0;
  s.offset = *lo + 0.5 * s.scale;
  return s;
}

double leaf_marginal_loglik(std::span<const double> residuals, double noise_variance,
                            double leaf_prior_variance) {
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double r : residuals) {
    sum += r;
    sum_sq += r * r;
  }
  return leaf_marginal_loglik(residuals.size(), sum, sum_sq, noise_variance, leaf_prior_variance);
}

double leaf_marginal_loglik(std::size_t count, double sum, double sum_sq, double noise_variance,
                            double leaf_prior_variance) {
  if (!(noise_variance > 0.0) || !(leaf_prior_variance > 0.0)) {
    throw ParameterError("variances must be > 0");
  }
  if (count == 0) return 0.0;
  const auto m = static_cast<double>(count);
  const double s2 = noise_variance;
  const double b2 = leaf_prior_variance;
  const double denom = s2 + m * b2;
  return -0.5 * m * std::log(2.0 * std::numbers::pi * s2) - sum_sq / (2.0 * s2) +
         0.5 * std::log(s2 / denom) + b2 * sum * sum / (2.0 * s2 * denom);
}

std::string to_string(MoveType t) {
  switch (t) {
    case MoveType::Grow: return "grow";
    case MoveType::Prune: return "prune";
    case MoveType::Change: return "change";
  }
  return "unknown";
}

std::optional<ProposedMove> draw_move(const BinaryTreePartition& tree, MoveType type,
                                      const Design& design, const BartConfig& config, Rng& rng) {
  const auto members = cell_members(tree, design);
  ProposedMove mv;
  mv.type = type;
  if (type == MoveType::Grow) {
    const auto leaves = growable_leaves(tree, design, members, config);
    if (leaves.empty()) return std::nullopt;
    mv.node = leaves[rng.index(leaves.size())];
    mv.rule = draw_rule(design, members[static_cast<std::size_t>(mv.node)], rng);
    return mv;
  }
  const auto prunable = tree.prunable_ids();
  if (prunable.empty()) return std::nullopt;
  mv.node = prunable[rng.index(prunable.size())];
  if (type == MoveType::Change) {
    mv.rule = draw_rule(design, members[static_cast<std::size_t>(mv.node)], rng);
  }
  return mv;
}

double log_acceptance(const BinaryTreePartition& tree, const ProposedMove& move,
                      const Design& design, std::span<const double> residuals,
                      const BartConfig& config) {
  if (residuals.size() != design.rows()) throw ParameterError("residuals must align with design");
  const auto members = cell_members(tree, design);
  const auto& schedule = config.schedule;
  const auto& nd = tree.node(move.node);
  const auto& pts = members[static_cast<std::size_t>(move.node)];

  switch (move.type) {
    case MoveType::Grow: {
      if (!nd.is_leaf()) throw ConsistencyError("grow target is not a leaf");
      if (!can_grow(nd, design, pts, config)) throw ConsistencyError("leaf cannot grow");
      const auto [lp, rp] = split_points(design, pts, move.rule);
      const int d = nd.depth;
      const double prior = rule_log_prior(schedule, d, design, pts, move.rule) +
                           leaf_log_prior(schedule, d + 1, design, lp) +
                           leaf_log_prior(schedule, d + 1, design, rp) -
                           leaf_log_prior(schedule, d, design, pts);
      const double lik = marginal(lp, residuals, config) + marginal(rp, residuals, config) -
                         marginal(pts, residuals, config);
      const double growable = static_cast<double>(growable_leaves(tree, design, members, config).size());
      // After the grow the new node is prunable; its parent stops being prunable.
      double prunable_after = static_cast<double>(tree.prunable_ids().size()) + 1.0;
      if (nd.parent >= 0) {
        const auto& par = tree.node(nd.parent);
        const int sibling = par.left == move.node ? par.right : par.left;
        if (tree.node(sibling).is_leaf()) prunable_after -= 1.0;
      }
      const double reverse = move_log_prob(config, MoveType::Prune) - std::log(prunable_after);
      const double forward = move_log_prob(config, MoveType::Grow) - std::log(growable) +
                             rule_log_proposal(design, pts, move.rule);
      return prior + lik + reverse - forward;
    }
    case MoveType::Prune: {
      if (nd.is_leaf() || !tree.node(nd.left).is_leaf() || !tree.node(nd.right).is_leaf()) {
        throw ConsistencyError("prune target must have two leaf children");
      }
      const auto& lp = members[static_cast<std::size_t>(nd.left)];
      const auto& rp = members[static_cast<std::size_t>(nd.right)];
      const int d = nd.depth;
      const double prior = leaf_log_prior(schedule, d, design, pts) -
                           rule_log_prior(schedule, d, design, pts, *nd.rule) -
                           leaf_log_prior(schedule, d + 1, design, lp) -
                           leaf_log_prior(schedule, d + 1, design, rp);
      const double lik = marginal(pts, residuals, config) - marginal(lp, residuals, config) -
                         marginal(rp, residuals, config);
      double growable_after = static_cast<double>(growable_leaves(tree, design, members, config).size());
      if (can_grow(tree.node(nd.left), design, lp, config)) growable_after -= 1.0;
      if (can_grow(tree.node(nd.right), design, rp, config)) growable_after -= 1.0;
      growable_after += 1.0;  // the collapsed node
      const double prunable = static_cast<double>(tree.prunable_ids().size());
      const double reverse = move_log_prob(config, MoveType::Grow) - std::log(growable_after) +
                             rule_log_proposal(design, pts, *nd.rule);
      const double forward = move_log_prob(config, MoveType::Prune) - std::log(prunable);
      return prior + lik + reverse - forward;
    }
    case MoveType::Change: {
      if (nd.is_leaf() || !tree.node(nd.left).is_leaf() || !tree.node(nd.right).is_leaf()) {
        throw ConsistencyError("change target must have two leaf children");
      }
      rule_log_prior(schedule, nd.depth, design, pts, move.rule);  // validates the new rule
      const auto& old_l = members[static_cast<std::size_t>(nd.left)];
      const auto& old_r = members[static_cast<std::size_t>(nd.right)];
      const auto [new_l, new_r] = split_points(design, pts, move.rule);
      const int d = nd.depth + 1;
      const double prior = leaf_log_prior(schedule, d, design, new_l) +
                           leaf_log_prior(schedule, d, design, new_r) -
                           leaf_log_prior(schedule, d, design, old_l) -
                           leaf_log_prior(schedule, d, design, old_r);
      const double lik = marginal(new_l, residuals, config) + marginal(new_r, residuals, config) -
                         marginal(old_l, residuals, config) - marginal(old_r, residuals, config);
      return prior + lik;
    }
  }
  return kNegInf;
}

BinaryTreePartition apply_move(const BinaryTreePartition& tree, const ProposedMove& move) {
  BinaryTreePartition out = tree;
  switch (move.type) {
    case MoveType::Grow:
      out.split(move.node, move.rule);
      break;
    case MoveType::Prune:
      out.collapse(move.node);
      break;
    case MoveType::Change:
      out.node(move.node).rule = move.rule;
      break;
  }
  return out;
}

MoveOutcome propose_move(BinaryTreePartition& tree, const Design& design,
                         std::span<const double> residuals, const BartConfig& config, Rng& rng) {
  MoveOutcome out;
  const double u = rng.uniform();
  if (u < config.moves.grow) {
    out.type = MoveType::Grow;
  } else if (u < config.moves.grow + config.moves.prune) {
    out.type = MoveType::Prune;
  } else {
    out.type = MoveType::Change;
  }
  const auto move = draw_move(tree, out.type, design, config, rng);
  if (!move) return out;
  out.proposed = true;
  const double log_ratio = log_acceptance(tree, *move, design, residuals, config);
  const double log_u = std::log(rng.uniform());
  if (log_u < log_ratio) {
    tree = apply_move(tree, *move);
    out.accepted = true;
  }
  return out;
}

void draw_leaf_heights(BinaryTreePartition& tree, const Design& design,
                       std::span<const double> residuals, const BartConfig& config, Rng& rng) {
  const auto leaf = tree.route(design);
  std::vector<double> sum(tree.size(), 0.0);
  std::vector<std::size_t> count(tree.size(), 0);
  for (std::size_t i = 0; i < leaf.size(); ++i) {
    sum[static_cast<std::size_t>(leaf[i])] += residuals[i];
    ++count[static_cast<std::size_t>(leaf[i])];
  }
  const double s2 = config.noise_variance;
  const double b2 = config.leaf_variance();
  for (int id : tree.leaf_ids()) {
    const auto k = static_cast<std::size_t>(id);
    const double var = 1.0 / (static_cast<double>(count[k]) / s2 + 1.0 / b2);
    const double mean = var * sum[k] / s2;
    tree.node(id).value = rng.normal(mean, std::sqrt(var));
  }
}

namespace {

// Backfitting state with cached per-tree fits at the design points.
class Backfitter {
 public:
  Backfitter(const Design& design, std::span<const double> y, const BartConfig& config,
             Ensemble& state)
      : design_(design), y_(y), config_(config), state_(state),
        fits_(state.trees.size(), std::vector<double>(design.rows(), 0.0)),
        total_(design.rows(), 0.0), resid_(design.rows(), 0.0) {
    for (std::size_t t = 0; t < state_.trees.size(); ++t) refit(t);
  }

  void sweep(Rng& rng, ChainResult* tally) {
    for (std::size_t t = 0; t < state_.trees.size(); ++t) {
      auto& fit = fits_[t];
      for (std::size_t i = 0; i < resid_.size(); ++i) resid_[i] = y_[i] - (total_[i] - fit[i]);
      auto& tree = state_.trees[t];
      for (int m = 0; m < config_.moves_per_tree; ++m) {
        const auto out = propose_move(tree, design_, resid_, config_, rng);
        if (tally && out.proposed) {
          ++tally->proposed[out.type];
          if (out.accepted) ++tally->accepted[out.type];
        }
      }
      draw_leaf_heights(tree, design_, resid_, config_, rng);
      refit(t);
    }
  }

  const std::vector<double>& total() const { return total_; }

 private:
  void refit(std::size_t t) {
    auto& fit = fits_[t];
    const auto& tree = state_.trees[t];
    for (std::size_t i = 0; i < fit.size(); ++i) {
      const double f = tree.predict(design_.row(i));
      total_[i] += f - fit[i];
      fit[i] = f;
    }
  }

  const Design& design_;
  std::span<const double> y_;
  const BartConfig& config_;
  Ensemble& state_;
  std::vector<std::vector<double>> fits_;
  std::vector<double> total_;
  std::vector<double> resid_;
};

}  // namespace

void backfit_sweep(Ensemble& state, const Design& design, std::span<const double> y,
                   const BartConfig& config, Rng& rng) {
  config.validate();
  if (y.size() != design.rows()) throw ParameterError("y must have one value per design row");
  if (state.trees.size() != static_cast<std::size_t>(config.num_trees)) {
    throw ParameterError("ensemble size does not match num_trees");
  }
  Backfitter fitter(design, y, config, state);
  fitter.sweep(rng, nullptr);
}

void ChainTrace::write_csv(std::ostream& os) const {
  const std::size_t num_trees = records.empty() ? 0 : records.front().tree_sizes.size();
  os << "sweep";
  for (std::size_t t = 0; t < num_trees; ++t) os << ",K" << (t + 1);
  os << ",max_K,train_error\n";
  for (const auto& r : records) {
    os << r.sweep;
    for (auto k : r.tree_sizes) os << ',' << k;
    os << ',' << r.max_tree_size << ',' << r.train_error << '\n';
  }
}

double ChainResult::max_size_exceedance(double limit) const {
  if (trace.records.empty()) return 0.0;
  const auto hits = std::count_if(trace.records.begin(), trace.records.end(), [limit](const auto& r) {
    return static_cast<double>(r.max_tree_size) > limit;
  });
  return static_cast<double>(hits) / static_cast<double>(trace.records.size());
}

double ChainResult::mean_max_size() const {
  if (trace.records.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : trace.records) s += static_cast<double>(r.max_tree_size);
  return s / static_cast<double>(trace.records.size());
}

ChainResult run_chain(const Design& design, std::span<const double> y, const BartConfig& config,
                      Rng& rng, const SweepObserver& observer) {
  config.validate();
  if (design.rows() < 2) throw ParameterError("run_chain needs n >= 2");
  if (y.size() != design.rows()) throw ParameterError("y must have one value per design row");

  ChainResult result;
  result.scaling = config.rescale_outputs ? OutputScaling::fit(y) : OutputScaling::identity();
  std::vector<double> y_model(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) y_model[i] = result.scaling.to_model(y[i]);

  result.final_state = Ensemble::stumps(config.num_trees);
  Backfitter fitter(design, y_model, config, result.final_state);
  result.posterior_mean.assign(design.rows(), 0.0);
  std::size_t recorded = 0;

  for (int s = 0; s < config.sweeps; ++s) {
    fitter.sweep(rng, &result);
    if (s < config.burn_in || (s - config.burn_in + 1) % config.thin != 0) continue;

    TraceRecord rec;
    rec.sweep = s;
    rec.tree_sizes = result.final_state.tree_sizes();
    rec.max_tree_size = result.final_state.max_tree_size();
    double ss = 0.0;
    const auto& f = fitter.total();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double fd = result.scaling.to_data(f[i]);
      result.posterior_mean[i] += fd;
      ss += (fd - y[i]) * (fd - y[i]);
    }
    rec.train_error = std::sqrt(ss / static_cast<double>(y.size()));
    result.trace.records.push_back(std::move(rec));
    ++recorded;
    if (config.keep_snapshots) {
      Ensemble snap = result.final_state;
      // Heights on the data scale: the offset is carried by the first tree.
      for (std::size_t t = 0; t < snap.trees.size(); ++t) {
        for (int id : snap.trees[t].leaf_ids()) {
          auto& v = snap.trees[t].node(id).value;
          v = v * result.scaling.scale + (t == 0 ? result.scaling.offset : 0.0);
        }
      }
      result.trace.snapshots.push_back(std::move(snap));
    }
    if (observer) observer(s, result.final_state);
  }
  if (recorded > 0) {
    for (auto& v : result.posterior_mean) v /= static_cast<double>(recorded);
  }
  return result;
}

namespace {

struct SubtreeScore {
  std::string key;
  double log_score;
};

std::vector<SubtreeScore> enumerate_subtrees(const Design& design, std::span<const double> y,
                                             const BartConfig& config, const std::vector<int>& points,
                                             int depth, std::size_t max_trees) {
  const auto& schedule = config.schedule;
  std::vector<SubtreeScore> out;
  out.push_back({"L", leaf_log_prior(schedule, depth, design, points) + marginal(points, y, config)});
  if (config.max_depth >= 0 && depth >= config.max_depth) return out;
  for (int var : splittable_variables(design, points)) {
    for (double c : eligible_thresholds(design, points, var)) {
      const SplitRule rule{var, c};
      const double head = rule_log_prior(schedule, depth, design, points, rule);
      const auto [lp, rp] = split_points(design, points, rule);
      const auto left = enumerate_subtrees(design, y, config, lp, depth + 1, max_trees);
      const auto right = enumerate_subtrees(design, y, config, rp, depth + 1, max_trees);
      if (out.size() + left.size() * right.size() > max_trees) {
        throw CapacityError("exact enumeration exceeds " + std::to_string(max_trees) + " trees");
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "(%d:%.17g ", var, c);
      for (const auto& l : left) {
        for (const auto& r : right) {
          out.push_back({buf + l.key + ' ' + r.key + ')', head + l.log_score + r.log_score});
        }
      }
    }
  }
  return out;
}

}  // namespace

std::map<std::string, double> enumerate_tree_posterior(const Design& design,
                                                       std::span<const double> y,
                                                       const BartConfig& config,
                                                       std::size_t max_trees) {
  if (config.num_trees != 1) throw ParameterError("exact enumeration supports T = 1 only");
  if (config.max_depth < 0) throw CapacityError("exact enumeration needs a depth cap");
  if (y.size() != design.rows()) throw ParameterError("y must have one value per design row");
  std::vector<int> all(design.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  auto scored = enumerate_subtrees(design, y, config, all, 0, max_trees);
  double top = kNegInf;
  for (const auto& s : scored) top = std::max(top, s.log_score);
  double z = 0.0;
  for (const auto& s : scored) z += std::exp(s.log_score - top);
  std::map<std::string, double> out;
  for (const auto& s : scored) out[s.key] = std::exp(s.log_score - top) / z;
  return out;
}

}  // namespace gwbart
