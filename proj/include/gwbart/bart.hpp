#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwbart/design.hpp"
#include "gwbart/rng.hpp"
#include "gwbart/schedule.hpp"
#include "gwbart/tree.hpp"

namespace gwbart {

struct MoveProbabilities {
  double grow = 0.4;
  double prune = 0.4;
  double change = 0.2;
};

struct BartConfig {
  int num_trees = 200;
  SplitSchedule schedule = SplitSchedule::geometric(0.25);
  /// Prior variance of each leaf height; 1/T when unset.
  std::optional<double> leaf_prior_variance;
  /// Residual variance, held fixed.
  double noise_variance = 1.0;
  /// Shift and scale y to [-0.5, 0.5] before sampling.
  bool rescale_outputs = false;
  MoveProbabilities moves;
  int moves_per_tree = 1;
  /// Trees never grow below this depth; -1 for no cap.
  int max_depth = -1;
  int sweeps = 1000;
  int burn_in = 200;
  int thin = 1;
  bool keep_snapshots = false;

  double leaf_variance() const;
  /// Throws ParameterError on an invalid configuration.
  void validate() const;

  /// (0.5 / (k sqrt(T)))^2, the k-calibrated leaf scale for outputs rescaled
  /// to [-0.5, 0.5].
  static double calibrated_leaf_variance(double k, int num_trees);
};

/// Sum of T trees; each tree's leaf values are its step heights.
struct Ensemble {
  std::vector<BinaryTreePartition> trees;

  static Ensemble stumps(int num_trees);

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Design& design) const;
  std::vector<std::size_t> tree_sizes() const;
  std::size_t max_tree_size() const;
  nlohmann::json to_json() const;
  static Ensemble from_json(const nlohmann::json& doc);
};

/// Affine map of outputs to [-0.5, 0.5].
struct OutputScaling {
  double offset = 0.0;
  double scale = 1.0;

  static OutputScaling identity() { return {}; }
  static OutputScaling fit(std::span<const double> y);
  double to_model(double y) const { return (y - offset) / scale; }
  double to_data(double f) const { return f * scale + offset; }
};

/// log of the integral over beta of prod_i N(r_i; beta, s2) N(beta; 0, s2b).
double leaf_marginal_loglik(std::span<const double> residuals, double noise_variance,
                            double leaf_prior_variance);
/// Same from sufficient statistics (count, sum, sum of squares).
double leaf_marginal_loglik(std::size_t count, double sum, double sum_sq, double noise_variance,
                            double leaf_prior_variance);

enum class MoveType { Grow, Prune, Change };
std::string to_string(MoveType t);

struct ProposedMove {
  MoveType type = MoveType::Grow;
  int node = 0;        // leaf to grow, or internal node to prune / change
  SplitRule rule;      // new rule for Grow and Change
};

/// Draws a move of the given type on `tree`; nullopt when none is legal.
std::optional<ProposedMove> draw_move(const BinaryTreePartition& tree, MoveType type,
                                      const Design& design, const BartConfig& config, Rng& rng);

/// Unclipped log Metropolis-Hastings ratio of `move` for a tree fit to
/// `residuals`: log prior ratio + log marginal-likelihood ratio + log
/// proposal ratio. The target is tree_log_prior + sum of leaf marginals.
double log_acceptance(const BinaryTreePartition& tree, const ProposedMove& move,
                      const Design& design, std::span<const double> residuals,
                      const BartConfig& config);

/// The tree after `move`. Grow keeps the grown leaf's id; Prune renumbers.
BinaryTreePartition apply_move(const BinaryTreePartition& tree, const ProposedMove& move);

struct MoveOutcome {
  MoveType type = MoveType::Grow;
  bool proposed = false;  // a legal move of the drawn type existed
  bool accepted = false;
};

/// One Metropolis-Hastings step on a single tree (heights are not touched).
MoveOutcome propose_move(BinaryTreePartition& tree, const Design& design,
                         std::span<const double> residuals, const BartConfig& config, Rng& rng);

/// Draws every leaf height of `tree` from its conjugate Gaussian posterior.
void draw_leaf_heights(BinaryTreePartition& tree, const Design& design,
                       std::span<const double> residuals, const BartConfig& config, Rng& rng);

/// One backfitting sweep: for each tree in order, form partial residuals,
/// apply `moves_per_tree` MH steps and redraw its heights.
void backfit_sweep(Ensemble& state, const Design& design, std::span<const double> y,
                   const BartConfig& config, Rng& rng);

struct TraceRecord {
  int sweep = 0;
  std::vector<std::size_t> tree_sizes;
  std::size_t max_tree_size = 0;
  double train_error = 0.0;  // ||f - y||_n on the data scale
};

struct ChainTrace {
  std::vector<TraceRecord> records;
  std::vector<Ensemble> snapshots;  // data-scale heights; only with keep_snapshots

  void write_csv(std::ostream& os) const;
};

struct ChainResult {
  ChainTrace trace;
  std::vector<double> posterior_mean;  // at the design points, data scale
  Ensemble final_state;                // model scale
  OutputScaling scaling;
  std::map<MoveType, std::int64_t> proposed;
  std::map<MoveType, std::int64_t> accepted;

  /// Fraction of recorded sweeps with max_t K^t > limit.
  double max_size_exceedance(double limit) const;
  double mean_max_size() const;
};

/// Called after every recorded sweep with the model-scale ensemble.
using SweepObserver = std::function<void(int sweep, const Ensemble& state)>;

/// Starts from single-leaf trees with zero heights and runs config.sweeps
/// sweeps, recording every thin-th sweep after burn-in.
ChainResult run_chain(const Design& design, std::span<const double> y, const BartConfig& config,
                      Rng& rng, const SweepObserver& observer = {});

/// Exact posterior over single trees (T = 1) of depth <= config.max_depth,
/// keyed by canonical_key. Throws CapacityError above `max_trees` trees.
std::map<std::string, double> enumerate_tree_posterior(const Design& design,
                                                       std::span<const double> y,
                                                       const BartConfig& config,
                                                       std::size_t max_trees = 2'000'000);

}  // namespace gwbart
