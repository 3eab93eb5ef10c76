#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwbart/bart.hpp"
#include "gwbart/branching.hpp"
#include "gwbart/design.hpp"

namespace gwbart {

struct Dataset {
  Design x;
  std::vector<double> y;
};

/// CSV with header x1,...,xp,y and every x in [0,1]. Errors name the
/// offending row (1-based, header excluded) and column.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(std::istream& in, const std::string& source = "<stream>");
void write_dataset(std::ostream& os, const Dataset& data);

/// Smoothness and dimension of a concentration experiment.
///   eps_n = n^{-nu/(2nu+p)} sqrt(log n),  K_nu = n^{p/(2nu+p)}.
struct RateSpec {
  double nu = 1.0;
  int dim = 1;
  std::vector<std::size_t> sample_sizes;
  int replicates = 1;

  double epsilon(std::size_t n) const;
  double oracle_leaves(std::size_t n) const;
  double theoretical_slope() const { return -nu / (2.0 * nu + dim); }
  /// Throws ParameterError unless 0 < nu <= 1, the grid is strictly
  /// increasing with n >= 3, and eps_n decreases while n eps_n^2 / log n grows.
  void validate() const;
};

struct SyntheticTarget {
  std::string name;
  int dim = 1;
  double nu = 1.0;              // Hoelder exponent
  double holder_constant = 1.0; // |f(x) - f(y)| <= C ||x - y||^nu
  std::function<double(std::span<const double>)> f;

  double operator()(std::span<const double> x) const { return f(x); }
  std::vector<double> evaluate(const Design& design) const;
};

/// "abs" |x1 - 1/2| (nu = 1), "sqrt" sqrt|x1 - 1/2| (nu = 1/2),
/// "additive2d" |x1 - 1/2| + |x2 - 1/2| (nu = 1, p = 2), "constant" 0.
SyntheticTarget bundled_target(const std::string& name);
std::vector<std::string> bundled_target_names();

/// Largest ratio |f(x) - f(y)| / (C ||x - y||^nu) over random pairs; <= 1
/// means the Hoelder condition held on every sampled pair.
double holder_check(const SyntheticTarget& target, int pairs, std::uint64_t seed);

enum class DesignKind { Lattice, Uniform };

struct ConcentrationConfig {
  RateSpec rate;
  std::string target = "abs";
  BartConfig bart;
  double size_constant = 4.0;  // C in {max_t K^t > C K_nu}
  DesignKind design = DesignKind::Lattice;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct ReplicateResult {
  std::size_t n = 0;
  int replicate = 0;
  bool failed = false;
  std::string failure;
  double error = 0.0;            // ||posterior mean - f0||_n
  double exceedance = 0.0;       // posterior mass on max_t K^t > C K_nu
  double mean_max_size = 0.0;
};

struct ConcentrationRow {
  std::size_t n = 0;
  double epsilon = 0.0;
  double oracle_leaves = 0.0;
  double mean_error = 0.0;
  double se_error = 0.0;
  double mean_exceedance = 0.0;
  double mean_max_size = 0.0;
  int failures = 0;
};

struct ConcentrationReport {
  std::string target;
  double nu = 0.0;
  int dim = 0;
  double theoretical_slope = 0.0;
  double fitted_slope = 0.0;
  double size_constant = 0.0;
  std::vector<ConcentrationRow> rows;
  std::vector<ReplicateResult> replicates;
  int failures = 0;

  bool too_many_failures() const;
  /// Mean errors non-increasing in n allowing one standard error of slack.
  bool errors_monotone() const;
  nlohmann::json to_json() const;
  void write_csv(std::ostream& os) const;
};

/// Ordinary least squares slope of y on x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

/// For every (n, replicate) task: simulate y = f0(x) + N(0, 1) on the design,
/// run the sampler, and score the posterior mean and the posterior tree sizes.
/// Task i uses Rng::stream(seed, i), so results do not depend on `threads`.
ConcentrationReport run_concentration(const ConcentrationConfig& config);

struct OracleReport {
  double total_variation = 1.0;
  double threshold = 0.05;
  std::int64_t recorded = 0;
  std::map<std::string, double> exact;
  std::map<std::string, double> empirical;
  /// Total variation never exceeds one, so a threshold of one accepts any run.
  bool passed() const { return total_variation < threshold || threshold >= 1.0; }
  nlohmann::json to_json() const;
};

double total_variation(const std::map<std::string, double>& a, const std::map<std::string, double>& b);

/// Compares sampler visit frequencies of a single tree (T = 1) with the
/// exact enumerated posterior. Refuses n > 12, p != 1 or depth cap > 2.
OracleReport run_posterior_oracle(const Dataset& data, const BartConfig& config, double threshold,
                                  std::uint64_t seed);

/// Six-point one-dimensional fixture used by the oracle command and tests.
Dataset oracle_fixture();
/// Sampler settings for the fixture: T = 1, depth cap 2, unit variances,
/// polynomial schedule (0.95, 1).
BartConfig oracle_config(int sweeps, int burn_in);

struct PriorTailOptions {
  std::int64_t draws = 1'000'000;
  long long k_max = 200;
  int t_max = 10;
  double a = 0.25;              // target-rate constant
  long long rate_k_max = 10'000;
  std::uint64_t seed = 7;
  int threads = 1;
  double se_multiplier = 3.0;
};

struct PriorTailResult {
  BoundReport report;
  TargetRateReport target_rate;
  SurvivalEstimate survival;
  std::vector<std::string> violations;  // empty iff every domination held
};

/// Monte Carlo survival of X and T_ex against Chernoff (optimal c),
/// Agresti and Markov bounds, plus the target-rate check.
PriorTailResult run_prior_tails(const SplitSchedule& schedule, const PriorTailOptions& options);

}  // namespace gwbart
