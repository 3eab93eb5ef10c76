#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwbart/schedule.hpp"

namespace gwbart {

/// How generation 0 reproduces when building Agresti's bound.
///  Schedule:     Y_0 takes values {0, 2} with P(Y_0 = 2) = p(0), the law the
///                prior actually uses.
///  AlwaysSplits: g_0(s) = s, i.e. a single certain offspring at t = 0, the
///                convention of the closed-form corollary.
enum class RootConvention { Schedule, AlwaysSplits };

/// Per-generation {0, 2} offspring laws q_t = P(Y_t = 2) for t = 0..t_max.
struct OffspringLaw {
  std::vector<double> split_probability;
  RootConvention root = RootConvention::Schedule;

  static OffspringLaw from_schedule(const SplitSchedule& schedule, int t_max,
                                    RootConvention root = RootConvention::Schedule);
  static OffspringLaw homogeneous(double q, int t_max, RootConvention root = RootConvention::Schedule);

  /// g_t'(1) and g_t''(0) of generation t.
  double mean(int t) const;
  double second_derivative_at_zero(int t) const;
};

/// A bound as evaluated (possibly > 1) plus its clamp to [0, 1].
struct BoundValue {
  double value = 0.0;
  double clamped = 0.0;
  bool vacuous = false;     // value > 1
  bool degenerate = false;  // process extinct before the horizon; value forced to 0

  static BoundValue from_log(double log_value);
};

/// E Z_t = prod_{j < t} 2 p(j) for any schedule, in log space.
double expected_generation_size(const SplitSchedule& schedule, int t);

/// The closed form (2 alpha)^t [(t+1)!]^{-gamma} as printed for the
/// polynomial schedule. It equals E Z_t only when the root is counted at depth
/// one; with the root at depth zero E Z_t = (2 alpha)^t (t!)^{-gamma}.
double published_generation_size(double alpha, double gamma, int t);

/// Agresti's extinction-time bound
///   P(T_ex > t) <= [1/P_t + 1/2 sum_{j<t} g_j''(0) / (g_j'(1) P_{j+1})]^{-1},
///   P_t = prod_{j<t} g_j'(1).
BoundValue agresti_extinction_bound(const OffspringLaw& law, int t);

/// (t^gamma / (2 alpha e^gamma))^{-t}, the decay shape of Agresti's bound for
/// the polynomial schedule without the unspecified constant C_0.
double agresti_corollary_shape(double alpha, double gamma, int t);

/// Markov: P(T_ex > t) = P(Z_t >= 1) <= E Z_t, clamped at 1.
BoundValue markov_extinction_bound(const SplitSchedule& schedule, int t);

/// mu(k) = sum_{i=1}^k p(d_i), d_i the depth of the i-th node of the complete
/// binary tree in breadth-first order (0, 1, 1, 2, 2, 2, 2, ...).
double mu_prefix(const SplitSchedule& schedule, long long k);

/// sup_k mu(k) = sum_d 2^d p(d); +inf when the series diverges (checked up
/// to depth 4096).
double mu_supremum(const SplitSchedule& schedule);

struct ChernoffMode {
  enum class Kind { Fixed, HalfLogK, Optimized };
  Kind kind = Kind::Optimized;
  double c = 0.0;  // Fixed only

  static ChernoffMode fixed(double c) { return {Kind::Fixed, c}; }
  static ChernoffMode half_log_k() { return {Kind::HalfLogK, 0.0}; }
  static ChernoffMode optimized() { return {Kind::Optimized, 0.0}; }
};

/// The c the mode resolves to at threshold k. Optimized uses the stationary
/// point c* = 1/2 log(k / (2 mu)) when k > 2 mu, else falls back to log(k)/2.
double chernoff_c(const SplitSchedule& schedule, long long k, ChernoffMode mode);

/// P(X > k) <= exp(-k c + (e^{2c} - 1) mu(k)).
BoundValue chernoff_progeny_bound(const SplitSchedule& schedule, long long k, ChernoffMode mode);

/// Total-progeny pmf of the homogeneous process with split probability p:
/// 0 for even k, (1/k) C(k, m) p^m (1-p)^{k-m} for k = 2m + 1.
double dwass_progeny_pmf(double p, long long k);

/// Monte Carlo tallies over prior draws of the pure branching process.
struct SurvivalEstimate {
  std::int64_t draws = 0;
  std::int64_t truncated = 0;
  std::vector<std::int64_t> progeny_counts;    // index X, last slot = overflow
  std::vector<std::int64_t> extinction_counts; // index T_ex, last slot = overflow
  std::vector<double> generation_sum;          // sum of Z_t
  std::vector<double> generation_sum_sq;       // sum of Z_t^2

  std::int64_t completed() const { return draws - truncated; }
  /// P(X > k); truncated draws count as exceeding every k.
  double progeny_survival(long long k) const;
  double extinction_survival(int t) const;
  double progeny_pmf(long long k) const;
  /// P(K > k) = P(X > 2k - 1).
  double leaf_survival(long long k) const;
  double generation_mean(int t) const;
  double generation_se(int t) const;

  void merge(const SurvivalEstimate& other);
};

double binomial_se(double p, std::int64_t n);

/// Draws `n_draws` shapes from sample_shape. Work is split into a fixed
/// number of chunks (kSurvivalChunks), chunk c using Rng::stream(seed, c);
/// `threads` only changes scheduling, never the result.
inline constexpr int kSurvivalChunks = 64;
SurvivalEstimate monte_carlo_survival(const SplitSchedule& schedule, std::int64_t n_draws,
                                      std::uint64_t seed, long long max_k, int max_t,
                                      int threads = 1);

struct TargetRateRow {
  long long k = 0;
  double mu = 0.0;
  double threshold = 0.0;  // (1/2 - a) log k
  bool holds = false;
  double target = 0.0;     // exp(-a k log k)
};

struct TargetRateReport {
  double a = 0.0;
  std::vector<TargetRateRow> rows;  // empty unless keep_rows
  /// Smallest k in [k_min, k_max] from which the condition holds through k_max; -1 if none.
  long long holds_from = -1;
  /// Smallest k for which sup mu <= (1/2 - a) log k, i.e. holds for every larger k; -1 if mu diverges.
  long long certified_from = -1;
  /// Largest k in range where the condition holds; -1 if none.
  long long last_hold = -1;
  double mu_sup = 0.0;
  bool fails_everywhere_after(long long k) const;
};

/// Checks the sufficient condition mu(k) <= (1/2 - a) log k for
/// P(X > k) <= e^{-a k log k} on k_min..k_max.
TargetRateReport target_rate_check(const SplitSchedule& schedule, double a, long long k_min,
                                   long long k_max, bool keep_rows = true);

enum class BoundMethod { Agresti, AgrestiRootSplits, Markov, ChernoffFixedC, ChernoffHalfLogK,
                         ChernoffOptimalC, TargetRate };
std::string to_string(BoundMethod m);

struct BoundRow {
  char axis = 'k';  // 'k' progeny threshold, 't' extinction horizon
  long long grid = 0;
  BoundMethod method = BoundMethod::ChernoffOptimalC;
  BoundValue analytic;
  double empirical = 0.0;
  double se = 0.0;
  bool has_empirical = false;
};

struct BoundReport {
  std::string schedule;
  std::int64_t draws = 0;
  std::int64_t truncated = 0;
  std::vector<BoundRow> rows;

  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;
};

}  // namespace gwbart
