#include "gwbart/branching.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <thread>

#include "gwbart/error.hpp"
#include "gwbart/prior.hpp"
#include "gwbart/rng.hpp"

namespace gwbart {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

}  // namespace

OffspringLaw OffspringLaw::from_schedule(const SplitSchedule& schedule, int t_max,
                                         RootConvention root) {
  if (t_max < 0) throw ParameterError("t_max must be >= 0");
  OffspringLaw law;
  law.root = root;
  law.split_probability.resize(static_cast<std::size_t>(t_max) + 1);
  for (int t = 0; t <= t_max; ++t) law.split_probability[static_cast<std::size_t>(t)] = schedule(t);
  return law;
}

OffspringLaw OffspringLaw::homogeneous(double q, int t_max, RootConvention root) {
  return from_schedule(SplitSchedule::constant(q), t_max, root);
}

double OffspringLaw::mean(int t) const {
  if (t == 0 && root == RootConvention::AlwaysSplits) return 1.0;
  return 2.0 * split_probability.at(static_cast<std::size_t>(t));
}

double OffspringLaw::second_derivative_at_zero(int t) const {
  if (t == 0 && root == RootConvention::AlwaysSplits) return 0.0;
  return 2.0 * split_probability.at(static_cast<std::size_t>(t));
}

BoundValue BoundValue::from_log(double log_value) {
  BoundValue b;
  b.value = std::exp(log_value);
  b.vacuous = log_value > 0.0;
  b.clamped = b.vacuous ? 1.0 : b.value;
  return b;
}

double expected_generation_size(const SplitSchedule& schedule, int t) {
  if (t < 0) throw ParameterError("generation must be >= 0");
  double log_mean = 0.0;
  for (int j = 0; j < t; ++j) log_mean += std::log(2.0) + safe_log(schedule(j));
  return std::exp(log_mean);
}

double published_generation_size(double alpha, double gamma, int t) {
  if (t < 0) throw ParameterError("generation must be >= 0");
  return std::exp(t * std::log(2.0 * alpha) - gamma * std::lgamma(t + 2.0));
}

BoundValue agresti_extinction_bound(const OffspringLaw& law, int t) {
  if (t < 1) throw ParameterError("Agresti bound needs t >= 1");
  if (law.split_probability.size() < static_cast<std::size_t>(t)) {
    throw ParameterError("offspring law shorter than the horizon");
  }
  // log P_{j} for j = 0..t
  std::vector<double> log_p(static_cast<std::size_t>(t) + 1, 0.0);
  for (int j = 0; j < t; ++j) {
    const double m = law.mean(j);
    if (m <= 0.0) {
      BoundValue b;
      b.degenerate = true;
      return b;
    }
    log_p[static_cast<std::size_t>(j) + 1] = log_p[static_cast<std::size_t>(j)] + std::log(m);
  }
  double log_denominator = -log_p[static_cast<std::size_t>(t)];
  for (int j = 0; j < t; ++j) {
    const double g2 = law.second_derivative_at_zero(j);
    if (g2 <= 0.0) continue;
    const double term = std::log(0.5) + std::log(g2) - std::log(law.mean(j)) -
                        log_p[static_cast<std::size_t>(j) + 1];
    log_denominator = log_sum_exp(log_denominator, term);
  }
  return BoundValue::from_log(-log_denominator);
}

double agresti_corollary_shape(double alpha, double gamma, int t) {
  if (t < 1) throw ParameterError("corollary shape needs t >= 1");
  return std::exp(-t * (gamma * std::log(static_cast<double>(t)) - std::log(2.0 * alpha) - gamma));
}

BoundValue markov_extinction_bound(const SplitSchedule& schedule, int t) {
  if (t < 0) throw ParameterError("horizon must be >= 0");
  double log_mean = 0.0;
  for (int j = 0; j < t; ++j) log_mean += std::log(2.0) + safe_log(schedule(j));
  return BoundValue::from_log(log_mean);
}

double mu_prefix(const SplitSchedule& schedule, long long k) {
  if (k < 1) throw ParameterError("mu_prefix needs k >= 1");
  double mu = 0.0;
  long long remaining = k;
  long long level = 1;
  for (int d = 0; remaining > 0; ++d) {
    const long long take = std::min(remaining, level);
    mu += static_cast<double>(take) * schedule(d);
    remaining -= take;
    level *= 2;
  }
  return mu;
}

double mu_supremum(const SplitSchedule& schedule) {
  double sum = 0.0;
  for (int d = 0; d <= 4096; ++d) {
    const double log_term = d * std::log(2.0) + safe_log(schedule(d));
    if (log_term > 700.0) return std::numeric_limits<double>::infinity();
    const double term = std::exp(log_term);
    sum += term;
    if (d > 8 && term < 1e-17 * sum) return sum;
  }
  return std::numeric_limits<double>::infinity();
}

double chernoff_c(const SplitSchedule& schedule, long long k, ChernoffMode mode) {
  if (k < 1) throw ParameterError("Chernoff bound needs k >= 1");
  const double half_log_k = 0.5 * std::log(static_cast<double>(k));
  switch (mode.kind) {
    case ChernoffMode::Kind::Fixed:
      if (!(mode.c > 0.0)) throw ParameterError("fixed Chernoff c must be > 0");
      return mode.c;
    case ChernoffMode::Kind::HalfLogK:
      return half_log_k;
    case ChernoffMode::Kind::Optimized: {
      const double mu = mu_prefix(schedule, k);
      if (mu <= 0.0) return std::numeric_limits<double>::infinity();
      if (static_cast<double>(k) > 2.0 * mu) return 0.5 * std::log(static_cast<double>(k) / (2.0 * mu));
      return half_log_k;
    }
  }
  return half_log_k;
}

BoundValue chernoff_progeny_bound(const SplitSchedule& schedule, long long k, ChernoffMode mode) {
  const double c = chernoff_c(schedule, k, mode);
  const double mu = mu_prefix(schedule, k);
  if (std::isinf(c)) return BoundValue::from_log(kNegInf);
  const double exponent = -static_cast<double>(k) * c + std::expm1(2.0 * c) * mu;
  return BoundValue::from_log(exponent);
}

double dwass_progeny_pmf(double p, long long k) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("split probability must lie in [0, 1]");
  if (k < 1) throw ParameterError("total progeny k must be >= 1");
  if (k % 2 == 0) return 0.0;
  const long long m = (k - 1) / 2;
  if (p == 0.0) return k == 1 ? 1.0 : 0.0;
  if (p == 1.0) return 0.0;
  const auto kd = static_cast<double>(k);
  const auto md = static_cast<double>(m);
  const double log_pmf = -std::log(kd) + std::lgamma(kd + 1.0) - std::lgamma(md + 1.0) -
                         std::lgamma(kd - md + 1.0) + md * std::log(p) + (kd - md) * std::log1p(-p);
  return std::exp(log_pmf);
}

double binomial_se(double p, std::int64_t n) {
  if (n <= 0) return 0.0;
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

double SurvivalEstimate::progeny_survival(long long k) const {
  if (draws == 0) return 0.0;
  if (k < 0) return 1.0;
  const auto limit = static_cast<long long>(progeny_counts.size()) - 1;
  if (k >= limit) throw ParameterError("progeny threshold beyond the tallied range");
  std::int64_t above = truncated;
  for (long long x = k + 1; x <= limit; ++x) above += progeny_counts[static_cast<std::size_t>(x)];
  return static_cast<double>(above) / static_cast<double>(draws);
}

double SurvivalEstimate::extinction_survival(int t) const {
  if (draws == 0) return 0.0;
  if (t < 0) return 1.0;
  const auto limit = static_cast<int>(extinction_counts.size()) - 1;
  if (t >= limit) throw ParameterError("extinction horizon beyond the tallied range");
  std::int64_t above = truncated;
  for (int x = t + 1; x <= limit; ++x) above += extinction_counts[static_cast<std::size_t>(x)];
  return static_cast<double>(above) / static_cast<double>(draws);
}

double SurvivalEstimate::progeny_pmf(long long k) const {
  if (draws == 0 || k < 0 || k >= static_cast<long long>(progeny_counts.size()) - 1) return 0.0;
  return static_cast<double>(progeny_counts[static_cast<std::size_t>(k)]) / static_cast<double>(draws);
}

double SurvivalEstimate::leaf_survival(long long k) const { return progeny_survival(2 * k - 1); }

double SurvivalEstimate::generation_mean(int t) const {
  const auto n = completed();
  if (n == 0) return 0.0;
  return generation_sum.at(static_cast<std::size_t>(t)) / static_cast<double>(n);
}

double SurvivalEstimate::generation_se(int t) const {
  const auto n = completed();
  if (n < 2) return 0.0;
  const double mean = generation_mean(t);
  const double var = (generation_sum_sq.at(static_cast<std::size_t>(t)) / static_cast<double>(n) -
                      mean * mean) * static_cast<double>(n) / static_cast<double>(n - 1);
  return std::sqrt(std::max(0.0, var) / static_cast<double>(n));
}

void SurvivalEstimate::merge(const SurvivalEstimate& other) {
  draws += other.draws;
  truncated += other.truncated;
  auto add = [](auto& into, const auto& from) {
    if (into.size() < from.size()) into.resize(from.size(), 0);
    for (std::size_t i = 0; i < from.size(); ++i) into[i] += from[i];
  };
  add(progeny_counts, other.progeny_counts);
  add(extinction_counts, other.extinction_counts);
  add(generation_sum, other.generation_sum);
  add(generation_sum_sq, other.generation_sum_sq);
}

SurvivalEstimate monte_carlo_survival(const SplitSchedule& schedule, std::int64_t n_draws,
                                      std::uint64_t seed, long long max_k, int max_t, int threads) {
  if (n_draws < 1) throw ParameterError("n_draws must be >= 1");
  if (max_k < 1 || max_t < 1) throw ParameterError("tally ranges must be >= 1");
  threads = std::max(1, threads);

  auto run_chunk = [&](int chunk) {
    SurvivalEstimate est;
    est.progeny_counts.assign(static_cast<std::size_t>(max_k) + 2, 0);
    est.extinction_counts.assign(static_cast<std::size_t>(max_t) + 2, 0);
    est.generation_sum.assign(static_cast<std::size_t>(max_t) + 1, 0.0);
    est.generation_sum_sq.assign(static_cast<std::size_t>(max_t) + 1, 0.0);
    const std::int64_t share = n_draws / kSurvivalChunks + (chunk < n_draws % kSurvivalChunks ? 1 : 0);
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(chunk));
    for (std::int64_t i = 0; i < share; ++i) {
      ++est.draws;
      TreeMetrics m;
      try {
        m = sample_shape(schedule, rng);
      } catch (const TruncationError&) {
        ++est.truncated;
        continue;
      }
      const auto x = std::min<long long>(m.total_nodes, max_k + 1);
      ++est.progeny_counts[static_cast<std::size_t>(x)];
      const int te = std::min(m.extinction_time, max_t + 1);
      ++est.extinction_counts[static_cast<std::size_t>(te)];
      for (int t = 0; t <= max_t && t < static_cast<int>(m.generation_sizes.size()); ++t) {
        const auto z = static_cast<double>(m.generation_sizes[static_cast<std::size_t>(t)]);
        est.generation_sum[static_cast<std::size_t>(t)] += z;
        est.generation_sum_sq[static_cast<std::size_t>(t)] += z * z;
      }
    }
    return est;
  };

  std::vector<SurvivalEstimate> parts(kSurvivalChunks);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < kSurvivalChunks; c = next++) parts[static_cast<std::size_t>(c)] = run_chunk(c);
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  SurvivalEstimate total;
  for (const auto& part : parts) total.merge(part);
  return total;
}

bool TargetRateReport::fails_everywhere_after(long long k) const { return last_hold <= k; }

TargetRateReport target_rate_check(const SplitSchedule& schedule, double a, long long k_min,
                                   long long k_max, bool keep_rows) {
  if (!(a > 0.0 && a < 0.5)) throw ParameterError("target-rate constant a must lie in (0, 1/2)");
  if (k_min < 1 || k_max < k_min) throw ParameterError("need 1 <= k_min <= k_max");
  TargetRateReport rep;
  rep.a = a;
  rep.mu_sup = mu_supremum(schedule);
  if (std::isfinite(rep.mu_sup)) {
    rep.certified_from = std::max<long long>(
        1, static_cast<long long>(std::ceil(std::exp(rep.mu_sup / (0.5 - a)))));
  }
  double mu = 0.0;
  long long level_end = 1;  // last 1-based index in the current depth
  int depth = 0;
  long long last_fail = k_min - 1;
  for (long long k = 1; k <= k_max; ++k) {
    if (k > level_end) {
      ++depth;
      level_end = 2 * level_end + 1;
    }
    mu += schedule(depth);
    if (k < k_min) continue;
    TargetRateRow row;
    row.k = k;
    row.mu = mu;
    const double logk = std::log(static_cast<double>(k));
    row.threshold = (0.5 - a) * logk;
    row.holds = mu <= row.threshold;
    row.target = std::exp(-a * static_cast<double>(k) * logk);
    if (!row.holds) {
      last_fail = k;
    } else {
      rep.last_hold = k;
    }
    if (keep_rows) rep.rows.push_back(row);
  }
  rep.holds_from = last_fail < k_max ? last_fail + 1 : -1;
  return rep;
}

std::string to_string(BoundMethod m) {
  switch (m) {
    case BoundMethod::Agresti: return "agresti";
    case BoundMethod::AgrestiRootSplits: return "agresti_root_splits";
    case BoundMethod::Markov: return "markov";
    case BoundMethod::ChernoffFixedC: return "chernoff_fixed_c";
    case BoundMethod::ChernoffHalfLogK: return "chernoff_half_log_k";
    case BoundMethod::ChernoffOptimalC: return "chernoff_optimal_c";
    case BoundMethod::TargetRate: return "target_rate";
  }
  return "unknown";
}

void BoundReport::write_csv(std::ostream& os) const {
  os << "grid,method,analytic,empirical,se,vacuous\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.grid << ',' << to_string(r.method) << ',' << r.analytic.value << ',';
    if (r.has_empirical) {
      os << r.empirical << ',' << r.se;
    } else {
      os << ',';
    }
    os << ',' << (r.analytic.vacuous ? 1 : 0) << '\n';
  }
}

nlohmann::json BoundReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"axis", std::string(1, r.axis)},
                     {"grid", r.grid},
                     {"method", to_string(r.method)},
                     {"analytic", r.analytic.value},
                     {"clamped", r.analytic.clamped},
                     {"vacuous", r.analytic.vacuous},
                     {"degenerate", r.analytic.degenerate}};
    if (r.has_empirical) {
      j["empirical"] = r.empirical;
      j["se"] = r.se;
    }
    rows_json.push_back(std::move(j));
  }
  return {{"schedule", schedule}, {"draws", draws}, {"truncated", truncated}, {"rows", rows_json}};
}

}  // namespace gwbart
