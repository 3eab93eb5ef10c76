#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gwbart/branching.hpp"
#include "gwbart/error.hpp"
#include "gwbart/prior.hpp"
#include "gwbart/rng.hpp"

using namespace gwbart;

namespace {

// Catalan numbers by the convolution recurrence, as doubles.
std::vector<double> catalan(int m_max) {
  std::vector<double> c(static_cast<std::size_t>(m_max) + 1, 0.0);
  c[0] = 1.0;
  for (int m = 1; m <= m_max; ++m) {
    for (int i = 0; i < m; ++i) c[static_cast<std::size_t>(m)] += c[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(m - 1 - i)];
  }
  return c;
}

// Depth of the i-th node (1-based) of a complete binary tree in breadth-first order.
int bfs_depth(long long i) {
  int d = 0;
  while ((2LL << d) <= i) ++d;
  return d;
}

// Agresti's expression evaluated straight from per-generation means and
// second derivatives.
double agresti_direct(const std::vector<double>& mean, const std::vector<double>& g2, int t) {
  std::vector<double> P(static_cast<std::size_t>(t) + 1, 1.0);
  for (int j = 0; j < t; ++j) P[static_cast<std::size_t>(j) + 1] = P[static_cast<std::size_t>(j)] * mean[static_cast<std::size_t>(j)];
  double s = 1.0 / P[static_cast<std::size_t>(t)];
  for (int j = 0; j < t; ++j) {
    s += 0.5 * g2[static_cast<std::size_t>(j)] / (mean[static_cast<std::size_t>(j)] * P[static_cast<std::size_t>(j) + 1]);
  }
  return 1.0 / s;
}

}  // namespace

TEST_CASE("expected generation size is the product of per-depth means") {
  CHECK(expected_generation_size(SplitSchedule::polynomial(0.5, 0.0), 0) == doctest::Approx(1.0));
  const auto s = SplitSchedule::polynomial(0.4, 1.0);
  for (int t = 0; t <= 8; ++t) {
    double prod = 1.0;
    for (int j = 0; j < t; ++j) prod *= 2.0 * 0.4 / (1.0 + j);
    CHECK(expected_generation_size(s, t) == doctest::Approx(prod).epsilon(1e-12));
  }
  CHECK(expected_generation_size(SplitSchedule::constant(0.5), 2) == doctest::Approx(1.0));
}

TEST_CASE("printed generation-size closed form") {
  CHECK(published_generation_size(0.5, 0.0, 2) == doctest::Approx(1.0));
  CHECK(published_generation_size(0.4, 1.0, 2) == doctest::Approx(0.64 / 6.0));
  CHECK(published_generation_size(0.7, 2.5, 0) == doctest::Approx(1.0));
  // Shifted by one depth it is the exact product.
  const auto s = SplitSchedule::polynomial(0.4, 1.0);
  for (int t = 1; t <= 6; ++t) {
    double shifted = 1.0;
    for (int j = 1; j <= t; ++j) shifted *= 2.0 * 0.4 / (1.0 + j);
    CHECK(published_generation_size(0.4, 1.0, t) == doctest::Approx(shifted));
    CHECK(expected_generation_size(s, t) > published_generation_size(0.4, 1.0, t));
  }
}

TEST_CASE("Agresti bound: worked values under the certain-root convention") {
  const auto law = OffspringLaw::homogeneous(0.4, 10, RootConvention::AlwaysSplits);
  CHECK(agresti_extinction_bound(law, 2).value == doctest::Approx(1.0 / (1.25 + 0.625)));
  CHECK(agresti_extinction_bound(law, 2).value == doctest::Approx(0.53333).epsilon(1e-4));
  CHECK(agresti_extinction_bound(law, 3).value == doctest::Approx(0.33684).epsilon(1e-4));
}

TEST_CASE("Agresti bound matches a direct evaluation for both conventions") {
  const auto s = SplitSchedule::polynomial(0.95, 2.0);
  for (auto root : {RootConvention::Schedule, RootConvention::AlwaysSplits}) {
    const auto law = OffspringLaw::from_schedule(s, 12, root);
    std::vector<double> mean;
    std::vector<double> g2;
    for (int j = 0; j <= 12; ++j) {
      const bool certain = root == RootConvention::AlwaysSplits && j == 0;
      mean.push_back(certain ? 1.0 : 2.0 * s(j));
      g2.push_back(certain ? 0.0 : 2.0 * s(j));
    }
    for (int t = 1; t <= 12; ++t) {
      const auto b = agresti_extinction_bound(law, t);
      CHECK(b.value == doctest::Approx(agresti_direct(mean, g2, t)).epsilon(1e-10));
      CHECK(b.clamped <= 1.0);
    }
  }
}

TEST_CASE("Agresti bound degenerates when a generation cannot reproduce") {
  const auto law = OffspringLaw::from_schedule(SplitSchedule::table({0.6, 0.0, 0.5}), 5);
  const auto b = agresti_extinction_bound(law, 3);
  CHECK(b.degenerate);
  CHECK(b.value == 0.0);
  CHECK_FALSE(agresti_extinction_bound(law, 1).degenerate);
}

TEST_CASE("Agresti corollary shape") {
  const double a = 0.5;
  const double g = 1.0;
  for (int t = 1; t <= 5; ++t) {
    CHECK(agresti_corollary_shape(a, g, t) == doctest::Approx(std::pow(t / (2 * a * std::exp(1.0)), -t)));
  }
}

TEST_CASE("Markov bound is the clamped expected generation size") {
  CHECK(markov_extinction_bound(SplitSchedule::constant(0.5), 7).clamped == doctest::Approx(1.0));
  CHECK(markov_extinction_bound(SplitSchedule::polynomial(0.4, 1.0), 0).clamped == doctest::Approx(1.0));
  CHECK(markov_extinction_bound(SplitSchedule::polynomial(0.4, 1.0), 2).value == doctest::Approx(0.8 * 0.4));
  CHECK(markov_extinction_bound(SplitSchedule::polynomial(0.95, 2.0), 1).vacuous);
}

TEST_CASE("mu prefix sums over breadth-first depths") {
  const auto poly = SplitSchedule::polynomial(0.5, 1.0);
  CHECK(mu_prefix(poly, 1) == doctest::Approx(0.5));
  CHECK(mu_prefix(poly, 7) == doctest::Approx(0.5 * (1.0 + 2.0 / 2.0 + 4.0 / 3.0)));
  for (long long k : {1LL, 2LL, 3LL, 10LL, 100LL, 1000LL, 5000LL}) {
    double direct = 0.0;
    for (long long i = 1; i <= k; ++i) direct += poly(bfs_depth(i));
    CHECK(mu_prefix(poly, k) == doctest::Approx(direct).epsilon(1e-12));
  }
  const auto geo = SplitSchedule::geometric(0.25, 0.25);
  for (long long k = 1; k < 100'000; k = k * 3 + 1) CHECK(mu_prefix(geo, k) < 0.5);
  CHECK(mu_supremum(geo) == doctest::Approx(0.5));
  CHECK(std::isinf(mu_supremum(poly)));
}

TEST_CASE("Chernoff bound worked values") {
  const auto s = SplitSchedule::constant(0.3);
  const auto half = chernoff_progeny_bound(s, 5, ChernoffMode::half_log_k());
  CHECK(half.value == doctest::Approx(std::exp(-5 * std::log(5.0) / 2 + 4 * 1.5)));
  CHECK(half.value == doctest::Approx(7.2170).epsilon(1e-4));
  CHECK(half.vacuous);
  CHECK(half.clamped == 1.0);

  CHECK(chernoff_c(s, 5, ChernoffMode::optimized()) == doctest::Approx(0.5 * std::log(5.0 / 3.0)));
  const auto opt = chernoff_progeny_bound(s, 5, ChernoffMode::optimized());
  CHECK(opt.value == doctest::Approx(0.75807).epsilon(1e-4));
  CHECK_FALSE(opt.vacuous);

  CHECK(chernoff_progeny_bound(s, 5, ChernoffMode::fixed(1e-9)).value == doctest::Approx(1.0));
  CHECK_THROWS_AS(chernoff_progeny_bound(s, 0, ChernoffMode::optimized()), ParameterError);
}

TEST_CASE("optimized c never does worse than c = log(k)/2") {
  for (const auto& s : {SplitSchedule::constant(0.3), SplitSchedule::polynomial(0.95, 2.0),
                        SplitSchedule::geometric(0.25)}) {
    for (long long k = 1; k <= 500; ++k) {
      const auto opt = chernoff_progeny_bound(s, k, ChernoffMode::optimized());
      const auto half = chernoff_progeny_bound(s, k, ChernoffMode::half_log_k());
      REQUIRE(opt.value <= half.value * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("Dwass pmf worked values and Catalan enumeration") {
  CHECK(dwass_progeny_pmf(0.3, 1) == doctest::Approx(0.7));
  CHECK(dwass_progeny_pmf(0.3, 3) == doctest::Approx(0.147));
  CHECK(dwass_progeny_pmf(0.3, 5) == doctest::Approx(0.06174));
  CHECK(dwass_progeny_pmf(0.3, 4) == 0.0);

  // m internal nodes: Catalan(m) shapes, each with probability p^m (1-p)^{m+1}.
  const auto cat = catalan(30);
  for (double p : {0.1, 0.3, 0.45}) {
    for (int m = 0; m <= 30; ++m) {
      const double brute = cat[static_cast<std::size_t>(m)] * std::pow(p, m) * std::pow(1 - p, m + 1);
      CHECK(dwass_progeny_pmf(p, 2 * m + 1) == doctest::Approx(brute).epsilon(1e-10));
    }
  }
}

TEST_CASE("Dwass pmf sums to one for subcritical laws") {
  for (double p : {0.1, 0.3, 0.45}) {
    double total = 0.0;
    for (long long k = 1; k <= 20001; k += 2) total += dwass_progeny_pmf(p, k);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("Monte Carlo survival agrees with the Dwass oracle") {
  const auto zero = monte_carlo_survival(SplitSchedule::constant(0.0), 10'000, 1, 20, 5);
  for (long long k = 1; k <= 20; ++k) CHECK(zero.progeny_survival(k) == 0.0);

  const auto est = monte_carlo_survival(SplitSchedule::constant(0.3), 400'000, 17, 50, 10, 2);
  double cdf = 0.0;
  for (long long k = 1; k <= 9; ++k) {
    cdf += dwass_progeny_pmf(0.3, k);
    const double se = binomial_se(1.0 - cdf, est.draws);
    CHECK(std::abs(est.progeny_survival(k) - (1.0 - cdf)) < 3.0 * se + 1e-12);
  }
  CHECK(est.progeny_survival(1) == doctest::Approx(0.3).epsilon(0.01));
  for (long long k = 2; k <= 50; ++k) CHECK(est.progeny_survival(k) <= est.progeny_survival(k - 1));
}

TEST_CASE("Monte Carlo survival does not depend on the thread count") {
  const auto s = SplitSchedule::polynomial(0.95, 2.0);
  const auto a = monte_carlo_survival(s, 50'000, 3, 100, 10, 1);
  const auto b = monte_carlo_survival(s, 50'000, 3, 100, 10, 4);
  CHECK(a.progeny_counts == b.progeny_counts);
  CHECK(a.extinction_counts == b.extinction_counts);
  CHECK(a.generation_sum == b.generation_sum);
}

TEST_CASE("leaf-count survival restates progeny survival") {
  const auto s = SplitSchedule::polynomial(0.95, 1.0);
  Rng rng(5);
  const int n = 100'000;
  std::vector<int> leaf_above(30, 0);
  std::vector<int> node_above(30, 0);
  for (int i = 0; i < n; ++i) {
    const auto m = sample_shape(s, rng);
    for (int k = 1; k < 30; ++k) {
      leaf_above[static_cast<std::size_t>(k)] += m.leaves > k;
      node_above[static_cast<std::size_t>(k)] += m.total_nodes > 2 * k - 1;
    }
  }
  CHECK(leaf_above == node_above);

  const auto est = monte_carlo_survival(s, 100'000, 5, 80, 10);
  for (long long k = 1; k < 30; ++k) CHECK(est.leaf_survival(k) == est.progeny_survival(2 * k - 1));
}

TEST_CASE("Monte Carlo generation means match the exact product") {
  const auto s = SplitSchedule::polynomial(0.4, 1.0);
  const auto est = monte_carlo_survival(s, 200'000, 23, 60, 8);
  for (int t = 0; t <= 6; ++t) {
    double prod = 1.0;
    for (int j = 0; j < t; ++j) prod *= 2.0 * 0.4 / (1.0 + j);
    const double se = std::max(est.generation_se(t), 1e-12);
    CHECK(std::abs(est.generation_mean(t) - prod) < 4.0 * se + 1e-12);
  }
}

TEST_CASE("target-rate condition") {
  const auto geo = target_rate_check(SplitSchedule::geometric(0.25, 0.25), 0.25, 1, 5000);
  CHECK(geo.certified_from == 8);
  CHECK(geo.holds_from <= 8);
  CHECK(geo.last_hold == 5000);
  for (const auto& row : geo.rows) {
    if (row.k >= 8) CHECK(row.holds);
    CHECK(row.target == doctest::Approx(std::exp(-0.25 * row.k * std::log(static_cast<double>(row.k)))));
  }

  for (double a : {0.05, 0.1, 0.25}) {
    const auto poly = target_rate_check(SplitSchedule::polynomial(0.5, 1.0), a, 1, 20'000, false);
    CHECK(poly.rows.empty());
    CHECK(poly.certified_from == -1);
    CHECK(poly.fails_everywhere_after(10'000));
  }

  const auto tight = target_rate_check(SplitSchedule::polynomial(0.5, 1.0), 0.49, 2, 2);
  REQUIRE(tight.rows.size() == 1);
  CHECK_FALSE(tight.rows.front().holds);
}

TEST_CASE("bound report emits the tabular header") {
  BoundReport rep;
  rep.rows.push_back({'k', 5, BoundMethod::ChernoffOptimalC, BoundValue::from_log(std::log(2.0)), 0.1, 0.01, true});
  std::ostringstream os;
  rep.write_csv(os);
  CHECK(os.str().rfind("grid,method,analytic,empirical,se,vacuous\n", 0) == 0);
  CHECK(os.str().find("5,chernoff_optimal_c,2,0.1,0.01,1") != std::string::npos);
  CHECK(rep.to_json()["rows"].size() == 1);
}
