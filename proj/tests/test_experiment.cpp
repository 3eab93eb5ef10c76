#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gwbart/error.hpp"
#include "gwbart/experiment.hpp"

using namespace gwbart;

namespace {

std::string parse_error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_dataset(in, "mem.csv");
  } catch (const ParseError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("dataset parsing") {
  std::istringstream ok("x1,x2,y\n0.1,0.2,3\n0.5,0.5,-1\n1,0,2.5\n");
  const auto ds = parse_dataset(ok);
  CHECK(ds.x.rows() == 3);
  CHECK(ds.x.cols() == 2);
  CHECK(ds.y == std::vector<double>{3, -1, 2.5});
  CHECK(ds.x(2, 0) == 1.0);

  const auto range = parse_error_of("x1,y\n0.2,1\n1.5,2\n");
  CHECK(range.find("row 2") != std::string::npos);
  CHECK(range.find("x1") != std::string::npos);

  CHECK(parse_error_of("").find("no data rows") != std::string::npos);
  CHECK(parse_error_of("x1,y\n").find("no data rows") != std::string::npos);
  CHECK(parse_error_of("x1,y\n0.2,abc\n").find("column y") != std::string::npos);
  CHECK(parse_error_of("x1,y\n0.2\n").find("row 1") != std::string::npos);
  CHECK_FALSE(parse_error_of("a,b\n0.2,1\n").empty());

  std::ostringstream os;
  write_dataset(os, ds);
  std::istringstream again(os.str());
  const auto back = parse_dataset(again);
  CHECK(back.y == ds.y);
  CHECK(back.x.values() == ds.x.values());
}

TEST_CASE("rate specification") {
  RateSpec r;
  r.nu = 1.0;
  r.dim = 1;
  CHECK(r.theoretical_slope() == doctest::Approx(-1.0 / 3.0));
  CHECK(r.oracle_leaves(1000) == doctest::Approx(10.0));
  CHECK(r.oracle_leaves(2048) == doctest::Approx(std::cbrt(2048.0)));
  CHECK(r.epsilon(1000) == doctest::Approx(0.1 * std::sqrt(std::log(1000.0))));

  r.sample_sizes = {128, 512, 2048, 8192};
  CHECK_NOTHROW(r.validate());
  for (std::size_t i = 1; i < r.sample_sizes.size(); ++i) {
    const double a = static_cast<double>(r.sample_sizes[i - 1]);
    const double b = static_cast<double>(r.sample_sizes[i]);
    CHECK(b * std::pow(r.epsilon(r.sample_sizes[i]), 2) / std::log(b) >
          a * std::pow(r.epsilon(r.sample_sizes[i - 1]), 2) / std::log(a));
  }

  r.sample_sizes = {512, 128};
  CHECK_THROWS_AS(r.validate(), ParameterError);
  r.sample_sizes = {128, 512};
  r.nu = 1.5;
  CHECK_THROWS_AS(r.validate(), ParameterError);
  r.nu = 0.0;
  CHECK_THROWS_AS(r.validate(), ParameterError);
}

TEST_CASE("bundled targets satisfy their Hoelder conditions") {
  for (const auto& name : bundled_target_names()) {
    const auto t = bundled_target(name);
    CHECK(holder_check(t, 20'000, 3) <= 1.0 + 1e-9);
  }
  CHECK(bundled_target("abs")(std::vector<double>{0.2}) == doctest::Approx(0.3));
  CHECK(bundled_target("sqrt").nu == 0.5);
  CHECK(bundled_target("additive2d").dim == 2);
  CHECK_THROWS_AS(bundled_target("nope"), ParameterError);
}

TEST_CASE("least-squares slope and total variation") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{3, 5, 7, 9};
  CHECK(least_squares_slope(x, y) == doctest::Approx(2.0));
  CHECK_THROWS_AS(least_squares_slope(std::vector<double>{1}, std::vector<double>{1}), ParameterError);

  const std::map<std::string, double> a{{"L", 0.5}, {"T", 0.5}};
  const std::map<std::string, double> b{{"L", 0.25}, {"U", 0.75}};
  CHECK(total_variation(a, b) == doctest::Approx(0.75));
  CHECK(total_variation(a, a) == 0.0);
}

TEST_CASE("posterior oracle guards and degenerate runs") {
  auto big = oracle_fixture();
  big.x = lattice_design(13, 1);
  big.y.assign(13, 0.0);
  CHECK_THROWS_AS(run_posterior_oracle(big, oracle_config(10, 0), 0.05, 1), CapacityError);
  auto wide = oracle_fixture();
  wide.x = lattice_design(6, 2);
  CHECK_THROWS_AS(run_posterior_oracle(wide, oracle_config(10, 0), 0.05, 1), CapacityError);
  auto deep = oracle_config(10, 0);
  deep.max_depth = 3;
  CHECK_THROWS_AS(run_posterior_oracle(oracle_fixture(), deep, 0.05, 1), CapacityError);

  const auto none = run_posterior_oracle(oracle_fixture(), oracle_config(0, 0), 0.05, 1);
  CHECK(none.total_variation == 1.0);
  CHECK_FALSE(none.passed());
  auto lenient = none;
  lenient.threshold = 1.0;
  CHECK(lenient.passed());

  double total = 0.0;
  for (const auto& [k, p] : none.exact) total += p;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("prior tail runs") {
  PriorTailOptions o;
  o.draws = 100'000;
  o.k_max = 60;
  const auto r = run_prior_tails(SplitSchedule::geometric(0.25), o);
  CHECK(r.violations.empty());
  CHECK(r.report.draws == 100'000);
  o.draws = 0;
  CHECK_THROWS_AS(run_prior_tails(SplitSchedule::geometric(0.25), o), ParameterError);
}

TEST_CASE("concentration runs are reproducible and thread-independent") {
  ConcentrationConfig c;
  c.rate.nu = 1.0;
  c.rate.dim = 1;
  c.rate.sample_sizes = {64, 256};
  c.rate.replicates = 3;
  c.bart.num_trees = 5;
  c.bart.schedule = SplitSchedule::geometric(0.25);
  c.bart.sweeps = 60;
  c.bart.burn_in = 20;
  c.seed = 5;
  const auto one = run_concentration(c);
  c.threads = 3;
  const auto three = run_concentration(c);
  CHECK(one.to_json().dump() == three.to_json().dump());
  CHECK(one.failures == 0);
  CHECK(one.rows.size() == 2);
  CHECK(one.theoretical_slope == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("a constant target reports its slope without failing") {
  ConcentrationConfig c;
  c.target = "constant";
  c.rate.sample_sizes = {64, 256, 1024};
  c.rate.replicates = 2;
  c.bart.num_trees = 5;
  c.bart.schedule = SplitSchedule::geometric(0.25);
  c.bart.sweeps = 80;
  c.bart.burn_in = 20;
  const auto rep = run_concentration(c);
  CHECK_FALSE(rep.too_many_failures());
  CHECK(std::isfinite(rep.fitted_slope));
  for (const auto& row : rep.rows) CHECK(row.mean_error < 0.3);
}

TEST_CASE("targets must fit the design dimension") {
  ConcentrationConfig c;
  c.target = "additive2d";
  c.rate.dim = 2;
  c.rate.sample_sizes = {64, 128};
  c.rate.replicates = 1;
  c.bart.num_trees = 2;
  c.bart.sweeps = 10;
  c.bart.burn_in = 0;
  CHECK_NOTHROW(run_concentration(c));
  c.rate.dim = 1;
  CHECK_THROWS_AS(run_concentration(c), ParameterError);
}
