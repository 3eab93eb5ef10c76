#include "gwbart/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "gwbart/error.hpp"
#include "gwbart/kd.hpp"
#include "gwbart/rng.hpp"

namespace gwbart {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw ParseError(source + ": no data rows");
  const std::size_t p = header.size() - 1;
  if (p < 1 || header.back() != "y") {
    throw ParseError(source + ": header must be x1,...,xp,y");
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (header[j] != "x" + std::to_string(j + 1)) {
      throw ParseError(source + ": header column " + std::to_string(j + 1) + " must be x" +
                       std::to_string(j + 1));
    }
  }
  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_csv_line(line);
    if (cells.size() != p + 1) {
      throw ParseError(source + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " + std::to_string(p + 1));
    }
    for (std::size_t j = 0; j <= p; ++j) {
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[j].size() || !std::isfinite(v)) {
        throw ParseError(source + ": row " + std::to_string(row) + ", column " + header[j] +
                         ": non-numeric value '" + cells[j] + "'");
      }
      if (j < p) {
        if (v < 0.0 || v > 1.0) {
          throw ParseError(source + ": row " + std::to_string(row) + ", column " + header[j] +
                           ": value " + cells[j] + " outside [0, 1]");
        }
        xs.push_back(v);
      } else {
        ys.push_back(v);
      }
    }
  }
  if (ys.empty()) throw ParseError(source + ": no data rows");
  return {Design(ys.size(), p, std::move(xs)), std::move(ys)};
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  return parse_dataset(in, path);
}

void write_dataset(std::ostream& os, const Dataset& data) {
  for (std::size_t j = 0; j < data.x.cols(); ++j) os << 'x' << (j + 1) << ',';
  os << "y\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    for (std::size_t j = 0; j < data.x.cols(); ++j) os << data.x(i, j) << ',';
    os << data.y[i] << '\n';
  }
}

double RateSpec::epsilon(std::size_t n) const {
  const auto nd = static_cast<double>(n);
  return std::pow(nd, -nu / (2.0 * nu + dim)) * std::sqrt(std::log(nd));
}

double RateSpec::oracle_leaves(std::size_t n) const {
  return std::pow(static_cast<double>(n), dim / (2.0 * nu + dim));
}

void RateSpec::validate() const {
  if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("smoothness nu must lie in (0, 1]");
  if (dim < 1) throw ParameterError("dimension must be >= 1");
  if (replicates < 1) throw ParameterError("replicates must be >= 1");
  if (sample_sizes.empty()) throw ParameterError("sample-size grid is empty");
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
    if (sample_sizes[i] < 3) throw ParameterError("sample sizes must be >= 3");
    if (i == 0) continue;
    const auto prev = sample_sizes[i - 1];
    const auto cur = sample_sizes[i];
    if (cur <= prev) throw ParameterError("sample-size grid must be strictly increasing");
    auto growth = [this](std::size_t n) {
      const double e = epsilon(n);
      return static_cast<double>(n) * e * e / std::log(static_cast<double>(n));
    };
    if (!(epsilon(cur) < epsilon(prev)) || !(growth(cur) > growth(prev))) {
      throw ParameterError("grid is outside the rate regime (eps_n must fall, n eps_n^2 / log n grow)");
    }
  }
}

std::vector<double> SyntheticTarget::evaluate(const Design& design) const {
  if (static_cast<int>(design.cols()) < dim) throw ParameterError("design has too few columns for " + name);
  std::vector<double> out(design.rows());
  for (std::size_t i = 0; i < design.rows(); ++i) out[i] = f(design.row(i));
  return out;
}

std::vector<std::string> bundled_target_names() { return {"abs", "sqrt", "additive2d", "constant"}; }

SyntheticTarget bundled_target(const std::string& name) {
  if (name == "abs") {
    return {name, 1, 1.0, 1.0, [](std::span<const double> x) { return std::abs(x[0] - 0.5); }};
  }
  if (name == "sqrt") {
    return {name, 1, 0.5, 1.0,
            [](std::span<const double> x) { return std::sqrt(std::abs(x[0] - 0.5)); }};
  }
  if (name == "additive2d") {
    return {name, 2, 1.0, std::sqrt(2.0), [](std::span<const double> x) {
              return std::abs(x[0] - 0.5) + std::abs(x[1] - 0.5);
            }};
  }
  if (name == "constant") {
    return {name, 1, 1.0, 0.0, [](std::span<const double>) { return 0.0; }};
  }
  throw ParameterError("unknown target '" + name + "'");
}

double holder_check(const SyntheticTarget& target, int pairs, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  std::vector<double> x(static_cast<std::size_t>(target.dim));
  std::vector<double> y(x.size());
  for (int i = 0; i < pairs; ++i) {
    double dist2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = rng.uniform();
      // Half of the pairs are close together to probe the small-scale regime.
      y[j] = (i % 2) ? rng.uniform() : std::clamp(x[j] + 1e-3 * (rng.uniform() - 0.5), 0.0, 1.0);
      dist2 += (x[j] - y[j]) * (x[j] - y[j]);
    }
    if (dist2 == 0.0) continue;
    const double diff = std::abs(target(x) - target(y));
    if (target.holder_constant == 0.0) {
      if (diff > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    worst = std::max(worst, diff / (target.holder_constant * std::pow(std::sqrt(dist2), target.nu)));
  }
  return worst;
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("slope fit needs >= 2 paired points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ParameterError("slope fit needs distinct x values");
  return sxy / sxx;
}

bool ConcentrationReport::too_many_failures() const {
  return !replicates.empty() && static_cast<double>(failures) > 0.2 * static_cast<double>(replicates.size());
}

bool ConcentrationReport::errors_monotone() const {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double slack = std::max(rows[i].se_error, rows[i - 1].se_error);
    if (rows[i].mean_error > rows[i - 1].mean_error + slack) return false;
  }
  return true;
}

nlohmann::json ConcentrationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"n", r.n},
                         {"epsilon_n", r.epsilon},
                         {"K_nu", r.oracle_leaves},
                         {"mean_error", r.mean_error},
                         {"se_error", r.se_error},
                         {"mean_exceedance", r.mean_exceedance},
                         {"mean_max_K", r.mean_max_size},
                         {"failures", r.failures}});
  }
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : replicates) {
    nlohmann::json j{{"n", r.n}, {"replicate", r.replicate}, {"failed", r.failed}};
    if (r.failed) {
      j["failure"] = r.failure;
    } else {
      j["error"] = r.error;
      j["exceedance"] = r.exceedance;
      j["mean_max_K"] = r.mean_max_size;
    }
    reps.push_back(std::move(j));
  }
  return {{"target", target},
          {"nu", nu},

          {"dim", dim},
          {"theoretical_slope", theoretical_slope},
          {"fitted_slope", fitted_slope},
          {"size_constant", size_constant},
          {"failures", failures},
          {"errors_monotone", errors_monotone()},
          {"rows", std::move(rows_json)},
          {"replicates", std::move(reps)}};
}

void ConcentrationReport::write_csv(std::ostream& os) const {
  os << "n,epsilon_n,K_nu,mean_error,se_error,mean_exceedance,mean_max_K,failures\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.n << ',' << r.epsilon << ',' << r.oracle_leaves << ',' << r.mean_error << ','
       << r.se_error << ',' << r.mean_exceedance << ',' << r.mean_max_size << ',' << r.failures << '\n';
  }
}

ConcentrationReport run_concentration(const ConcentrationConfig& config) {
  config.rate.validate();
  config.bart.validate();
  const auto target = bundled_target(config.target);
  if (target.dim > config.rate.dim) {
    throw ParameterError("target '" + target.name + "' needs dimension >= " + std::to_string(target.dim));
  }

  const auto& grid = config.rate.sample_sizes;
  const int reps = config.rate.replicates;
  const auto n_tasks = grid.size() * static_cast<std::size_t>(reps);
  std::vector<ReplicateResult> results(n_tasks);

  auto run_task = [&](std::size_t task) {
    ReplicateResult& out = results[task];
    out.n = grid[task / static_cast<std::size_t>(reps)];
    out.replicate = static_cast<int>(task % static_cast<std::size_t>(reps));
    try {
      Rng rng = Rng::stream(config.seed, task);
      const auto p = static_cast<std::size_t>(config.rate.dim);
      const Design x = config.design == DesignKind::Lattice ? lattice_design(out.n, p)
                                                            : uniform_design(out.n, p, rng);
      const auto f0 = target.evaluate(x);
      std::vector<double> y(f0.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = f0[i] + rng.normal();
      const auto chain = run_chain(x, y, config.bart, rng);
      std::vector<double> diff(f0.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = chain.posterior_mean[i] - f0[i];
      out.error = empirical_norm(diff);
      out.exceedance = chain.max_size_exceedance(config.size_constant * config.rate.oracle_leaves(out.n));
      out.mean_max_size = chain.mean_max_size();
    } catch (const std::exception& e) {
      out.failed = true;
      out.failure = e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) run_task(t);
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::max(1, config.threads); ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  ConcentrationReport rep;
  rep.target = target.name;
  rep.nu = config.rate.nu;
  rep.dim = config.rate.dim;
  rep.theoretical_slope = config.rate.theoretical_slope();
  rep.size_constant = config.size_constant;
  rep.replicates = results;
  std::vector<double> log_n;
  std::vector<double> log_err;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    ConcentrationRow row;
    row.n = grid[g];
    row.epsilon = config.rate.epsilon(row.n);
    row.oracle_leaves = config.rate.oracle_leaves(row.n);
    std::vector<double> errs;
    double exceed = 0.0;
    double max_k = 0.0;
    for (int r = 0; r < reps; ++r) {
      const auto& res = results[g * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)];
      if (res.failed) {
        ++row.failures;
        continue;
      }
      errs.push_back(res.error);
      exceed += res.exceedance;
      max_k += res.mean_max_size;
    }
    rep.failures += row.failures;
    if (!errs.empty()) {
      const auto m = static_cast<double>(errs.size());
      double mean = 0.0;
      for (double e : errs) mean += e;
      mean /= m;
      double var = 0.0;
      for (double e : errs) var += (e - mean) * (e - mean);
      row.mean_error = mean;
      row.se_error = errs.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
      row.mean_exceedance = exceed / m;
      row.mean_max_size = max_k / m;
      if (mean > 0.0) {
        log_n.push_back(std::log(static_cast<double>(row.n)));
        log_err.push_back(std::log(mean));
      }
    }
    rep.rows.push_back(row);
  }
  rep.fitted_slope = log_n.size() >= 2 ? least_squares_slope(log_n, log_err) : 0.0;
  return rep;
}

double total_variation(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double tv = 0.0;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    tv += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) tv += std::abs(v);
  }
  return 0.5 * tv;
}

nlohmann::json OracleReport::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& [key, p] : exact) {
    const auto it = empirical.find(key);
    trees.push_back({{"tree", key}, {"exact", p}, {"empirical", it == empirical.end() ? 0.0 : it->second}});
  }
  return {{"total_variation", total_variation},
          {"threshold", threshold},
          {"passed", passed()},
          {"recorded_sweeps", recorded},
          {"trees", std::move(trees)}};
}

Dataset oracle_fixture() {
  return {Design::column({0.1, 0.25, 0.4, 0.6, 0.75, 0.9}), {-0.9, -0.6, -1.1, 0.8, 1.2, 0.7}};
}

BartConfig oracle_config(int sweeps, int burn_in) {
  BartConfig c;
  c.num_trees = 1;
  c.schedule = SplitSchedule::polynomial(0.95, 1.0);
  c.leaf_prior_variance = 1.0;
  c.noise_variance = 1.0;
  c.max_depth = 2;
  c.sweeps = sweeps;
  c.burn_in = burn_in;
  c.thin = 1;
  return c;
}

OracleReport run_posterior_oracle(const Dataset& data, const BartConfig& config, double threshold,
                                  std::uint64_t seed) {
  if (data.x.rows() > 12 || data.x.cols() != 1 || config.max_depth < 0 || config.max_depth > 2) {
    throw CapacityError("posterior oracle needs n <= 12, p = 1 and a depth cap <= 2");
  }
  if (config.num_trees != 1) throw ParameterError("posterior oracle needs T = 1");
  OracleReport rep;
  rep.threshold = threshold;
  rep.exact = enumerate_tree_posterior(data.x, data.y, config);

  std::map<std::string, std::int64_t> visits;
  Rng rng(seed);
  if (config.sweeps > config.burn_in) {
    run_chain(data.x, data.y, config, rng, [&](int, const Ensemble& e) {
      ++visits[e.trees.front().canonical_key()];
      ++rep.recorded;
    });
  }
  for (const auto& [k, c] : visits) {
    rep.empirical[k] = static_cast<double>(c) / static_cast<double>(rep.recorded);
  }
  // No recorded sweeps means no empirical distribution at all: report the
  // maximal distance rather than half the exact mass.
  rep.total_variation = rep.recorded == 0 ? 1.0 : total_variation(rep.exact, rep.empirical);
  return rep;
}

PriorTailResult run_prior_tails(const SplitSchedule& schedule, const PriorTailOptions& opt) {
  if (opt.draws < 1) throw ParameterError("draws must be >= 1");
  if (opt.k_max < 1 || opt.t_max < 1) throw ParameterError("k_max and t_max must be >= 1");
  PriorTailResult out;
  out.survival = monte_carlo_survival(schedule, opt.draws, opt.seed, opt.k_max, opt.t_max, opt.threads);
  out.target_rate = target_rate_check(schedule, opt.a, 1, std::max(opt.rate_k_max, opt.k_max), false);
  const auto& sv = out.survival;
  auto& rep = out.report;
  rep.schedule = schedule.describe();
  rep.draws = sv.draws;
  rep.truncated = sv.truncated;

  auto add = [&](char axis, long long g, BoundMethod m, BoundValue b, double emp, bool enforce) {
    BoundRow row{axis, g, m, b, emp, binomial_se(emp, sv.draws), true};
    rep.rows.push_back(row);
    if (enforce && b.clamped + opt.se_multiplier * row.se < emp) {
      std::ostringstream os;
      os << to_string(m) << " domination failed at " << axis << '=' << g << ": bound " << b.clamped
         << " < empirical " << emp;
      out.violations.push_back(os.str());
    }
  };

  const auto rate = target_rate_check(schedule, opt.a, 1, opt.k_max, true);
  for (long long k = 1; k < opt.k_max; ++k) {
    const double emp = sv.progeny_survival(k);
    add('k', k, BoundMethod::ChernoffOptimalC, chernoff_progeny_bound(schedule, k, ChernoffMode::optimized()),
        emp, true);
    add('k', k, BoundMethod::ChernoffHalfLogK,
        chernoff_progeny_bound(schedule, k, ChernoffMode::half_log_k()), emp, false);
    const auto& rr = rate.rows[static_cast<std::size_t>(k - 1)];
    add('k', k, BoundMethod::TargetRate, BoundValue::from_log(-opt.a * static_cast<double>(k) * std::log(static_cast<double>(k))),
        emp, rr.holds);
  }
  const auto law = OffspringLaw::from_schedule(schedule, opt.t_max);
  const auto law_root = OffspringLaw::from_schedule(schedule, opt.t_max, RootConvention::AlwaysSplits);
  for (int t = 1; t <= opt.t_max; ++t) {
    const double emp = sv.extinction_survival(t);
    add('t', t, BoundMethod::Agresti, agresti_extinction_bound(law, t), emp, true);
    add('t', t, BoundMethod::AgrestiRootSplits, agresti_extinction_bound(law_root, t), emp, false);
    add('t', t, BoundMethod::Markov, markov_extinction_bound(schedule, t), emp, true);
  }
  return out;
}

}  // namespace gwbart
