#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gwbart/bart.hpp"
#include "gwbart/branching.hpp"
#include "gwbart/error.hpp"
#include "gwbart/experiment.hpp"
#include "gwbart/kd.hpp"
#include "gwbart/prior.hpp"

namespace py = pybind11;
using namespace gwbart;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

Design to_design(const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
  const auto buf = x.request();
  if (buf.ndim == 1) {
    const auto* p = static_cast<const double*>(buf.ptr);
    return Design::column({p, p + buf.shape[0]});
  }
  if (buf.ndim != 2) throw ParameterError("design must be a 1-D or 2-D array");
  const auto n = static_cast<std::size_t>(buf.shape[0]);
  const auto d = static_cast<std::size_t>(buf.shape[1]);
  const auto* p = static_cast<const double*>(buf.ptr);
  return Design(n, d, {p, p + n * d});
}

SplitSchedule make_schedule(const std::string& kind, double alpha, std::optional<double> gamma,
                            std::optional<double> xi) {
  if (kind == "polynomial" || kind == "poly") return SplitSchedule::polynomial(alpha, gamma.value_or(2.0));
  if (kind == "geometric") return xi ? SplitSchedule::geometric(alpha, *xi) : SplitSchedule::geometric(alpha);
  if (kind == "constant") return SplitSchedule::constant(alpha);
  throw ParameterError("unknown schedule kind '" + kind + "'");
}

py::dict bound_dict(const BoundValue& b) {
  py::dict d;
  d["value"] = b.value;
  d["clamped"] = b.clamped;
  d["vacuous"] = b.vacuous;
  d["degenerate"] = b.degenerate;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {

  py::class_<SplitSchedule>(m, "SplitSchedule")
      .def(py::init(&make_schedule), py::arg("kind") = "geometric", py::arg("alpha") = 0.25,
           py::arg("gamma") = py::none(), py::arg("xi") = py::none())
      .def_static("table", &SplitSchedule::table)
      .def("__call__", &SplitSchedule::operator(), py::arg("depth"))
      .def_property_readonly("alpha", &SplitSchedule::alpha)
      .def_property_readonly("gamma", &SplitSchedule::gamma)
      .def_property_readonly("xi", &SplitSchedule::xi)
      .def("__repr__", &SplitSchedule::describe);

  m.def("dwass_pmf", &dwass_progeny_pmf, py::arg("p"), py::arg("k"));
  m.def("expected_generation_size", &expected_generation_size, py::arg("schedule"), py::arg("t"));
  m.def("mu_prefix", &mu_prefix, py::arg("schedule"), py::arg("k"));
  m.def(
      "chernoff_bound",
      [](const SplitSchedule& s, long long k, std::optional<double> c) {
        return bound_dict(chernoff_progeny_bound(s, k, c ? ChernoffMode::fixed(*c) : ChernoffMode::optimized()));
      },
      py::arg("schedule"), py::arg("k"), py::arg("c") = py::none());
  m.def(
      "agresti_bound",
      [](const SplitSchedule& s, int t, bool root_splits) {
        const auto law =
            OffspringLaw::from_schedule(s, t, root_splits ? RootConvention::AlwaysSplits : RootConvention::Schedule);
        return bound_dict(agresti_extinction_bound(law, t));
      },
      py::arg("schedule"), py::arg("t"), py::arg("root_splits") = false);
  m.def(
      "markov_bound", [](const SplitSchedule& s, int t) { return bound_dict(markov_extinction_bound(s, t)); },
      py::arg("schedule"), py::arg("t"));

  m.def(
      "sample_survival",
      [](const SplitSchedule& s, std::int64_t draws, std::uint64_t seed, long long k_max, int t_max, int threads) {
        SurvivalEstimate est;
        {
          py::gil_scoped_release release;
          est = monte_carlo_survival(s, draws, seed, k_max, t_max, threads);
        }
        py::dict d;
        std::vector<double> progeny;
        std::vector<double> extinction;
        for (long long k = 0; k <= k_max; ++k) progeny.push_back(est.progeny_survival(k));
        for (int t = 0; t <= t_max; ++t) extinction.push_back(est.extinction_survival(t));
        d["draws"] = est.draws;
        d["truncated"] = est.truncated;
        d["progeny_survival"] = progeny;
        d["extinction_survival"] = extinction;
        return d;
      },
      py::arg("schedule"), py::arg("draws"), py::arg("seed") = 1, py::arg("k_max") = 100, py::arg("t_max") = 20,
      py::arg("threads") = 1);

  m.def(
      "target_rate_check",
      [](const SplitSchedule& s, double a, long long k_min, long long k_max) {
        const auto r = target_rate_check(s, a, k_min, k_max, false);
        py::dict d;
        d["holds_from"] = r.holds_from;
        d["certified_from"] = r.certified_from;
        d["last_hold"] = r.last_hold;
        d["mu_sup"] = r.mu_sup;
        return d;
      },
      py::arg("schedule"), py::arg("a"), py::arg("k_min") = 1, py::arg("k_max") = 100'000);

  m.def("lattice_design", [](std::size_t n, std::size_t p) {
    const auto d = lattice_design(n, p);
    py::array_t<double> out({d.rows(), d.cols()});
    std::copy(d.values().begin(), d.values().end(), out.mutable_data());
    return out;
  });

  m.def(
      "kd_tree",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, int rounds) {
        return dump(build_kd_tree(to_design(x), rounds).to_json());
      },
      py::arg("x"), py::arg("rounds"));
  m.def(
      "kd_prior_mass",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, int rounds,
         const SplitSchedule& s) {
        const auto design = to_design(x);
        return dump(kd_prior_mass(build_kd_tree(design, rounds), s, design).to_json());
      },
      py::arg("x"), py::arg("rounds"), py::arg("schedule"));

  m.def(
      "fit",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<double> y,
         const SplitSchedule& s, int trees, int sweeps, int burn_in, std::optional<double> leaf_variance,
         double noise_variance, int max_depth, std::uint64_t seed) {
        const auto design = to_design(x);
        BartConfig c;
        c.schedule = s;
        c.num_trees = trees;
        c.sweeps = sweeps;
        c.burn_in = burn_in;
        c.leaf_prior_variance = leaf_variance;
        c.noise_variance = noise_variance;
        c.max_depth = max_depth;
        ChainResult r;
        {
          py::gil_scoped_release release;
          Rng rng(seed);
          r = run_chain(design, y, c, rng);
        }
        std::vector<double> max_k;
        std::vector<double> err;
        for (const auto& rec : r.trace.records) {
          max_k.push_back(static_cast<double>(rec.max_tree_size));
          err.push_back(rec.train_error);
        }
        py::dict d;
        d["posterior_mean"] = r.posterior_mean;
        d["max_tree_size"] = max_k;
        d["train_error"] = err;
        d["final_state"] = dump(r.final_state.to_json());
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("schedule"), py::arg("trees") = 20, py::arg("sweeps") = 1000,
      py::arg("burn_in") = 250, py::arg("leaf_variance") = py::none(), py::arg("noise_variance") = 1.0,
      py::arg("max_depth") = -1, py::arg("seed") = 1);

  m.def(
      "posterior_oracle",
      [](int sweeps, int burn_in, double threshold, std::uint64_t seed) {
        OracleReport r;
        {
          py::gil_scoped_release release;
          r = run_posterior_oracle(oracle_fixture(), oracle_config(sweeps, burn_in), threshold, seed);
        }
        return dump(r.to_json());
      },
      py::arg("sweeps") = 101'000, py::arg("burn_in") = 1'000, py::arg("threshold") = 0.05, py::arg("seed") = 1);

  m.def(
      "concentration",
      [](const std::string& target, std::vector<std::size_t> sizes, int replicates, int trees, int sweeps,
         int burn_in, double size_constant, std::uint64_t seed, int threads) {
        ConcentrationConfig c;
        c.target = target;
        const auto t = bundled_target(target);
        c.rate.nu = t.nu;
        c.rate.dim = static_cast<int>(t.dim);
        c.rate.sample_sizes = std::move(sizes);
        c.rate.replicates = replicates;
        c.bart.num_trees = trees;
        c.bart.sweeps = sweeps;
        c.bart.burn_in = burn_in;
        c.size_constant = size_constant;
        c.seed = seed;
        c.threads = threads;
        ConcentrationReport r;
        {
          py::gil_scoped_release release;
          r = run_concentration(c);
        }
        return dump(r.to_json());
      },
      py::arg("target") = "abs", py::arg("sizes") = std::vector<std::size_t>{128, 512, 2048},
      py::arg("replicates") = 3, py::arg("trees") = 20, py::arg("sweeps") = 500, py::arg("burn_in") = 100,
      py::arg("size_constant") = 4.0, py::arg("seed") = 1, py::arg("threads") = 1);
}
