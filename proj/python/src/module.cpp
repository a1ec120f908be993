#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "htesel/datagen.hpp"
#include "htesel/error.hpp"
#include "htesel/harness.hpp"
#include "htesel/report.hpp"
#include "htesel/selectors.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace htesel;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& x, const std::vector<int>& t, const Eigen::VectorXd& y) {
  return Dataset(x, t, y);
}

// The Python side passes predictions as (n, p), one column per candidate.
CandidateSet make_candidates_from(const Eigen::MatrixXd& preds) {
  return CandidateSet(preds.transpose());
}

SelectorConfig selector_config(double alpha, std::optional<double> lambda, int inner_folds,
                               int bootstrap_draws, std::uint64_t seed) {
  SelectorConfig c;
  c.alpha = alpha;
  c.lambda = lambda;
  c.inner_folds = inner_folds;
  c.bootstrap_draws = bootstrap_draws;
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of htesel: CATE model selection with FWER control";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
  py::register_exception<SelectionError>(m, "SelectionError", PyExc_RuntimeError);

  m.def(
      "generate_toy",
      [](std::size_t n, std::uint64_t seed, std::vector<int> dims) {
        if (dims.size() != 4) throw ConfigError("dims must list four block sizes");
        const ToySample s = generate_toy(n, {dims[0], dims[1], dims[2], dims[3]}, seed);
        py::dict out;
        out["x"] = s.data.x();
        out["t"] = s.data.t();
        out["y"] = s.data.y();
        out["tau"] = s.truth.tau;
        out["mu0"] = s.truth.mu0;
        out["mu1"] = s.truth.mu1;
        out["e"] = s.truth.e;
        return out;
      },
      "n"_a, "seed"_a = 0, "dims"_a = std::vector<int>{2, 2, 2, 2},
      "Toy dataset plus its ground truth as a dict of arrays.");

  m.def(
      "noisy_candidates",
      [](const Eigen::VectorXd& tau, const std::vector<std::pair<double, double>>& specs,
         std::uint64_t seed) {
        ToyGroundTruth truth;
        truth.tau = tau;
        std::vector<NoiseSpec> ns;
        for (const auto& [mean, sd] : specs) ns.push_back({mean, sd});
        return Eigen::MatrixXd(make_candidates(truth, ns, seed).predictions().transpose());
      },
      "tau"_a, "specs"_a, "seed"_a = 0,
      "(n, p) predictions tau + N(mean, sd^2) for each (mean, sd) spec.");

  m.def(
      "select",
      [](const Eigen::MatrixXd& x, const std::vector<int>& t, const Eigen::VectorXd& y,
         const Eigen::MatrixXd& preds, const std::string& selector, double alpha,
         std::optional<double> lambda, int inner_folds, int bootstrap_draws, std::uint64_t seed) {
        const Dataset data = make_dataset(x, t, y);
        const CandidateSet c = make_candidates_from(preds);
        const SelectionResult r =
            run_selector(parse_selector(selector), data, c,
                         selector_config(alpha, lambda, inner_folds, bootstrap_draws, seed));
        return to_json(r).dump();
      },
      "x"_a, "t"_a, "y"_a, "preds"_a, "selector"_a = "proposed", "alpha"_a = 0.10,
      "lam"_a = py::none(), "inner_folds"_a = 5, "bootstrap_draws"_a = 10000, "seed"_a = 0,
      py::call_guard<py::gil_scoped_release>(), "Selection result as a JSON string.");

  m.def(
      "score_tensor",
      [](const Eigen::MatrixXd& x, const std::vector<int>& t, const Eigen::VectorXd& y,
         const Eigen::MatrixXd& preds, int inner_folds, std::uint64_t seed) {
        const Dataset data = make_dataset(x, t, y);
        const CandidateSet c = make_candidates_from(preds);
        SelectorConfig sc;
        sc.inner_folds = inner_folds;
        sc.seed = seed;
        const CrossFit cf = selector_cross_fit(data, c, sc, NuisanceConfig{});
        const auto p = static_cast<py::ssize_t>(cf.tensor.p());
        const auto n = static_cast<py::ssize_t>(cf.tensor.n());
        py::array_t<double> out({p, p, n});
        auto v = out.mutable_unchecked<3>();
        for (py::ssize_t r = 0; r < p; ++r) {
          for (py::ssize_t s = 0; s < p; ++s) {
            for (py::ssize_t i = 0; i < n; ++i) {
              v(r, s, i) = cf.tensor(static_cast<std::size_t>(r), static_cast<std::size_t>(s),
                                     static_cast<std::size_t>(i));
            }
          }
        }
        return py::make_tuple(out, cf.split.major);
      },
      "x"_a, "t"_a, "y"_a, "preds"_a, "inner_folds"_a = 5, "seed"_a = 0,
      "Cross-fitted pair scores (p, p, n) and each unit's major fold.");

  m.def("exp_weights", &exp_weights, "delta"_a, "lam"_a);

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = experiment_config_from_json(json::parse(config_json));
        ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        return to_json(r).dump();
      },
      "config_json"_a, "Experiment report as a JSON string.");
}
