#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"
#include "subrisk/bounds.hpp"
#include "subrisk/data.hpp"
#include "subrisk/error.hpp"
#include "subrisk/experiment.hpp"
#include "subrisk/oracle_check.hpp"
#include "subrisk/risk.hpp"
#include "subrisk/serialize.hpp"

namespace py = pybind11;
using namespace subrisk;

namespace {

RiskSpec spec_for(const std::string& kind, double alpha) {
  if (kind == "cvar") return RiskSpec::cvar(alpha);
  if (kind == "evar") return RiskSpec::evar(alpha);
  throw Error(ErrorCode::InvalidArgument, "risk must be 'cvar' or 'evar'");
}

py::dict solution_dict(const RiskSolution& s) {
  py::dict d;
  d["weights"] = s.weights;
  d["value"] = s.value;
  d["feasible"] = s.feasible;
  d["dual_gap"] = s.dual_gap;
  d["iterations"] = s.iterations;
  return d;
}

py::dict report_dict(const BoundReport& r) {
  py::dict d;
  d["kind"] = std::string(to_string(r.kind));
  d["empirical_risk"] = r.empirical_risk;
  d["complexity"] = r.complexity;
  d["bound"] = r.bound;
  d["certificate"] = r.certificate;
  d["vacuous"] = r.vacuous;
  d["estimate"] = r.estimate;
  d["components"] = r.components;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Subgroup risk measures and PAC-Bayes bounds";

  py::register_exception<Error>(m, "SubriskError", PyExc_ValueError);

  m.def(
      "risk",
      [](std::vector<double> losses, std::vector<double> pi, double alpha,
         const std::string& kind) {
        const RiskSpec spec = spec_for(kind, alpha);
        return solution_dict(constrained_weights(SubgroupLosses(std::move(losses)),
                                                 ReferenceDistribution(std::move(pi)), spec));
      },
      py::arg("losses"), py::arg("pi"), py::arg("alpha"), py::arg("kind") = "cvar",
      "Optimal subgroup weights and risk value.");

  m.def(
      "oracle_risk_grid",
      [](std::vector<double> losses, std::vector<double> pi, double alpha,
         const std::string& kind, double resolution) {
        return oracle_risk_grid(SubgroupLosses(std::move(losses)),
                                ReferenceDistribution(std::move(pi)), spec_for(kind, alpha),
                                resolution);
      },
      py::arg("losses"), py::arg("pi"), py::arg("alpha"), py::arg("kind") = "cvar",
      py::arg("resolution") = 1e-3);

  m.def("kl_bernoulli", &kl_bernoulli, py::arg("a"), py::arg("b"));
  m.def("kl_plus", &kl_plus, py::arg("a"), py::arg("b"));
  m.def("kl_inverse", &kl_inverse, py::arg("a"), py::arg("eps"));

  m.def(
      "bound_by_class",
      [](const std::string& kind, double empirical_risk, std::vector<std::size_t> sizes,
         std::vector<double> pi, double alpha, double delta, std::size_t n_priors,
         double kl) {
        const BoundKind k = parse_bound_kind(kind);
        const auto ctx = BoundContext::by_class(std::move(sizes), std::move(pi), alpha, delta,
                                                n_priors, kl);
        return report_dict(compute_bound(k, empirical_risk, kl, kl, ctx));
      },
      py::arg("kind"), py::arg("empirical_risk"), py::arg("sizes"), py::arg("pi"),
      py::arg("alpha"), py::arg("delta") = 0.05, py::arg("n_priors") = 1, py::arg("kl") = 0.0);

  m.def(
      "bound_per_example",
      [](const std::string& kind, double empirical_risk, std::size_t m_, double alpha,
         double delta, double lambda, std::size_t n_priors, double kl) {
        const BoundKind k = parse_bound_kind(kind);
        const auto ctx = BoundContext::per_example(m_, alpha, delta, lambda, n_priors, kl);
        return report_dict(compute_bound(k, empirical_risk, kl, kl, ctx));
      },
      py::arg("kind"), py::arg("empirical_risk"), py::arg("m"), py::arg("alpha"),
      py::arg("delta") = 0.05, py::arg("lambda_") = 1.0, py::arg("n_priors") = 1,
      py::arg("kl") = 0.0);

  m.def(
      "synth",
      [](std::vector<std::size_t> counts, std::size_t dim, double separation,
         std::uint64_t seed) {
        const Dataset d = synth_imbalanced(counts, dim, separation, seed);
        Eigen::MatrixXd x = d.features();
        std::vector<int> y(d.labels().begin(), d.labels().end());
        return py::make_tuple(x, y);
      },
      py::arg("counts"), py::arg("dim") = 8, py::arg("separation") = 2.0, py::arg("seed") = 1);

  m.def(
      "run_experiment",
      [](const std::string& config_text) {
        const ExperimentConfig config = parse_config(config_text);
        RunReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(config);
        }
        return nlohmann::json(report).dump();
      },
      py::arg("config_text"), "Runs an experiment; returns the report as a JSON string.");

  m.def(
      "oracle_check",
      [](std::size_t cvar_instances, std::size_t evar_instances, std::uint64_t seed) {
        OracleCheckOptions o;
        o.cvar_instances = cvar_instances;
        o.evar_instances = evar_instances;
        o.seed = seed;
        const OracleCheckResult r = run_oracle_check(o);
        py::dict d;
        d["passed"] = r.passed();
        d["max_grid_error"] = r.max_grid_error;
        d["max_vertex_error"] = r.max_vertex_error;
        d["max_evar_error"] = r.max_evar_error;
        return d;
      },
      py::arg("cvar_instances") = 50, py::arg("evar_instances") = 20, py::arg("seed") = 0);
}
