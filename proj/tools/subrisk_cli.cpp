// Command-line front end: experiment runs, post-hoc certification,
// synthetic data generation and the risk-solver oracle suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "subrisk/error.hpp"
#include "subrisk/experiment.hpp"
#include "subrisk/model.hpp"
#include "subrisk/oracle_check.hpp"
#include "subrisk/serialize.hpp"
#include "subrisk/trainer.hpp"

namespace fs = std::filesystem;
using namespace subrisk;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig config = load_config(config_path);
  const RunReport report = run_experiment(config, fs::path(out_dir));
  emit_report(report, out_dir);
  std::cout << "wrote " << (fs::path(out_dir) / "report.json").string() << " ("
            << report.entries.size() << " entries)\n";
  return 0;
}

struct BoundArgs {
  std::string checkpoint;
  std::string dataset;
  double alpha = 0.5;
  std::string bound_kind = "subgroups_sqrt";
  std::string risk = "cvar";
  std::string reference = "class-ratio";
  std::string label_column = "label";
  double delta = 0.05;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

int cmd_bound(const BoundArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  if (ck.prior_params.empty()) {
    throw Error(ErrorCode::InvalidArgument, "checkpoint has no prior mean; cannot certify");
  }
  const Dataset data = load_csv(a.dataset, a.label_column);
  if (data.dim() != ck.arch.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(data.dim()) +
                                                  " features, model expects " +
                                                  std::to_string(ck.arch.input_dim()));
  }
  if (data.num_classes() != ck.arch.num_classes()) {
    throw Error(ErrorCode::DimensionMismatch, "dataset and model disagree on the class count");
  }
  RiskKind risk;
  if (a.risk == "cvar") risk = RiskKind::Cvar;
  else if (a.risk == "evar") risk = RiskKind::Evar;
  else throw Error(ErrorCode::InvalidArgument, "--risk must be cvar or evar");
  const ReferenceKind ref =
      a.reference == "uniform" ? ReferenceKind::Uniform : ReferenceKind::ClassRatio;
  if (a.reference != "uniform" && a.reference != "class-ratio") {
    throw Error(ErrorCode::InvalidArgument, "--reference must be class-ratio or uniform");
  }
  const BoundKind kind = parse_bound_kind(a.bound_kind);
  if (kind == BoundKind::MhammediEstimate && risk != RiskKind::Cvar) {
    throw Error(ErrorCode::InvalidArgument, "mhammedi_estimate only holds for cvar");
  }
  const RiskSpec spec = make_risk_spec(risk, a.alpha);
  const SubgroupPartition part = partition_by_class(data, ref);
  const GaussianParamDist posterior{ck.params, ck.sigma2};
  const Certificate cert = certify(kind, ck.arch, posterior, ck.prior_params, data, part, spec,
                                   a.delta, a.lambda, ck.n_priors, ck.l_max, a.seed);
  const nlohmann::json j = cert.report;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_synth(const std::string& spec_arg, const std::string& out) {
  std::string text = spec_arg;
  if (fs::is_regular_file(spec_arg)) {
    std::ifstream in(spec_arg);
    std::ostringstream os;
    os << in.rdbuf();
    text = os.str();
  }
  const SynthSpec spec = parse_synth_spec(text);
  const Dataset data = synth_imbalanced(spec.counts, spec.dim, spec.separation, spec.seed);
  write_csv(data, out);
  std::cout << "wrote " << data.size() << " rows to " << out << '\n';
  return 0;
}

int cmd_oracle_check(const OracleCheckOptions& opts) {
  const OracleCheckResult r = run_oracle_check(opts);
  std::printf("cvar instances %zu: max |grid - solver| %.3g, max |vertex - solver| %.3g\n",
              r.cvar_instances, r.max_grid_error, r.max_vertex_error);
  std::printf("evar instances %zu: max |grid - solver| %.3g\n", r.evar_instances,
              r.max_evar_error);
  for (const auto& m : r.messages) std::printf("  %s\n", m.c_str());
  std::printf("%s in %.1fs\n", r.passed() ? "ok" : "FAILED", r.seconds);
  return r.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgroup risk measures and PAC-Bayes certificates"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "results";
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("config", config_path, "Config file (key = value)")->required();
  run->add_option("-o,--out", out_dir, "Output directory");

  BoundArgs bargs;
  auto* bound = app.add_subcommand("bound", "Certify a saved model on a dataset");
  bound->add_option("checkpoint", bargs.checkpoint)->required();
  bound->add_option("dataset", bargs.dataset, "CSV with a header row")->required();
  bound->add_option("--alpha", bargs.alpha)->required();
  bound->add_option("--bound-kind", bargs.bound_kind)->required();
  bound->add_option("--risk", bargs.risk);
  bound->add_option("--reference", bargs.reference);
  bound->add_option("--label-column", bargs.label_column);
  bound->add_option("--delta", bargs.delta);
  bound->add_option("--lambda", bargs.lambda);
  bound->add_option("--seed", bargs.seed);

  std::string synth_spec, synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic imbalanced dataset");
  synth->add_option("spec", synth_spec, "Spec file or inline 'counts=960,40 dim=8'")->required();
  synth->add_option("-o,--out", synth_out)->required();

  OracleCheckOptions oopts;
  auto* oracle = app.add_subcommand("oracle-check", "Compare the risk solvers with brute force");
  oracle->add_option("--instances", oopts.cvar_instances);
  oracle->add_option("--evar-instances", oopts.evar_instances);
  oracle->add_option("--seed", oopts.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir);
    if (*bound) return cmd_bound(bargs);
    if (*synth) return cmd_synth(synth_spec, synth_out);
    if (*oracle) return cmd_oracle_check(oopts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
