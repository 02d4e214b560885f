#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "subrisk/bounds.hpp"
#include "subrisk/data.hpp"
#include "subrisk/trainer.hpp"

namespace subrisk {

enum class RiskKind { Cvar, Evar };

RiskSpec make_risk_spec(RiskKind kind, double alpha);
std::string_view to_string(RiskKind kind) noexcept;
std::string_view to_string(SubgroupMode mode) noexcept;
std::string_view to_string(ReferenceKind kind) noexcept;

struct SynthSpec {
  std::vector<std::size_t> counts{960, 40};
  std::size_t dim = 8;
  double separation = 2.0;
  std::uint64_t seed = 1;
};

/// Key/value text with dotted section names, e.g. `train.epochs = 10`.
/// `[section]` headers prefix the keys that follow. `#` starts a comment.
/// Unknown keys are rejected.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Parses `counts=960,40 dim=8 separation=2 seed=1` (pairs separated by
/// whitespace or ';'), or the same keys given one per line.
SynthSpec parse_synth_spec(std::string_view text);

struct ExperimentConfig {
  enum class Source { Synthetic, Csv };
  Source source = Source::Synthetic;
  std::string csv_path;
  std::string label_column = "label";
  SynthSpec synth;

  SubgroupMode mode = SubgroupMode::ByClass;
  ReferenceKind reference = ReferenceKind::ClassRatio;
  RiskKind risk = RiskKind::Cvar;
  std::vector<BoundKind> bounds{BoundKind::SubgroupsSqrt};
  std::vector<double> alphas{0.01, 0.1, 0.3, 0.5, 0.7, 0.9};

  std::size_t repetitions = 3;
  std::uint64_t seed = 0;
  /// Train one model per (bound, repetition) at `shared_alpha` and recompute
  /// every certificate in the alpha grid on that same sampled model.
  bool shared_model = false;
  double shared_alpha = 0.5;
  bool save_checkpoints = false;
  bool save_traces = false;
  std::size_t threads = 1;

  std::vector<std::size_t> hidden{128, 128};
  double leaky_slope = 0.01;

  TrainConfig train;
  PriorGrid prior;

  void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunEntry {
  BoundKind bound = BoundKind::SubgroupsSqrt;
  double alpha = 0.0;
  std::size_t repetition = 0;
  BoundReport report;  // certificate recomputed on the full posterior set
  std::size_t n_priors = 1;
  std::size_t train_size = 0;
  double test_risk = 0.0;
  double f_score = 0.0;
  double test_error = 0.0;
  std::vector<double> class_errors;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

struct RunAggregate {
  BoundKind bound = BoundKind::SubgroupsSqrt;
  double alpha = 0.0;
  Summary bound_value;
  Summary test_risk;
  Summary f_score;
  std::vector<Summary> class_errors;
};

struct RunReport {
  std::map<std::string, std::string> settings;
  std::size_t num_classes = 0;
  std::size_t repetitions = 0;
  std::vector<RunEntry> entries;
  std::vector<RunAggregate> aggregates;
};

/// Per repetition: 80/20 stratified train/test split, 50/50 split of the
/// training part into posterior set S and prior set S_P, independent
/// standardization of each part, prior learning, posterior training per
/// (bound, alpha), certificate on S and metrics on the test part.
/// Checkpoints and traces are written under `artifact_dir` when enabled.
RunReport run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& artifact_dir = std::nullopt);

std::vector<RunAggregate> aggregate(const std::vector<RunEntry>& entries, std::size_t num_classes);

/// Writes `report.json` and `plotdata.csv` into `dir` (created if missing).
void emit_report(const RunReport& report, const std::filesystem::path& dir);

}  // namespace subrisk
