#include "subrisk/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "subrisk/error.hpp"
#include "subrisk/model.hpp"
#include "subrisk/random.hpp"
#include "subrisk/serialize.hpp"

namespace subrisk {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    config_error(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    config_error(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  config_error(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

std::string join_bounds(const std::vector<BoundKind>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += to_string(xs[i]);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_uint(key, item));
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

// Stable tags so adding or reordering config entries does not reshuffle
// the random streams of the other cells.
constexpr std::uint64_t kSplitTest = 1;
constexpr std::uint64_t kSplitPrior = 2;
constexpr std::uint64_t kPriorTag = 0x100;
constexpr std::uint64_t kPosteriorTag = 0x200;

std::uint64_t alpha_tag(double alpha) {
  // Alphas are compared bitwise; the grid is user input, not computed.
  return static_cast<std::uint64_t>(std::llround(alpha * 1e6));
}

}  // namespace

RiskSpec make_risk_spec(RiskKind kind, double alpha) {
  return kind == RiskKind::Cvar ? RiskSpec::cvar(alpha) : RiskSpec::evar(alpha);
}

std::string_view to_string(RiskKind kind) noexcept {
  return kind == RiskKind::Cvar ? "cvar" : "evar";
}

std::string_view to_string(SubgroupMode mode) noexcept {
  return mode == SubgroupMode::ByClass ? "by-class" : "per-example";
}

std::string_view to_string(ReferenceKind kind) noexcept {
  return kind == ReferenceKind::ClassRatio ? "class-ratio" : "uniform";
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_error("line " + std::to_string(line_no) + ": unterminated section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      config_error("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) config_error("line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (out.count(key)) config_error("duplicate key '" + key + "'");
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

SynthSpec parse_synth_spec(std::string_view text) {
  std::string body;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    body += line.substr(0, line.find('#'));
    body += '\n';
  }
  static const std::regex pair_re(R"(([A-Za-z_]+)\s*=\s*([^\s;,]+(?:\s*,\s*[^\s;,]+)*))");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string leftover;
  std::size_t pos = 0;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), pair_re);
       it != std::sregex_iterator(); ++it) {
    leftover += body.substr(pos, static_cast<std::size_t>(it->position()) - pos);
    pos = static_cast<std::size_t>(it->position() + it->length());
    std::string value = (*it)[2];
    value.erase(std::remove_if(value.begin(), value.end(), [](unsigned char c) { return std::isspace(c); }),
                value.end());
    pairs.emplace_back((*it)[1], value);
  }
  leftover += body.substr(pos);
  if (leftover.find_first_not_of(" \t\r\n;") != std::string::npos) {
    throw Error(ErrorCode::BadSpec, "cannot parse '" + trim(leftover) + "'; expected key=value pairs");
  }

  SynthSpec spec;
  std::set<std::string> seen;
  for (const auto& [key, value] : pairs) {
    if (!seen.insert(key).second) throw Error(ErrorCode::BadSpec, "duplicate key '" + key + "'");
    try {
      if (key == "counts") {
        spec.counts = parse_sizes(key, value);
      } else if (key == "dim") {
        spec.dim = parse_uint(key, value);
      } else if (key == "separation") {
        spec.separation = parse_double(key, value);
      } else if (key == "seed") {
        spec.seed = parse_uint(key, value);
      } else {
        throw Error(ErrorCode::BadSpec, "unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BadSpec) throw;
      throw Error(ErrorCode::BadSpec, e.what());
    }
  }
  if (spec.counts.size() < 2) throw Error(ErrorCode::BadSpec, "counts needs at least two classes");
  for (std::size_t c : spec.counts) {
    if (c == 0) throw Error(ErrorCode::BadSpec, "every class count must be positive");
  }
  if (spec.dim == 0) throw Error(ErrorCode::BadSpec, "dim must be positive");
  return spec;
}

void ExperimentConfig::validate() const {
  if (source == Source::Csv && csv_path.empty()) config_error("dataset.path is required for csv data");
  if (bounds.empty()) config_error("bounds.kinds is empty");
  if (alphas.empty()) config_error("risk.alphas is empty");
  for (double a : alphas) {
    if (!(a > 0.0 && a <= 1.0)) config_error("every alpha must lie in (0, 1]");
  }
  if (std::set<double>(alphas.begin(), alphas.end()).size() != alphas.size()) {
    config_error("risk.alphas has duplicates");
  }
  if (std::set<BoundKind>(bounds.begin(), bounds.end()).size() != bounds.size()) {
    config_error("bounds.kinds has duplicates");
  }
  for (BoundKind b : bounds) {
    if (required_mode(b) != mode) {
      config_error(std::string(to_string(b)) + " requires subgroups.mode = " +
                   std::string(to_string(required_mode(b))));
    }
    if (b == BoundKind::MhammediEstimate && risk != RiskKind::Cvar) {
      config_error("mhammedi_estimate only holds for cvar");
    }
  }
  if (repetitions < 1) config_error("experiment.repetitions must be at least 1");
  if (shared_model && !(shared_alpha > 0.0 && shared_alpha <= 1.0)) {
    config_error("experiment.shared_alpha must lie in (0, 1]");
  }
  if (threads < 1) config_error("experiment.threads must be at least 1");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) config_error("model.leaky_slope must lie in [0, 1)");
  for (std::size_t h : hidden) {
    if (h == 0) config_error("model.hidden sizes must be positive");
  }
  TrainConfig probe = train;
  probe.risk = make_risk_spec(risk, alphas.front());
  probe.bound = bounds.front();
  probe.validate();
  prior.validate();
}

ExperimentConfig parse_config(std::string_view text) {
  const auto kv = parse_key_values(text);
  ExperimentConfig c;
  bool source_given = false;
  for (const auto& [key, v] : kv) {
    if (key == "dataset.source") {
      source_given = true;
      if (v == "synthetic") c.source = ExperimentConfig::Source::Synthetic;
      else if (v == "csv") c.source = ExperimentConfig::Source::Csv;
      else config_error("dataset.source must be synthetic or csv");
    } else if (key == "dataset.path") {
      c.csv_path = v;
    } else if (key == "dataset.label_column") {
      c.label_column = v;
    } else if (key == "dataset.synth.counts") {
      c.synth.counts = parse_sizes(key, v);
    } else if (key == "dataset.synth.dim") {
      c.synth.dim = parse_uint(key, v);
    } else if (key == "dataset.synth.separation") {
      c.synth.separation = parse_double(key, v);
    } else if (key == "dataset.synth.seed") {
      c.synth.seed = parse_uint(key, v);
    } else if (key == "subgroups.mode") {
      if (v == "by-class") c.mode = SubgroupMode::ByClass;
      else if (v == "per-example") c.mode = SubgroupMode::PerExample;
      else config_error("subgroups.mode must be by-class or per-example");
    } else if (key == "subgroups.reference") {
      if (v == "class-ratio") c.reference = ReferenceKind::ClassRatio;
      else if (v == "uniform") c.reference = ReferenceKind::Uniform;
      else config_error("subgroups.reference must be class-ratio or uniform");
    } else if (key == "risk.kind") {
      if (v == "cvar") c.risk = RiskKind::Cvar;
      else if (v == "evar") c.risk = RiskKind::Evar;
      else config_error("risk.kind must be cvar or evar");
    } else if (key == "risk.alphas") {
      c.alphas = parse_doubles(key, v);
    } else if (key == "bounds.kinds") {
      c.bounds.clear();
      for (const auto& name : split_list(v)) {
        try {
          c.bounds.push_back(parse_bound_kind(name));
        } catch (const Error&) {
          config_error("unknown bound kind '" + name + "'");
        }
      }
    } else if (key == "experiment.repetitions") {
      c.repetitions = parse_uint(key, v);
    } else if (key == "experiment.seed") {
      c.seed = parse_uint(key, v);
    } else if (key == "experiment.shared_model") {
      c.shared_model = parse_bool(key, v);
    } else if (key == "experiment.shared_alpha") {
      c.shared_alpha = parse_double(key, v);
    } else if (key == "experiment.save_checkpoints") {
      c.save_checkpoints = parse_bool(key, v);
    } else if (key == "experiment.save_traces") {
      c.save_traces = parse_bool(key, v);
    } else if (key == "experiment.threads") {
      c.threads = parse_uint(key, v);
    } else if (key == "model.hidden") {
      c.hidden = parse_sizes(key, v);
    } else if (key == "model.leaky_slope") {
      c.leaky_slope = parse_double(key, v);
    } else if (key == "train.epochs") {
      c.train.epochs = parse_uint(key, v);
    } else if (key == "train.batch_size") {
      c.train.batch_size = parse_uint(key, v);
    } else if (key == "train.learning_rate") {
      c.train.learning_rate = parse_double(key, v);
    } else if (key == "train.sigma2") {
      c.train.sigma2 = parse_double(key, v);
    } else if (key == "train.delta") {
      c.train.delta = parse_double(key, v);
    } else if (key == "train.lambda") {
      c.train.lambda = parse_double(key, v);
    } else if (key == "train.l_max") {
      c.train.l_max = parse_double(key, v);
    } else if (key == "train.adam_beta1") {
      c.train.adam.beta1 = parse_double(key, v);
    } else if (key == "train.adam_beta2") {
      c.train.adam.beta2 = parse_double(key, v);
    } else if (key == "train.adam_eps") {
      c.train.adam.eps = parse_double(key, v);
    } else if (key == "prior.learning_rates") {
      c.prior.learning_rates = parse_doubles(key, v);
    } else if (key == "prior.epochs") {
      c.prior.epochs = parse_uint(key, v);
    } else {
      config_error("unknown key '" + key + "'");
    }
  }
  if (!source_given && !c.csv_path.empty()) c.source = ExperimentConfig::Source::Csv;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

namespace {

std::map<std::string, std::string> settings_of(const ExperimentConfig& c) {
  std::map<std::string, std::string> s;
  if (c.source == ExperimentConfig::Source::Csv) {
    s["dataset.source"] = "csv";
    s["dataset.path"] = c.csv_path;
    s["dataset.label_column"] = c.label_column;
  } else {
    s["dataset.source"] = "synthetic";
    s["dataset.synth.counts"] = join(c.synth.counts);
    s["dataset.synth.dim"] = std::to_string(c.synth.dim);
    s["dataset.synth.separation"] = fmt(c.synth.separation);
    s["dataset.synth.seed"] = std::to_string(c.synth.seed);
  }
  s["subgroups.mode"] = std::string(to_string(c.mode));
  s["subgroups.reference"] = std::string(to_string(c.reference));
  s["risk.kind"] = std::string(to_string(c.risk));
  s["risk.alphas"] = join(c.alphas);
  s["bounds.kinds"] = join_bounds(c.bounds);
  s["experiment.repetitions"] = std::to_string(c.repetitions);
  s["experiment.seed"] = std::to_string(c.seed);
  s["experiment.shared_model"] = c.shared_model ? "true" : "false";
  if (c.shared_model) s["experiment.shared_alpha"] = fmt(c.shared_alpha);
  s["model.hidden"] = join(c.hidden);
  s["model.leaky_slope"] = fmt(c.leaky_slope);
  s["train.epochs"] = std::to_string(c.train.epochs);
  s["train.batch_size"] = std::to_string(c.train.batch_size);
  s["train.learning_rate"] = fmt(c.train.learning_rate);
  s["train.sigma2"] = fmt(c.train.sigma2);
  s["train.delta"] = fmt(c.train.delta);
  s["train.lambda"] = fmt(c.train.lambda);
  s["train.l_max"] = fmt(c.train.l_max);
  s["train.adam_beta1"] = fmt(c.train.adam.beta1);
  s["train.adam_beta2"] = fmt(c.train.adam.beta2);
  s["train.adam_eps"] = fmt(c.train.adam.eps);
  s["prior.learning_rates"] = join(c.prior.learning_rates);
  s["prior.epochs"] = std::to_string(c.prior.epochs);
  // experiment.threads and the artifact switches do not change results.
  return s;
}

struct Splits {
  Dataset posterior_set;
  Dataset prior_set;
  Dataset test_set;
};

Splits make_splits(const Dataset& data, std::uint64_t rep_seed) {
  Split outer = stratified_split(data, 0.8, derive_seed(rep_seed, kSplitTest));
  Split inner = stratified_split(outer.first, 0.5, derive_seed(rep_seed, kSplitPrior));
  return Splits{standardize(inner.first), standardize(inner.second), standardize(outer.second)};
}

SubgroupPartition test_partition(const Dataset& test, SubgroupMode mode, ReferenceKind ref) {
  return mode == SubgroupMode::ByClass ? partition_by_class(test, ref) : partition_per_example(test);
}

std::string artifact_stem(BoundKind b, double alpha, std::size_t rep) {
  return std::string(to_string(b)) + "_alpha" + fmt(alpha) + "_rep" + std::to_string(rep);
}

struct Cell {
  std::size_t repetition;
  std::size_t alpha_index;  // unused in shared-model mode
};

struct CellContext {
  const ExperimentConfig& config;
  const Dataset& data;
  const std::optional<std::filesystem::path>& artifacts;
};

RunEntry make_entry(BoundKind b, double alpha, std::size_t rep, const Certificate& cert,
                    std::size_t n_priors, const MlpArch& arch, const Splits& s,
                    const SubgroupPartition& test_part, const ExperimentConfig& config) {
  RunEntry e;
  e.bound = b;
  e.alpha = alpha;
  e.repetition = rep;
  e.report = cert.report;
  e.n_priors = n_priors;
  e.train_size = s.posterior_set.size();
  const Metrics m = evaluate(arch, cert.theta_hat, s.test_set, test_part,
                             make_risk_spec(config.risk, alpha), config.train.l_max);
  e.test_risk = m.risk;
  e.f_score = m.f_score;
  e.test_error = m.error_rate;
  e.class_errors = m.class_errors;
  return e;
}

void save_artifacts(const CellContext& ctx, BoundKind b, double alpha, std::size_t rep,
                    const MlpArch& arch, const TrainResult& trained, const PriorResult& prior) {
  if (!ctx.artifacts) return;
  const std::string stem = artifact_stem(b, alpha, rep);
  if (ctx.config.save_checkpoints) {
    std::filesystem::create_directories(*ctx.artifacts / "checkpoints");
    Checkpoint c{arch, trained.posterior.mean, prior.prior.mean, trained.posterior.sigma2,
                 prior.n_priors, ctx.config.train.l_max};
    save_checkpoint(c, *ctx.artifacts / "checkpoints" / (stem + ".json"));
  }
  if (ctx.config.save_traces) {
    std::filesystem::create_directories(*ctx.artifacts / "traces");
    write_trace_jsonl(trained.trace, *ctx.artifacts / "traces" / (stem + ".jsonl"));
  }
}

std::vector<RunEntry> run_cell(const CellContext& ctx, const Cell& cell) {
  const ExperimentConfig& config = ctx.config;
  const std::uint64_t rep_seed = derive_seed(config.seed, cell.repetition);
  const Splits s = make_splits(ctx.data, rep_seed);
  const MlpArch arch = MlpArch::make(s.posterior_set.dim(), config.hidden,
                                     s.posterior_set.num_classes(), config.leaky_slope);
  const SubgroupPartition part_s = partition_by_class(s.posterior_set, config.reference);
  const SubgroupPartition part_p = partition_by_class(s.prior_set, config.reference);
  const SubgroupPartition part_t = test_partition(s.test_set, config.mode, config.reference);

  const double train_alpha =
      config.shared_model ? config.shared_alpha : config.alphas[cell.alpha_index];
  TrainConfig base = config.train;
  base.risk = make_risk_spec(config.risk, train_alpha);
  base.bound = config.bounds.front();  // only the mode matters for the prior
  base.seed = derive_seed(rep_seed, kPriorTag + alpha_tag(train_alpha));
  const PriorResult prior =
      learn_prior(config.prior, base, arch, s.prior_set, part_p, s.posterior_set, part_s);

  std::vector<RunEntry> out;
  for (BoundKind b : config.bounds) {
    TrainConfig tc = base;
    tc.bound = b;
    tc.n_priors = prior.n_priors;
    tc.seed = derive_seed(derive_seed(rep_seed, kPosteriorTag + static_cast<std::uint64_t>(b)),
                          alpha_tag(train_alpha));
    const TrainResult trained = train_posterior(tc, arch, prior.prior, s.posterior_set, part_s);
    save_artifacts(ctx, b, train_alpha, cell.repetition, arch, trained, prior);

    if (!config.shared_model) {
      out.push_back(make_entry(b, train_alpha, cell.repetition, trained.certificate,
                               prior.n_priors, arch, s, part_t, config));
      continue;
    }
    // Same sampled model for every alpha; only the risk measure changes.
    const Certificate& base_cert = trained.certificate;
    for (double alpha : config.alphas) {
      const Certificate cert = certify_sample(
          b, arch, base_cert.theta_hat, trained.posterior.mean, prior.prior.mean,
          trained.posterior.sigma2, s.posterior_set, part_s, make_risk_spec(config.risk, alpha),
          tc.delta, tc.lambda, tc.n_priors, tc.l_max);
      out.push_back(
          make_entry(b, alpha, cell.repetition, cert, prior.n_priors, arch, s, part_t, config));
    }
  }
  return out;
}

Dataset load_data(const ExperimentConfig& config) {
  if (config.source == ExperimentConfig::Source::Csv) {
    return load_csv(config.csv_path, config.label_column);
  }
  return synth_imbalanced(config.synth.counts, config.synth.dim, config.synth.separation,
                          config.synth.seed);
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

Summary summarize(const std::vector<double>& xs) {
  Summary out;
  out.mean = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = xs.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(xs.size()));
  return out;
}

}  // namespace

std::vector<RunAggregate> aggregate(const std::vector<RunEntry>& entries, std::size_t num_classes) {
  // Groups keep first-appearance order of (bound, alpha).
  std::vector<std::pair<BoundKind, double>> keys;
  for (const auto& e : entries) {
    const std::pair<BoundKind, double> k{e.bound, e.alpha};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::vector<RunAggregate> out;
  for (const auto& [bound, alpha] : keys) {
    std::vector<double> bv, tr, fs;
    std::vector<std::vector<double>> ce(num_classes);
    for (const auto& e : entries) {
      if (e.bound != bound || e.alpha != alpha) continue;
      bv.push_back(e.report.certificate);
      tr.push_back(e.test_risk);
      fs.push_back(e.f_score);
      for (std::size_t k = 0; k < num_classes && k < e.class_errors.size(); ++k) {
        ce[k].push_back(e.class_errors[k]);
      }
    }
    RunAggregate a;
    a.bound = bound;
    a.alpha = alpha;
    a.bound_value = summarize(bv);
    a.test_risk = summarize(tr);
    a.f_score = summarize(fs);
    for (const auto& xs : ce) a.class_errors.push_back(summarize(xs));
    out.push_back(std::move(a));
  }
  return out;
}

RunReport run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& artifact_dir) {
  config.validate();
  const Dataset data = load_data(config);

  std::vector<Cell> cells;
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    if (config.shared_model) {
      cells.push_back({r, 0});
    } else {
      for (std::size_t a = 0; a < config.alphas.size(); ++a) cells.push_back({r, a});
    }
  }

  const CellContext ctx{config, data, artifact_dir};
  std::vector<std::vector<RunEntry>> results(cells.size());
  const std::size_t workers = std::min(config.threads, cells.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(ctx, cells[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          try {
            results[i] = run_cell(ctx, cells[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  RunReport report;
  report.settings = settings_of(config);
  report.num_classes = data.num_classes();
  report.repetitions = config.repetitions;
  // Fixed order: bound, alpha, repetition.
  for (BoundKind b : config.bounds) {
    for (double alpha : config.alphas) {
      for (const auto& cell_entries : results) {
        for (const auto& e : cell_entries) {
          if (e.bound == b && e.alpha == alpha) report.entries.push_back(e);
        }
      }
    }
  }
  report.aggregates = aggregate(report.entries, report.num_classes);
  return report;
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  const nlohmann::json j = report;
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "report.json").string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for report.json");
  }
  std::ofstream csv(dir / "plotdata.csv", std::ios::binary);
  if (!csv) throw Error(ErrorCode::IoError, "cannot write " + (dir / "plotdata.csv").string());
  csv << "bound,alpha,repetition,bound_value,test_risk,f_score,class,class_error\n";
  for (const auto& e : report.entries) {
    const std::string prefix = std::string(to_string(e.bound)) + ',' + fmt(e.alpha) + ',' +
                               std::to_string(e.repetition) + ',' + fmt(e.report.certificate) +
                               ',' + fmt(e.test_risk) + ',' + fmt(e.f_score) + ',';
    csv << prefix << ",\n";
    for (std::size_t k = 0; k < e.class_errors.size(); ++k) {
      csv << prefix << k << ',' << fmt(e.class_errors[k]) << '\n';
    }
  }
  if (!csv) throw Error(ErrorCode::IoError, "write failed for plotdata.csv");
}

}  // namespace subrisk
