#include "subrisk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "subrisk/error.hpp"
#include "subrisk/random.hpp"

namespace subrisk {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kBatchStream = 0xba7c4;
constexpr std::uint64_t kNoiseStream = 0x4015e;
constexpr std::uint64_t kFinalStream = 0xf1a1;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kSelectStream = 0x5e1ec7;

std::vector<std::size_t> all_indices(std::size_t m) {
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  return idx;
}

}  // namespace

AdamState::AdamState(ParamVector initial)
    : params(std::move(initial)), m(params.size(), 0.0), v(params.size(), 0.0) {}

AdamState adam_step(AdamState state, std::span<const double> gradient, double lr,
                    const AdamConfig& cfg) {
  if (gradient.size() != state.params.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient and parameters differ in length");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    state.params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  return state;
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(sigma2 > 0.0)) fail("sigma2 must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    fail("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) fail("Adam eps must be positive");
  if (!(lambda > 0.0)) fail("lambda must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) fail("delta must lie in (0, 1]");
  if (n_priors < 1) fail("n_priors must be at least 1");
  if (!(l_max > 0.0)) fail("l_max must be positive");
  risk.validate();
  if (bound == BoundKind::MhammediEstimate && risk.divergence != DivergenceKind::None) {
    fail("the Mhammedi bound only holds for CVaR");
  }
}

void PriorGrid::validate() const {
  if (learning_rates.empty()) throw Error(ErrorCode::InvalidConfig, "prior grid is empty");
  for (double lr : learning_rates) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
      throw Error(ErrorCode::InvalidConfig, "prior learning rates must be >= 0");
    }
  }
}

std::vector<std::vector<std::size_t>> minibatch_sampler(const SubgroupPartition& partition,
                                                        std::size_t batch_size,
                                                        std::uint64_t seed) {
  const std::size_t n = partition.num_subgroups();
  const std::size_t m = partition.num_examples();
  if (batch_size < n) {
    std::ostringstream os;
    os << "batch size " << batch_size << " cannot hold one example of each of " << n
       << " subgroups";
    throw Error(ErrorCode::BatchTooSmall, os.str());
  }
  const std::size_t cap = std::min(batch_size, m);

  Rng rng = make_rng(seed, kBatchStream);
  std::discrete_distribution<std::size_t> pick_subgroup(partition.pi.probs().begin(),
                                                        partition.pi.probs().end());
  std::vector<char> seen(m, 0), in_batch(m, 0);
  std::vector<std::size_t> used(n, 0);
  std::size_t unseen = m;
  std::vector<std::vector<std::size_t>> batches;

  const auto draw_member = [&](std::size_t a) {
    const auto& members = partition.members[a];
    std::uniform_int_distribution<std::size_t> u(0, members.size() - 1);
    while (true) {
      const std::size_t i = members[u(rng)];
      if (!in_batch[i]) return i;
    }
  };

  while (unseen > 0) {
    std::vector<std::size_t> batch;
    batch.reserve(cap);
    const auto take = [&](std::size_t a) {
      const std::size_t i = draw_member(a);
      in_batch[i] = 1;
      ++used[a];
      if (!seen[i]) {
        seen[i] = 1;
        --unseen;
      }
      batch.push_back(i);
    };
    for (std::size_t a = 0; a < n; ++a) take(a);
    while (batch.size() < cap) {
      const std::size_t a = pick_subgroup(rng);
      if (used[a] == partition.members[a].size()) continue;
      take(a);
    }
    for (std::size_t i : batch) in_batch[i] = 0;
    std::fill(used.begin(), used.end(), 0);
    batches.push_back(std::move(batch));
  }
  return batches;
}

BatchRisk batch_risk(std::span<const double> losses, std::span<const std::size_t> batch,
                     const SubgroupPartition& class_partition, SubgroupMode mode,
                     const RiskSpec& spec) {
  if (losses.size() != batch.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one loss per batch element is required");
  }
  BatchRisk out;
  const std::size_t b = batch.size();
  if (mode == SubgroupMode::PerExample) {
    std::vector<double> clamped(losses.begin(), losses.end());
    for (double& l : clamped) l = std::clamp(l, 0.0, 1.0);
    const auto pi = ReferenceDistribution::uniform(b);
    out.solution = constrained_weights(SubgroupLosses(std::move(clamped)), pi, spec);
    out.example_weights = out.solution.weights;
    out.subgroup_sizes.assign(b, 1);
    out.subgroup_pi.assign(pi.probs().begin(), pi.probs().end());
    return out;
  }

  const std::size_t n = class_partition.num_subgroups();
  std::vector<double> sums(n, 0.0);
  out.subgroup_sizes.assign(n, 0);
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t a = class_partition.assignment.at(batch[r]);
    sums[a] += losses[r];
    ++out.subgroup_sizes[a];
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (out.subgroup_sizes[a] == 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "subgroup " + std::to_string(a) + " is not represented in the batch");
    }
    sums[a] = std::clamp(sums[a] / static_cast<double>(out.subgroup_sizes[a]), 0.0, 1.0);
  }
  out.solution = constrained_weights(SubgroupLosses(std::move(sums)), class_partition.pi, spec);
  out.example_weights.resize(b);
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t a = class_partition.assignment[batch[r]];
    out.example_weights[r] = out.solution.weights[a] / static_cast<double>(out.subgroup_sizes[a]);
  }
  out.subgroup_pi.assign(class_partition.pi.probs().begin(), class_partition.pi.probs().end());
  return out;
}

namespace {

BoundContext context_for(const BatchRisk& risk, SubgroupMode mode, const RiskSpec& spec,
                         double delta, double lambda, std::size_t n_priors) {
  if (mode == SubgroupMode::PerExample) {
    return BoundContext::per_example(risk.subgroup_sizes.size(), spec.alpha, delta, lambda,
                                     n_priors);
  }
  BoundContext ctx = BoundContext::by_class(risk.subgroup_sizes, risk.subgroup_pi, spec.alpha,
                                            delta, n_priors);
  ctx.lambda = lambda;
  return ctx;
}

void check_finite(std::span<const double> g, std::size_t step) {
  for (double v : g) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteGradient,
                  "non-finite gradient at optimization step " + std::to_string(step));
    }
  }
}

}  // namespace

Certificate certify_sample(BoundKind kind, const MlpArch& arch, std::span<const double> theta_hat,
                           std::span<const double> posterior_mean,
                           std::span<const double> prior_mean, double sigma2, const Dataset& data,
                           const SubgroupPartition& class_partition, const RiskSpec& spec,
                           double delta, double lambda, std::size_t n_priors, double l_max) {
  const std::vector<std::size_t> all = all_indices(data.size());
  const BatchPass pass(arch, theta_hat, data, all, l_max);
  const SubgroupMode mode = required_mode(kind);
  const BatchRisk risk = batch_risk(pass.losses(), all, class_partition, mode, spec);
  Certificate c;
  c.theta_hat.assign(theta_hat.begin(), theta_hat.end());
  c.kl_disintegrated = disintegrated_kl(theta_hat, posterior_mean, prior_mean, sigma2);
  c.kl_classical = gaussian_kl(posterior_mean, prior_mean, sigma2);
  const BoundContext ctx = context_for(risk, mode, spec, delta, lambda, n_priors);
  c.report = compute_bound(kind, std::clamp(risk.solution.value, 0.0, 1.0), c.kl_disintegrated,
                           c.kl_classical, ctx);
  return c;
}

Certificate certify(BoundKind kind, const MlpArch& arch, const GaussianParamDist& posterior,
                    std::span<const double> prior_mean, const Dataset& data,
                    const SubgroupPartition& class_partition, const RiskSpec& spec, double delta,
                    double lambda, std::size_t n_priors, double l_max, std::uint64_t seed) {
  const ParamSample h = sample_params(posterior, derive_seed(seed, kFinalStream));
  return certify_sample(kind, arch, h.theta, posterior.mean, prior_mean, posterior.sigma2, data,
                        class_partition, spec, delta, lambda, n_priors, l_max);
}

TrainResult train_posterior(const TrainConfig& config, const MlpArch& arch,
                            const GaussianParamDist& prior, const Dataset& data,
                            const SubgroupPartition& class_partition) {
  config.validate();
  prior.validate();
  if (prior.mean.size() != arch.num_params()) {
    throw Error(ErrorCode::DimensionMismatch, "prior dimension does not match the architecture");
  }
  const SubgroupMode mode = config.mode();
  const bool classical = uses_classical_kl(config.bound);
  const double sigma = std::sqrt(config.sigma2);

  TrainResult result;
  AdamState state(prior.mean);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches =
        minibatch_sampler(class_partition, config.batch_size, derive_seed(config.seed, epoch));
    for (const auto& batch : batches) {
      const ParamSample noise =
          sample_params(GaussianParamDist{state.params, config.sigma2},
                        derive_seed(derive_seed(config.seed, kNoiseStream), step));
      const ParamVector& theta_tilde = noise.theta;
      const BatchPass pass(arch, theta_tilde, data, batch, config.l_max);
      const BatchRisk risk = batch_risk(pass.losses(), batch, class_partition, mode, config.risk);

      TraceRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.batch_size = batch.size();
      rec.batch_risk = std::clamp(risk.solution.value, 0.0, 1.0);
      rec.kl_disintegrated = disintegrated_kl(theta_tilde, state.params, prior.mean, config.sigma2);
      rec.kl_classical = gaussian_kl(state.params, prior.mean, config.sigma2);
      const BoundContext ctx =
          context_for(risk, mode, config.risk, config.delta, config.lambda, config.n_priors);
      rec.report = compute_bound(config.bound, rec.batch_risk, rec.kl_disintegrated,
                                 rec.kl_classical, ctx);

      // Risk term: Danskin weights chained through the per-example losses.
      ParamVector grad = pass.gradient(risk.example_weights);
      for (double& g : grad) g *= rec.report.d_empirical;
      // Divergence term through theta~ = theta + sigma * eps; the
      // -||theta~ - theta||^2 part is constant under reparameterization.
      if (rec.report.d_kl != 0.0) {
        const double scale = rec.report.d_kl / config.sigma2;
        for (std::size_t i = 0; i < grad.size(); ++i) {
          const double diff = classical ? state.params[i] - prior.mean[i]
                                        : state.params[i] + sigma * noise.noise[i] - prior.mean[i];
          grad[i] += scale * diff;
        }
      }
      check_finite(grad, step);
      state = adam_step(std::move(state), grad, config.learning_rate, config.adam);
      result.trace.push_back(std::move(rec));
      ++step;
    }
  }

  result.posterior = GaussianParamDist{std::move(state.params), config.sigma2};
  result.certificate = certify(config.bound, arch, result.posterior, prior.mean, data,
                               class_partition, config.risk, config.delta, config.lambda,
                               config.n_priors, config.l_max, config.seed);
  return result;
}

namespace {

double sampled_risk(const MlpArch& arch, const GaussianParamDist& dist, const Dataset& data,
                    const SubgroupPartition& class_partition, SubgroupMode mode,
                    const RiskSpec& spec, double l_max, std::uint64_t seed) {
  const ParamSample h = sample_params(dist, seed);
  const std::vector<std::size_t> all = all_indices(data.size());
  const BatchPass pass(arch, h.theta, data, all, l_max);
  return batch_risk(pass.losses(), all, class_partition, mode, spec).solution.value;
}

}  // namespace

PriorResult learn_prior(const PriorGrid& grid, const TrainConfig& config, const MlpArch& arch,
                        const Dataset& prior_set, const SubgroupPartition& prior_partition,
                        const Dataset& posterior_set,
                        const SubgroupPartition& posterior_partition) {
  grid.validate();
  config.validate();
  const SubgroupMode mode = config.mode();
  const std::uint64_t select_seed = derive_seed(config.seed, kSelectStream);

  PriorResult out;
  double best = std::numeric_limits<double>::infinity();
  const auto consider = [&](const ParamVector& params, std::size_t k, std::size_t epoch) {
    const GaussianParamDist candidate{params, config.sigma2};
    const double r = sampled_risk(arch, candidate, posterior_set, posterior_partition, mode,
                                  config.risk, config.l_max, select_seed);
    out.candidate_risks.push_back(r);
    if (r < best) {
      best = r;
      out.prior = candidate;
      out.selected_config = k;
      out.selected_epoch = epoch;
    }
  };

  const ParamVector init = xavier_init(arch, derive_seed(config.seed, kInitStream));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::uint64_t run_seed = derive_seed(config.seed, 0x9000 + k);
    if (grid.epochs == 0) {
      consider(init, k, 0);
      continue;
    }
    AdamState state(init);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < grid.epochs; ++epoch) {
      const auto batches =
          minibatch_sampler(prior_partition, config.batch_size, derive_seed(run_seed, epoch));
      for (const auto& batch : batches) {
        const ParamSample h = sample_params(GaussianParamDist{state.params, config.sigma2},
                                            derive_seed(derive_seed(run_seed, kNoiseStream), step));
        const BatchPass pass(arch, h.theta, prior_set, batch, config.l_max);
        const BatchRisk risk = batch_risk(pass.losses(), batch, prior_partition, mode, config.risk);
        const ParamVector grad = pass.gradient(risk.example_weights);
        check_finite(grad, step);
        state = adam_step(std::move(state), grad, grid.learning_rates[k], config.adam);
        ++step;
      }
      consider(state.params, k, epoch + 1);
    }
  }
  out.n_priors = std::max<std::size_t>(grid.epochs, 1) * grid.size();
  return out;
}

}  // namespace subrisk
