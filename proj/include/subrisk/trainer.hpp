#pragma once

#include <cstdint>
#include <vector>

#include "subrisk/bounds.hpp"
#include "subrisk/data.hpp"
#include "subrisk/model.hpp"
#include "subrisk/risk.hpp"

namespace subrisk {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamVector params;
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(ParamVector initial);
};

/// One bias-corrected Adam update.
AdamState adam_step(AdamState state, std::span<const double> gradient, double lr,
                    const AdamConfig& cfg = {});

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 1e-8;
  AdamConfig adam;
  double sigma2 = 1e-6;
  RiskSpec risk = RiskSpec::cvar(0.5);
  BoundKind bound = BoundKind::SubgroupsSqrt;
  double lambda = 1.0;
  double delta = 0.05;
  std::size_t n_priors = 1;
  double l_max = kDefaultLossMax;
  std::uint64_t seed = 0;

  SubgroupMode mode() const noexcept { return required_mode(bound); }
  void validate() const;
};

struct PriorGrid {
  std::vector<double> learning_rates{0.1, 0.01, 0.001};
  std::size_t epochs = 20;

  std::size_t size() const noexcept { return learning_rates.size(); }
  void validate() const;
};

/// One epoch of mini-batches over `partition`. Each batch opens with one
/// uniformly drawn example per subgroup (in subgroup order), then fills the
/// remaining slots by drawing a subgroup from pi and an example uniformly
/// within it, never repeating an example inside a batch. The epoch ends once
/// every example has appeared in some batch.
std::vector<std::vector<std::size_t>> minibatch_sampler(const SubgroupPartition& partition,
                                                        std::size_t batch_size,
                                                        std::uint64_t seed);

/// Risk of a sampled model on a batch (or the full set), with per-example
/// weights d(risk)/d(loss_i) obtained from the optimal subgroup weights.
struct BatchRisk {
  RiskSolution solution;
  std::vector<double> example_weights;
  std::vector<std::size_t> subgroup_sizes;  // examples per subgroup in the batch
  std::vector<double> subgroup_pi;
};

/// `class_partition` supplies subgroups in ByClass mode; in PerExample mode
/// every batch element is its own subgroup with uniform reference.
BatchRisk batch_risk(std::span<const double> losses, std::span<const std::size_t> batch,
                     const SubgroupPartition& class_partition, SubgroupMode mode,
                     const RiskSpec& spec);

struct TraceRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t batch_size = 0;
  double batch_risk = 0.0;
  double kl_disintegrated = 0.0;
  double kl_classical = 0.0;
  BoundReport report;
};

struct Certificate {
  BoundReport report;
  ParamVector theta_hat;  // the sampled model the certificate is about
  double kl_disintegrated = 0.0;
  double kl_classical = 0.0;
};

/// Bound on the full set for a model sampled from the posterior, using the
/// true subgroup sizes (ByClass) or m = |data| (PerExample).
Certificate certify(BoundKind kind, const MlpArch& arch, const GaussianParamDist& posterior,
                    std::span<const double> prior_mean, const Dataset& data,
                    const SubgroupPartition& class_partition, const RiskSpec& spec, double delta,
                    double lambda, std::size_t n_priors, double l_max, std::uint64_t seed);

/// Bound value for an already-sampled model theta_hat.
Certificate certify_sample(BoundKind kind, const MlpArch& arch, std::span<const double> theta_hat,
                           std::span<const double> posterior_mean,
                           std::span<const double> prior_mean, double sigma2, const Dataset& data,
                           const SubgroupPartition& class_partition, const RiskSpec& spec,
                           double delta, double lambda, std::size_t n_priors, double l_max);

struct TrainResult {
  GaussianParamDist posterior;
  std::vector<TraceRecord> trace;
  Certificate certificate;
};

/// Self-bounding posterior training: starts at the prior mean and takes one
/// Adam step per mini-batch on the gradient of the configured bound, with a
/// reparameterized sample theta~ = theta + sigma * eps (eps fixed per step).
TrainResult train_posterior(const TrainConfig& config, const MlpArch& arch,
                            const GaussianParamDist& prior, const Dataset& data,
                            const SubgroupPartition& class_partition);

struct PriorResult {
  GaussianParamDist prior;
  std::size_t n_priors = 1;
  std::size_t selected_config = 0;
  std::size_t selected_epoch = 0;
  std::vector<double> candidate_risks;  // config-major, one per snapshot
};

/// Risk-only training on `prior_set` for every learning rate in the grid,
/// snapshotting after each epoch; returns the snapshot whose sampled model
/// has the lowest risk on `posterior_set`, and n_priors = epochs * K
/// (the initializations are the candidates when epochs = 0).
PriorResult learn_prior(const PriorGrid& grid, const TrainConfig& config, const MlpArch& arch,
                        const Dataset& prior_set, const SubgroupPartition& prior_partition,
                        const Dataset& posterior_set,
                        const SubgroupPartition& posterior_partition);

}  // namespace subrisk
