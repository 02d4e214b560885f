#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "subrisk/data.hpp"
#include "subrisk/risk.hpp"

namespace subrisk {

/// Fully connected network: layer_sizes = (input, hidden..., classes).
/// Hidden layers use leaky ReLU, the output layer a softmax.
struct MlpArch {
  std::vector<std::size_t> layer_sizes;
  double leaky_slope = 0.01;

  static MlpArch make(std::size_t input_dim, std::vector<std::size_t> hidden,
                      std::size_t num_classes, double leaky_slope = 0.01);

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  /// Total count of weights and biases. Each layer is stored as its
  /// row-major (out x in) weight matrix followed by its bias.
  std::size_t num_params() const;

  void validate() const;
};

using ParamVector = std::vector<double>;

/// N(mean, sigma2 * I).
struct GaussianParamDist {
  ParamVector mean;
  double sigma2 = 1e-6;

  void validate() const;
};

inline constexpr double kDefaultLossMax = 4.0;

/// Softmax probabilities for a single input.
std::vector<double> forward(const MlpArch& arch, std::span<const double> params,
                            std::span<const double> x);

/// Row-wise softmax probabilities for a feature matrix.
FeatureMatrix forward_batch(const MlpArch& arch, std::span<const double> params,
                            const FeatureMatrix& x);

/// min(-ln max(p_y, e^-l_max), l_max) / l_max, a loss in [0, 1].
double bounded_cross_entropy(std::span<const double> probs, int y, double l_max = kDefaultLossMax);

/// Forward pass over a batch that keeps activations for backpropagation.
class BatchPass {
 public:
  BatchPass(const MlpArch& arch, std::span<const double> params, const Dataset& data,
            std::span<const std::size_t> batch, double l_max = kDefaultLossMax);

  /// Bounded cross-entropy per batch element.
  const std::vector<double>& losses() const noexcept { return losses_; }
  const FeatureMatrix& probabilities() const noexcept { return activations_.back(); }

  /// Gradient of sum_i weights[i] * loss_i with respect to the parameters.
  ParamVector gradient(std::span<const double> weights) const;

 private:
  MlpArch arch_;
  std::span<const double> params_;  // must outlive the pass
  std::vector<int> labels_;
  double l_max_;
  std::vector<FeatureMatrix> pre_;          // pre-activations per layer
  std::vector<FeatureMatrix> activations_;  // input, hidden outputs, softmax
  std::vector<double> losses_;
};

/// Gradient of sum_i w_i * loss(x_i, y_i) over a batch.
ParamVector backward(const MlpArch& arch, std::span<const double> params, const Dataset& data,
                     std::span<const std::size_t> batch, std::span<const double> weights,
                     double l_max = kDefaultLossMax);

/// Xavier-uniform weights, zero biases.
ParamVector xavier_init(const MlpArch& arch, std::uint64_t seed);

struct ParamSample {
  ParamVector theta;  // mean + sigma * noise
  std::vector<double> noise;
};

ParamSample sample_params(const GaussianParamDist& dist, std::uint64_t seed);

/// (||theta_tilde - theta_prior||^2 - ||theta_tilde - theta||^2) / (2 sigma2),
/// the log density ratio of two isotropic Gaussians at theta_tilde. Signed.
double disintegrated_kl(std::span<const double> theta_tilde, std::span<const double> theta,
                        std::span<const double> theta_prior, double sigma2);

/// KL(N(theta, s2 I) || N(theta_prior, s2 I)) = ||theta - theta_prior||^2 / (2 s2).
double gaussian_kl(std::span<const double> theta, std::span<const double> theta_prior,
                   double sigma2);

struct Metrics {
  double risk = 0.0;  // risk measure over per-subgroup mean losses
  std::vector<double> subgroup_losses;
  std::vector<double> risk_weights;
  double f_score = 0.0;
  std::vector<double> class_errors;
  double error_rate = 0.0;
  double mean_loss = 0.0;
};

/// Macro F1 for three or more classes; for two classes the F1 of the
/// minority class (class 1 on a tie).
double f_score(std::span<const int> labels, std::span<const int> predictions,
               std::size_t num_classes);

Metrics evaluate(const MlpArch& arch, std::span<const double> params, const Dataset& data,
                 const SubgroupPartition& partition, const RiskSpec& spec,
                 double l_max = kDefaultLossMax);

/// Saved model: architecture and flat parameters, plus what post-hoc
/// certification needs (prior mean, shared variance, prior union size).
struct Checkpoint {
  MlpArch arch;
  ParamVector params;
  ParamVector prior_params;
  double sigma2 = 1e-6;
  std::size_t n_priors = 1;
  double l_max = kDefaultLossMax;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace subrisk
