#include "subrisk/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "subrisk/error.hpp"
#include "subrisk/random.hpp"

namespace subrisk {

namespace {

using RowMatrixMap = Eigen::Map<const FeatureMatrix>;
using Vector = Eigen::VectorXd;

struct LayerView {
  RowMatrixMap weight;  // out x in
  Eigen::Map<const Vector> bias;
};

std::vector<LayerView> layer_views(const MlpArch& arch, std::span<const double> params) {
  if (params.size() != arch.num_params()) {
    std::ostringstream os;
    os << "parameter vector has " << params.size() << " entries, architecture needs "
       << arch.num_params();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  std::vector<LayerView> views;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(arch.layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(arch.layer_sizes[l + 1]);
    const double* w = params.data() + offset;
    offset += static_cast<std::size_t>(in * out);
    const double* b = params.data() + offset;
    offset += static_cast<std::size_t>(out);
    views.push_back(LayerView{RowMatrixMap(w, out, in), Eigen::Map<const Vector>(b, out)});
  }
  return views;
}

void softmax_rows(FeatureMatrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

void leaky_relu(FeatureMatrix& z, double slope) {
  z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

}  // namespace

MlpArch MlpArch::make(std::size_t input_dim, std::vector<std::size_t> hidden,
                      std::size_t num_classes, double leaky_slope) {
  MlpArch arch;
  arch.layer_sizes.push_back(input_dim);
  arch.layer_sizes.insert(arch.layer_sizes.end(), hidden.begin(), hidden.end());
  arch.layer_sizes.push_back(num_classes);
  arch.leaky_slope = leaky_slope;
  arch.validate();
  return arch;
}

std::size_t MlpArch::num_params() const {
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    d += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return d;
}

void MlpArch::validate() const {
  if (layer_sizes.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "architecture needs an input and an output size");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw Error(ErrorCode::InvalidArgument, "layer sizes must be positive");
  }
  if (layer_sizes.back() < 2) {
    throw Error(ErrorCode::InvalidArgument, "output layer needs at least two classes");
  }
  if (!std::isfinite(leaky_slope)) {
    throw Error(ErrorCode::InvalidArgument, "leaky ReLU slope must be finite");
  }
}

void GaussianParamDist::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive and finite");
  }
}

FeatureMatrix forward_batch(const MlpArch& arch, std::span<const double> params,
                            const FeatureMatrix& x) {
  const auto layers = layer_views(arch, params);
  if (static_cast<std::size_t>(x.cols()) != arch.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "input width does not match the architecture");
  }
  FeatureMatrix a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    FeatureMatrix z = a * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) leaky_relu(z, arch.leaky_slope);
    a = std::move(z);
  }
  softmax_rows(a);
  return a;
}

std::vector<double> forward(const MlpArch& arch, std::span<const double> params,
                            std::span<const double> x) {
  if (x.size() != arch.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "input width does not match the architecture");
  }
  FeatureMatrix row = Eigen::Map<const FeatureMatrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  const FeatureMatrix p = forward_batch(arch, params, row);
  return {p.data(), p.data() + p.size()};
}

double bounded_cross_entropy(std::span<const double> probs, int y, double l_max) {
  if (y < 0 || static_cast<std::size_t>(y) >= probs.size()) {
    throw Error(ErrorCode::DimensionMismatch, "label outside the probability vector");
  }
  const double p = std::max(probs[static_cast<std::size_t>(y)], std::exp(-l_max));
  return std::min(-std::log(p), l_max) / l_max;
}

BatchPass::BatchPass(const MlpArch& arch, std::span<const double> params, const Dataset& data,
                     std::span<const std::size_t> batch, double l_max)
    : arch_(arch), params_(params), l_max_(l_max) {
  if (data.dim() != arch.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "dataset width does not match the architecture");
  }
  const auto layers = layer_views(arch_, params_);
  FeatureMatrix x(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(data.dim()));
  labels_.resize(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = data.features().row(static_cast<Eigen::Index>(batch[r]));
    labels_[r] = data.labels()[batch[r]];
  }
  activations_.push_back(std::move(x));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    FeatureMatrix z = activations_.back() * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    pre_.push_back(z);
    if (l + 1 < layers.size()) {
      leaky_relu(z, arch_.leaky_slope);
    } else {
      softmax_rows(z);
    }
    activations_.push_back(std::move(z));
  }
  const FeatureMatrix& probs = activations_.back();
  losses_.resize(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto row = probs.row(static_cast<Eigen::Index>(r));
    losses_[r] = bounded_cross_entropy(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                       labels_[r], l_max_);
  }
}

ParamVector BatchPass::gradient(std::span<const double> weights) const {
  if (weights.size() != losses_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one weight per batch element is required");
  }
  const auto layers = layer_views(arch_, params_);
  const FeatureMatrix& probs = activations_.back();

  // d(loss)/d(logits) = (p - onehot) / l_max, zero where the clamp is active.
  const double floor_p = std::exp(-l_max_);
  FeatureMatrix delta = FeatureMatrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double w = weights[static_cast<std::size_t>(r)];
    if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "example weights must be non-negative");
    const int y = labels_[static_cast<std::size_t>(r)];
    if (w == 0.0 || probs(r, y) <= floor_p) continue;
    delta.row(r) = probs.row(r) * (w / l_max_);
    delta(r, y) -= w / l_max_;
  }

  ParamVector grad(params_.size(), 0.0);
  std::vector<std::size_t> offsets(layers.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = offset;
    offset += arch_.layer_sizes[l] * arch_.layer_sizes[l + 1] + arch_.layer_sizes[l + 1];
  }
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(arch_.layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(arch_.layer_sizes[l + 1]);
    Eigen::Map<FeatureMatrix> dw(grad.data() + offsets[l], out, in);
    Eigen::Map<Vector> db(grad.data() + offsets[l] + static_cast<std::size_t>(in * out), out);
    dw = delta.transpose() * activations_[l];
    db = delta.colwise().sum().transpose();
    if (l == 0) break;
    FeatureMatrix upstream = delta * layers[l].weight;
    const FeatureMatrix& z = pre_[l - 1];
    const double slope = arch_.leaky_slope;
    delta = upstream.array() * z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }).array();
  }
  return grad;
}

ParamVector backward(const MlpArch& arch, std::span<const double> params, const Dataset& data,
                     std::span<const std::size_t> batch, std::span<const double> weights,
                     double l_max) {
  if (weights.size() != batch.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one weight per batch element is required");
  }
  return BatchPass(arch, params, data, batch, l_max).gradient(weights);
}

ParamVector xavier_init(const MlpArch& arch, std::uint64_t seed) {
  arch.validate();
  ParamVector params(arch.num_params(), 0.0);
  Rng rng = make_rng(seed, 0xa11e);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t in = arch.layer_sizes[l], out = arch.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < in * out; ++k) params[offset + k] = u(rng);
    offset += in * out + out;
  }
  return params;
}

ParamSample sample_params(const GaussianParamDist& dist, std::uint64_t seed) {
  dist.validate();
  Rng rng = make_rng(seed, 0x9a55);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = std::sqrt(dist.sigma2);
  ParamSample s;
  s.noise.resize(dist.mean.size());
  s.theta.resize(dist.mean.size());
  for (std::size_t i = 0; i < dist.mean.size(); ++i) {
    s.noise[i] = normal(rng);
    s.theta[i] = dist.mean[i] + sigma * s.noise[i];
  }
  return s;
}

double disintegrated_kl(std::span<const double> theta_tilde, std::span<const double> theta,
                        std::span<const double> theta_prior, double sigma2) {
  if (theta_tilde.size() != theta.size() || theta.size() != theta_prior.size()) {
    throw Error(ErrorCode::DimensionMismatch, "parameter vectors differ in length");
  }
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive");
  // Expanded as sum (theta - prior) * (2 theta_tilde - theta - prior) to avoid
  // cancelling two large squared norms.
  double num = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    num += (theta[i] - theta_prior[i]) * (2.0 * theta_tilde[i] - theta[i] - theta_prior[i]);
  }
  return num / (2.0 * sigma2);
}

double gaussian_kl(std::span<const double> theta, std::span<const double> theta_prior,
                   double sigma2) {
  if (theta.size() != theta_prior.size()) {
    throw Error(ErrorCode::DimensionMismatch, "parameter vectors differ in length");
  }
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) sq += (theta[i] - theta_prior[i]) * (theta[i] - theta_prior[i]);
  return sq / (2.0 * sigma2);
}

double f_score(std::span<const int> labels, std::span<const int> predictions,
               std::size_t num_classes) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorCode::DimensionMismatch, "labels and predictions differ in length");
  }
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  std::vector<std::size_t> support(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const auto p = static_cast<std::size_t>(predictions[i]);
    ++support[y];
    if (y == p) {
      tp[y] += 1.0;
    } else {
      fn[y] += 1.0;
      fp[p] += 1.0;
    }
  }
  const auto f1 = [&](std::size_t c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    return denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  };
  if (num_classes == 2) return f1(support[0] < support[1] ? 0 : 1);
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) sum += f1(c);
  return sum / static_cast<double>(num_classes);
}

Metrics evaluate(const MlpArch& arch, std::span<const double> params, const Dataset& data,
                 const SubgroupPartition& partition, const RiskSpec& spec, double l_max) {
  if (partition.num_examples() != data.size()) {
    throw Error(ErrorCode::DimensionMismatch, "partition does not cover the dataset");
  }
  const FeatureMatrix probs = forward_batch(arch, params, data.features());
  const std::size_t k = data.num_classes();
  std::vector<double> losses(data.size());
  std::vector<int> predictions(data.size());
  std::vector<double> wrong(k, 0.0);
  Metrics out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = probs.row(static_cast<Eigen::Index>(i));
    losses[i] = bounded_cross_entropy(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                      data.labels()[i], l_max);
    Eigen::Index arg = 0;
    row.maxCoeff(&arg);
    predictions[i] = static_cast<int>(arg);
    if (predictions[i] != data.labels()[i]) wrong[static_cast<std::size_t>(data.labels()[i])] += 1.0;
    out.mean_loss += losses[i];
  }
  out.mean_loss /= static_cast<double>(data.size());

  std::vector<double> subgroup(partition.num_subgroups(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) subgroup[partition.assignment[i]] += losses[i];
  for (std::size_t a = 0; a < subgroup.size(); ++a) {
    subgroup[a] = std::clamp(subgroup[a] / static_cast<double>(partition.sizes[a]), 0.0, 1.0);
  }
  const RiskSolution sol = constrained_weights(SubgroupLosses(subgroup), partition.pi, spec);
  out.risk = sol.value;
  out.risk_weights = sol.weights;
  out.subgroup_losses = std::move(subgroup);

  out.class_errors.resize(k);
  double total_wrong = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    out.class_errors[c] = wrong[c] / static_cast<double>(data.class_counts()[c]);
    total_wrong += wrong[c];
  }
  out.error_rate = total_wrong / static_cast<double>(data.size());
  out.f_score = f_score(data.labels(), predictions, k);
  return out;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  nlohmann::json j;
  j["arch"] = {{"layer_sizes", c.arch.layer_sizes}, {"leaky_slope", c.arch.leaky_slope}};
  j["params"] = c.params;
  j["prior_params"] = c.prior_params;
  j["sigma2"] = c.sigma2;
  j["n_priors"] = c.n_priors;
  j["l_max"] = c.l_max;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  Checkpoint c;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    c.arch.layer_sizes = j.at("arch").at("layer_sizes").get<std::vector<std::size_t>>();
    c.arch.leaky_slope = j.at("arch").value("leaky_slope", 0.01);
    c.params = j.at("params").get<ParamVector>();
    c.prior_params = j.value("prior_params", ParamVector{});
    c.sigma2 = j.value("sigma2", 1e-6);
    c.n_priors = j.value("n_priors", std::size_t{1});
    c.l_max = j.value("l_max", kDefaultLossMax);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  c.arch.validate();
  if (c.params.size() != c.arch.num_params()) {
    throw Error(ErrorCode::DimensionMismatch, "checkpoint parameters do not match its architecture");
  }
  if (!c.prior_params.empty() && c.prior_params.size() != c.params.size()) {
    throw Error(ErrorCode::DimensionMismatch, "checkpoint prior does not match its architecture");
  }
  return c;
}

}  // namespace subrisk
