#pragma once

#include <functional>
#include <span>
#include <vector>

namespace subrisk {

/// Reference distribution pi over subgroups. Every entry is strictly
/// positive and the entries sum to one (within 1e-12).
class ReferenceDistribution {
 public:
  explicit ReferenceDistribution(std::vector<double> probs);

  /// Uniform distribution over n subgroups.
  static ReferenceDistribution uniform(std::size_t n);
  /// Normalized counts; every count must be positive.
  static ReferenceDistribution from_counts(std::span<const std::size_t> counts);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t a) const noexcept { return probs_[a]; }
  std::span<const double> probs() const noexcept { return probs_; }

 private:
  std::vector<double> probs_;
};

enum class DivergenceKind { None, KL, Custom };

/// Admissible set of reweightings: density ratio capped at 1/alpha, plus an
/// optional f-divergence ball D_f(rho||pi) <= beta.
struct RiskSpec {
  double alpha = 1.0;
  DivergenceKind divergence = DivergenceKind::None;
  double beta = 0.0;
  /// Convex generator with f(1) = 0, used only for DivergenceKind::Custom.
  /// Must be finite on [0, 1/alpha].
  std::function<double(double)> f;

  static RiskSpec cvar(double alpha);
  /// KL ball with budget -ln(alpha) intersected with the CVaR cap.
  static RiskSpec evar(double alpha);
  static RiskSpec custom(double alpha, double beta, std::function<double(double)> f);

  void validate() const;
};

/// Per-subgroup empirical risks, each in [0, 1].
class SubgroupLosses {
 public:
  explicit SubgroupLosses(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t a) const noexcept { return values_[a]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

struct RiskSolution {
  std::vector<double> weights;
  double value = 0.0;
  bool feasible = false;
  double dual_gap = 0.0;
  int iterations = 0;
};

inline constexpr double kDefaultRiskTol = 1e-6;

/// Exact CVaR maximizer: fill caps pi_a/alpha in order of decreasing loss
/// (ties: lower index first) until the mass is exhausted.
RiskSolution cvar_weights(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                          double alpha);

/// Constrained f-entropic risk. Falls back to the exact CVaR path when the
/// divergence is inactive; otherwise dualizes the divergence constraint and
/// bisects its multiplier, returning a feasible point whose duality gap is
/// at most `tol`.
RiskSolution constrained_weights(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                                 const RiskSpec& spec, double tol = kDefaultRiskTol);

/// Danskin gradient of the risk value with respect to the subgroup losses.
std::vector<double> risk_gradient(const RiskSolution& solution);

/// D_f(rho || pi) with f(x) = x ln x (0 ln 0 = 0).
double kl_divergence(std::span<const double> rho, std::span<const double> pi);

/// D_f(rho || pi) for the divergence kind in `spec` (0 for None).
double f_divergence(std::span<const double> rho, std::span<const double> pi, const RiskSpec& spec);

/// Brute-force maximum of sum_a rho_a L_a over a grid of the feasible set.
/// Only for n <= 4. The search is multi-level: a uniform grid at step 0.01
/// (cap endpoints included) followed by windowed re-centering and refinement
/// down to `resolution`. Independent of the sort-based and dual solvers.
double oracle_risk_grid(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                        const RiskSpec& spec, double resolution);

/// Maximum of the CVaR objective over every vertex of the capped simplex
/// (all coordinates at 0 or cap except at most one). Exponential in n.
double oracle_vertex_max(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                         double alpha);

}  // namespace subrisk
