#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "subrisk/risk.hpp"

namespace subrisk {

/// Binary KL divergence kl(a||b) between Bernoulli(a) and Bernoulli(b), with
/// 0 ln 0 = 0. Returns +infinity where the divergence is unbounded.
double kl_bernoulli(double a, double b);

/// kl(a||b) if a <= b, 0 otherwise.
double kl_plus(double a, double b);

/// Largest b in [a, 1] with kl_plus(a, b) <= eps (bisection to machine
/// precision). Returns 1 when every b < 1 satisfies it.
double kl_inverse(double a, double eps);

enum class SubgroupMode { ByClass, PerExample };

enum class BoundKind {
  SubgroupsSqrt,        // sqrt (Pinsker) form over class subgroups
  SubgroupsKl,          // kl-inversion form over class subgroups
  OneExampleDis,        // one example per subgroup, disintegrated
  OneExampleClassical,  // one example per subgroup, classical (+3.5)
  MhammediEstimate,     // CVaR bound of Mhammedi et al., single-sample estimate
};

std::string_view to_string(BoundKind kind) noexcept;
BoundKind parse_bound_kind(std::string_view name);
SubgroupMode required_mode(BoundKind kind) noexcept;
/// True when the bound's divergence term is the closed-form Gaussian KL
/// rather than the disintegrated log density ratio.
bool uses_classical_kl(BoundKind kind) noexcept;

struct BoundContext {
  double delta = 0.05;
  std::size_t m = 0;                // sample count
  std::vector<std::size_t> sizes;   // m_a per subgroup
  std::vector<double> pi;           // reference distribution over subgroups
  double alpha = 1.0;
  double lambda = 1.0;
  std::size_t n_priors = 1;         // T * K prior candidates in the union bound
  double kl_term = 0.0;             // signed; clamped at 0 inside the formulas
  SubgroupMode mode = SubgroupMode::ByClass;

  std::size_t n() const noexcept { return sizes.size(); }

  static BoundContext by_class(std::vector<std::size_t> sizes, std::vector<double> pi,
                               double alpha, double delta, std::size_t n_priors = 1,
                               double kl_term = 0.0);
  static BoundContext per_example(std::size_t m, double alpha, double delta, double lambda = 1.0,
                                  std::size_t n_priors = 1, double kl_term = 0.0);

  void validate() const;
};

struct BoundReport {
  BoundKind kind = BoundKind::SubgroupsSqrt;
  double empirical_risk = 0.0;
  double complexity = 0.0;
  /// Unclamped bound value (may exceed 1).
  double bound = 0.0;
  /// min(bound, 1): what is reported as the certificate for [0,1] losses.
  double certificate = 0.0;
  bool vacuous = false;
  /// Set for the Mhammedi bound, whose expectation over the posterior is
  /// replaced by one sampled model.
  bool estimate = false;
  std::map<std::string, double> components;
  /// Partial derivatives of `bound` for gradient-based minimization.
  double d_empirical = 0.0;
  double d_kl = 0.0;
};

BoundReport bound_subgroups_kl(double empirical_risk, const BoundContext& ctx);
BoundReport bound_subgroups_sqrt(double empirical_risk, const BoundContext& ctx);
BoundReport bound_one_example_dis(double empirical_risk, const BoundContext& ctx);
BoundReport bound_one_example_classical(double empirical_risk, double kl_classical,
                                        const BoundContext& ctx);
BoundReport bound_mhammedi_estimate(double empirical_risk, double kl_classical,
                                    const BoundContext& ctx);

/// Dispatches on `kind`; the context's kl_term is replaced by the divergence
/// the bound uses (disintegrated or classical).
BoundReport compute_bound(BoundKind kind, double empirical_risk, double kl_disintegrated,
                          double kl_classical, BoundContext ctx);

}  // namespace subrisk
