#include "subrisk/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "subrisk/error.hpp"

namespace subrisk {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    std::ostringstream os;
    os << "alpha must lie in (0, 1], got " << alpha;
    throw Error(ErrorCode::AlphaOutOfRange, os.str());
  }
}

void check_lengths(const SubgroupLosses& losses, const ReferenceDistribution& pi) {
  if (losses.size() != pi.size()) {
    std::ostringstream os;
    os << losses.size() << " subgroup losses for a reference distribution over " << pi.size()
       << " subgroups";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Maximizer of r*slope - mu*f(r) on [0, cap] for the KL generator, computed
// in log space so that tiny multipliers do not overflow.
double kl_coordinate(double slope, double mu, double cap) {
  const double t = slope / mu - 1.0;
  if (t >= std::log(cap)) return cap;
  return std::exp(t);
}

// Golden-section search of the concave map r -> r*slope - mu*f(r) on [0, cap].
double generic_coordinate(double slope, double mu, double cap,
                          const std::function<double(double)>& f) {
  const auto obj = [&](double r) { return r * slope - mu * f(r); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = cap;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = obj(x1), f2 = obj(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, cap); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = obj(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = obj(x1);
    }
  }
  const double mid = 0.5 * (lo + hi);
  double best = mid, best_val = obj(mid);
  for (double r : {0.0, cap}) {
    const double v = obj(r);
    if (v > best_val) best = r, best_val = v;
  }
  return best;
}

// Solves the Lagrangian max_{rho in capped simplex} sum rho_a L_a - mu D_f(rho||pi)
// for a fixed multiplier mu > 0. The simplex multiplier nu is bisected; the
// returned weights are the convex combination of the two bracket ends that
// has unit mass exactly.
std::vector<double> lagrangian_weights(std::span<const double> losses, std::span<const double> pi,
                                       const RiskSpec& spec, double mu) {
  const std::size_t n = losses.size();
  std::vector<double> ratio(n);
  const auto ratios_at = [&](double nu, std::vector<double>& out) {
    double mass = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      const double cap = 1.0 / spec.alpha;
      const double slope = losses[a] - nu;
      const double r = spec.divergence == DivergenceKind::KL
                           ? kl_coordinate(slope, mu, cap)
                           : generic_coordinate(slope, mu, cap, spec.f);
      out[a] = r;
      mass += pi[a] * r;
    }
    return mass;
  };

  const auto [lmin, lmax] = std::minmax_element(losses.begin(), losses.end());
  double lo = *lmin - 1.0, hi = *lmax + 1.0;
  std::vector<double> r_lo(n), r_hi(n);
  double m_lo = ratios_at(lo, r_lo);
  for (int k = 0; m_lo < 1.0 && k < 2000; ++k) {
    lo -= std::max(1.0, std::abs(lo));
    m_lo = ratios_at(lo, r_lo);
  }
  double m_hi = ratios_at(hi, r_hi);
  for (int k = 0; m_hi > 1.0 && k < 2000; ++k) {
    hi += std::max(1.0, std::abs(hi));
    m_hi = ratios_at(hi, r_hi);
  }
  std::vector<double> r_mid(n);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double m_mid = ratios_at(mid, r_mid);
    if (m_mid >= 1.0) {
      lo = mid;
      m_lo = m_mid;
      r_lo.swap(r_mid);
    } else {
      hi = mid;
      m_hi = m_mid;
      r_hi.swap(r_mid);
    }
  }
  const double t = m_lo > m_hi ? (1.0 - m_hi) / (m_lo - m_hi) : 1.0;
  std::vector<double> rho(n);
  for (std::size_t a = 0; a < n; ++a) {
    rho[a] = pi[a] * (t * r_lo[a] + (1.0 - t) * r_hi[a]);
  }
  return rho;
}

}  // namespace

ReferenceDistribution::ReferenceDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorCode::InvalidArgument, "empty reference distribution");
  long double sum = 0.0L;
  for (std::size_t a = 0; a < probs_.size(); ++a) {
    if (!(probs_[a] > 0.0) || !std::isfinite(probs_[a])) {
      std::ostringstream os;
      os << "reference probability of subgroup " << a << " must be positive, got " << probs_[a];
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
    sum += probs_[a];
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "reference distribution sums to " << static_cast<double>(sum);
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
}

ReferenceDistribution ReferenceDistribution::uniform(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty reference distribution");
  return ReferenceDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ReferenceDistribution ReferenceDistribution::from_counts(std::span<const std::size_t> counts) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<double> probs(counts.size());
  for (std::size_t a = 0; a < counts.size(); ++a) {
    probs[a] = static_cast<double>(counts[a]) / static_cast<double>(total);
  }
  return ReferenceDistribution(std::move(probs));
}

RiskSpec RiskSpec::cvar(double alpha) {
  RiskSpec s;
  s.alpha = alpha;
  s.validate();
  return s;
}

RiskSpec RiskSpec::evar(double alpha) {
  check_alpha(alpha);
  RiskSpec s;
  s.alpha = alpha;
  s.divergence = DivergenceKind::KL;
  s.beta = -std::log(alpha);
  return s;
}

RiskSpec RiskSpec::custom(double alpha, double beta, std::function<double(double)> f) {
  RiskSpec s;
  s.alpha = alpha;
  s.divergence = DivergenceKind::Custom;
  s.beta = beta;
  s.f = std::move(f);
  s.validate();
  return s;
}

void RiskSpec::validate() const {
  check_alpha(alpha);
  if (divergence == DivergenceKind::None) return;
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::InvalidArgument, "divergence budget beta must be finite and >= 0");
  }
  if (divergence == DivergenceKind::Custom && !f) {
    throw Error(ErrorCode::InvalidArgument, "custom divergence requires a generator f");
  }
}

SubgroupLosses::SubgroupLosses(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t a = 0; a < values_.size(); ++a) {
    if (!(values_[a] >= 0.0 && values_[a] <= 1.0)) {
      std::ostringstream os;
      os << "subgroup loss " << a << " = " << values_[a] << " is outside [0, 1]";
      throw Error(ErrorCode::DomainError, os.str());
    }
  }
}

RiskSolution cvar_weights(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                          double alpha) {
  check_alpha(alpha);
  check_lengths(losses, pi);
  const std::size_t n = losses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] > losses[b]; });

  RiskSolution sol;
  sol.weights.assign(n, 0.0);
  double remaining = 1.0;
  for (std::size_t a : order) {
    if (remaining <= 0.0) break;
    const double w = std::min(pi[a] / alpha, remaining);
    sol.weights[a] = w;
    remaining -= w;
  }
  sol.value = dot(sol.weights, losses.values());
  sol.feasible = true;
  return sol;
}

double kl_divergence(std::span<const double> rho, std::span<const double> pi) {
  double d = 0.0;
  for (std::size_t a = 0; a < rho.size(); ++a) {
    if (rho[a] > 0.0) d += rho[a] * std::log(rho[a] / pi[a]);
  }
  return d;
}

double f_divergence(std::span<const double> rho, std::span<const double> pi, const RiskSpec& spec) {
  switch (spec.divergence) {
    case DivergenceKind::None: return 0.0;
    case DivergenceKind::KL: return kl_divergence(rho, pi);
    case DivergenceKind::Custom: {
      double d = 0.0;
      for (std::size_t a = 0; a < rho.size(); ++a) d += pi[a] * spec.f(rho[a] / pi[a]);
      return d;
    }
  }
  return 0.0;
}

RiskSolution constrained_weights(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                                 const RiskSpec& spec, double tol) {
  spec.validate();
  check_lengths(losses, pi);
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "solver tolerance must be positive");

  RiskSolution capped = cvar_weights(losses, pi, spec.alpha);
  if (spec.divergence == DivergenceKind::None) return capped;
  if (f_divergence(capped.weights, pi.probs(), spec) <= spec.beta) return capped;

  // A zero budget leaves only rho = pi for a strictly convex generator.
  if (spec.beta == 0.0) {
    RiskSolution sol;
    sol.weights.assign(pi.probs().begin(), pi.probs().end());
    sol.value = dot(sol.weights, losses.values());
    sol.feasible = true;
    return sol;
  }

  const auto divergence_at = [&](double mu, std::vector<double>& rho) {
    rho = lagrangian_weights(losses.values(), pi.probs(), spec, mu);
    return f_divergence(rho, pi.probs(), spec);
  };

  int iterations = 0;
  double mu_lo = 0.0, mu_hi = 1.0;
  std::vector<double> rho_hi, rho_mid;
  double d_hi = divergence_at(mu_hi, rho_hi);
  while (d_hi > spec.beta) {
    ++iterations;
    if (mu_hi > 1e200) {
      std::ostringstream os;
      os << "multiplier bracket did not close after " << iterations << " expansions";
      throw Error(ErrorCode::SolverDidNotConverge, os.str());
    }
    mu_lo = mu_hi;
    mu_hi *= 4.0;
    d_hi = divergence_at(mu_hi, rho_hi);
  }

  constexpr int kMaxIterations = 400;
  double gap = mu_hi * (spec.beta - d_hi);
  while (gap > tol) {
    if (++iterations > kMaxIterations) {
      std::ostringstream os;
      os << "no convergence after " << iterations << " iterations, last duality gap " << gap;
      throw Error(ErrorCode::SolverDidNotConverge, os.str());
    }
    const double mid = 0.5 * (mu_lo + mu_hi);
    if (mid <= mu_lo || mid >= mu_hi) {
      std::ostringstream os;
      os << "multiplier bracket collapsed after " << iterations << " iterations, last duality gap "
         << gap;
      throw Error(ErrorCode::SolverDidNotConverge, os.str());
    }
    const double d_mid = divergence_at(mid, rho_mid);
    if (d_mid <= spec.beta) {
      mu_hi = mid;
      d_hi = d_mid;
      rho_hi.swap(rho_mid);
      gap = mu_hi * (spec.beta - d_hi);
    } else {
      mu_lo = mid;
    }
  }

  RiskSolution sol;
  sol.weights = std::move(rho_hi);
  sol.value = dot(sol.weights, losses.values());
  sol.feasible = true;
  sol.dual_gap = gap;
  sol.iterations = iterations;
  return sol;
}

std::vector<double> risk_gradient(const RiskSolution& solution) { return solution.weights; }

// ---------------------------------------------------------------------------
// Oracles

namespace {

struct GridProblem {
  std::span<const double> losses;
  std::span<const double> pi;
  const RiskSpec& spec;
  std::vector<double> caps;  // upper bound per coordinate, clipped at 1
};

// Lattice points j*step inside [lo, hi], plus the interval ends that are
// true bounds of the coordinate (0 and its cap).
std::vector<double> axis_points(double lo, double hi, double step, double cap) {
  std::vector<double> pts;
  const auto j0 = static_cast<long long>(std::ceil(lo / step - 1e-9));
  const auto j1 = static_cast<long long>(std::floor(hi / step + 1e-9));
  for (long long j = j0; j <= j1; ++j) {
    const double x = static_cast<double>(j) * step;
    if (x >= 0.0 && x <= cap) pts.push_back(x);
  }
  if (lo <= 0.0) pts.push_back(0.0);
  if (hi >= cap) pts.push_back(cap);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

class GridSearch {
 public:
  explicit GridSearch(GridProblem p) : p_(std::move(p)), rho_(p_.losses.size()) {}

  // Objective at a point given by its free coordinates, or -inf if infeasible.
  double evaluate(std::span<const double> free) {
    const std::size_t n = p_.losses.size();
    double mass = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      rho_[i] = free[i];
      mass += free[i];
    }
    const double last = 1.0 - mass;
    if (last < -1e-12 || last > p_.caps[n - 1] + 1e-12) return kInfeasible;
    rho_[n - 1] = std::clamp(last, 0.0, p_.caps[n - 1]);
    if (p_.spec.divergence != DivergenceKind::None &&
        f_divergence(rho_, p_.pi, p_.spec) > p_.spec.beta + 1e-12) {
      return kInfeasible;
    }
    return dot(rho_, p_.losses);
  }

  // Best point over the product of per-axis point sets.
  double search(const std::vector<std::vector<double>>& axes, std::vector<double>& best) {
    const std::size_t k = axes.size();
    std::vector<std::size_t> idx(k, 0);
    std::vector<double> point(k);
    double best_val = kInfeasible;
    while (true) {
      for (std::size_t i = 0; i < k; ++i) point[i] = axes[i][idx[i]];
      const double v = evaluate(point);
      if (v > best_val) {
        best_val = v;
        best = point;
      }
      std::size_t i = 0;
      while (i < k && ++idx[i] == axes[i].size()) idx[i++] = 0;
      if (i == k) break;
    }
    return best_val;
  }

  static constexpr double kInfeasible = -std::numeric_limits<double>::infinity();

 private:
  GridProblem p_;
  std::vector<double> rho_;
};

}  // namespace

double oracle_risk_grid(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                        const RiskSpec& spec, double resolution) {
  spec.validate();
  check_lengths(losses, pi);
  const std::size_t n = losses.size();
  if (n > 4) {
    throw Error(ErrorCode::TooManySubgroups, "grid oracle supports at most 4 subgroups");
  }
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  if (n == 1) return losses[0];

  std::vector<double> caps(n);
  for (std::size_t a = 0; a < n; ++a) caps[a] = std::min(1.0, pi[a] / spec.alpha);
  GridSearch grid({losses.values(), pi.probs(), spec, caps});
  const std::size_t k = n - 1;

  double step = std::max(resolution, 0.01);
  std::vector<std::vector<double>> axes(k);
  for (std::size_t i = 0; i < k; ++i) axes[i] = axis_points(0.0, caps[i], step, caps[i]);
  std::vector<double> center;
  double best = grid.search(axes, center);
  if (best == GridSearch::kInfeasible) {
    // The feasible set is thinner than the coarse lattice; start at pi.
    center.assign(pi.probs().begin(), pi.probs().end() - 1);
    best = grid.evaluate(center);
  }

  while (true) {
    // Re-center the window until the local maximum stops moving.
    for (int moves = 0; moves < 10000; ++moves) {
      const double radius = 5.0 * step;
      for (std::size_t i = 0; i < k; ++i) {
        axes[i] = axis_points(center[i] - radius, center[i] + radius, step, caps[i]);
      }
      std::vector<double> cand;
      const double v = grid.search(axes, cand);
      if (!(v > best + 1e-15)) break;
      best = v;
      center = cand;
    }
    if (step <= resolution) break;
    step = std::max(step / 10.0, resolution);
  }
  return best;
}

double oracle_vertex_max(const SubgroupLosses& losses, const ReferenceDistribution& pi,
                         double alpha) {
  check_alpha(alpha);
  check_lengths(losses, pi);
  const std::size_t n = losses.size();
  if (n > 20) throw Error(ErrorCode::TooManySubgroups, "vertex enumeration limited to 20 subgroups");
  std::vector<double> caps(n);
  for (std::size_t a = 0; a < n; ++a) caps[a] = pi[a] / alpha;

  double best = -std::numeric_limits<double>::infinity();
  const std::uint64_t masks = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < masks; ++mask) {
    // mask bit set: coordinate at its cap, clear: at zero. `free_idx == n`
    // means no fractional coordinate.
    for (std::size_t free_idx = 0; free_idx <= n; ++free_idx) {
      if (free_idx < n && (mask >> free_idx & 1U)) continue;
      double mass = 0.0, value = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        if (mask >> a & 1U) {
          mass += caps[a];
          value += caps[a] * losses[a];
        }
      }
      const double rest = 1.0 - mass;
      if (free_idx == n) {
        if (std::abs(rest) > 1e-12) continue;
      } else {
        if (rest < -1e-12 || rest > caps[free_idx] + 1e-12) continue;
        value += std::clamp(rest, 0.0, caps[free_idx]) * losses[free_idx];
      }
      best = std::max(best, value);
    }
  }
  return best;
}

}  // namespace subrisk
