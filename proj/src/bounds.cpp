#include "subrisk/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "subrisk/error.hpp"

namespace subrisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    std::ostringstream os;
    os << name << " = " << v << " is outside [0, 1]";
    throw Error(ErrorCode::DomainError, os.str());
  }
}

double positive_part(double x) { return x > 0.0 ? x : 0.0; }

// Additive bound: fills bound/certificate/vacuous from risk + complexity.
void finish(BoundReport& r) {
  r.bound = r.empirical_risk + r.complexity;
  r.certificate = std::min(r.bound, 1.0);
  r.vacuous = !(r.bound < 1.0);
  r.components["empirical_risk"] = r.empirical_risk;
  r.components["complexity"] = r.complexity;
  r.components["bound"] = r.bound;
}

// E_{a~pi}[(kl+ + ln(2 n n_priors sqrt(m_a) / delta)) / (alpha m_a)] and its
// derivative with respect to the (positive part of the) kl term.
std::pair<double, double> subgroup_eps(const BoundContext& ctx) {
  const double kl = positive_part(ctx.kl_term);
  const double n = static_cast<double>(ctx.n());
  const double np = static_cast<double>(ctx.n_priors);
  double eps = 0.0, slope = 0.0;
  for (std::size_t a = 0; a < ctx.n(); ++a) {
    const double ma = static_cast<double>(ctx.sizes[a]);
    const double log_term = std::log(2.0 * n * np * std::sqrt(ma) / ctx.delta);
    eps += ctx.pi[a] * (kl + log_term) / (ctx.alpha * ma);
    slope += ctx.pi[a] / (ctx.alpha * ma);
  }
  return {eps, ctx.kl_term > 0.0 ? slope : 0.0};
}

void require_mode(const BoundContext& ctx, SubgroupMode mode, const char* bound) {
  ctx.validate();
  if (ctx.mode != mode) {
    std::ostringstream os;
    os << bound << " requires "
       << (mode == SubgroupMode::ByClass ? "class-subgroup" : "per-example") << " mode";
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
}

}  // namespace

double kl_bernoulli(double a, double b) {
  check_unit(a, "a");
  check_unit(b, "b");
  double d = 0.0;
  if (a > 0.0) {
    if (b == 0.0) return kInf;
    d += a * std::log(a / b);
  }
  if (a < 1.0) {
    if (b == 1.0) return kInf;
    d += (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  }
  return std::max(d, 0.0);
}

double kl_plus(double a, double b) {
  check_unit(a, "a");
  check_unit(b, "b");
  return a <= b ? kl_bernoulli(a, b) : 0.0;
}

double kl_inverse(double a, double eps) {
  check_unit(a, "a");
  if (!(eps >= 0.0)) throw Error(ErrorCode::DomainError, "eps must be non-negative");
  if (eps == 0.0) return a;
  if (a == 1.0 || eps == kInf) return 1.0;
  // kl(a, b) may stay below eps all the way up to 1 in floating point.
  if (kl_bernoulli(a, std::nextafter(1.0, 0.0)) <= eps) return 1.0;
  double lo = a, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (kl_bernoulli(a, mid) <= eps) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::string_view to_string(BoundKind kind) noexcept {
  switch (kind) {
    case BoundKind::SubgroupsSqrt: return "subgroups_sqrt";
    case BoundKind::SubgroupsKl: return "subgroups_kl";
    case BoundKind::OneExampleDis: return "one_example_dis";
    case BoundKind::OneExampleClassical: return "one_example_classical";
    case BoundKind::MhammediEstimate: return "mhammedi_estimate";
  }
  return "unknown";
}

BoundKind parse_bound_kind(std::string_view name) {
  for (BoundKind k : {BoundKind::SubgroupsSqrt, BoundKind::SubgroupsKl, BoundKind::OneExampleDis,
                      BoundKind::OneExampleClassical, BoundKind::MhammediEstimate}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown bound kind '" + std::string(name) + "'");
}

SubgroupMode required_mode(BoundKind kind) noexcept {
  return kind == BoundKind::SubgroupsSqrt || kind == BoundKind::SubgroupsKl
             ? SubgroupMode::ByClass
             : SubgroupMode::PerExample;
}

bool uses_classical_kl(BoundKind kind) noexcept {
  return kind == BoundKind::OneExampleClassical || kind == BoundKind::MhammediEstimate;
}

BoundContext BoundContext::by_class(std::vector<std::size_t> sizes, std::vector<double> pi,
                                    double alpha, double delta, std::size_t n_priors,
                                    double kl_term) {
  BoundContext ctx;
  ctx.m = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  ctx.sizes = std::move(sizes);
  ctx.pi = std::move(pi);
  ctx.alpha = alpha;
  ctx.delta = delta;
  ctx.n_priors = n_priors;
  ctx.kl_term = kl_term;
  ctx.mode = SubgroupMode::ByClass;
  ctx.validate();
  return ctx;
}

BoundContext BoundContext::per_example(std::size_t m, double alpha, double delta, double lambda,
                                       std::size_t n_priors, double kl_term) {
  BoundContext ctx;
  ctx.m = m;
  ctx.sizes.assign(m, 1);
  ctx.pi.assign(m, m > 0 ? 1.0 / static_cast<double>(m) : 0.0);
  ctx.alpha = alpha;
  ctx.delta = delta;
  ctx.lambda = lambda;
  ctx.n_priors = n_priors;
  ctx.kl_term = kl_term;
  ctx.mode = SubgroupMode::PerExample;
  ctx.validate();
  return ctx;
}

void BoundContext::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
  if (!(delta > 0.0 && delta <= 1.0)) fail("delta must lie in (0, 1]");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::AlphaOutOfRange, "alpha must lie in (0, 1]");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be positive");
  if (n_priors < 1) fail("n_priors must be at least 1");
  if (m < 1 || sizes.empty()) fail("bound context needs at least one example");
  if (pi.size() != sizes.size()) fail("reference distribution and subgroup sizes differ in length");
  if (std::isnan(kl_term)) fail("kl_term is NaN");
  std::size_t total = 0;
  for (std::size_t s : sizes) {
    if (s < 1) fail("every subgroup needs at least one example");
    total += s;
  }
  if (total != m) fail("subgroup sizes do not sum to m");
  if (mode == SubgroupMode::PerExample && sizes.size() != m) {
    fail("per-example mode needs one subgroup per example");
  }
}

BoundReport bound_subgroups_kl(double empirical_risk, const BoundContext& ctx) {
  require_mode(ctx, SubgroupMode::ByClass, "subgroups_kl");
  check_unit(empirical_risk, "empirical risk");
  const auto [eps, eps_slope] = subgroup_eps(ctx);
  BoundReport r;
  r.kind = BoundKind::SubgroupsKl;
  r.empirical_risk = empirical_risk;
  r.bound = kl_inverse(empirical_risk, eps);
  r.complexity = r.bound - empirical_risk;
  r.certificate = std::min(r.bound, 1.0);
  r.vacuous = !(r.bound < 1.0);

  // Implicit differentiation of kl(R || b) = eps.
  const double b = r.bound;
  if (b >= 1.0) {
    r.d_empirical = 0.0;
    r.d_kl = 0.0;
  } else if (b - empirical_risk < 1e-15) {
    r.d_empirical = 1.0;
    r.d_kl = 0.0;
  } else {
    const double a = std::max(empirical_risk, 1e-12);
    const double dkl_db = (b - a) / (b * (1.0 - b));
    const double dkl_da = std::log(a / b) - std::log((1.0 - a) / (1.0 - b));
    r.d_empirical = -dkl_da / dkl_db;
    r.d_kl = eps_slope / dkl_db;
  }
  r.components = {{"empirical_risk", empirical_risk},
                  {"kl_term", positive_part(ctx.kl_term)},
                  {"eps", eps},
                  {"complexity", r.complexity},
                  {"bound", r.bound}};
  return r;
}

BoundReport bound_subgroups_sqrt(double empirical_risk, const BoundContext& ctx) {
  require_mode(ctx, SubgroupMode::ByClass, "subgroups_sqrt");
  check_unit(empirical_risk, "empirical risk");
  const auto [eps, eps_slope] = subgroup_eps(ctx);
  BoundReport r;
  r.kind = BoundKind::SubgroupsSqrt;
  r.empirical_risk = empirical_risk;
  r.complexity = std::sqrt(eps / 2.0);
  r.d_empirical = 1.0;
  r.d_kl = r.complexity > 0.0 ? (eps_slope / 2.0) / (2.0 * r.complexity) : 0.0;
  finish(r);
  r.components["kl_term"] = positive_part(ctx.kl_term);
  r.components["eps"] = eps;
  return r;
}

namespace {

BoundReport one_example(BoundKind kind, double empirical_risk, double kl, double extra,
                        const BoundContext& ctx) {
  const double m = static_cast<double>(ctx.m);
  const double coef = 1.0 + 1.0 / ctx.lambda;
  const double log_term =
      std::log(2.0 * static_cast<double>(ctx.n_priors) * (ctx.lambda + 1.0) / ctx.delta);
  const double inner = coef * positive_part(kl) + log_term + extra;
  BoundReport r;
  r.kind = kind;
  r.empirical_risk = empirical_risk;
  r.complexity = std::sqrt(std::max(inner, 0.0) / (2.0 * m)) / ctx.alpha;
  r.d_empirical = 1.0;
  r.d_kl = (kl > 0.0 && r.complexity > 0.0)
               ? coef / (2.0 * m * ctx.alpha * ctx.alpha) / (2.0 * r.complexity)
               : 0.0;
  finish(r);
  r.components["kl_term"] = positive_part(kl);
  r.components["log_term"] = log_term;
  r.components["kl_coefficient"] = coef;
  if (extra != 0.0) r.components["constant"] = extra;
  return r;
}

}  // namespace

BoundReport bound_one_example_dis(double empirical_risk, const BoundContext& ctx) {
  require_mode(ctx, SubgroupMode::PerExample, "one_example_dis");
  check_unit(empirical_risk, "empirical risk");
  return one_example(BoundKind::OneExampleDis, empirical_risk, ctx.kl_term, 0.0, ctx);
}

BoundReport bound_one_example_classical(double empirical_risk, double kl_classical,
                                        const BoundContext& ctx) {
  require_mode(ctx, SubgroupMode::PerExample, "one_example_classical");
  check_unit(empirical_risk, "empirical risk");
  return one_example(BoundKind::OneExampleClassical, empirical_risk, kl_classical, 3.5, ctx);
}

BoundReport bound_mhammedi_estimate(double empirical_risk, double kl_classical,
                                    const BoundContext& ctx) {
  require_mode(ctx, SubgroupMode::PerExample, "mhammedi_estimate");
  check_unit(empirical_risk, "empirical risk");
  const double m = static_cast<double>(ctx.m);
  const double am = ctx.alpha * m;
  const double steps = std::max(1.0, std::ceil(std::log2(m / ctx.alpha)));
  const double g = std::log(2.0 * static_cast<double>(ctx.n_priors) * steps / ctx.delta);
  const double kl = positive_part(kl_classical);
  const double kbar = kl + g;
  const double rate = std::sqrt(g / (2.0 * am)) + g / (3.0 * am);
  const double c = 27.0 / (5.0 * am);
  const double cross = std::sqrt(c * empirical_risk * kbar);
  BoundReport r;
  r.kind = BoundKind::MhammediEstimate;
  r.estimate = true;
  r.empirical_risk = empirical_risk;
  r.complexity = 2.0 * empirical_risk * rate + cross + c * kbar;

  const double r_safe = std::max(empirical_risk, 1e-12);
  r.d_empirical = 1.0 + 2.0 * rate + c * kbar / (2.0 * std::sqrt(c * r_safe * kbar));
  r.d_kl = kl_classical > 0.0 ? c * empirical_risk / (2.0 * std::max(cross, 1e-300)) + c : 0.0;
  finish(r);
  r.components["kl_term"] = kl;
  r.components["log_term"] = g;
  r.components["ceil_log2_m_over_alpha"] = steps;
  r.components["rate_term"] = 2.0 * empirical_risk * rate;
  r.components["cross_term"] = cross;
  r.components["linear_term"] = c * kbar;
  return r;
}

BoundReport compute_bound(BoundKind kind, double empirical_risk, double kl_disintegrated,
                          double kl_classical, BoundContext ctx) {
  ctx.kl_term = uses_classical_kl(kind) ? kl_classical : kl_disintegrated;
  switch (kind) {
    case BoundKind::SubgroupsSqrt: return bound_subgroups_sqrt(empirical_risk, ctx);
    case BoundKind::SubgroupsKl: return bound_subgroups_kl(empirical_risk, ctx);
    case BoundKind::OneExampleDis: return bound_one_example_dis(empirical_risk, ctx);
    case BoundKind::OneExampleClassical:
      return bound_one_example_classical(empirical_risk, kl_classical, ctx);
    case BoundKind::MhammediEstimate:
      return bound_mhammedi_estimate(empirical_risk, kl_classical, ctx);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown bound kind");
}

}  // namespace subrisk
