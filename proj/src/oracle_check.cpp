#include "subrisk/oracle_check.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "subrisk/random.hpp"
#include "subrisk/risk.hpp"

namespace subrisk {

namespace {

constexpr std::size_t kMaxMessages = 20;

ReferenceDistribution random_pi(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) s += (x = u(rng));
  for (double& x : w) x /= s;
  // Renormalize the last entry so the sum check is exact.
  double head = 0.0;
  for (std::size_t a = 0; a + 1 < n; ++a) head += w[a];
  w.back() = 1.0 - head;
  return ReferenceDistribution(std::move(w));
}

SubgroupLosses random_losses(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> l(n);
  for (double& x : l) x = u(rng);
  return SubgroupLosses(std::move(l));
}

std::string describe(const SubgroupLosses& l, const ReferenceDistribution& pi, double alpha) {
  std::ostringstream os;
  os.precision(17);
  os << "alpha=" << alpha << " losses=(";
  for (std::size_t a = 0; a < l.size(); ++a) os << (a ? "," : "") << l[a];
  os << ") pi=(";
  for (std::size_t a = 0; a < pi.size(); ++a) os << (a ? "," : "") << pi[a];
  os << ")";
  return os.str();
}

}  // namespace

OracleCheckResult run_oracle_check(const OracleCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  OracleCheckResult out;
  Rng rng = make_rng(options.seed, 0x0dac1e);
  std::uniform_int_distribution<std::size_t> pick_n(1, 4);
  std::uniform_real_distribution<double> pick_alpha(0.05, 1.0);

  const auto note = [&](const std::string& what) {
    if (out.messages.size() < kMaxMessages) out.messages.push_back(what);
  };

  for (std::size_t t = 0; t < options.cvar_instances; ++t) {
    const std::size_t n = pick_n(rng);
    const auto pi = random_pi(n, rng);
    const auto losses = random_losses(n, rng);
    const double alpha = pick_alpha(rng);
    const double fast = cvar_weights(losses, pi, alpha).value;
    const double grid = oracle_risk_grid(losses, pi, RiskSpec::cvar(alpha), options.grid_resolution);
    const double vertex = oracle_vertex_max(losses, pi, alpha);
    const double eg = std::abs(fast - grid);
    const double ev = std::abs(fast - vertex);
    out.max_grid_error = std::max(out.max_grid_error, eg);
    out.max_vertex_error = std::max(out.max_vertex_error, ev);
    if (!(eg <= options.grid_tol)) {
      ++out.grid_failures;
      note("cvar vs grid " + std::to_string(eg) + ": " + describe(losses, pi, alpha));
    }
    if (!(ev <= options.vertex_tol)) {
      ++out.vertex_failures;
      note("cvar vs vertex " + std::to_string(ev) + ": " + describe(losses, pi, alpha));
    }
    ++out.cvar_instances;
  }

  for (std::size_t t = 0; t < options.evar_instances; ++t) {
    const auto pi = random_pi(2, rng);
    const auto losses = random_losses(2, rng);
    const double alpha = pick_alpha(rng);
    const RiskSpec spec = RiskSpec::evar(alpha);
    const double dual = constrained_weights(losses, pi, spec).value;
    const double grid = oracle_risk_grid(losses, pi, spec, options.grid_resolution);
    const double e = std::abs(dual - grid);
    out.max_evar_error = std::max(out.max_evar_error, e);
    if (!(e <= options.evar_tol)) {
      ++out.evar_failures;
      note("evar vs grid " + std::to_string(e) + ": " + describe(losses, pi, alpha));
    }
    ++out.evar_instances;
  }

  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace subrisk
