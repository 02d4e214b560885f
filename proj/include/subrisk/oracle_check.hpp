#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace subrisk {

struct OracleCheckResult {
  std::size_t cvar_instances = 0;
  std::size_t evar_instances = 0;
  double max_grid_error = 0.0;    // |cvar_weights - grid oracle|
  double max_vertex_error = 0.0;  // |cvar_weights - vertex enumeration|
  double max_evar_error = 0.0;    // |constrained_weights - grid oracle|, n = 2
  std::size_t grid_failures = 0;
  std::size_t vertex_failures = 0;
  std::size_t evar_failures = 0;
  double seconds = 0.0;
  std::vector<std::string> messages;  // one per failing instance (capped)

  bool passed() const noexcept { return grid_failures + vertex_failures + evar_failures == 0; }
};

struct OracleCheckOptions {
  std::size_t cvar_instances = 500;
  std::size_t evar_instances = 200;
  double grid_resolution = 1e-4;
  double grid_tol = 2e-4;
  double vertex_tol = 1e-9;
  double evar_tol = 1e-3;
  std::uint64_t seed = 0;
};

/// Random instances with n <= 4 subgroups; the sort-based CVaR solver is
/// compared against the grid and vertex oracles, the dual EVaR solver
/// against the grid oracle on two subgroups.
OracleCheckResult run_oracle_check(const OracleCheckOptions& options = {});

}  // namespace subrisk
