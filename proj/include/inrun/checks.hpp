#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace inrun {

/// Outcome of one oracle-equivalence invariant.
struct CheckResult {
  std::string name;
  double observed = 0.0;  // worst error seen
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

/// Exact-math invariants against materialized or exhaustive oracles:
/// ghost dot products over `instances` random networks (batches of at most
/// 16 rows), Shapley axioms and the surrogate equivalence on `batch` players
/// (2..12), the frozen-second-moment reduction, and snapshot isolation.
std::vector<CheckResult> run_oracle_checks(std::size_t batch, std::uint64_t seed, std::size_t instances = 100);

}  // namespace inrun
