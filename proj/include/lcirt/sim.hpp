#pragma once

#include <cstdint>
#include <vector>

#include "lcirt/data.hpp"
#include "lcirt/model.hpp"

namespace lcirt {

struct SimConfig {
  ModelSpec spec;
  Parameters params;
  int n = 0;
  std::uint64_t seed = 0;
};

// One respondent per SplitMix64 sub-stream: draw the class from pi, then
// each item response from its conditional distribution, all by CDF
// inversion. Identical seeds give identical datasets.
std::vector<std::vector<int>> sample_rows(const SimConfig& cfg);

// sample_rows aggregated, with generator provenance recorded.
ResponseDataset sample_dataset(const SimConfig& cfg);

struct RecoveryReport {
  std::vector<int> permutation;  // fitted class for each true class
  double pi_max_err = 0.0;
  double xi_max_err = 0.0;
  double gamma_max_err = 0.0;
  double difficulty_mae = 0.0;
};

// Aligns fitted classes to the truth by the permutation minimizing the
// total |xi| discrepancy (k <= 6), then reports absolute errors.
RecoveryReport recovery_report(const SimConfig& truth,
                               const Parameters& fitted);

}  // namespace lcirt
