#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace lcirt {

// Aggregated response data: distinct patterns with frequencies, in
// lexicographic pattern order. Only observed configurations are stored.
struct ResponseDataset {
  int n = 0;  // respondents
  int r = 0;  // items
  std::vector<int> categories;              // l_j per item
  std::vector<std::vector<int>> patterns;   // distinct response patterns
  std::vector<int> counts;                  // n_x, aligned with patterns
  std::vector<std::string> warnings;        // e.g. constant columns

  // generator provenance when produced by the simulator
  std::string rng_name;
  std::uint64_t rng_seed = 0;

  std::size_t n_patterns() const { return patterns.size(); }
  void check() const;  // throws UsageError when invariants are broken
};

struct RawTable {
  std::vector<std::vector<int>> rows;
  int dropped_incomplete = 0;
};

// Comma-separated integers, one respondent per row. Rejects non-integer,
// negative, ragged or missing cells with their row/column location;
// drop_incomplete instead deletes rows containing missing cells listwise.
RawTable load_csv_rows(const std::string& path, bool has_header,
                       bool drop_incomplete = false);

// Category counts are inferred as max+1 per column (floored at 2) unless
// overridden; an override smaller than an observed value is rejected.
ResponseDataset aggregate(const std::vector<std::vector<int>>& rows,
                          const std::vector<int>& categories_override = {});

ResponseDataset load_csv(const std::string& path, bool has_header,
                         const std::vector<int>& categories_override = {},
                         bool drop_incomplete = false);

// Relative category frequencies of one item.
Eigen::VectorXd marginal_distribution(const ResponseDataset& data, int item);

// Per-respondent sums over an item subset; defined on raw rows only.
std::vector<int> raw_scores(const std::vector<std::vector<int>>& rows,
                            const std::vector<int>& items);

// Expands the aggregate back to one row per respondent (sorted).
std::vector<std::vector<int>> expand(const ResponseDataset& data);

void write_csv(const std::string& path,
               const std::vector<std::vector<int>>& rows);

}  // namespace lcirt
