#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lcirt/estimate.hpp"

namespace lcirt {

// Upper tail of the chi-square distribution, Q(df/2, x/2) via the
// regularized incomplete gamma function; absolute error below 1e-10.
double chi_square_sf(double x, int df);

struct LrTestResult {
  double deviance = 0.0;  // D = -2 (l0 - l1)
  int df = 0;             // parameter-count difference
  double p_value = 1.0;
};

// Nested-model likelihood ratio test; model 0 is the reduced one.
LrTestResult lr_test(double loglik0, int n_par0, double loglik1, int n_par1);

struct FitTableRow {
  std::string label;
  double loglik = 0.0;
  int n_par = 0;
  double bic = 0.0;
};

// ---- pure decision rules, replayable on externally supplied tables ----

// The k just before the first strict BIC increase (k_max if monotone
// decreasing, with boundary flag). bic_by_k[i] belongs to k = i+1.
int choose_k_from_bic(const std::vector<double>& bic_by_k,
                      bool* boundary = nullptr);

// Minimum-BIC candidate; ties within 1e-9 resolved by the fixed order
// global < local < continuation and flagged.
LinkKind choose_link_from_table(const std::vector<LinkKind>& links,
                                const std::vector<double>& bic,
                                bool* tie = nullptr);

struct DimChainDecision {
  int chosen_index = 0;              // into the fine-to-coarse candidate list
  std::vector<LrTestResult> tests;   // one per adjacent pair attempted
  std::vector<bool> accepted;
  std::vector<bool> df_zero;         // equal-capacity pair, coarser taken
};

// Walks a nested fine-to-coarse sequence of (loglik, n_par) fits, accepting
// each coarsening while p >= alpha; stops at the first rejection.
DimChainDecision decide_dimensionality(
    const std::vector<std::pair<double, int>>& fits, double alpha);

struct ConstraintTest {
  std::string constrained_label;
  std::string reference_label;
  LrTestResult lr;
  bool accepted = false;
};

enum class Regime { FreeFree = 0, FreeRs = 1, ConstrFree = 2, ConstrRs = 3 };

struct ConstraintDecision {
  Regime chosen = Regime::FreeFree;
  std::vector<ConstraintTest> tests;
};

// Table-8 style chain: test each single-constraint model against the free
// model, then the doubly-constrained model against the surviving winner.
// Entries are (loglik, n_par); rating-scale regimes may be absent.
ConstraintDecision decide_item_constraints(
    const std::pair<double, int>& free_free,
    const std::optional<std::pair<double, int>>& free_rs,
    const std::optional<std::pair<double, int>>& constr_free,
    const std::optional<std::pair<double, int>>& constr_rs, double alpha,
    int n);

// ---- fitting steps of the selection pipeline ----

struct KSelection {
  int chosen_k = 1;
  bool boundary = false;
  std::vector<FitTableRow> table;
  std::vector<LcFitResult> fits;
};

KSelection choose_k(const ResponseDataset& data, int k_max,
                    const EmControls& controls);

struct LinkSelection {
  LinkKind chosen = LinkKind::Global;
  bool tie = false;
  std::vector<FitTableRow> table;
};

// Fits the per-item-dimension Free/Free model for each candidate link.
LinkSelection choose_link(const ResponseDataset& data, int n_classes,
                          const std::vector<LinkKind>& links,
                          const EmControls& controls);

// An item partition: one group of 0-based item indices per dimension.
using Partition = std::vector<std::vector<int>>;

Partition per_item_partition(int n_items);
Partition single_partition(int n_items);
std::string partition_label(const Partition& partition, int n_items);

// Builds the Free/Free spec induced by a partition.
ModelSpec spec_for_partition(const ResponseDataset& data, int n_classes,
                             LinkKind link, const Partition& partition);

struct DimSelection {
  int chosen_index = 0;
  Partition chosen;
  std::vector<FitTableRow> table;
  DimChainDecision decision;
};

// Candidates must be ordered fine to coarse; each must coarsen the previous.
DimSelection test_dimensionality(const ResponseDataset& data, int n_classes,
                                 LinkKind link,
                                 const std::vector<Partition>& partitions,
                                 const EmControls& controls);

struct ConstraintSelection {
  Regime chosen = Regime::FreeFree;
  Discrimination discrimination = Discrimination::Free;
  Difficulty difficulty = Difficulty::Free;
  std::vector<FitTableRow> table;
  std::vector<ConstraintTest> tests;
};

ConstraintSelection choose_item_constraints(const ResponseDataset& data,
                                            int n_classes, LinkKind link,
                                            const Partition& partition,
                                            const EmControls& controls);

enum class StopAfter { None, K, Link, Dim, Constraints };

struct PipelineConfig {
  int k_max = 4;
  std::vector<LinkKind> links{LinkKind::Global, LinkKind::Local};
  std::vector<Partition> partitions;  // empty: per-item then unidimensional
  double alpha = 0.05;
  EmControls controls;
  StopAfter stop_after = StopAfter::None;
};

struct SelectionReport {
  int n = 0;
  StopAfter completed_through = StopAfter::None;

  KSelection k_step;
  LinkSelection link_step;
  DimSelection dim_step;
  ConstraintSelection constraint_step;

  ModelSpec final_spec;
  std::optional<FitResult> final_fit;
  std::vector<std::string> warnings;

  // a step failure aborts the pipeline; the report keeps every completed
  // step and records the reason here
  bool aborted = false;
  std::string abort_reason;
  std::string abort_kind;  // "usage" | "parse" | "numeric"
};

SelectionReport run_selection_pipeline(const ResponseDataset& data,
                                       const PipelineConfig& config);

}  // namespace lcirt
