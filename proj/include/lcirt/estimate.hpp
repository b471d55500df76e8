#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcirt/data.hpp"
#include "lcirt/model.hpp"

namespace lcirt {

struct EmControls {
  double tol = 1e-8;       // relative log-likelihood change
  int max_iter = 5000;     // outer EM iterations
  int inner_max = 5;       // Fisher-scoring sweeps per M-step
  int n_random = 10;       // random starts beside the deterministic one
  std::uint64_t seed = 1;
  double pi_floor = 1e-12;
  int threads = 1;         // parallelism across starts
  bool trace = false;      // record per-iteration log-likelihood
};

struct FitSummary {
  double loglik = 0.0;
  int n_par = 0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  int start_id = 0;
};

struct FitResult {
  Parameters params;
  FitSummary summary;
  Eigen::MatrixXd posterior;       // n_patterns x k, rows sum to 1
  std::vector<double> trace;       // filled when controls.trace
  std::vector<std::string> notes;  // pi floor hits, stalled inner steps
};

// Expected complete-data frequencies from one E-step.
struct ExpectedCounts {
  Eigen::MatrixXd m_hat;              // k x n_patterns
  Eigen::VectorXd m_c;                // per-class totals
  std::vector<Eigen::MatrixXd> m_cj;  // per item: k x l_j category counts
};

double compute_bic(double loglik, int n_par, int n);

double log_likelihood(const ModelSpec& spec, const Parameters& params,
                      const ResponseDataset& data);

ExpectedCounts e_step(const ModelSpec& spec, const Parameters& params,
                      const ResponseDataset& data);

// Closed-form class-weight update pi_c = m_c / n (floored, renormalized).
Eigen::VectorXd m_step_pi(const ExpectedCounts& counts, int n,
                          double pi_floor = 1e-12, bool* floored = nullptr);

// sum_c m_c log pi_c + sum_c sum_j m_cj' log lambda_cj (full category range)
double expected_complete_loglik(const ModelSpec& spec,
                                const Parameters& params,
                                const ExpectedCounts& counts);

struct FisherScores {
  Eigen::VectorXd score_phi;
  Eigen::MatrixXd info_phi;
  Eigen::VectorXd score_gamma;  // aligned with PackedParams::gamma_free
  Eigen::VectorXd info_gamma;
};

// Score and expected information of the expected complete log-likelihood.
// The (m_cj - m_c lambda_cj) contrasts and diag(lambda)-lambda lambda'
// blocks range over categories 1..l_j-1 (category 0 dropped).
FisherScores fisher_scores(const ModelSpec& spec, const Parameters& params,
                           const ExpectedCounts& counts);

struct MStepStatus {
  bool stalled = false;
  int sweeps = 0;
};

// One generalized M-step: alternate gamma and phi Fisher updates with
// step-halving until the expected complete log-likelihood does not
// decrease and global-link threshold ordering holds.
MStepStatus m_step_fisher(const ModelSpec& spec, Parameters& params,
                          const ExpectedCounts& counts,
                          const EmControls& controls);

FitResult fit_em(const ModelSpec& spec, const ResponseDataset& data,
                 const Parameters& init, const EmControls& controls);

// Deterministic start plus n_random seeded perturbations.
std::vector<Parameters> make_starts(const ModelSpec& spec,
                                    const ResponseDataset& data,
                                    int n_random, std::uint64_t seed);

// Best fit over all starts; ties broken by lowest start id.
FitResult fit_multistart(const ModelSpec& spec, const ResponseDataset& data,
                         const EmControls& controls);

// Standard latent class model: free conditional multinomials per
// class-item, closed-form M-step.
struct LcParameters {
  Eigen::VectorXd pi;
  std::vector<Eigen::MatrixXd> lambda;  // per item: k x l_j
};

struct LcFitResult {
  LcParameters params;
  FitSummary summary;
  Eigen::MatrixXd posterior;
  std::vector<double> trace;
  std::vector<std::string> notes;
};

LcFitResult fit_standard_lc(int n_classes, const ResponseDataset& data,
                            const EmControls& controls);

}  // namespace lcirt
