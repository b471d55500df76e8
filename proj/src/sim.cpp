#include "lcirt/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lcirt/errors.hpp"
#include "lcirt/rng.hpp"

namespace lcirt {

namespace {

int draw_from(const Eigen::VectorXd& probs, double u) {
  double cum = 0.0;
  for (Eigen::Index x = 0; x + 1 < probs.size(); ++x) {
    cum += probs[x];
    if (u < cum) return static_cast<int>(x);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

std::vector<std::vector<int>> sample_rows(const SimConfig& cfg) {
  cfg.spec.check();
  if (cfg.n < 1) throw UsageError("simulate: n must be at least 1");
  {
    const ValidationReport report = validate(cfg.spec, cfg.params);
    if (!report.ok()) {
      throw UsageError("simulate: invalid truth parameters: " +
                       report.violations.front());
    }
  }
  const auto table = conditional_prob_table(cfg.spec, cfg.params);

  std::vector<std::vector<int>> rows(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    SplitMix64 rng = substream(cfg.seed, static_cast<std::uint64_t>(i));
    const int c = draw_from(cfg.params.pi, rng.uniform01());
    auto& row = rows[i];
    row.resize(cfg.spec.n_items);
    for (int j = 0; j < cfg.spec.n_items; ++j) {
      row[j] = draw_from(table[c][j], rng.uniform01());
    }
  }
  return rows;
}

ResponseDataset sample_dataset(const SimConfig& cfg) {
  ResponseDataset data = aggregate(sample_rows(cfg), cfg.spec.categories);
  data.rng_name = "splitmix64";
  data.rng_seed = cfg.seed;
  return data;
}

RecoveryReport recovery_report(const SimConfig& truth,
                               const Parameters& fitted) {
  const ModelSpec& spec = truth.spec;
  const int k = spec.n_classes;
  if (fitted.pi.size() != k || fitted.xi.rows() != k) {
    throw UsageError("recovery_report: class count mismatch");
  }
  if (k > 6) {
    throw UsageError("recovery_report: alignment supports at most 6 classes");
  }

  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int c = 0; c < k; ++c) {
      for (int d = 0; d < spec.n_dims; ++d) {
        cost += std::abs(fitted.xi(perm[c], d) - truth.params.xi(c, d));
      }
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  RecoveryReport report;
  report.permutation = best;
  for (int c = 0; c < k; ++c) {
    report.pi_max_err =
        std::max(report.pi_max_err,
                 std::abs(fitted.pi[best[c]] - truth.params.pi[c]));
    for (int d = 0; d < spec.n_dims; ++d) {
      report.xi_max_err =
          std::max(report.xi_max_err,
                   std::abs(fitted.xi(best[c], d) - truth.params.xi(c, d)));
    }
  }
  for (int j = 0; j < spec.n_items; ++j) {
    report.gamma_max_err =
        std::max(report.gamma_max_err,
                 std::abs(fitted.gamma[j] - truth.params.gamma[j]));
  }

  double abs_sum = 0.0;
  int count = 0;
  if (spec.difficulty == Difficulty::Free) {
    for (int j = 0; j < spec.n_items; ++j) {
      for (Eigen::Index x = 0; x < truth.params.beta_free[j].size(); ++x) {
        abs_sum +=
            std::abs(fitted.beta_free[j][x] - truth.params.beta_free[j][x]);
        ++count;
      }
    }
  } else {
    for (int j = 0; j < spec.n_items; ++j) {
      abs_sum += std::abs(fitted.beta_rs[j] - truth.params.beta_rs[j]);
      ++count;
    }
    for (Eigen::Index x = 0; x < truth.params.tau.size(); ++x) {
      abs_sum += std::abs(fitted.tau[x] - truth.params.tau[x]);
      ++count;
    }
  }
  report.difficulty_mae = count > 0 ? abs_sum / count : 0.0;
  return report;
}

}  // namespace lcirt
