#include "lcirt/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "lcirt/errors.hpp"
#include "lcirt/rng.hpp"

namespace lcirt {

namespace {

// Neumaier compensated summation; log-likelihoods are differenced at
// 1e-10 scale, plain accumulation is too noisy for that.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

void check_compatible(const ModelSpec& spec, const ResponseDataset& data) {
  if (data.r != spec.n_items) {
    throw UsageError("data has " + std::to_string(data.r) +
                     " items but the model spec has " +
                     std::to_string(spec.n_items));
  }
  for (int j = 0; j < data.r; ++j) {
    if (data.categories[j] > spec.categories[j]) {
      throw UsageError("item " + std::to_string(j + 1) + ": data shows " +
                       std::to_string(data.categories[j]) +
                       " categories, spec allows " +
                       std::to_string(spec.categories[j]));
    }
  }
}

// k x n_patterns matrix of p(x|c)
Eigen::MatrixXd class_pattern_probs(
    const ModelSpec& spec,
    const std::vector<std::vector<Eigen::VectorXd>>& table,
    const ResponseDataset& data) {
  const int k = spec.n_classes;
  const auto npat = data.n_patterns();
  Eigen::MatrixXd probs(k, static_cast<Eigen::Index>(npat));
  const bool log_space = spec.n_items > 20;
  for (int c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < npat; ++i) {
      const auto& pattern = data.patterns[i];
      if (log_space) {
        double acc = 0.0;
        for (int j = 0; j < spec.n_items; ++j) {
          acc += std::log(table[c][j][pattern[j]]);
        }
        probs(c, static_cast<Eigen::Index>(i)) = std::exp(acc);
      } else {
        double acc = 1.0;
        for (int j = 0; j < spec.n_items; ++j) {
          acc *= table[c][j][pattern[j]];
        }
        probs(c, static_cast<Eigen::Index>(i)) = acc;
      }
    }
  }
  return probs;
}

double loglik_from_probs(const Eigen::MatrixXd& probs,
                         const Eigen::VectorXd& pi,
                         const ResponseDataset& data) {
  CompensatedSum loglik;
  for (std::size_t i = 0; i < data.n_patterns(); ++i) {
    const double p = pi.dot(probs.col(static_cast<Eigen::Index>(i)));
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw UnderflowError("pattern " + std::to_string(i) +
                           " has zero manifest probability");
    }
    loglik.add(data.counts[i] * std::log(p));
  }
  return loglik.value();
}

}  // namespace

double compute_bic(double loglik, int n_par, int n) {
  if (n < 1) throw UsageError("compute_bic: n must be at least 1");
  return -2.0 * loglik + std::log(static_cast<double>(n)) * n_par;
}

double log_likelihood(const ModelSpec& spec, const Parameters& params,
                      const ResponseDataset& data) {
  check_compatible(spec, data);
  const auto table = conditional_prob_table(spec, params);
  return loglik_from_probs(class_pattern_probs(spec, table, data), params.pi,
                           data);
}

ExpectedCounts e_step(const ModelSpec& spec, const Parameters& params,
                      const ResponseDataset& data) {
  check_compatible(spec, data);
  const int k = spec.n_classes;
  const auto npat = static_cast<Eigen::Index>(data.n_patterns());
  const auto table = conditional_prob_table(spec, params);
  const Eigen::MatrixXd probs = class_pattern_probs(spec, table, data);

  ExpectedCounts counts;
  counts.m_hat.resize(k, npat);
  for (Eigen::Index i = 0; i < npat; ++i) {
    Eigen::VectorXd joint = params.pi.cwiseProduct(probs.col(i));
    const double denom = joint.sum();
    if (!(denom > 0.0) || !std::isfinite(denom)) {
      throw UnderflowError("pattern " + std::to_string(i) +
                           " underflows in every class");
    }
    counts.m_hat.col(i) = joint * (data.counts[i] / denom);
  }
  counts.m_c = counts.m_hat.rowwise().sum();
  counts.m_cj.resize(spec.n_items);
  for (int j = 0; j < spec.n_items; ++j) {
    counts.m_cj[j] = Eigen::MatrixXd::Zero(k, spec.categories[j]);
    for (Eigen::Index i = 0; i < npat; ++i) {
      counts.m_cj[j].col(data.patterns[i][j]) += counts.m_hat.col(i);
    }
  }
  return counts;
}

Eigen::VectorXd m_step_pi(const ExpectedCounts& counts, int n,
                          double pi_floor, bool* floored) {
  Eigen::VectorXd pi = counts.m_c / static_cast<double>(n);
  bool hit = false;
  for (Eigen::Index c = 0; c < pi.size(); ++c) {
    if (pi[c] < pi_floor) {
      pi[c] = pi_floor;
      hit = true;
    }
  }
  if (hit) pi /= pi.sum();
  if (floored) *floored = hit;
  return pi;
}

double expected_complete_loglik(const ModelSpec& spec,
                                const Parameters& params,
                                const ExpectedCounts& counts) {
  const auto table = conditional_prob_table(spec, params);
  CompensatedSum acc;
  for (int c = 0; c < spec.n_classes; ++c) {
    acc.add(counts.m_c[c] * std::log(params.pi[c]));
    for (int j = 0; j < spec.n_items; ++j) {
      for (int x = 0; x < spec.categories[j]; ++x) {
        const double m = counts.m_cj[j](c, x);
        if (m != 0.0) acc.add(m * std::log(table[c][j][x]));
      }
    }
  }
  return acc.value();
}

FisherScores fisher_scores(const ModelSpec& spec, const Parameters& params,
                           const ExpectedCounts& counts) {
  const PackedParams packed = pack(spec, params);
  const int n_phi = static_cast<int>(packed.phi.size());
  const int n_gamma = static_cast<int>(packed.gamma_free.size());
  const auto table = conditional_prob_table(spec, params);

  FisherScores out;
  out.score_phi = Eigen::VectorXd::Zero(n_phi);
  out.info_phi = Eigen::MatrixXd::Zero(n_phi, n_phi);
  out.score_gamma = Eigen::VectorXd::Zero(n_gamma);
  out.info_gamma = Eigen::VectorXd::Zero(n_gamma);

  int gamma_index = -1;
  for (int j = 0; j < spec.n_items; ++j) {
    const bool free_gamma = spec.discrimination == Discrimination::Free &&
                            !spec.is_anchor_item(j);
    if (free_gamma) ++gamma_index;
    const int m = spec.categories[j] - 1;
    for (int c = 0; c < spec.n_classes; ++c) {
      const Eigen::VectorXd& lambda_full = table[c][j];
      const Eigen::VectorXd lambda = lambda_full.tail(m);
      const Eigen::VectorXd residual =
          counts.m_cj[j].row(c).tail(m).transpose() - counts.m_c[c] * lambda;
      const Eigen::MatrixXd jacobian =
          canonical_jacobian(lambda_full, spec.link);
      const Eigen::MatrixXd weight =
          Eigen::MatrixXd(lambda.asDiagonal()) - lambda * lambda.transpose();
      const Eigen::MatrixXd design = build_design_matrix(spec, c, j);
      const Eigen::VectorXd jt_resid = jacobian.transpose() * residual;
      const Eigen::MatrixXd curvature =
          jacobian.transpose() * weight * jacobian;

      out.score_phi += params.gamma[j] * design.transpose() * jt_resid;
      out.info_phi += counts.m_c[c] * params.gamma[j] * params.gamma[j] *
                      design.transpose() * curvature * design;
      if (free_gamma) {
        const Eigen::VectorXd direction = design * packed.phi;
        out.score_gamma[gamma_index] += direction.dot(jt_resid);
        out.info_gamma[gamma_index] +=
            counts.m_c[c] * direction.dot(curvature * direction);
      }
    }
  }
  return out;
}

namespace {

bool params_feasible(const ModelSpec& spec, const Parameters& params) {
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int j = 0; j < spec.n_items; ++j) {
      if (!logits_valid(item_logits(spec, params, c, j), spec.link)) {
        return false;
      }
    }
  }
  return true;
}

// Newton direction with a ridge retry and a gradient fallback; the
// information matrix can be structurally singular (e.g. free
// discriminations with a single class).
Eigen::VectorXd newton_direction(const Eigen::MatrixXd& info,
                                 const Eigen::VectorXd& score) {
  auto acceptable = [&](const Eigen::MatrixXd& matrix,
                        const Eigen::VectorXd& delta) {
    return delta.allFinite() &&
           (matrix * delta - score).norm() <= 1e-8 * (1.0 + score.norm());
  };
  Eigen::VectorXd delta = info.ldlt().solve(score);
  if (acceptable(info, delta)) return delta;

  const double dim = static_cast<double>(info.rows());
  const double ridge = 1e-8 * (1.0 + info.trace() / dim);
  const Eigen::MatrixXd damped =
      info + ridge * Eigen::MatrixXd::Identity(info.rows(), info.cols());
  delta = damped.ldlt().solve(score);
  if (acceptable(damped, delta)) return delta;

  const double scale = 1.0 + info.diagonal().cwiseAbs().maxCoeff();
  return score / scale;
}

constexpr int kMaxHalvings = 30;

}  // namespace

MStepStatus m_step_fisher(const ModelSpec& spec, Parameters& params,
                          const ExpectedCounts& counts,
                          const EmControls& controls) {
  MStepStatus status;
  PackedParams packed = pack(spec, params);
  const bool has_gamma = packed.gamma_free.size() > 0;
  double current = expected_complete_loglik(spec, params, counts);

  auto try_step = [&](auto&& apply, const double step_norm) {
    if (!(step_norm > 1e-14)) return true;  // already at a fixed point
    double scale = 1.0;
    for (int h = 0; h <= kMaxHalvings; ++h, scale *= 0.5) {
      Parameters trial = params;
      apply(trial, scale);
      if (!params_feasible(spec, trial)) continue;
      const double value = expected_complete_loglik(spec, trial, counts);
      if (std::isfinite(value) && value >= current) {
        params = std::move(trial);
        packed = pack(spec, params);
        current = value;
        return true;
      }
    }
    return false;
  };

  for (int sweep = 0; sweep < controls.inner_max; ++sweep) {
    const double sweep_start = current;
    ++status.sweeps;

    if (has_gamma) {
      const FisherScores scores = fisher_scores(spec, params, counts);
      Eigen::VectorXd delta(packed.gamma_free.size());
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        delta[i] = scores.info_gamma[i] > 1e-12
                       ? scores.score_gamma[i] / scores.info_gamma[i]
                       : 0.0;
      }
      const Eigen::VectorXd base = packed.gamma_free;
      const bool ok = try_step(
          [&](Parameters& trial, double scale) {
            PackedParams p = pack(spec, trial);
            p.gamma_free = base + scale * delta;
            Parameters next = unpack(spec, p);
            next.pi = trial.pi;
            trial = std::move(next);
          },
          delta.lpNorm<Eigen::Infinity>());
      if (!ok) status.stalled = true;
    }

    {
      const FisherScores scores = fisher_scores(spec, params, counts);
      const Eigen::VectorXd delta =
          newton_direction(scores.info_phi, scores.score_phi);
      const Eigen::VectorXd base = packed.phi;
      const bool ok = try_step(
          [&](Parameters& trial, double scale) {
            PackedParams p = pack(spec, trial);
            p.phi = base + scale * delta;
            Parameters next = unpack(spec, p);
            next.pi = trial.pi;
            trial = std::move(next);
          },
          delta.lpNorm<Eigen::Infinity>());
      if (!ok) status.stalled = true;
    }

    if (current - sweep_start <= 1e-13 * (1.0 + std::abs(sweep_start))) {
      break;
    }
  }
  return status;
}

namespace {

Eigen::VectorXd smoothed_marginal(const ResponseDataset& data, int item,
                                  const ModelSpec& spec) {
  Eigen::VectorXd count = Eigen::VectorXd::Constant(spec.categories[item], 0.5);
  for (std::size_t i = 0; i < data.n_patterns(); ++i) {
    count[data.patterns[i][item]] += data.counts[i];
  }
  return count / count.sum();
}

Parameters deterministic_start(const ModelSpec& spec,
                               const ResponseDataset& data) {
  Parameters params;
  params.pi =
      Eigen::VectorXd::Constant(spec.n_classes, 1.0 / spec.n_classes);
  params.xi.resize(spec.n_classes, spec.n_dims);
  for (int c = 0; c < spec.n_classes; ++c) {
    params.xi.row(c).setConstant(
        normal_quantile((c + 1.0) / (spec.n_classes + 1.0)));
  }
  params.gamma = Eigen::VectorXd::Ones(spec.n_items);

  if (spec.difficulty == Difficulty::Free) {
    // empirical logits of the pooled data, re-anchored per dimension
    params.beta_free.resize(spec.n_items);
    for (int j = 0; j < spec.n_items; ++j) {
      params.beta_free[j] =
          -probs_to_logits(smoothed_marginal(data, j, spec), spec.link);
    }
    for (int d = 0; d < spec.n_dims; ++d) {
      const double shift = params.beta_free[spec.first_item_of_dim(d)][0];
      for (int j = 0; j < spec.n_items; ++j) {
        if (spec.item_dim[j] == d) params.beta_free[j].array() -= shift;
      }
    }
  } else {
    params.beta_rs = Eigen::VectorXd::Zero(spec.n_items);
    const int l = spec.common_categories();
    Eigen::VectorXd pooled = Eigen::VectorXd::Constant(l, 0.5);
    for (int j = 0; j < spec.n_items; ++j) {
      for (std::size_t i = 0; i < data.n_patterns(); ++i) {
        pooled[data.patterns[i][j]] += data.counts[i];
      }
    }
    params.tau = -probs_to_logits(pooled / pooled.sum(), spec.link);
    params.tau.array() -= params.tau[0];
  }
  return params;
}

Parameters perturbed_start(const ModelSpec& spec, const Parameters& det,
                           SplitMix64& rng) {
  Parameters params = det;
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int d = 0; d < spec.n_dims; ++d) {
      params.xi(c, d) += rng.normal();
    }
  }
  if (spec.difficulty == Difficulty::Free) {
    for (int j = 0; j < spec.n_items; ++j) {
      auto& beta = params.beta_free[j];
      const bool anchor = spec.is_anchor_item(j);
      for (Eigen::Index x = 0; x < beta.size(); ++x) {
        if (anchor && x == 0) continue;
        beta[x] += 0.5 * rng.normal();
      }
      if (spec.link == LinkKind::Global) {
        std::sort(beta.begin(), beta.end());
        if (anchor) beta.array() -= beta[0];
      }
    }
  } else {
    for (int j = 0; j < spec.n_items; ++j) {
      if (!spec.is_anchor_item(j)) params.beta_rs[j] += 0.5 * rng.normal();
    }
    for (Eigen::Index x = 1; x < params.tau.size(); ++x) {
      params.tau[x] += 0.5 * rng.normal();
    }
    if (spec.link == LinkKind::Global) {
      std::sort(params.tau.begin(), params.tau.end());
      params.tau.array() -= params.tau[0];
    }
  }
  for (int c = 0; c < spec.n_classes; ++c) {
    params.pi[c] = rng.uniform(0.1, 1.0);
  }
  params.pi /= params.pi.sum();
  return params;
}

std::vector<int> canonical_class_order(const Eigen::VectorXd& key) {
  std::vector<int> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return key[a] < key[b]; });
  return order;
}

Eigen::MatrixXd posterior_from(const ModelSpec& spec,
                               const Parameters& params,
                               const ResponseDataset& data) {
  const auto table = conditional_prob_table(spec, params);
  const Eigen::MatrixXd probs = class_pattern_probs(spec, table, data);
  const auto npat = static_cast<Eigen::Index>(data.n_patterns());
  Eigen::MatrixXd posterior(npat, spec.n_classes);
  for (Eigen::Index i = 0; i < npat; ++i) {
    Eigen::VectorXd joint = params.pi.cwiseProduct(probs.col(i));
    const double denom = joint.sum();
    if (!(denom > 0.0)) {
      throw UnderflowError("pattern " + std::to_string(i) +
                           " underflows in every class");
    }
    posterior.row(i) = joint.transpose() / denom;
  }
  return posterior;
}

}  // namespace

std::vector<Parameters> make_starts(const ModelSpec& spec,
                                    const ResponseDataset& data,
                                    int n_random, std::uint64_t seed) {
  spec.check();
  check_compatible(spec, data);
  std::vector<Parameters> starts;
  starts.reserve(1 + std::max(0, n_random));
  const Parameters det = deterministic_start(spec, data);
  starts.push_back(det);
  for (int i = 1; i <= n_random; ++i) {
    SplitMix64 rng = substream(seed, static_cast<std::uint64_t>(i));
    starts.push_back(perturbed_start(spec, det, rng));
  }
  return starts;
}

FitResult fit_em(const ModelSpec& spec, const ResponseDataset& data,
                 const Parameters& init, const EmControls& controls) {
  spec.check();
  data.check();
  check_compatible(spec, data);
  {
    const ValidationReport report = validate(spec, init);
    if (!report.ok()) {
      std::string message = "fit_em: invalid initial parameters:";
      for (const auto& v : report.violations) message += " " + v + ";";
      throw UsageError(message);
    }
  }

  FitResult result;
  Parameters params = init;
  double loglik = log_likelihood(spec, params, data);
  if (controls.trace) result.trace.push_back(loglik);

  bool noted_floor = false;
  bool noted_stall = false;
  int iterations = 0;
  bool converged = false;
  for (int t = 1; t <= controls.max_iter; ++t) {
    iterations = t;
    const ExpectedCounts counts = e_step(spec, params, data);
    bool floored = false;
    params.pi = m_step_pi(counts, data.n, controls.pi_floor, &floored);
    if (floored && !noted_floor) {
      result.notes.push_back("pi hit the floor and was renormalized");
      noted_floor = true;
    }
    const MStepStatus status = m_step_fisher(spec, params, counts, controls);
    if (status.stalled && !noted_stall) {
      result.notes.push_back("inner Fisher step stalled after halvings");
      noted_stall = true;
    }
    const double next = log_likelihood(spec, params, data);
    if (controls.trace) result.trace.push_back(next);
    const double rel = std::abs(next - loglik) / (std::abs(loglik) + 1.0);
    loglik = next;
    if (rel < controls.tol) {
      converged = true;
      break;
    }
  }

  // canonical class order: ascending first-dimension support point
  const std::vector<int> order = canonical_class_order(params.xi.col(0));
  Parameters sorted = params;
  for (int c = 0; c < spec.n_classes; ++c) {
    sorted.pi[c] = params.pi[order[c]];
    sorted.xi.row(c) = params.xi.row(order[c]);
  }
  params = std::move(sorted);

  result.params = params;
  result.posterior = posterior_from(spec, params, data);
  result.summary.loglik = loglik;
  result.summary.n_par = count_free_parameters(spec);
  result.summary.bic = compute_bic(loglik, result.summary.n_par, data.n);
  result.summary.iterations = iterations;
  result.summary.converged = converged;
  result.summary.start_id = 0;
  return result;
}

FitResult fit_multistart(const ModelSpec& spec, const ResponseDataset& data,
                         const EmControls& controls) {
  const std::vector<Parameters> starts =
      make_starts(spec, data, controls.n_random, controls.seed);
  const int n_starts = static_cast<int>(starts.size());
  std::vector<std::optional<FitResult>> results(n_starts);
  std::vector<std::string> failures(n_starts);

  auto run_range = [&](int offset, int stride) {
    for (int i = offset; i < n_starts; i += stride) {
      try {
        FitResult fit = fit_em(spec, data, starts[i], controls);
        fit.summary.start_id = i;
        results[i] = std::move(fit);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };

  const int n_threads = std::max(1, std::min(controls.threads, n_starts));
  if (n_threads == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) {
      workers.emplace_back(run_range, w, n_threads);
    }
    for (auto& worker : workers) worker.join();
  }

  int best = -1;
  for (int i = 0; i < n_starts; ++i) {
    if (!results[i]) continue;
    if (best < 0 ||
        results[i]->summary.loglik > results[best]->summary.loglik) {
      best = i;
    }
  }
  if (best < 0) {
    throw NumericError("all starts failed; first error: " + failures[0]);
  }
  FitResult winner = std::move(*results[best]);
  for (int i = 0; i < n_starts; ++i) {
    if (!results[i] && !failures[i].empty()) {
      winner.notes.push_back("start " + std::to_string(i) +
                             " failed: " + failures[i]);
    }
  }
  return winner;
}

// ---------------- standard latent class model ----------------

namespace {

Eigen::MatrixXd lc_class_pattern_probs(const LcParameters& params,
                                       const ResponseDataset& data) {
  const int k = static_cast<int>(params.pi.size());
  const auto npat = static_cast<Eigen::Index>(data.n_patterns());
  Eigen::MatrixXd probs(k, npat);
  const bool log_space = data.r > 20;
  for (int c = 0; c < k; ++c) {
    for (Eigen::Index i = 0; i < npat; ++i) {
      if (log_space) {
        double acc = 0.0;
        for (int j = 0; j < data.r; ++j) {
          acc += std::log(params.lambda[j](c, data.patterns[i][j]));
        }
        probs(c, i) = std::exp(acc);
      } else {
        double acc = 1.0;
        for (int j = 0; j < data.r; ++j) {
          acc *= params.lambda[j](c, data.patterns[i][j]);
        }
        probs(c, i) = acc;
      }
    }
  }
  return probs;
}

LcParameters lc_deterministic_start(int k, const ResponseDataset& data) {
  LcParameters params;
  params.pi = Eigen::VectorXd::Constant(k, 1.0 / k);
  params.lambda.resize(data.r);
  for (int j = 0; j < data.r; ++j) {
    Eigen::VectorXd count =
        Eigen::VectorXd::Constant(data.categories[j], 0.5);
    for (std::size_t i = 0; i < data.n_patterns(); ++i) {
      count[data.patterns[i][j]] += data.counts[i];
    }
    // classes start on cumulative-logit shifts of the smoothed marginal to
    // break the symmetry that would freeze EM at identical components
    const Eigen::VectorXd logits =
        probs_to_logits(count / count.sum(), LinkKind::Global);
    params.lambda[j].resize(k, data.categories[j]);
    for (int c = 0; c < k; ++c) {
      const double shift = normal_quantile((c + 1.0) / (k + 1.0));
      params.lambda[j].row(c) =
          logits_to_probs(logits.array() + shift, LinkKind::Global)
              .transpose();
    }
  }
  return params;
}

LcParameters lc_random_start(int k, const ResponseDataset& data,
                             SplitMix64& rng) {
  LcParameters params;
  params.pi.resize(k);
  for (int c = 0; c < k; ++c) params.pi[c] = rng.uniform(0.1, 1.0);
  params.pi /= params.pi.sum();
  params.lambda.resize(data.r);
  for (int j = 0; j < data.r; ++j) {
    params.lambda[j].resize(k, data.categories[j]);
    for (int c = 0; c < k; ++c) {
      for (int x = 0; x < data.categories[j]; ++x) {
        params.lambda[j](c, x) = rng.uniform(0.1, 1.0);
      }
      params.lambda[j].row(c) /= params.lambda[j].row(c).sum();
    }
  }
  return params;
}

LcFitResult lc_fit_single(int k, const ResponseDataset& data,
                          const LcParameters& init,
                          const EmControls& controls) {
  LcFitResult result;
  LcParameters params = init;

  auto loglik_of = [&](const LcParameters& p) {
    return loglik_from_probs(lc_class_pattern_probs(p, data), p.pi, data);
  };

  double loglik = loglik_of(params);
  if (controls.trace) result.trace.push_back(loglik);
  int iterations = 0;
  bool converged = false;
  bool noted_floor = false;
  for (int t = 1; t <= controls.max_iter; ++t) {
    iterations = t;
    const Eigen::MatrixXd probs = lc_class_pattern_probs(params, data);
    const auto npat = static_cast<Eigen::Index>(data.n_patterns());
    Eigen::MatrixXd m_hat(k, npat);
    for (Eigen::Index i = 0; i < npat; ++i) {
      Eigen::VectorXd joint = params.pi.cwiseProduct(probs.col(i));
      const double denom = joint.sum();
      if (!(denom > 0.0)) {
        throw UnderflowError("pattern " + std::to_string(i) +
                             " underflows in every class");
      }
      m_hat.col(i) = joint * (data.counts[i] / denom);
    }
    const Eigen::VectorXd m_c = m_hat.rowwise().sum();
    bool floored = false;
    {
      ExpectedCounts counts;
      counts.m_c = m_c;
      params.pi = m_step_pi(counts, data.n, controls.pi_floor, &floored);
    }
    if (floored && !noted_floor) {
      result.notes.push_back("pi hit the floor and was renormalized");
      noted_floor = true;
    }
    for (int j = 0; j < data.r; ++j) {
      Eigen::MatrixXd m_cjx =
          Eigen::MatrixXd::Zero(k, data.categories[j]);
      for (Eigen::Index i = 0; i < npat; ++i) {
        m_cjx.col(data.patterns[i][j]) += m_hat.col(i);
      }
      for (int c = 0; c < k; ++c) {
        Eigen::RowVectorXd row = m_cjx.row(c) / std::max(m_c[c], 1e-300);
        // keep the logs finite at boundary solutions
        row = row.cwiseMax(1e-12);
        params.lambda[j].row(c) = row / row.sum();
      }
    }
    const double next = loglik_of(params);
    if (controls.trace) result.trace.push_back(next);
    const double rel = std::abs(next - loglik) / (std::abs(loglik) + 1.0);
    loglik = next;
    if (rel < controls.tol) {
      converged = true;
      break;
    }
  }

  // order classes by expected total score for stable labelling
  Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
  for (int j = 0; j < data.r; ++j) {
    for (int x = 0; x < data.categories[j]; ++x) {
      score += x * params.lambda[j].col(x);
    }
  }
  const std::vector<int> order = canonical_class_order(score);
  LcParameters ordered;
  ordered.pi.resize(k);
  ordered.lambda.assign(data.r, Eigen::MatrixXd());
  for (int j = 0; j < data.r; ++j) {
    ordered.lambda[j].resize(k, data.categories[j]);
  }
  for (int c = 0; c < k; ++c) {
    ordered.pi[c] = params.pi[order[c]];
    for (int j = 0; j < data.r; ++j) {
      ordered.lambda[j].row(c) = params.lambda[j].row(order[c]);
    }
  }
  params = std::move(ordered);

  const Eigen::MatrixXd probs = lc_class_pattern_probs(params, data);
  const auto npat = static_cast<Eigen::Index>(data.n_patterns());
  result.posterior.resize(npat, k);
  for (Eigen::Index i = 0; i < npat; ++i) {
    Eigen::VectorXd joint = params.pi.cwiseProduct(probs.col(i));
    result.posterior.row(i) = joint.transpose() / joint.sum();
  }

  result.params = std::move(params);
  result.summary.loglik = loglik;
  result.summary.n_par = standard_lc_parameter_count(k, data.categories);
  result.summary.bic =
      compute_bic(loglik, result.summary.n_par, data.n);
  result.summary.iterations = iterations;
  result.summary.converged = converged;
  return result;
}

}  // namespace

LcFitResult fit_standard_lc(int n_classes, const ResponseDataset& data,
                            const EmControls& controls) {
  if (n_classes < 1) {
    throw UsageError("fit_standard_lc: need at least one class");
  }
  data.check();

  std::vector<LcParameters> starts;
  starts.push_back(lc_deterministic_start(n_classes, data));
  for (int i = 1; i <= controls.n_random; ++i) {
    SplitMix64 rng = substream(controls.seed, static_cast<std::uint64_t>(i));
    starts.push_back(lc_random_start(n_classes, data, rng));
  }

  const int n_starts = static_cast<int>(starts.size());
  std::vector<std::optional<LcFitResult>> results(n_starts);
  std::vector<std::string> failures(n_starts);
  auto run_range = [&](int offset, int stride) {
    for (int i = offset; i < n_starts; i += stride) {
      try {
        LcFitResult fit = lc_fit_single(n_classes, data, starts[i], controls);
        fit.summary.start_id = i;
        results[i] = std::move(fit);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min(controls.threads, n_starts));
  if (n_threads == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> workers;
    for (int w = 0; w < n_threads; ++w) {
      workers.emplace_back(run_range, w, n_threads);
    }
    for (auto& worker : workers) worker.join();
  }

  int best = -1;
  for (int i = 0; i < n_starts; ++i) {
    if (!results[i]) continue;
    if (best < 0 ||
        results[i]->summary.loglik > results[best]->summary.loglik) {
      best = i;
    }
  }
  if (best < 0) {
    throw NumericError("all LC starts failed; first error: " + failures[0]);
  }
  return std::move(*results[best]);
}

}  // namespace lcirt
