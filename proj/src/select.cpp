#include "lcirt/select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "lcirt/errors.hpp"

namespace lcirt {

namespace {

// regularized lower incomplete gamma P(a,z), series expansion
double gamma_p_series(double a, double z) {
  double term = 1.0 / a;
  double sum = term;
  for (int i = 1; i < 10000; ++i) {
    term *= z / (a + i);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(a * std::log(z) - z - std::lgamma(a));
}

// regularized upper incomplete gamma Q(a,z), Lentz continued fraction
double gamma_q_contfrac(double a, double z) {
  constexpr double tiny = 1e-300;
  double b = z + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(a * std::log(z) - z - std::lgamma(a));
}

}  // namespace

double chi_square_sf(double x, int df) {
  if (df < 1) {
    throw UsageError("chi_square_sf: df must be at least 1");
  }
  if (!(x >= 0.0)) {
    throw UsageError("chi_square_sf: x must be non-negative");
  }
  if (x == 0.0) return 1.0;
  const double a = 0.5 * df;
  const double z = 0.5 * x;
  if (z < a + 1.0) {
    return std::clamp(1.0 - gamma_p_series(a, z), 0.0, 1.0);
  }
  return std::clamp(gamma_q_contfrac(a, z), 0.0, 1.0);
}

LrTestResult lr_test(double loglik0, int n_par0, double loglik1,
                     int n_par1) {
  if (n_par0 >= n_par1) {
    throw UsageError(
        "lr_test: the reduced model must have fewer parameters");
  }
  LrTestResult result;
  result.deviance = -2.0 * (loglik0 - loglik1);
  result.df = n_par1 - n_par0;
  if (result.deviance < -1e-6) {
    throw FailedOptimizationError(
        "lr_test: deviance " + std::to_string(result.deviance) +
        " is negative; the nesting fit is worse than the reduced one");
  }
  result.p_value = chi_square_sf(std::max(result.deviance, 0.0), result.df);
  return result;
}

int choose_k_from_bic(const std::vector<double>& bic_by_k, bool* boundary) {
  if (bic_by_k.empty()) throw UsageError("choose_k_from_bic: empty table");
  if (boundary) *boundary = false;
  for (std::size_t i = 1; i < bic_by_k.size(); ++i) {
    if (bic_by_k[i] > bic_by_k[i - 1]) return static_cast<int>(i);
  }
  if (boundary) *boundary = true;
  return static_cast<int>(bic_by_k.size());
}

LinkKind choose_link_from_table(const std::vector<LinkKind>& links,
                                const std::vector<double>& bic, bool* tie) {
  if (links.empty() || links.size() != bic.size()) {
    throw UsageError("choose_link_from_table: malformed table");
  }
  const double best = *std::min_element(bic.begin(), bic.end());
  LinkKind chosen = LinkKind::Continuation;
  int near_best = 0;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (bic[i] <= best + 1e-9) {
      ++near_best;
      if (static_cast<int>(links[i]) < static_cast<int>(chosen) ||
          near_best == 1) {
        chosen = std::min(chosen, links[i]);
      }
    }
  }
  if (tie) *tie = near_best > 1;
  return chosen;
}

DimChainDecision decide_dimensionality(
    const std::vector<std::pair<double, int>>& fits, double alpha) {
  if (fits.empty()) throw UsageError("decide_dimensionality: no candidates");
  DimChainDecision out;
  for (std::size_t i = 0; i + 1 < fits.size(); ++i) {
    const auto& finer = fits[i];
    const auto& coarser = fits[i + 1];
    const int df = finer.second - coarser.second;
    if (df < 0) {
      throw UsageError(
          "decide_dimensionality: candidates are not ordered fine to "
          "coarse");
    }
    if (df == 0) {
      // equal free-parameter count: the families have the same capacity
      // (possible with two classes); take the coarser, more interpretable
      // structure without a test
      LrTestResult degenerate;
      degenerate.deviance = -2.0 * (coarser.first - finer.first);
      degenerate.df = 0;
      degenerate.p_value = 1.0;
      out.tests.push_back(degenerate);
      out.accepted.push_back(true);
      out.df_zero.push_back(true);
      out.chosen_index = static_cast<int>(i + 1);
      continue;
    }
    const LrTestResult lr =
        lr_test(coarser.first, coarser.second, finer.first, finer.second);
    const bool accept = lr.p_value >= alpha;
    out.tests.push_back(lr);
    out.accepted.push_back(accept);
    out.df_zero.push_back(false);
    if (!accept) break;
    out.chosen_index = static_cast<int>(i + 1);
  }
  return out;
}

ConstraintDecision decide_item_constraints(
    const std::pair<double, int>& free_free,
    const std::optional<std::pair<double, int>>& free_rs,
    const std::optional<std::pair<double, int>>& constr_free,
    const std::optional<std::pair<double, int>>& constr_rs, double alpha,
    int n) {
  ConstraintDecision out;
  bool accept_rs = false;
  bool accept_constr = false;

  if (free_rs) {
    ConstraintTest test;
    test.constrained_label = "free_rs";
    test.reference_label = "free_free";
    test.lr = lr_test(free_rs->first, free_rs->second, free_free.first,
                      free_free.second);
    test.accepted = test.lr.p_value >= alpha;
    accept_rs = test.accepted;
    out.tests.push_back(test);
  }
  if (constr_free) {
    ConstraintTest test;
    test.constrained_label = "constr_free";
    test.reference_label = "free_free";
    test.lr = lr_test(constr_free->first, constr_free->second,
                      free_free.first, free_free.second);
    test.accepted = test.lr.p_value >= alpha;
    accept_constr = test.accepted;
    out.tests.push_back(test);
  }

  Regime winner = Regime::FreeFree;
  if (accept_rs && accept_constr) {
    const double bic_rs = compute_bic(free_rs->first, free_rs->second, n);
    const double bic_cf =
        compute_bic(constr_free->first, constr_free->second, n);
    winner = bic_rs <= bic_cf ? Regime::FreeRs : Regime::ConstrFree;
  } else if (accept_rs) {
    winner = Regime::FreeRs;
  } else if (accept_constr) {
    winner = Regime::ConstrFree;
  }

  if (winner != Regime::FreeFree && constr_rs) {
    const auto& reference =
        winner == Regime::FreeRs ? *free_rs : *constr_free;
    ConstraintTest test;
    test.constrained_label = "constr_rs";
    test.reference_label =
        winner == Regime::FreeRs ? "free_rs" : "constr_free";
    test.lr = lr_test(constr_rs->first, constr_rs->second, reference.first,
                      reference.second);
    test.accepted = test.lr.p_value >= alpha;
    out.tests.push_back(test);
    if (test.accepted) winner = Regime::ConstrRs;
  }
  out.chosen = winner;
  return out;
}

// ---------------- fitting steps ----------------

Partition per_item_partition(int n_items) {
  Partition partition(n_items);
  for (int j = 0; j < n_items; ++j) partition[j] = {j};
  return partition;
}

Partition single_partition(int n_items) {
  Partition partition(1);
  partition[0].resize(n_items);
  for (int j = 0; j < n_items; ++j) partition[0][j] = j;
  return partition;
}

std::string partition_label(const Partition& partition, int n_items) {
  const int s = static_cast<int>(partition.size());
  if (s == 1) return "unidimensional";
  if (s == n_items) return "r-dimensional";
  if (s == 2) return "bidimensional";
  return std::to_string(s) + "-dimensional";
}

ModelSpec spec_for_partition(const ResponseDataset& data, int n_classes,
                             LinkKind link, const Partition& partition) {
  ModelSpec spec;
  spec.n_items = data.r;
  spec.categories = data.categories;
  spec.n_dims = static_cast<int>(partition.size());
  spec.item_dim.assign(data.r, -1);
  for (int d = 0; d < spec.n_dims; ++d) {
    for (int j : partition[d]) {
      if (j < 0 || j >= data.r || spec.item_dim[j] != -1) {
        throw UsageError("partition is not a partition of the items");
      }
      spec.item_dim[j] = d;
    }
  }
  for (int j = 0; j < data.r; ++j) {
    if (spec.item_dim[j] == -1) {
      throw UsageError("partition leaves item " + std::to_string(j + 1) +
                       " unassigned");
    }
  }
  spec.n_classes = n_classes;
  spec.link = link;
  spec.discrimination = Discrimination::Free;
  spec.difficulty = Difficulty::Free;
  spec.check();
  return spec;
}

namespace {

bool is_coarsening(const Partition& fine, const Partition& coarse) {
  for (const auto& group : fine) {
    bool contained = false;
    for (const auto& super : coarse) {
      const std::set<int> super_set(super.begin(), super.end());
      if (std::all_of(group.begin(), group.end(), [&](int j) {
            return super_set.count(j) > 0;
          })) {
        contained = true;
        break;
      }
    }
    if (!contained) return false;
  }
  return true;
}

std::string spec_key(const ModelSpec& spec) {
  std::ostringstream key;
  key << spec.n_items << '|' << spec.n_dims << '|' << spec.n_classes << '|'
      << to_string(spec.link) << '|' << to_string(spec.discrimination) << '|'
      << to_string(spec.difficulty) << '|';
  for (int d : spec.item_dim) key << d << ',';
  return key.str();
}

struct FitCache {
  std::map<std::string, FitResult> fits;
  const FitResult& get(const ModelSpec& spec, const ResponseDataset& data,
                       const EmControls& controls) {
    const std::string key = spec_key(spec);
    auto it = fits.find(key);
    if (it == fits.end()) {
      it = fits.emplace(key, fit_multistart(spec, data, controls)).first;
    }
    return it->second;
  }
};

LinkSelection choose_link_impl(const ResponseDataset& data, int n_classes,
                               const std::vector<LinkKind>& links,
                               const EmControls& controls, FitCache* cache) {
  if (links.empty()) throw UsageError("choose_link: no candidate links");
  LinkSelection out;
  FitCache local;
  FitCache& store = cache ? *cache : local;
  const Partition partition = per_item_partition(data.r);
  std::vector<double> bics;
  for (LinkKind link : links) {
    const ModelSpec spec =
        spec_for_partition(data, n_classes, link, partition);
    const FitResult& fit = store.get(spec, data, controls);
    out.table.push_back({to_string(link), fit.summary.loglik,
                         fit.summary.n_par, fit.summary.bic});
    bics.push_back(fit.summary.bic);
  }
  out.chosen = choose_link_from_table(links, bics, &out.tie);
  return out;
}

DimSelection test_dimensionality_impl(const ResponseDataset& data,
                                      int n_classes, LinkKind link,
                                      const std::vector<Partition>& partitions,
                                      const EmControls& controls,
                                      FitCache* cache, double alpha) {
  if (partitions.empty()) {
    throw UsageError("test_dimensionality: no candidate partitions");
  }
  for (std::size_t i = 0; i + 1 < partitions.size(); ++i) {
    if (!is_coarsening(partitions[i], partitions[i + 1])) {
      throw UsageError(
          "test_dimensionality: candidate " + std::to_string(i + 2) +
          " does not coarsen candidate " + std::to_string(i + 1));
    }
  }
  FitCache local;
  FitCache& store = cache ? *cache : local;
  DimSelection out;
  std::vector<std::pair<double, int>> fits;
  for (const Partition& partition : partitions) {
    const ModelSpec spec =
        spec_for_partition(data, n_classes, link, partition);
    const FitResult& fit = store.get(spec, data, controls);
    out.table.push_back({partition_label(partition, data.r),
                         fit.summary.loglik, fit.summary.n_par,
                         fit.summary.bic});
    fits.push_back({fit.summary.loglik, fit.summary.n_par});
  }
  out.decision = decide_dimensionality(fits, alpha);
  out.chosen_index = out.decision.chosen_index;
  out.chosen = partitions[out.chosen_index];
  return out;
}

ConstraintSelection choose_item_constraints_impl(
    const ResponseDataset& data, int n_classes, LinkKind link,
    const Partition& partition, const EmControls& controls, FitCache* cache,
    double alpha) {
  FitCache local;
  FitCache& store = cache ? *cache : local;
  ConstraintSelection out;

  // the gamma constraint is vacuous when every item anchors its own
  // dimension, and the rating-scale constraint is vacuous for binary
  // items; in both cases the regimes coincide and no test exists
  const bool has_free_gamma = static_cast<int>(partition.size()) < data.r;
  const bool rating_scale_meaningful =
      std::all_of(data.categories.begin(), data.categories.end(),
                  [&](int l) { return l == data.categories.front(); }) &&
      data.categories.front() > 2;

  auto fit_regime = [&](Discrimination disc, Difficulty diff) {
    ModelSpec spec = spec_for_partition(data, n_classes, link, partition);
    spec.discrimination = disc;
    spec.difficulty = diff;
    spec.check();
    const FitResult& fit = store.get(spec, data, controls);
    out.table.push_back({name_model(spec), fit.summary.loglik,
                         fit.summary.n_par, fit.summary.bic});
    return std::pair<double, int>{fit.summary.loglik, fit.summary.n_par};
  };

  const auto ff = fit_regime(Discrimination::Free, Difficulty::Free);
  std::optional<std::pair<double, int>> fc, cf, cc;
  if (rating_scale_meaningful) {
    fc = fit_regime(Discrimination::Free, Difficulty::RatingScale);
  }
  if (has_free_gamma) {
    cf = fit_regime(Discrimination::Constrained, Difficulty::Free);
  }
  if (rating_scale_meaningful && has_free_gamma) {
    cc = fit_regime(Discrimination::Constrained, Difficulty::RatingScale);
  }

  ConstraintDecision decision =
      decide_item_constraints(ff, fc, cf, cc, alpha, data.n);
  out.chosen = decision.chosen;
  out.tests = std::move(decision.tests);

  // re-label the chain with the conventional model names
  auto relabel = [&](std::string& label) {
    ModelSpec spec = spec_for_partition(data, n_classes, link, partition);
    if (label == "free_free") {
      spec.discrimination = Discrimination::Free;
      spec.difficulty = Difficulty::Free;
    } else if (label == "free_rs") {
      spec.discrimination = Discrimination::Free;
      spec.difficulty = Difficulty::RatingScale;
    } else if (label == "constr_free") {
      spec.discrimination = Discrimination::Constrained;
      spec.difficulty = Difficulty::Free;
    } else {
      spec.discrimination = Discrimination::Constrained;
      spec.difficulty = Difficulty::RatingScale;
    }
    label = name_model(spec);
  };
  for (auto& test : out.tests) {
    relabel(test.constrained_label);
    relabel(test.reference_label);
  }

  switch (out.chosen) {
    case Regime::FreeFree:
      out.discrimination = Discrimination::Free;
      out.difficulty = Difficulty::Free;
      break;
    case Regime::FreeRs:
      out.discrimination = Discrimination::Free;
      out.difficulty = Difficulty::RatingScale;
      break;
    case Regime::ConstrFree:
      out.discrimination = Discrimination::Constrained;
      out.difficulty = Difficulty::Free;
      break;
    case Regime::ConstrRs:
      out.discrimination = Discrimination::Constrained;
      out.difficulty = Difficulty::RatingScale;
      break;
  }
  return out;
}

}  // namespace

KSelection choose_k(const ResponseDataset& data, int k_max,
                    const EmControls& controls) {
  if (k_max < 1) throw UsageError("choose_k: k_max must be at least 1");
  KSelection out;
  std::vector<double> bics;
  for (int k = 1; k <= k_max; ++k) {
    LcFitResult fit;
    try {
      fit = fit_standard_lc(k, data, controls);
    } catch (const Error& e) {
      throw NumericError("choose_k: fit failed at k=" + std::to_string(k) +
                         ": " + e.what());
    }
    out.table.push_back({"k=" + std::to_string(k), fit.summary.loglik,
                         fit.summary.n_par, fit.summary.bic});
    bics.push_back(fit.summary.bic);
    out.fits.push_back(std::move(fit));
  }
  out.chosen_k = choose_k_from_bic(bics, &out.boundary);
  return out;
}

LinkSelection choose_link(const ResponseDataset& data, int n_classes,
                          const std::vector<LinkKind>& links,
                          const EmControls& controls) {
  return choose_link_impl(data, n_classes, links, controls, nullptr);
}

DimSelection test_dimensionality(const ResponseDataset& data, int n_classes,
                                 LinkKind link,
                                 const std::vector<Partition>& partitions,
                                 const EmControls& controls) {
  return test_dimensionality_impl(data, n_classes, link, partitions,
                                  controls, nullptr, 0.05);
}

ConstraintSelection choose_item_constraints(const ResponseDataset& data,
                                            int n_classes, LinkKind link,
                                            const Partition& partition,
                                            const EmControls& controls) {
  return choose_item_constraints_impl(data, n_classes, link, partition,
                                      controls, nullptr, 0.05);
}

SelectionReport run_selection_pipeline(const ResponseDataset& data,
                                       const PipelineConfig& config) {
  data.check();
  if (config.k_max < 1) throw UsageError("pipeline: k_max must be >= 1");
  if (config.links.empty()) throw UsageError("pipeline: no candidate links");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw UsageError("pipeline: alpha must lie in (0,1)");
  }

  SelectionReport report;
  report.n = data.n;
  FitCache cache;

  auto run_steps = [&]() {
    report.k_step = choose_k(data, config.k_max, config.controls);
    if (report.k_step.boundary) {
      report.warnings.push_back(
          "BIC still decreasing at k_max; chosen k is a boundary value");
    }
    report.completed_through = StopAfter::K;
    if (config.stop_after == StopAfter::K) return;
    const int k = report.k_step.chosen_k;

    report.link_step =
        choose_link_impl(data, k, config.links, config.controls, &cache);
    if (report.link_step.tie) {
      report.warnings.push_back(
          "link BIC tie resolved by fixed order global < local < "
          "continuation");
    }
    report.completed_through = StopAfter::Link;
    if (config.stop_after == StopAfter::Link) return;
    const LinkKind link = report.link_step.chosen;

    std::vector<Partition> partitions = config.partitions;
    if (partitions.empty()) {
      partitions = {per_item_partition(data.r), single_partition(data.r)};
    }
    report.dim_step = test_dimensionality_impl(data, k, link, partitions,
                                               config.controls, &cache,
                                               config.alpha);
    const auto& df_zero = report.dim_step.decision.df_zero;
    for (std::size_t i = 0; i < df_zero.size(); ++i) {
      if (df_zero[i]) {
        report.warnings.push_back(
            "dimensionality candidates " + std::to_string(i + 1) + " and " +
            std::to_string(i + 2) +
            " have equal parameter counts; coarser structure taken without "
            "a test");
      }
    }
    report.completed_through = StopAfter::Dim;
    if (config.stop_after == StopAfter::Dim) return;

    report.constraint_step = choose_item_constraints_impl(
        data, k, link, report.dim_step.chosen, config.controls, &cache,
        config.alpha);
    report.completed_through = StopAfter::Constraints;

    report.final_spec =
        spec_for_partition(data, k, link, report.dim_step.chosen);
    report.final_spec.discrimination = report.constraint_step.discrimination;
    report.final_spec.difficulty = report.constraint_step.difficulty;
    report.final_spec.check();
    if (config.stop_after == StopAfter::Constraints) return;

    report.final_fit = cache.get(report.final_spec, data, config.controls);
  };

  try {
    run_steps();
  } catch (const UsageError& e) {
    report.aborted = true;
    report.abort_reason = e.what();
    report.abort_kind = "usage";
  } catch (const ParseError& e) {
    report.aborted = true;
    report.abort_reason = e.what();
    report.abort_kind = "parse";
  } catch (const Error& e) {
    report.aborted = true;
    report.abort_reason = e.what();
    report.abort_kind = "numeric";
  }
  return report;
}

}  // namespace lcirt
