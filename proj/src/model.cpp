#include "lcirt/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lcirt {

std::string to_string(Discrimination d) {
  return d == Discrimination::Free ? "free" : "constrained";
}

std::string to_string(Difficulty d) {
  return d == Difficulty::Free ? "free" : "rating_scale";
}

Discrimination discrimination_from_string(const std::string& s) {
  if (s == "free") return Discrimination::Free;
  if (s == "constrained") return Discrimination::Constrained;
  throw ParseError("unknown discrimination constraint: \"" + s + "\"");
}

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "free") return Difficulty::Free;
  if (s == "rating_scale") return Difficulty::RatingScale;
  throw ParseError("unknown difficulty constraint: \"" + s + "\"");
}

void ModelSpec::check() const {
  if (n_items < 1) throw UsageError("spec: need at least one item");
  if (static_cast<int>(categories.size()) != n_items) {
    throw UsageError("spec: categories must list one count per item");
  }
  for (int j = 0; j < n_items; ++j) {
    if (categories[j] < 2) {
      throw UsageError("spec: item " + std::to_string(j + 1) +
                       " has invalid category count " +
                       std::to_string(categories[j]));
    }
  }
  if (n_dims < 1 || n_dims > n_items) {
    throw UsageError("spec: dimensions must lie in 1..items");
  }
  if (static_cast<int>(item_dim.size()) != n_items) {
    throw UsageError("spec: item_dim must assign every item a dimension");
  }
  std::vector<int> owned(n_dims, 0);
  for (int j = 0; j < n_items; ++j) {
    if (item_dim[j] < 0 || item_dim[j] >= n_dims) {
      throw UsageError("spec: item " + std::to_string(j + 1) +
                       " assigned to unknown dimension");
    }
    ++owned[item_dim[j]];
  }
  for (int d = 0; d < n_dims; ++d) {
    if (owned[d] == 0) {
      throw UsageError("spec: dimension " + std::to_string(d + 1) +
                       " owns no item");
    }
  }
  if (n_classes < 1) throw UsageError("spec: need at least one class");
  if (difficulty == Difficulty::RatingScale && !equal_categories()) {
    throw UsageError(
        "spec: rating-scale difficulties require equal category counts");
  }
}

int ModelSpec::first_item_of_dim(int d) const {
  for (int j = 0; j < n_items; ++j) {
    if (item_dim[j] == d) return j;
  }
  throw UsageError("spec: dimension " + std::to_string(d + 1) +
                   " owns no item");
}

bool ModelSpec::is_anchor_item(int j) const {
  return first_item_of_dim(item_dim[j]) == j;
}

bool ModelSpec::equal_categories() const {
  return std::all_of(categories.begin(), categories.end(),
                     [&](int l) { return l == categories.front(); });
}

int ModelSpec::common_categories() const {
  if (!equal_categories()) {
    throw UsageError("spec: items have unequal category counts");
  }
  return categories.front();
}

int ModelSpec::sum_thresholds() const {
  int total = 0;
  for (int l : categories) total += l - 1;
  return total;
}

ModelSpec make_spec(int n_items, int n_categories, int n_classes,
                    LinkKind link, Discrimination disc, Difficulty diff,
                    const std::vector<int>& item_dim) {
  ModelSpec spec;
  spec.n_items = n_items;
  spec.categories.assign(n_items, n_categories);
  spec.item_dim = item_dim.empty() ? std::vector<int>(n_items, 0) : item_dim;
  spec.n_dims =
      1 + *std::max_element(spec.item_dim.begin(), spec.item_dim.end());
  spec.n_classes = n_classes;
  spec.link = link;
  spec.discrimination = disc;
  spec.difficulty = diff;
  spec.check();
  return spec;
}

int count_free_parameters(const ModelSpec& spec) {
  spec.check();
  const int k = spec.n_classes;
  const int s = spec.n_dims;
  const int r = spec.n_items;
  int count = (k - 1) + s * k;
  if (spec.difficulty == Difficulty::Free) {
    count += spec.sum_thresholds() - s;
  } else {
    count += (r - s) + (spec.common_categories() - 2);
  }
  if (spec.discrimination == Discrimination::Free) count += r - s;
  return count;
}

int standard_lc_parameter_count(int n_classes,
                                const std::vector<int>& categories) {
  int thresholds = 0;
  for (int l : categories) thresholds += l - 1;
  return (n_classes - 1) + n_classes * thresholds;
}

namespace {

// Column bookkeeping for phi: support points (class-major) first, then the
// free difficulty parameters in declaration order.
struct PhiLayout {
  int n_phi = 0;
  int n_xi = 0;
  std::vector<std::vector<int>> beta_col;  // Free: [item][x-1], -1 if fixed
  std::vector<int> beta_rs_col;            // RatingScale: [item], -1 if fixed
  std::vector<int> tau_col;                // RatingScale: [x-1], -1 if fixed
};

PhiLayout make_layout(const ModelSpec& spec) {
  PhiLayout layout;
  layout.n_xi = spec.n_classes * spec.n_dims;
  int col = layout.n_xi;
  if (spec.difficulty == Difficulty::Free) {
    layout.beta_col.resize(spec.n_items);
    for (int j = 0; j < spec.n_items; ++j) {
      layout.beta_col[j].assign(spec.categories[j] - 1, -1);
      for (int x = 1; x < spec.categories[j]; ++x) {
        if (x == 1 && spec.is_anchor_item(j)) continue;
        layout.beta_col[j][x - 1] = col++;
      }
    }
  } else {
    layout.beta_rs_col.assign(spec.n_items, -1);
    for (int j = 0; j < spec.n_items; ++j) {
      if (!spec.is_anchor_item(j)) layout.beta_rs_col[j] = col++;
    }
    const int l = spec.common_categories();
    layout.tau_col.assign(l - 1, -1);
    for (int x = 2; x < l; ++x) layout.tau_col[x - 1] = col++;
  }
  layout.n_phi = col;
  return layout;
}

int xi_col(const ModelSpec& spec, int c, int d) {
  return c * spec.n_dims + d;
}

}  // namespace

int phi_length(const ModelSpec& spec) { return make_layout(spec).n_phi; }

PackedParams pack(const ModelSpec& spec, const Parameters& params) {
  const PhiLayout layout = make_layout(spec);
  PackedParams packed;
  packed.phi.resize(layout.n_phi);
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int d = 0; d < spec.n_dims; ++d) {
      packed.phi[xi_col(spec, c, d)] = params.xi(c, d);
    }
  }
  if (spec.difficulty == Difficulty::Free) {
    if (static_cast<int>(params.beta_free.size()) != spec.n_items) {
      throw UsageError("pack: beta_free must hold one vector per item");
    }
    for (int j = 0; j < spec.n_items; ++j) {
      if (params.beta_free[j].size() != spec.categories[j] - 1) {
        throw UsageError("pack: beta_free[" + std::to_string(j + 1) +
                         "] has wrong length");
      }
      for (int x = 1; x < spec.categories[j]; ++x) {
        const int col = layout.beta_col[j][x - 1];
        if (col >= 0) packed.phi[col] = params.beta_free[j][x - 1];
      }
    }
  } else {
    if (params.beta_rs.size() != spec.n_items ||
        params.tau.size() != spec.common_categories() - 1) {
      throw UsageError("pack: rating-scale parameter lengths do not match");
    }
    for (int j = 0; j < spec.n_items; ++j) {
      const int col = layout.beta_rs_col[j];
      if (col >= 0) packed.phi[col] = params.beta_rs[j];
    }
    for (int x = 2; x < spec.common_categories(); ++x) {
      packed.phi[layout.tau_col[x - 1]] = params.tau[x - 1];
    }
  }

  if (params.gamma.size() != spec.n_items) {
    throw UsageError("pack: gamma must have one entry per item");
  }
  if (spec.discrimination == Discrimination::Free) {
    packed.gamma_free.resize(spec.n_items - spec.n_dims);
    int g = 0;
    for (int j = 0; j < spec.n_items; ++j) {
      if (!spec.is_anchor_item(j)) packed.gamma_free[g++] = params.gamma[j];
    }
  } else {
    packed.gamma_free.resize(0);
  }

  if (params.pi.size() != spec.n_classes) {
    throw UsageError("pack: pi must have one entry per class");
  }
  packed.pi_free = params.pi.tail(spec.n_classes - 1);
  return packed;
}

Parameters unpack(const ModelSpec& spec, const PackedParams& packed) {
  const PhiLayout layout = make_layout(spec);
  if (packed.phi.size() != layout.n_phi) {
    throw UsageError("unpack: phi has length " +
                     std::to_string(packed.phi.size()) + ", expected " +
                     std::to_string(layout.n_phi));
  }
  const int expected_gamma = spec.discrimination == Discrimination::Free
                                 ? spec.n_items - spec.n_dims
                                 : 0;
  if (packed.gamma_free.size() != expected_gamma) {
    throw UsageError("unpack: gamma_free has wrong length");
  }
  if (packed.pi_free.size() != spec.n_classes - 1) {
    throw UsageError("unpack: pi_free has wrong length");
  }

  Parameters params;
  params.pi.resize(spec.n_classes);
  params.pi[0] = 1.0 - packed.pi_free.sum();
  params.pi.tail(spec.n_classes - 1) = packed.pi_free;

  params.xi.resize(spec.n_classes, spec.n_dims);
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int d = 0; d < spec.n_dims; ++d) {
      params.xi(c, d) = packed.phi[xi_col(spec, c, d)];
    }
  }

  params.gamma = Eigen::VectorXd::Ones(spec.n_items);
  if (spec.discrimination == Discrimination::Free) {
    int g = 0;
    for (int j = 0; j < spec.n_items; ++j) {
      if (!spec.is_anchor_item(j)) params.gamma[j] = packed.gamma_free[g++];
    }
  }

  if (spec.difficulty == Difficulty::Free) {
    params.beta_free.resize(spec.n_items);
    for (int j = 0; j < spec.n_items; ++j) {
      params.beta_free[j] = Eigen::VectorXd::Zero(spec.categories[j] - 1);
      for (int x = 1; x < spec.categories[j]; ++x) {
        const int col = layout.beta_col[j][x - 1];
        if (col >= 0) params.beta_free[j][x - 1] = packed.phi[col];
      }
    }
  } else {
    params.beta_rs = Eigen::VectorXd::Zero(spec.n_items);
    for (int j = 0; j < spec.n_items; ++j) {
      const int col = layout.beta_rs_col[j];
      if (col >= 0) params.beta_rs[j] = packed.phi[col];
    }
    params.tau = Eigen::VectorXd::Zero(spec.common_categories() - 1);
    for (int x = 2; x < spec.common_categories(); ++x) {
      params.tau[x - 1] = packed.phi[layout.tau_col[x - 1]];
    }
  }
  return params;
}

Eigen::MatrixXd build_design_matrix(const ModelSpec& spec, int latent_class,
                                    int item) {
  if (latent_class < 0 || latent_class >= spec.n_classes ||
      item < 0 || item >= spec.n_items) {
    throw UsageError("build_design_matrix: class or item out of range");
  }
  const PhiLayout layout = make_layout(spec);
  const int rows = spec.categories[item] - 1;
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, layout.n_phi);
  const int support_col = xi_col(spec, latent_class, spec.item_dim[item]);
  design.col(support_col).setOnes();
  if (spec.difficulty == Difficulty::Free) {
    for (int x = 1; x <= rows; ++x) {
      const int col = layout.beta_col[item][x - 1];
      if (col >= 0) design(x - 1, col) = -1.0;
    }
  } else {
    const int beta_col = layout.beta_rs_col[item];
    if (beta_col >= 0) design.col(beta_col).setConstant(-1.0);
    for (int x = 2; x <= rows; ++x) {
      design(x - 1, layout.tau_col[x - 1]) = -1.0;
    }
  }
  return design;
}

Eigen::VectorXd item_logits(const ModelSpec& spec, const Parameters& params,
                            int latent_class, int item) {
  const int rows = spec.categories[item] - 1;
  const double ability = params.xi(latent_class, spec.item_dim[item]);
  const double slope = params.gamma[item];
  Eigen::VectorXd logits(rows);
  if (spec.difficulty == Difficulty::Free) {
    for (int x = 1; x <= rows; ++x) {
      logits[x - 1] = slope * (ability - params.beta_free[item][x - 1]);
    }
  } else {
    for (int x = 1; x <= rows; ++x) {
      logits[x - 1] =
          slope * (ability - params.beta_rs[item] - params.tau[x - 1]);
    }
  }
  return logits;
}

Eigen::VectorXd conditional_item_probs(const ModelSpec& spec,
                                       const Parameters& params,
                                       int latent_class, int item) {
  return logits_to_probs(item_logits(spec, params, latent_class, item),
                         spec.link);
}

std::vector<std::vector<Eigen::VectorXd>> conditional_prob_table(
    const ModelSpec& spec, const Parameters& params) {
  std::vector<std::vector<Eigen::VectorXd>> table(spec.n_classes);
  for (int c = 0; c < spec.n_classes; ++c) {
    table[c].reserve(spec.n_items);
    for (int j = 0; j < spec.n_items; ++j) {
      table[c].push_back(conditional_item_probs(spec, params, c, j));
    }
  }
  return table;
}

namespace {

void check_pattern(const ModelSpec& spec, const std::vector<int>& pattern) {
  if (static_cast<int>(pattern.size()) != spec.n_items) {
    throw UsageError("pattern length does not match item count");
  }
  for (int j = 0; j < spec.n_items; ++j) {
    if (pattern[j] < 0 || pattern[j] >= spec.categories[j]) {
      throw UsageError("invalid pattern: item " + std::to_string(j + 1) +
                       " response " + std::to_string(pattern[j]) +
                       " out of range");
    }
  }
}

}  // namespace

double conditional_pattern_prob(const ModelSpec& spec,
                                const Parameters& params,
                                const std::vector<int>& pattern,
                                int latent_class) {
  check_pattern(spec, pattern);
  if (spec.n_items > 20) {
    double log_prob = 0.0;
    for (int j = 0; j < spec.n_items; ++j) {
      log_prob += std::log(
          conditional_item_probs(spec, params, latent_class, j)[pattern[j]]);
    }
    return std::exp(log_prob);
  }
  double prob = 1.0;
  for (int j = 0; j < spec.n_items; ++j) {
    prob *= conditional_item_probs(spec, params, latent_class, j)[pattern[j]];
  }
  return prob;
}

double manifest_prob(const ModelSpec& spec, const Parameters& params,
                     const std::vector<int>& pattern) {
  double prob = 0.0;
  for (int c = 0; c < spec.n_classes; ++c) {
    prob += params.pi[c] * conditional_pattern_prob(spec, params, pattern, c);
  }
  return prob;
}

ValidationReport validate(const ModelSpec& spec, const Parameters& params) {
  spec.check();
  ValidationReport report;
  auto violation = [&](const std::string& message) {
    report.violations.push_back(message);
  };

  if (params.pi.size() != spec.n_classes) {
    violation("pi: expected length " + std::to_string(spec.n_classes));
  } else {
    for (int c = 0; c < spec.n_classes; ++c) {
      if (!(params.pi[c] > 0.0)) {
        violation("pi[" + std::to_string(c + 1) + "] not positive");
      }
    }
    if (std::abs(params.pi.sum() - 1.0) > 1e-12) {
      violation("pi does not sum to 1 within 1e-12");
    }
  }

  if (params.xi.rows() != spec.n_classes || params.xi.cols() != spec.n_dims) {
    violation("xi: expected shape k x s");
  } else if (!params.xi.allFinite()) {
    violation("xi contains non-finite entries");
  }

  if (params.gamma.size() != spec.n_items) {
    violation("gamma: expected length " + std::to_string(spec.n_items));
  } else {
    for (int d = 0; d < spec.n_dims; ++d) {
      const int j = spec.first_item_of_dim(d);
      if (params.gamma[j] != 1.0) {
        violation("gamma[" + std::to_string(j + 1) +
                  "] must equal 1 (anchor of dimension " +
                  std::to_string(d + 1) + ")");
      }
    }
    if (spec.discrimination == Discrimination::Constrained) {
      for (int j = 0; j < spec.n_items; ++j) {
        if (params.gamma[j] != 1.0) {
          violation("gamma[" + std::to_string(j + 1) +
                    "] not 1 under constrained discrimination");
        }
      }
    }
    for (int j = 0; j < spec.n_items; ++j) {
      if (!(params.gamma[j] > 0.0)) {
        report.warnings.push_back("gamma[" + std::to_string(j + 1) +
                                  "] is not positive");
      }
    }
  }

  if (spec.difficulty == Difficulty::Free) {
    if (static_cast<int>(params.beta_free.size()) != spec.n_items) {
      violation("beta_free: expected one vector per item");
    } else {
      for (int j = 0; j < spec.n_items; ++j) {
        if (params.beta_free[j].size() != spec.categories[j] - 1) {
          violation("beta_free[" + std::to_string(j + 1) +
                    "]: expected length " +
                    std::to_string(spec.categories[j] - 1));
          continue;
        }
        if (!params.beta_free[j].allFinite()) {
          violation("beta_free[" + std::to_string(j + 1) + "] not finite");
        }
        if (spec.is_anchor_item(j) && params.beta_free[j][0] != 0.0) {
          violation("beta_free[" + std::to_string(j + 1) +
                    "][1] must equal 0 (anchor)");
        }
        if (spec.link == LinkKind::Global) {
          for (int x = 0; x + 1 < params.beta_free[j].size(); ++x) {
            if (!(params.beta_free[j][x] < params.beta_free[j][x + 1])) {
              violation("beta_free[" + std::to_string(j + 1) +
                        "]: thresholds not strictly increasing");
              break;
            }
          }
        }
      }
    }
  } else {
    if (params.beta_rs.size() != spec.n_items) {
      violation("beta_rs: expected length " + std::to_string(spec.n_items));
    } else {
      for (int d = 0; d < spec.n_dims; ++d) {
        const int j = spec.first_item_of_dim(d);
        if (params.beta_rs[j] != 0.0) {
          violation("beta_rs[" + std::to_string(j + 1) +
                    "] must equal 0 (anchor)");
        }
      }
    }
    const int l = spec.common_categories();
    if (params.tau.size() != l - 1) {
      violation("tau: expected length " + std::to_string(l - 1));
    } else {
      if (params.tau[0] != 0.0) violation("tau[1] must equal 0");
      if (spec.link == LinkKind::Global) {
        for (int x = 0; x + 1 < params.tau.size(); ++x) {
          if (!(params.tau[x] < params.tau[x + 1])) {
            violation("tau: steps not strictly increasing");
            break;
          }
        }
      }
    }
  }
  return report;
}

std::string name_model(const ModelSpec& spec) {
  const bool free_disc = spec.discrimination == Discrimination::Free;
  const bool free_diff = spec.difficulty == Difficulty::Free;
  std::string label;
  switch (spec.link) {
    case LinkKind::Global:
      label = free_disc ? (free_diff ? "GRM" : "RS-GRM")
                        : (free_diff ? "1P-GRM" : "1P-RS-GRM");
      break;
    case LinkKind::Local:
      label = free_disc ? (free_diff ? "GPCM" : "RS-GPCM")
                        : (free_diff ? "PCM" : "RSM");
      break;
    case LinkKind::Continuation:
      label = free_disc ? (free_diff ? "SM" : "RS-SM")
                        : (free_diff ? "SRM" : "SRSM");
      break;
  }
  if (spec.n_dims > 1) label = "LC-multidimensional " + label;
  return label;
}

}  // namespace lcirt
