#pragma once

#include <string>
#include <vector>

#include "lcirt/errors.hpp"
#include "lcirt/link.hpp"

namespace lcirt {

enum class Discrimination { Free, Constrained };
enum class Difficulty { Free, RatingScale };

std::string to_string(Discrimination d);
std::string to_string(Difficulty d);
Discrimination discrimination_from_string(const std::string& s);
Difficulty difficulty_from_string(const std::string& s);

// Structure of one model in the class: items, categories, between-item
// dimension assignment, latent classes, link and constraint regime.
struct ModelSpec {
  int n_items = 0;                // r
  std::vector<int> categories;    // l_j >= 2, one per item
  int n_dims = 1;                 // s
  std::vector<int> item_dim;      // 0-based dimension of each item
  int n_classes = 1;              // k
  LinkKind link = LinkKind::Global;
  Discrimination discrimination = Discrimination::Free;
  Difficulty difficulty = Difficulty::Free;

  void check() const;  // throws UsageError on structural violations

  // First item of a dimension: its gamma is fixed at 1 and its first
  // difficulty at 0 for identifiability.
  int first_item_of_dim(int d) const;
  bool is_anchor_item(int j) const;
  bool equal_categories() const;
  int common_categories() const;  // l when all l_j equal
  int sum_thresholds() const;     // sum_j (l_j - 1)
};

// Convenience constructor for the common equal-categories case.
ModelSpec make_spec(int n_items, int n_categories, int n_classes,
                    LinkKind link, Discrimination disc, Difficulty diff,
                    const std::vector<int>& item_dim = {});

struct Parameters {
  Eigen::VectorXd pi;     // k class weights
  Eigen::MatrixXd xi;     // k x s support points
  Eigen::VectorXd gamma;  // r discriminations (anchors fixed at 1)
  // Difficulty::Free: per-item vectors beta_{j1}..beta_{j,l_j-1}
  std::vector<Eigen::VectorXd> beta_free;
  // Difficulty::RatingScale: beta_j per item plus shared steps tau_1..tau_{l-1}
  Eigen::VectorXd beta_rs;
  Eigen::VectorXd tau;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool ok() const { return violations.empty(); }
};

// Checks every Parameters invariant (shapes, pi simplex, identifiability
// anchors, constrained gammas, global threshold ordering). Warnings flag
// non-positive discriminations.
ValidationReport validate(const ModelSpec& spec, const Parameters& params);

// Free-parameter count of the constraint regime: (k-1) class weights,
// s*k support points, plus the free difficulties and discriminations.
int count_free_parameters(const ModelSpec& spec);

// (k-1) + k * sum_j (l_j - 1), the unconstrained-multinomial LC model.
int standard_lc_parameter_count(int n_classes,
                                const std::vector<int>& categories);

// Free parameters stacked for Fisher scoring: phi holds the support points
// (class-major) followed by the free difficulties; gamma_free the
// unconstrained discriminations; pi_free the weights pi_2..pi_k.
struct PackedParams {
  Eigen::VectorXd phi;
  Eigen::VectorXd gamma_free;
  Eigen::VectorXd pi_free;
};

int phi_length(const ModelSpec& spec);
PackedParams pack(const ModelSpec& spec, const Parameters& params);
Parameters unpack(const ModelSpec& spec, const PackedParams& packed);

// Design matrix Z_cj with g(lambda_cj) = gamma_j * Z_cj * phi;
// entries in {0, 1, -1}, identifiability columns removed.
Eigen::MatrixXd build_design_matrix(const ModelSpec& spec, int latent_class,
                                    int item);

// g_x = gamma_j (xi_{c,d_j} - beta_{jx})          (free difficulties)
// g_x = gamma_j (xi_{c,d_j} - beta_j - tau_x)     (rating scale)
Eigen::VectorXd item_logits(const ModelSpec& spec, const Parameters& params,
                            int latent_class, int item);

Eigen::VectorXd conditional_item_probs(const ModelSpec& spec,
                                       const Parameters& params,
                                       int latent_class, int item);

// p(x | c) under local independence; log-space accumulation above 20 items.
double conditional_pattern_prob(const ModelSpec& spec,
                                const Parameters& params,
                                const std::vector<int>& pattern,
                                int latent_class);

// p(x) = sum_c p(x|c) pi_c
double manifest_prob(const ModelSpec& spec, const Parameters& params,
                     const std::vector<int>& pattern);

// Conventional label of the (link, constraint) combination, e.g. GRM,
// 1P-GRM, GPCM, RSM, SRM; prefixed when multidimensional.
std::string name_model(const ModelSpec& spec);

// lambda_cj for all classes and items: table[c][j] has length l_j.
std::vector<std::vector<Eigen::VectorXd>> conditional_prob_table(
    const ModelSpec& spec, const Parameters& params);

}  // namespace lcirt
