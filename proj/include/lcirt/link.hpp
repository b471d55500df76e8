#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

namespace lcirt {

// The three ordinal logit links. For an item with l categories 0..l-1 and
// probability vector lambda, the l-1 logits are
//   global:        g_x = log P(X>=x) - log P(X<x)
//   local:         g_x = log P(X=x)  - log P(X=x-1)
//   continuation:  g_x = log P(X>=x) - log P(X=x-1)
// all for x = 1..l-1.
enum class LinkKind { Global, Local, Continuation };

std::string to_string(LinkKind kind);
LinkKind link_from_string(const std::string& name);

// Overflow-safe logistic function.
double expit(double x);

// The (l-1) x 2(l-1) contrast matrix C and 2(l-1) x l marginalization
// matrix M such that g(lambda) = C * log(M * lambda).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_constraint_matrices(
    int n_categories, LinkKind kind);

// True when the logit vector is finite and, for the global link, strictly
// decreasing (the condition for an invertible probability vector).
bool logits_valid(const Eigen::VectorXd& logits, LinkKind kind);

// Closed-form inversion of g(lambda); strictly positive, sums to 1.
Eigen::VectorXd logits_to_probs(const Eigen::VectorXd& logits, LinkKind kind);

// g(lambda) = C log(M lambda); exact inverse of logits_to_probs.
Eigen::VectorXd probs_to_logits(const Eigen::VectorXd& probs, LinkKind kind);

// Derivative of the baseline-category canonical parameters
// psi_x = log(lambda_x / lambda_0) with respect to the logit vector,
// R = (dg/dpsi)^{-1} evaluated at lambda. For the local link this is the
// lower-triangular ones matrix, returned exactly.
Eigen::MatrixXd canonical_jacobian(const Eigen::VectorXd& probs,
                                   LinkKind kind);

}  // namespace lcirt
