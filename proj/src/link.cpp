#include "lcirt/link.hpp"

#include <cmath>

#include "lcirt/errors.hpp"

namespace lcirt {

std::string to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::Global: return "global";
    case LinkKind::Local: return "local";
    case LinkKind::Continuation: return "continuation";
  }
  return "global";
}

LinkKind link_from_string(const std::string& name) {
  if (name == "global") return LinkKind::Global;
  if (name == "local") return LinkKind::Local;
  if (name == "continuation") return LinkKind::Continuation;
  throw ParseError("unknown link kind: \"" + name + "\"");
}

double expit(double x) {
  // branch keeps exp() from overflowing for large |x|
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void require_categories(int l) {
  if (l < 2) {
    throw UsageError("invalid category count: l = " + std::to_string(l) +
                     " (need l >= 2)");
  }
}

// difference expit(a) - expit(b) for a > b without cancellation
double expit_diff(double a, double b) {
  return -expit(a) * expit(-b) * std::expm1(b - a);
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_constraint_matrices(
    int n_categories, LinkKind kind) {
  require_categories(n_categories);
  const int m = n_categories - 1;

  Eigen::MatrixXd contrast(m, 2 * m);
  contrast << -Eigen::MatrixXd::Identity(m, m),
      Eigen::MatrixXd::Identity(m, m);

  const Eigen::MatrixXd lower_ones =
      Eigen::MatrixXd::Ones(m, m).triangularView<Eigen::Lower>();

  // Top block marginalizes to the denominators, bottom to the numerators:
  //   global:        P(X<x)  /  P(X>=x)
  //   local:         P(X=x-1)/  P(X=x)
  //   continuation:  P(X=x-1)/  P(X>=x)
  Eigen::MatrixXd marginalize = Eigen::MatrixXd::Zero(2 * m, n_categories);
  switch (kind) {
    case LinkKind::Global:
      marginalize.topLeftCorner(m, m) = lower_ones;
      marginalize.bottomRightCorner(m, m) = lower_ones.transpose();
      break;
    case LinkKind::Local:
      marginalize.topLeftCorner(m, m).setIdentity();
      marginalize.bottomRightCorner(m, m).setIdentity();
      break;
    case LinkKind::Continuation:
      marginalize.topLeftCorner(m, m).setIdentity();
      marginalize.bottomRightCorner(m, m) = lower_ones.transpose();
      break;
  }
  return {std::move(contrast), std::move(marginalize)};
}

bool logits_valid(const Eigen::VectorXd& logits, LinkKind kind) {
  if (logits.size() < 1 || !logits.allFinite()) return false;
  if (kind == LinkKind::Global) {
    for (Eigen::Index x = 0; x + 1 < logits.size(); ++x) {
      if (!(logits[x] > logits[x + 1])) return false;
    }
  }
  return true;
}

Eigen::VectorXd logits_to_probs(const Eigen::VectorXd& logits,
                                LinkKind kind) {
  const int l = static_cast<int>(logits.size()) + 1;
  require_categories(l);
  if (!logits.allFinite()) {
    throw NumericError("logits_to_probs: non-finite logit");
  }

  Eigen::VectorXd probs(l);
  switch (kind) {
    case LinkKind::Global: {
      // survivals S_x = P(X>=x) = expit(g_x); S_0 = 1, S_l = 0
      if (!logits_valid(logits, kind)) {
        throw InvalidOrderingError(
            "logits_to_probs: global logits not strictly decreasing");
      }
      probs[0] = expit(-logits[0]);
      for (int x = 1; x < l - 1; ++x) {
        probs[x] = expit_diff(logits[x - 1], logits[x]);
      }
      probs[l - 1] = expit(logits[l - 2]);
      break;
    }
    case LinkKind::Local: {
      // lambda_x proportional to exp(g_1 + ... + g_x)
      Eigen::VectorXd cum(l);
      cum[0] = 0.0;
      for (int x = 1; x < l; ++x) cum[x] = cum[x - 1] + logits[x - 1];
      const double top = cum.maxCoeff();
      probs = (cum.array() - top).exp();
      probs /= probs.sum();
      break;
    }
    case LinkKind::Continuation: {
      // S_x = S_{x-1} expit(g_x); lambda_x = S_x expit(-g_{x+1})
      double survival = 1.0;
      for (int x = 0; x < l - 1; ++x) {
        probs[x] = survival * expit(-logits[x]);
        survival *= expit(logits[x]);
      }
      probs[l - 1] = survival;
      break;
    }
  }
  return probs;
}

Eigen::VectorXd probs_to_logits(const Eigen::VectorXd& probs,
                                LinkKind kind) {
  const int l = static_cast<int>(probs.size());
  require_categories(l);
  if (!(probs.array() > 0.0).all()) {
    throw DegenerateDistributionError(
        "probs_to_logits: probabilities must be strictly positive");
  }
  auto [contrast, marginalize] = build_constraint_matrices(l, kind);
  return contrast * (marginalize * probs).array().log().matrix();
}

Eigen::MatrixXd canonical_jacobian(const Eigen::VectorXd& probs,
                                   LinkKind kind) {
  const int l = static_cast<int>(probs.size());
  require_categories(l);
  if (!(probs.array() > 0.0).all()) {
    throw DegenerateDistributionError(
        "canonical_jacobian: probabilities must be strictly positive");
  }
  const int m = l - 1;

  // local logits are first differences of the canonical parameters, so the
  // derivative is exactly the lower-triangular ones matrix
  if (kind == LinkKind::Local) {
    return Eigen::MatrixXd::Ones(m, m).triangularView<Eigen::Lower>();
  }

  // dlambda/dpsi with rows over categories 0..l-1, columns over 1..l-1
  Eigen::MatrixXd dlambda(l, m);
  for (int a = 0; a < l; ++a) {
    for (int b = 1; b < l; ++b) {
      dlambda(a, b - 1) = probs[a] * ((a == b ? 1.0 : 0.0) - probs[b]);
    }
  }

  auto [contrast, marginalize] = build_constraint_matrices(l, kind);
  const Eigen::VectorXd margins = marginalize * probs;
  const Eigen::MatrixXd dg_dpsi = contrast *
                                  margins.cwiseInverse().asDiagonal() *
                                  marginalize * dlambda;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(dg_dpsi);
  if (!lu.isInvertible()) {
    throw SingularJacobianError(
        "canonical_jacobian: dg/dpsi is singular at this distribution");
  }
  return lu.inverse();
}

}  // namespace lcirt
