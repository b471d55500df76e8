#include <doctest.h>

#include <cmath>

#include "lcirt/errors.hpp"
#include "lcirt/select.hpp"
#include "lcirt/serialize.hpp"
#include "lcirt/sim.hpp"
#include "oracles.hpp"

using lcirt::Difficulty;
using lcirt::Discrimination;
using lcirt::LinkKind;

TEST_CASE("chi-square upper tail") {
  SUBCASE("reference test statistics") {
    CHECK(lcirt::chi_square_sf(1.290, 1) ==
          doctest::Approx(0.256).epsilon(0.004));
    CHECK(lcirt::chi_square_sf(18.782, 13) ==
          doctest::Approx(0.130).epsilon(0.008));
    CHECK(lcirt::chi_square_sf(9.802, 12) ==
          doctest::Approx(0.633).epsilon(0.002));
    CHECK(lcirt::chi_square_sf(127.353, 26) < 5e-4);
    CHECK(lcirt::chi_square_sf(206.467, 26) < 5e-4);
  }
  SUBCASE("boundaries") {
    CHECK(lcirt::chi_square_sf(0.0, 1) == 1.0);
    CHECK(lcirt::chi_square_sf(0.0, 50) == 1.0);
    CHECK_THROWS_AS(lcirt::chi_square_sf(1.0, 0), lcirt::UsageError);
    CHECK_THROWS_AS(lcirt::chi_square_sf(-1.0, 3), lcirt::UsageError);
  }
  SUBCASE("quadrature cross-check on a grid") {
    for (double x : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0}) {
      for (int df : {1, 2, 3, 4, 5, 8, 10, 20, 30, 50}) {
        const double expected = oracle::chi_square_sf_quadrature(x, df);
        REQUIRE(std::abs(lcirt::chi_square_sf(x, df) - expected) < 1e-9);
      }
    }
  }
}

TEST_CASE("likelihood ratio test") {
  SUBCASE("reference nested comparisons") {
    const lcirt::LrTestResult bidim =
        lcirt::lr_test(-2731.249, 60, -2726.348, 72);
    CHECK(bidim.deviance == doctest::Approx(9.802).epsilon(1e-9));
    CHECK(bidim.df == 12);
    CHECK(bidim.p_value == doctest::Approx(0.633).epsilon(0.002));

    const lcirt::LrTestResult gamma =
        lcirt::lr_test(-2741.285, 46, -2731.894, 59);
    CHECK(gamma.deviance == doctest::Approx(18.782).epsilon(1e-9));
    CHECK(gamma.df == 13);
    CHECK(gamma.p_value == doctest::Approx(0.130).epsilon(0.008));
  }
  SUBCASE("identical log-likelihoods give D=0, p=1") {
    const lcirt::LrTestResult result = lcirt::lr_test(-100.0, 5, -100.0, 7);
    CHECK(result.deviance == 0.0);
    CHECK(result.p_value == 1.0);
  }
  SUBCASE("non-nested parameter counts are a usage error") {
    CHECK_THROWS_AS(lcirt::lr_test(-10.0, 7, -9.0, 7), lcirt::UsageError);
    CHECK_THROWS_AS(lcirt::lr_test(-10.0, 9, -9.0, 7), lcirt::UsageError);
  }
  SUBCASE("substantially negative deviance flags a failed optimization") {
    CHECK_THROWS_AS(lcirt::lr_test(-9.0, 5, -10.0, 7),
                    lcirt::FailedOptimizationError);
    // tiny negatives within tolerance are clamped
    const lcirt::LrTestResult result =
        lcirt::lr_test(-10.0 + 4e-7, 5, -10.0, 7);
    CHECK(result.p_value == 1.0);
  }
}

TEST_CASE("selection decision rules replay the reference tables") {
  SUBCASE("number of classes from the BIC path") {
    bool boundary = true;
    CHECK(lcirt::choose_k_from_bic(
              {6529.040, 6080.051, 6027.791, 6104.805}, &boundary) == 3);
    CHECK_FALSE(boundary);
    CHECK(lcirt::choose_k_from_bic({300.0, 200.0, 100.0}, &boundary) == 3);
    CHECK(boundary);
    CHECK(lcirt::choose_k_from_bic({42.0}) == 1);
  }
  SUBCASE("link choice by minimum BIC") {
    bool tie = true;
    CHECK(lcirt::choose_link_from_table(
              {LinkKind::Global, LinkKind::Local}, {5834.534, 5864.479},
              &tie) == LinkKind::Global);
    CHECK_FALSE(tie);
    CHECK(lcirt::choose_link_from_table({LinkKind::Continuation}, {5000.0}) ==
          LinkKind::Continuation);
    CHECK(lcirt::choose_link_from_table(
              {LinkKind::Local, LinkKind::Global}, {5000.0, 5000.0}, &tie) ==
          LinkKind::Global);
    CHECK(tie);
  }
  SUBCASE("dimensionality chain accepts down to unidimensional") {
    const lcirt::DimChainDecision decision = lcirt::decide_dimensionality(
        {{-2726.348, 72}, {-2731.249, 60}, {-2731.894, 59}}, 0.05);
    CHECK(decision.chosen_index == 2);
    REQUIRE(decision.tests.size() == 2);
    CHECK(decision.tests[0].deviance == doctest::Approx(9.802).epsilon(1e-9));
    CHECK(decision.tests[0].df == 12);
    CHECK(decision.tests[0].p_value == doctest::Approx(0.633).epsilon(0.002));
    CHECK(decision.tests[1].deviance == doctest::Approx(1.290).epsilon(1e-9));
    CHECK(decision.tests[1].df == 1);
    CHECK(decision.tests[1].p_value == doctest::Approx(0.256).epsilon(0.004));
  }
  SUBCASE("a rejected merge stops the chain") {
    const lcirt::DimChainDecision decision = lcirt::decide_dimensionality(
        {{-1000.0, 20}, {-1100.0, 15}, {-1101.0, 14}}, 0.05);
    CHECK(decision.chosen_index == 0);
    CHECK(decision.tests.size() == 1);
    CHECK_FALSE(decision.accepted[0]);
  }
  SUBCASE("duplicate candidates with equal capacity are merged silently") {
    const lcirt::DimChainDecision decision = lcirt::decide_dimensionality(
        {{-1000.0, 20}, {-1000.0, 20}}, 0.05);
    CHECK(decision.chosen_index == 1);
    CHECK(decision.df_zero[0]);
  }
  SUBCASE("constraint chain replays the reference decisions") {
    // GRM -2731.894/59, RS-GRM -2795.570/33, 1P-GRM -2741.285/46,
    // 1P-RS-GRM -2844.518/20
    const lcirt::ConstraintDecision decision =
        lcirt::decide_item_constraints(
            {-2731.894, 59}, std::pair<double, int>{-2795.570, 33},
            std::pair<double, int>{-2741.285, 46},
            std::pair<double, int>{-2844.518, 20}, 0.05, 201);
    CHECK(decision.chosen == lcirt::Regime::ConstrFree);
    REQUIRE(decision.tests.size() == 3);
    CHECK(decision.tests[0].lr.deviance ==
          doctest::Approx(127.352).epsilon(1e-8));
    CHECK(decision.tests[0].lr.df == 26);
    CHECK_FALSE(decision.tests[0].accepted);
    CHECK(decision.tests[1].lr.deviance ==
          doctest::Approx(18.782).epsilon(1e-8));
    CHECK(decision.tests[1].lr.df == 13);
    CHECK(decision.tests[1].accepted);
    CHECK(decision.tests[2].lr.deviance ==
          doctest::Approx(206.466).epsilon(1e-8));
    CHECK(decision.tests[2].lr.df == 26);
    CHECK_FALSE(decision.tests[2].accepted);
  }
  SUBCASE("identical fits collapse to the most constrained regime") {
    const std::pair<double, int> ff{-500.0, 30};
    const lcirt::ConstraintDecision decision =
        lcirt::decide_item_constraints(ff, std::pair<double, int>{-500.0, 20},
                                       std::pair<double, int>{-500.0, 25},
                                       std::pair<double, int>{-500.0, 15},
                                       0.05, 100);
    CHECK(decision.chosen == lcirt::Regime::ConstrRs);
  }
  SUBCASE("rejecting both single constraints keeps the free model") {
    const lcirt::ConstraintDecision decision =
        lcirt::decide_item_constraints(
            {-500.0, 30}, std::pair<double, int>{-600.0, 20},
            std::pair<double, int>{-620.0, 25},
            std::pair<double, int>{-700.0, 15}, 0.05, 100);
    CHECK(decision.chosen == lcirt::Regime::FreeFree);
    CHECK(decision.tests.size() == 2);
  }
}

TEST_CASE("pipeline on synthetic data") {
  // small two-class rating-scale truth with a local link
  const lcirt::ModelSpec truth_spec = lcirt::make_spec(
      4, 3, 2, LinkKind::Local, Discrimination::Constrained,
      Difficulty::RatingScale);
  lcirt::Parameters truth;
  truth.pi = Eigen::VectorXd(2);
  truth.pi << 0.45, 0.55;
  truth.xi = Eigen::MatrixXd(2, 1);
  truth.xi << -1.3, 1.3;
  truth.gamma = Eigen::VectorXd::Ones(4);
  truth.beta_rs = Eigen::VectorXd(4);
  truth.beta_rs << 0.0, 0.4, -0.4, 0.2;
  truth.tau = Eigen::VectorXd(2);
  truth.tau << 0.0, 0.5;

  lcirt::SimConfig cfg{truth_spec, truth, 1500, 2026};
  const lcirt::ResponseDataset data = lcirt::sample_dataset(cfg);

  lcirt::PipelineConfig config;
  config.k_max = 3;
  config.links = {LinkKind::Global, LinkKind::Local};
  config.partitions = {lcirt::per_item_partition(4),
                       lcirt::single_partition(4)};
  config.controls.n_random = 2;
  config.controls.seed = 17;
  config.controls.tol = 1e-7;
  config.controls.max_iter = 1500;

  const lcirt::SelectionReport report =
      lcirt::run_selection_pipeline(data, config);

  SUBCASE("every recorded BIC reproduces the formula") {
    auto check_table = [&](const std::vector<lcirt::FitTableRow>& table) {
      for (const auto& row : table) {
        CHECK(row.bic == doctest::Approx(lcirt::compute_bic(
                             row.loglik, row.n_par, data.n))
                             .epsilon(1e-12));
      }
    };
    check_table(report.k_step.table);
    check_table(report.link_step.table);
    check_table(report.dim_step.table);
    check_table(report.constraint_step.table);
  }
  SUBCASE("the pipeline is deterministic") {
    const lcirt::SelectionReport again =
        lcirt::run_selection_pipeline(data, config);
    CHECK(lcirt::to_json(report, false).dump() ==
          lcirt::to_json(again, false).dump());
  }
  SUBCASE("final fit is present and consistent") {
    REQUIRE(report.final_fit.has_value());
    CHECK(report.final_fit->summary.bic ==
          doctest::Approx(lcirt::compute_bic(
              report.final_fit->summary.loglik,
              report.final_fit->summary.n_par, data.n)));
  }
  SUBCASE("degenerate pipeline reduces to a single fit") {
    lcirt::PipelineConfig tiny;
    tiny.k_max = 1;
    tiny.links = {LinkKind::Local};
    tiny.partitions = {lcirt::single_partition(4)};
    tiny.controls = config.controls;
    const lcirt::SelectionReport small =
        lcirt::run_selection_pipeline(data, tiny);
    CHECK(small.k_step.chosen_k == 1);
    CHECK(small.link_step.chosen == LinkKind::Local);
    REQUIRE(small.final_fit.has_value());
    const lcirt::ModelSpec direct_spec = lcirt::spec_for_partition(
        data, 1, LinkKind::Local, lcirt::single_partition(4));
    lcirt::ModelSpec chosen = direct_spec;
    chosen.discrimination = small.constraint_step.discrimination;
    chosen.difficulty = small.constraint_step.difficulty;
    const lcirt::FitResult direct =
        lcirt::fit_multistart(chosen, data, tiny.controls);
    CHECK(small.final_fit->summary.loglik ==
          doctest::Approx(direct.summary.loglik).epsilon(1e-12));
  }
  SUBCASE("a failing step yields an aborted partial report") {
    lcirt::PipelineConfig broken = config;
    broken.partitions = {{{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}};  // not nested
    const lcirt::SelectionReport partial =
        lcirt::run_selection_pipeline(data, broken);
    CHECK(partial.aborted);
    CHECK(partial.abort_kind == "usage");
    CHECK(partial.completed_through == lcirt::StopAfter::Link);
    CHECK_FALSE(partial.k_step.table.empty());
    const lcirt::json j = lcirt::to_json(partial, false);
    CHECK(j.at("aborted").get<bool>());
    CHECK(j.contains("link_step"));
    CHECK_FALSE(j.contains("dim_step"));
  }
  SUBCASE("stop-after truncates the report") {
    lcirt::PipelineConfig truncated = config;
    truncated.stop_after = lcirt::StopAfter::K;
    const lcirt::SelectionReport partial =
        lcirt::run_selection_pipeline(data, truncated);
    CHECK(partial.completed_through == lcirt::StopAfter::K);
    CHECK_FALSE(partial.final_fit.has_value());
    const lcirt::json j = lcirt::to_json(partial, false);
    CHECK(j.contains("k_step"));
    CHECK_FALSE(j.contains("link_step"));
  }
}

TEST_CASE("constraint step handles structurally collapsed regimes") {
  lcirt::EmControls controls;
  controls.n_random = 1;
  controls.seed = 11;
  controls.tol = 1e-7;
  controls.max_iter = 500;

  SUBCASE("per-item partition leaves no free discriminations") {
    const lcirt::ModelSpec spec = lcirt::make_spec(
        3, 3, 2, LinkKind::Global, Discrimination::Free, Difficulty::Free,
        {0, 1, 2});
    lcirt::SplitMix64 rng(71);
    const lcirt::Parameters truth = oracle::random_params(spec, rng);
    lcirt::SimConfig cfg{spec, truth, 400, 15};
    const lcirt::ResponseDataset data = lcirt::sample_dataset(cfg);
    const lcirt::ConstraintSelection selection =
        lcirt::choose_item_constraints(data, 2, LinkKind::Global,
                                       lcirt::per_item_partition(3),
                                       controls);
    // only the difficulty constraint is testable
    CHECK(selection.table.size() == 2);
    for (const auto& test : selection.tests) {
      CHECK(test.lr.df > 0);
    }
  }
  SUBCASE("binary items make the rating-scale constraint vacuous") {
    const lcirt::ModelSpec spec = lcirt::make_spec(
        4, 2, 2, LinkKind::Global, Discrimination::Free, Difficulty::Free);
    lcirt::SplitMix64 rng(73);
    const lcirt::Parameters truth = oracle::random_params(spec, rng);
    lcirt::SimConfig cfg{spec, truth, 400, 16};
    const lcirt::ResponseDataset data = lcirt::sample_dataset(cfg);
    const lcirt::ConstraintSelection selection =
        lcirt::choose_item_constraints(data, 2, LinkKind::Global,
                                       lcirt::single_partition(4), controls);
    // only the discrimination constraint is testable
    CHECK(selection.table.size() == 2);
    for (const auto& test : selection.tests) {
      CHECK(test.lr.df > 0);
    }
  }
}

TEST_CASE("fitted link tie on binary items resolves to the global logit") {
  // with two categories the three links coincide, so the fitted tables tie
  const lcirt::ModelSpec spec = lcirt::make_spec(
      3, 2, 2, LinkKind::Global, Discrimination::Constrained,
      Difficulty::Free);
  lcirt::SplitMix64 rng(303);
  lcirt::Parameters truth = oracle::random_params(spec, rng);
  truth.xi.col(0) << -1.0, 1.0;
  lcirt::SimConfig cfg{spec, truth, 400, 8};
  const lcirt::ResponseDataset data = lcirt::sample_dataset(cfg);
  lcirt::EmControls controls;
  controls.n_random = 1;
  controls.seed = 2;
  const lcirt::LinkSelection selection = lcirt::choose_link(
      data, 2, {LinkKind::Local, LinkKind::Global}, controls);
  CHECK(selection.chosen == LinkKind::Global);
  CHECK(selection.tie);
}

TEST_CASE("partition helpers") {
  CHECK(lcirt::per_item_partition(3) ==
        lcirt::Partition{{0}, {1}, {2}});
  CHECK(lcirt::single_partition(3) == lcirt::Partition{{0, 1, 2}});
  CHECK(lcirt::partition_label(lcirt::single_partition(5), 5) ==
        "unidimensional");
  CHECK(lcirt::partition_label(lcirt::per_item_partition(5), 5) ==
        "r-dimensional");
  CHECK(lcirt::partition_label({{0, 1}, {2, 3, 4}}, 5) == "bidimensional");

  lcirt::SplitMix64 rng(7);
  const lcirt::ModelSpec spec = lcirt::make_spec(
      4, 2, 2, LinkKind::Global, Discrimination::Free, Difficulty::Free);
  const lcirt::Parameters truth = oracle::random_params(spec, rng);
  lcirt::SimConfig cfg{spec, truth, 100, 5};
  const lcirt::ResponseDataset data = lcirt::sample_dataset(cfg);
  CHECK_THROWS_AS(
      lcirt::test_dimensionality(data, 2, LinkKind::Global,
                                 {{{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}},
                                 lcirt::EmControls{}),
      lcirt::UsageError);
}
