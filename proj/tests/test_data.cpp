#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "lcirt/data.hpp"
#include "lcirt/errors.hpp"
#include "lcirt/rng.hpp"
#include "lcirt/serialize.hpp"

namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& content,
                    const std::string& name = "data.csv") {
    path = fs::temp_directory_path() /
           ("lcirt_test_" + std::to_string(::getpid()) + "_" + name);
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::error_code ec; fs::remove(path, ec); }
};

}  // namespace

TEST_CASE("csv loading and aggregation") {
  SUBCASE("identical rows are counted") {
    TempFile file("0,1\n0,1\n1,0\n1,1\n");
    const lcirt::ResponseDataset data = lcirt::load_csv(file.path.string(), false);
    CHECK(data.n == 4);
    CHECK(data.r == 2);
    REQUIRE(data.patterns.size() == 3);
    CHECK(data.patterns[0] == std::vector<int>{0, 1});
    CHECK(data.counts[0] == 2);
    CHECK(data.patterns[1] == std::vector<int>{1, 0});
    CHECK(data.counts[1] == 1);
    CHECK(data.patterns[2] == std::vector<int>{1, 1});
    CHECK(data.counts[2] == 1);
  }
  SUBCASE("single row with a categories override") {
    TempFile file("2,0,3\n");
    const lcirt::ResponseDataset data =
        lcirt::load_csv(file.path.string(), false, {4, 4, 4});
    CHECK(data.n == 1);
    CHECK(data.categories == std::vector<int>{4, 4, 4});
    REQUIRE(data.patterns.size() == 1);
  }
  SUBCASE("header rows are skipped") {
    TempFile file("a,b\n0,1\n1,1\n");
    const lcirt::ResponseDataset data = lcirt::load_csv(file.path.string(), true);
    CHECK(data.n == 2);
  }
  SUBCASE("non-integer cells are rejected with their location") {
    TempFile file("0,1\n0,x\n");
    try {
      lcirt::load_csv(file.path.string(), false);
      FAIL("expected ParseError");
    } catch (const lcirt::ParseError& e) {
      const std::string message = e.what();
      CHECK(message.find("row 2") != std::string::npos);
      CHECK(message.find("column 2") != std::string::npos);
    }
  }
  SUBCASE("negative values are rejected") {
    TempFile file("0,-1\n");
    CHECK_THROWS_AS(lcirt::load_csv(file.path.string(), false), lcirt::ParseError);
  }
  SUBCASE("ragged rows are rejected") {
    TempFile file("0,1\n0,1,1\n");
    CHECK_THROWS_AS(lcirt::load_csv(file.path.string(), false), lcirt::ParseError);
  }
  SUBCASE("empty files are rejected") {
    TempFile file("");
    CHECK_THROWS_AS(lcirt::load_csv(file.path.string(), false), lcirt::ParseError);
  }
  SUBCASE("missing cells are rejected unless dropped") {
    TempFile file("0,1\n0,\n1,1\n");
    CHECK_THROWS_AS(lcirt::load_csv(file.path.string(), false), lcirt::ParseError);
    const lcirt::ResponseDataset data =
        lcirt::load_csv(file.path.string(), false, {}, true);
    CHECK(data.n == 2);
    REQUIRE_FALSE(data.warnings.empty());
    CHECK(data.warnings.back().find("dropped 1") != std::string::npos);
  }
  SUBCASE("override smaller than observed values is rejected") {
    TempFile file("0,3\n");
    CHECK_THROWS_AS(lcirt::load_csv(file.path.string(), false, {2, 2}),
                    lcirt::ParseError);
  }
  SUBCASE("missing file raises a distinct error") {
    CHECK_THROWS_AS(lcirt::load_csv("/nonexistent/file.csv", false),
                    lcirt::FileNotFoundError);
  }
}

TEST_CASE("survey-shaped fixture loads with inferred categories") {
  const lcirt::ResponseDataset data = lcirt::load_csv(
      std::string(LCIRT_FIXTURE_DIR) + "/survey_201x14.csv", false);
  CHECK(data.n == 201);
  CHECK(data.r == 14);
  for (int j = 0; j < 14; ++j) CHECK(data.categories[j] == 4);
  int total = 0;
  for (int c : data.counts) total += c;
  CHECK(total == 201);
}

TEST_CASE("marginal distributions") {
  SUBCASE("hand-counted frequencies") {
    TempFile file("0,1\n0,1\n1,0\n1,1\n");
    const lcirt::ResponseDataset data = lcirt::load_csv(file.path.string(), false);
    const Eigen::VectorXd first = lcirt::marginal_distribution(data, 0);
    CHECK(first[0] == doctest::Approx(0.5));
    CHECK(first[1] == doctest::Approx(0.5));
    const Eigen::VectorXd second = lcirt::marginal_distribution(data, 1);
    CHECK(second[0] == doctest::Approx(0.25));
    CHECK(second[1] == doctest::Approx(0.75));
  }
  SUBCASE("uniform synthetic data is near uniform") {
    lcirt::SplitMix64 rng(99);
    std::vector<std::vector<int>> rows(20000, std::vector<int>(2));
    for (auto& row : rows) {
      row[0] = static_cast<int>(rng.next() % 4);
      row[1] = static_cast<int>(rng.next() % 4);
    }
    const lcirt::ResponseDataset data = lcirt::aggregate(rows);
    for (int j = 0; j < 2; ++j) {
      const Eigen::VectorXd freq = lcirt::marginal_distribution(data, j);
      for (int x = 0; x < 4; ++x) {
        CHECK(freq[x] == doctest::Approx(0.25).epsilon(0.05));
      }
    }
  }
  SUBCASE("constant columns are flagged") {
    TempFile file("0,1\n0,0\n0,1\n");
    const lcirt::ResponseDataset data = lcirt::load_csv(file.path.string(), false);
    REQUIRE_FALSE(data.warnings.empty());
    CHECK(data.warnings.front().find("column 1") != std::string::npos);
    const Eigen::VectorXd freq = lcirt::marginal_distribution(data, 0);
    CHECK(freq[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("raw scores") {
  const std::vector<std::vector<int>> rows{{0, 1, 2}, {0, 0, 0}};
  CHECK(lcirt::raw_scores(rows, {0, 1, 2}) == std::vector<int>{3, 0});
  CHECK(lcirt::raw_scores(rows, {2}) == std::vector<int>{2, 0});
  CHECK_THROWS_AS(lcirt::raw_scores(rows, {5}), lcirt::UsageError);
}

TEST_CASE("csv parser survives garbage input") {
  lcirt::SplitMix64 rng(2718);
  const std::string alphabet = "0123456789,-x. \tNA\n";
  for (int rep = 0; rep < 200; ++rep) {
    std::string content;
    const int len = static_cast<int>(rng.next() % 120);
    for (int i = 0; i < len; ++i) {
      content += alphabet[rng.next() % alphabet.size()];
    }
    TempFile file(content, "fuzz.csv");
    try {
      const lcirt::ResponseDataset data =
          lcirt::load_csv(file.path.string(), false);
      data.check();  // anything accepted must satisfy the invariants
    } catch (const lcirt::Error&) {
      // rejection with a typed error is the expected outcome
    }
  }
}

TEST_CASE("aggregation invariants") {
  lcirt::SplitMix64 rng(3);
  std::vector<std::vector<int>> rows(500, std::vector<int>(3));
  for (auto& row : rows) {
    for (int j = 0; j < 3; ++j) row[j] = static_cast<int>(rng.next() % 3);
  }
  const lcirt::ResponseDataset data = lcirt::aggregate(rows);

  SUBCASE("expand-back yields the input multiset") {
    std::vector<std::vector<int>> expanded = lcirt::expand(data);
    std::vector<std::vector<int>> sorted_rows = rows;
    std::sort(sorted_rows.begin(), sorted_rows.end());
    CHECK(expanded == sorted_rows);
  }
  SUBCASE("aggregation is order invariant") {
    std::vector<std::vector<int>> shuffled = rows;
    std::mt19937 shuffle_rng(12345);
    std::shuffle(shuffled.begin(), shuffled.end(), shuffle_rng);
    const lcirt::ResponseDataset again = lcirt::aggregate(shuffled);
    CHECK(again.patterns == data.patterns);
    CHECK(again.counts == data.counts);
    CHECK(again.n == data.n);
  }
  SUBCASE("json round trip is exact") {
    const lcirt::json j = lcirt::to_json(data);
    const lcirt::ResponseDataset back = lcirt::dataset_from_json(j);
    CHECK(back.n == data.n);
    CHECK(back.r == data.r);
    CHECK(back.categories == data.categories);
    CHECK(back.patterns == data.patterns);
    CHECK(back.counts == data.counts);
  }
}
