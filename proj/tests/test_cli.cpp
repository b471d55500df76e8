#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "lcirt/estimate.hpp"
#include "lcirt/serialize.hpp"
#include "lcirt/sim.hpp"

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() /
          ("lcirt_cli_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter()));
    fs::create_directories(dir);
  }
  ~Sandbox() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  static int counter() {
    static int value = 0;
    return value++;
  }
  std::string path(const std::string& name) const {
    return (dir / name).string();
  }
};

int run(const std::string& args, const std::string& redirect = "") {
  std::string command = std::string(LCIRT_CLI_PATH) + " " + args;
  if (!redirect.empty()) {
    command += " >" + redirect + " 2>&1";
  } else {
    command += " >/dev/null 2>&1";
  }
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_sim_config(const std::string& path, int n, std::uint64_t seed) {
  lcirt::json spec = {{"items", 3},          {"categories", 3},
                      {"dimensions", 1},     {"classes", 2},
                      {"link", "global"},    {"discrimination", "free"},
                      {"difficulty", "free"}};
  lcirt::json params = {
      {"pi", {0.4, 0.6}},
      {"xi", {{-1.0}, {1.2}}},
      {"gamma", {1.0, 1.3, 0.8}},
      {"beta_free", {{0.0, 0.8}, {-0.5, 0.6}, {-0.2, 0.9}}}};
  lcirt::json config = {
      {"spec", spec}, {"params", params}, {"n", n}, {"seed", seed}};
  lcirt::write_json_file(path, config);
}

}  // namespace

TEST_CASE("cli end-to-end flows") {
  Sandbox box;
  write_sim_config(box.path("sim_config.json"), 400, 99);

  SUBCASE("simulate, fit, loglik round trip") {
    REQUIRE(run("simulate --config " + box.path("sim_config.json") +
                " --out " + box.path("sim")) == 0);
    REQUIRE(fs::exists(box.path("sim/sim.csv")));
    REQUIRE(fs::exists(box.path("sim/sim_truth.json")));
    REQUIRE(fs::exists(box.path("sim/simulate_manifest.json")));

    // spec file for fitting = truth spec
    const lcirt::json truth =
        lcirt::load_json_file(box.path("sim/sim_truth.json"));
    lcirt::write_json_file(box.path("spec.json"), truth.at("spec"));

    REQUIRE(run("fit --data " + box.path("sim/sim.csv") + " --spec " +
                box.path("spec.json") + " --seed 5 --starts 2 --out " +
                box.path("fit")) == 0);
    REQUIRE(fs::exists(box.path("fit/fit.json")));
    const lcirt::json fit = lcirt::load_json_file(box.path("fit/fit.json"));
    CHECK(fit.at("converged").get<bool>());

    // rerun is byte-identical
    REQUIRE(run("fit --data " + box.path("sim/sim.csv") + " --spec " +
                box.path("spec.json") + " --seed 5 --starts 2 --out " +
                box.path("fit2")) == 0);
    CHECK(slurp(box.path("fit/fit.json")) == slurp(box.path("fit2/fit.json")));

    // manifests agree except for timestamps
    lcirt::json m1 = lcirt::load_json_file(box.path("fit/fit_manifest.json"));
    lcirt::json m2 =
        lcirt::load_json_file(box.path("fit2/fit_manifest.json"));
    CHECK(m1.at("inputs") == m2.at("inputs"));
    CHECK(m1.at("seed") == m2.at("seed"));

    // loglik evaluates the truth parameters without fitting
    lcirt::write_json_file(box.path("params.json"), truth.at("params"));
    REQUIRE(run("loglik --data " + box.path("sim/sim.csv") + " --spec " +
                box.path("spec.json") + " --params " +
                box.path("params.json"),
                box.path("loglik.txt")) == 0);
    const std::string output = slurp(box.path("loglik.txt"));
    REQUIRE(output.find("loglik ") != std::string::npos);
    const double cli_loglik =
        std::stod(output.substr(output.find("loglik ") + 7));
    const lcirt::SimConfig cfg = lcirt::sim_config_from_json(truth);
    const lcirt::ResponseDataset data = lcirt::load_csv(
        box.path("sim/sim.csv"), false, cfg.spec.categories);
    CHECK(std::abs(cli_loglik -
                   lcirt::log_likelihood(cfg.spec, cfg.params, data)) <
          1e-5);
  }

  SUBCASE("zero random starts uses the deterministic start only") {
    REQUIRE(run("simulate --config " + box.path("sim_config.json") +
                " --out " + box.path("s0")) == 0);
    const lcirt::json truth =
        lcirt::load_json_file(box.path("s0/sim_truth.json"));
    lcirt::write_json_file(box.path("spec0.json"), truth.at("spec"));
    REQUIRE(run("fit --data " + box.path("s0/sim.csv") + " --spec " +
                box.path("spec0.json") + " --starts 0 --out " +
                box.path("f0")) == 0);
    const lcirt::json fit = lcirt::load_json_file(box.path("f0/fit.json"));
    CHECK(fit.at("start_id").get<int>() == 0);
  }

  SUBCASE("env seed fallback matches an explicit seed") {
    write_sim_config(box.path("cfg.json"), 120, 77);
    REQUIRE(run("simulate --config " + box.path("cfg.json") + " --out " +
                box.path("s")) == 0);
    const lcirt::json truth =
        lcirt::load_json_file(box.path("s/sim_truth.json"));
    lcirt::write_json_file(box.path("spec.json"), truth.at("spec"));

    REQUIRE(run("fit --data " + box.path("s/sim.csv") + " --spec " +
                box.path("spec.json") + " --seed 31 --starts 1 --out " +
                box.path("fa")) == 0);
    setenv("LCIRT_SEED", "31", 1);
    REQUIRE(run("fit --data " + box.path("s/sim.csv") + " --spec " +
                box.path("spec.json") + " --starts 1 --out " +
                box.path("fb")) == 0);
    unsetenv("LCIRT_SEED");
    CHECK(slurp(box.path("fa/fit.json")) == slurp(box.path("fb/fit.json")));
  }

  SUBCASE("bundled fixture fits to convergence") {
    const std::string fixtures = LCIRT_FIXTURE_DIR;
    REQUIRE(run("fit --data " + fixtures + "/fit_data.csv --spec " +
                fixtures + "/fit_spec.json --seed 2 --starts 2 --out " +
                box.path("ff")) == 0);
    const lcirt::json fit = lcirt::load_json_file(box.path("ff/fit.json"));
    CHECK(fit.at("converged").get<bool>());
    CHECK(fit.at("model").get<std::string>() == "1P-GRM");
  }

  SUBCASE("loglik evaluates an injected triple") {
    REQUIRE(run("loglik --loglik -2731.894 --n-par 59 --n 201",
                box.path("bic.txt")) == 0);
    const std::string output = slurp(box.path("bic.txt"));
    const auto pos = output.find("bic ");
    REQUIRE(pos != std::string::npos);
    const double bic = std::stod(output.substr(pos + 4));
    CHECK(std::abs(bic - 5776.68) < 0.01);
  }

  SUBCASE("exit codes") {
    // missing file -> usage (2)
    CHECK(run("fit --data /nonexistent.csv --spec /nonexistent.json") == 2);
    // malformed spec -> parse (3), and no output is written
    std::ofstream bad(box.path("bad.json"));
    bad << "{ not json";
    bad.close();
    std::ofstream csv(box.path("d.csv"));
    csv << "0,1\n1,0\n";
    csv.close();
    CHECK(run("fit --data " + box.path("d.csv") + " --spec " +
              box.path("bad.json") + " --out " + box.path("badout")) == 3);
    CHECK_FALSE(fs::exists(box.path("badout/fit.json")));
    // n = 0 simulation -> usage (2)
    write_sim_config(box.path("zero.json"), 0, 1);
    CHECK(run("simulate --config " + box.path("zero.json")) == 2);
    // unknown flag -> usage (2)
    CHECK(run("fit --frobnicate") == 2);
  }

  SUBCASE("select with stop-after emits only the k table") {
    write_sim_config(box.path("cfg.json"), 300, 13);
    REQUIRE(run("simulate --config " + box.path("cfg.json") + " --out " +
                box.path("s")) == 0);
    lcirt::json pipeline = {
        {"k_max", 2},
        {"links", {"global"}},
        {"alpha", 0.05},
        {"controls",
         {{"n_random", 1}, {"seed", 4}, {"tol", 1e-6}, {"max_iter", 300}}}};
    lcirt::write_json_file(box.path("pipeline.json"), pipeline);
    REQUIRE(run("select --data " + box.path("s/sim.csv") + " --config " +
                box.path("pipeline.json") + " --stop-after k --out " +
                box.path("sel")) == 0);
    const lcirt::json report =
        lcirt::load_json_file(box.path("sel/report.json"));
    CHECK(report.contains("k_step"));
    CHECK_FALSE(report.contains("link_step"));

    // byte-identical report on rerun
    REQUIRE(run("select --data " + box.path("s/sim.csv") + " --config " +
                box.path("pipeline.json") + " --stop-after k --out " +
                box.path("sel2")) == 0);
    CHECK(slurp(box.path("sel/report.json")) ==
          slurp(box.path("sel2/report.json")));

    // full run reaches the final fit and writes the table dump
    REQUIRE(run("select --data " + box.path("s/sim.csv") + " --config " +
                box.path("pipeline.json") + " --out " +
                box.path("self")) == 0);
    const lcirt::json full =
        lcirt::load_json_file(box.path("self/report.json"));
    CHECK(full.contains("final_fit"));
    CHECK(full.at("completed_through").get<std::string>() == "constraints");
    const std::string text = slurp(box.path("self/report.txt"));
    CHECK(text.find("step 1") != std::string::npos);
    CHECK(text.find("selected model") != std::string::npos);
  }
}
