#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lcirt/serialize.hpp"
#include "lcirt/version.hpp"

namespace fs = std::filesystem;
using lcirt::json;

namespace {

// exit codes: 0 ok, 2 usage, 3 parse, 4 numeric, 5 non-convergence
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitParse = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitNoConvergence = 5;

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lcirt::FileNotFoundError("cannot open file: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buffer[65536];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    char byte[3];
    std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buffer[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buffer;
}

struct ManifestBuilder {
  json manifest;
  explicit ManifestBuilder(const std::string& command,
                           std::uint64_t seed) {
    manifest["command"] = command;
    manifest["version"] = lcirt::kVersion;
    manifest["seed"] = seed;
    manifest["inputs"] = json::object();
    manifest["outputs"] = json::array();
    manifest["started_at"] = timestamp_utc();
  }
  void add_input(const std::string& role, const std::string& path) {
    manifest["inputs"][role] = {{"path", path}, {"sha256", sha256_file(path)}};
  }
  void add_output(const std::string& path) {
    manifest["outputs"].push_back(path);
  }
  void write(const std::string& path) {
    manifest["finished_at"] = timestamp_utc();
    lcirt::write_json_file(path, manifest);
  }
};

struct CommonOptions {
  std::string out_dir = ".";
  bool has_seed = false;
  std::uint64_t seed = 0;
  int threads = 0;
  bool trace = false;
  bool header = false;
  bool drop_incomplete = false;
  std::vector<int> categories;
};

std::uint64_t resolve_seed(const CommonOptions& opts, bool config_has_seed,
                           std::uint64_t config_seed) {
  if (opts.has_seed) return opts.seed;
  if (config_has_seed) return config_seed;
  if (const char* env = std::getenv("LCIRT_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 1;
}

std::string out_path(const CommonOptions& opts, const std::string& name) {
  fs::create_directories(opts.out_dir);
  return (fs::path(opts.out_dir) / name).string();
}

lcirt::ResponseDataset load_data(const std::string& path,
                                 const CommonOptions& opts) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    return lcirt::dataset_from_json(lcirt::load_json_file(path));
  }
  return lcirt::load_csv(path, opts.header, opts.categories,
                         opts.drop_incomplete);
}

int run_fit(const std::string& data_path, const std::string& spec_path,
            const CommonOptions& opts, lcirt::EmControls controls) {
  const lcirt::ModelSpec spec =
      lcirt::spec_from_json(lcirt::load_json_file(spec_path));
  CommonOptions data_opts = opts;
  if (data_opts.categories.empty()) data_opts.categories = spec.categories;
  const lcirt::ResponseDataset data = load_data(data_path, data_opts);

  controls.seed = resolve_seed(opts, false, 0);
  if (opts.threads > 0) controls.threads = opts.threads;
  controls.trace = opts.trace;

  const lcirt::FitResult fit = lcirt::fit_multistart(spec, data, controls);
  const std::string fit_path = out_path(opts, "fit.json");
  lcirt::write_json_file(fit_path, lcirt::to_json(spec, fit, opts.trace));

  ManifestBuilder manifest("fit", controls.seed);
  manifest.add_input("data", data_path);
  manifest.add_input("spec", spec_path);
  manifest.add_output(fit_path);
  manifest.write(out_path(opts, "fit_manifest.json"));

  std::cout << "model " << lcirt::name_model(spec) << "\n"
            << "loglik " << fit.summary.loglik << "\n"
            << "n_par " << fit.summary.n_par << "\n"
            << "bic " << fit.summary.bic << "\n"
            << "converged " << (fit.summary.converged ? "yes" : "no") << "\n";
  if (!fit.summary.converged) {
    std::cerr << "fit did not converge within " << controls.max_iter
              << " iterations\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

int run_select(const std::string& data_path, const std::string& config_path,
               const std::string& stop_after, const CommonOptions& opts) {
  lcirt::PipelineConfig config =
      lcirt::pipeline_config_from_json(lcirt::load_json_file(config_path));
  const lcirt::ResponseDataset data = load_data(data_path, opts);

  config.controls.seed = resolve_seed(opts, true, config.controls.seed);
  if (opts.threads > 0) config.controls.threads = opts.threads;
  config.controls.trace = opts.trace;
  if (!stop_after.empty()) {
    if (stop_after == "k") config.stop_after = lcirt::StopAfter::K;
    else if (stop_after == "link") config.stop_after = lcirt::StopAfter::Link;
    else if (stop_after == "dim") config.stop_after = lcirt::StopAfter::Dim;
    else if (stop_after == "constraints")
      config.stop_after = lcirt::StopAfter::Constraints;
    else
      throw lcirt::UsageError("unknown --stop-after value: " + stop_after);
  }

  const lcirt::SelectionReport report =
      lcirt::run_selection_pipeline(data, config);
  const std::string report_path = out_path(opts, "report.json");
  const std::string text_path = out_path(opts, "report.txt");
  lcirt::write_json_file(report_path, lcirt::to_json(report, opts.trace));
  {
    std::ofstream out(text_path);
    out << lcirt::report_text(report);
  }

  ManifestBuilder manifest("select", config.controls.seed);
  manifest.add_input("data", data_path);
  manifest.add_input("config", config_path);
  manifest.add_output(report_path);
  manifest.add_output(text_path);
  manifest.write(out_path(opts, "select_manifest.json"));

  std::cout << lcirt::report_text(report);
  if (report.aborted) {
    std::cerr << "pipeline aborted: " << report.abort_reason << "\n";
    if (report.abort_kind == "usage") return kExitUsage;
    if (report.abort_kind == "parse") return kExitParse;
    return kExitNumeric;
  }
  return kExitOk;
}

int run_simulate(const std::string& config_path, const CommonOptions& opts) {
  json config_json = lcirt::load_json_file(config_path);
  lcirt::SimConfig config = lcirt::sim_config_from_json(config_json);
  if (opts.has_seed) config.seed = opts.seed;

  const auto rows = lcirt::sample_rows(config);
  const std::string csv_path = out_path(opts, "sim.csv");
  lcirt::write_csv(csv_path, rows);

  json truth = lcirt::to_json(config);
  const std::string truth_path = out_path(opts, "sim_truth.json");
  lcirt::write_json_file(truth_path, truth);

  ManifestBuilder manifest("simulate", config.seed);
  manifest.add_input("config", config_path);
  manifest.add_output(csv_path);
  manifest.add_output(truth_path);
  manifest.write(out_path(opts, "simulate_manifest.json"));

  std::cout << "wrote " << rows.size() << " rows to " << csv_path << "\n";
  return kExitOk;
}

struct InjectedTriple {
  double loglik = 0.0;
  int n_par = -1;
  int n = -1;
  bool complete() const { return n_par >= 0 && n >= 1; }
};

int run_loglik(const std::string& data_path, const std::string& spec_path,
               const std::string& params_path, const InjectedTriple& inject,
               const CommonOptions& opts) {
  if (inject.complete()) {
    // arithmetic-only mode: evaluate BIC for a given triple
    const double bic =
        lcirt::compute_bic(inject.loglik, inject.n_par, inject.n);
    std::printf("loglik %.6f\nn_par %d\nbic %.6f\n", inject.loglik,
                inject.n_par, bic);
    return kExitOk;
  }
  if (data_path.empty() || spec_path.empty() || params_path.empty()) {
    throw lcirt::UsageError(
        "loglik needs --data/--spec/--params, or the full "
        "--loglik/--n-par/--n triple");
  }
  const lcirt::ModelSpec spec =
      lcirt::spec_from_json(lcirt::load_json_file(spec_path));
  const lcirt::Parameters params = lcirt::params_from_json(
      spec, lcirt::load_json_file(params_path));
  {
    const lcirt::ValidationReport report = lcirt::validate(spec, params);
    if (!report.ok()) {
      throw lcirt::UsageError("invalid parameters: " +
                              report.violations.front());
    }
  }
  CommonOptions data_opts = opts;
  if (data_opts.categories.empty()) data_opts.categories = spec.categories;
  const lcirt::ResponseDataset data = load_data(data_path, data_opts);

  const double loglik = lcirt::log_likelihood(spec, params, data);
  const int n_par = lcirt::count_free_parameters(spec);
  const double bic = lcirt::compute_bic(loglik, n_par, data.n);
  std::printf("loglik %.6f\nn_par %d\nbic %.6f\n", loglik, n_par, bic);
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const lcirt::ParseError*>(&e)) return kExitParse;
  if (dynamic_cast<const lcirt::UsageError*>(&e)) return kExitUsage;
  if (dynamic_cast<const lcirt::NumericError*>(&e)) return kExitNumeric;
  return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multidimensional latent-class IRT models for ordinal items"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string data_path, spec_path, params_path, config_path, stop_after;
  lcirt::EmControls controls;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "random seed")
        ->each([&](const std::string&) { opts.has_seed = true; });
    cmd->add_option("--threads", opts.threads, "worker threads for starts");
    cmd->add_flag("--trace", opts.trace, "record per-iteration loglik");
  };
  auto add_data_opts = [&](CLI::App* cmd) {
    cmd->add_flag("--header", opts.header, "CSV has a header row");
    cmd->add_flag("--drop-incomplete", opts.drop_incomplete,
                  "drop rows with missing cells instead of rejecting");
    cmd->add_option("--categories", opts.categories,
                    "category counts per item (overrides inference)");
  };
  auto add_controls = [&](CLI::App* cmd) {
    cmd->add_option("--starts", controls.n_random, "number of random starts");
    cmd->add_option("--tol", controls.tol, "relative loglik tolerance");
    cmd->add_option("--max-iter", controls.max_iter, "EM iteration cap");
    cmd->add_option("--inner-max", controls.inner_max,
                    "Fisher sweeps per M-step");
    cmd->add_option("--pi-floor", controls.pi_floor,
                    "class-weight floor before renormalization");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit one model by EM");
  fit->add_option("--data", data_path, "CSV or dataset JSON")->required();
  fit->add_option("--spec", spec_path, "model spec JSON")->required();
  add_common(fit);
  add_data_opts(fit);
  add_controls(fit);

  CLI::App* select =
      app.add_subcommand("select", "run the model-selection pipeline");
  select->add_option("--data", data_path, "CSV or dataset JSON")->required();
  select->add_option("--config", config_path, "pipeline config JSON")
      ->required();
  select->add_option("--stop-after", stop_after,
                     "truncate after step: k|link|dim|constraints");
  add_common(select);
  add_data_opts(select);

  CLI::App* simulate =
      app.add_subcommand("simulate", "sample a dataset from a model");
  simulate->add_option("--config", config_path, "sim config JSON")
      ->required();
  add_common(simulate);

  CLI::App* loglik =
      app.add_subcommand("loglik", "evaluate loglik, #par and BIC");
  InjectedTriple inject;
  loglik->add_option("--data", data_path, "CSV or dataset JSON");
  loglik->add_option("--spec", spec_path, "model spec JSON");
  loglik->add_option("--params", params_path, "parameters JSON");
  loglik->add_option("--loglik", inject.loglik,
                     "evaluate BIC for this log-likelihood (with --n-par, "
                     "--n) instead of reading files");
  loglik->add_option("--n-par", inject.n_par, "parameter count for --loglik");
  loglik->add_option("--n", inject.n, "sample size for --loglik");
  add_common(loglik);
  add_data_opts(loglik);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(fit)) {
      return run_fit(data_path, spec_path, opts, controls);
    }
    if (app.got_subcommand(select)) {
      return run_select(data_path, config_path, stop_after, opts);
    }
    if (app.got_subcommand(simulate)) {
      return run_simulate(config_path, opts);
    }
    if (app.got_subcommand(loglik)) {
      return run_loglik(data_path, spec_path, params_path, inject, opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitUsage;
}
