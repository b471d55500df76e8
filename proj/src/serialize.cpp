#include "lcirt/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lcirt/errors.hpp"

namespace lcirt {

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return {v.begin(), v.end()};
}

Eigen::VectorXd from_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(
                                               values.size()));
}

std::string fixed3(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.3f", value);
  return buffer;
}

}  // namespace

json to_json(const ModelSpec& spec) {
  json j;
  j["items"] = spec.n_items;
  j["categories"] = spec.categories;
  j["dimensions"] = spec.n_dims;
  json dims = json::array();
  for (int d : spec.item_dim) dims.push_back(d + 1);  // 1-based on disk
  j["item_dims"] = dims;
  j["classes"] = spec.n_classes;
  j["link"] = to_string(spec.link);
  j["discrimination"] = to_string(spec.discrimination);
  j["difficulty"] = to_string(spec.difficulty);
  return j;
}

ModelSpec spec_from_json(const json& j) {
  try {
    ModelSpec spec;
    spec.n_items = j.at("items").get<int>();
    if (j.at("categories").is_array()) {
      spec.categories = j.at("categories").get<std::vector<int>>();
    } else {
      spec.categories.assign(spec.n_items, j.at("categories").get<int>());
    }
    spec.n_dims = j.value("dimensions", 1);
    if (j.contains("item_dims")) {
      spec.item_dim.clear();
      for (int d : j.at("item_dims").get<std::vector<int>>()) {
        spec.item_dim.push_back(d - 1);
      }
    } else if (spec.n_dims == 1) {
      spec.item_dim.assign(spec.n_items, 0);
    } else {
      throw ParseError("spec: item_dims required when dimensions > 1");
    }
    spec.n_classes = j.at("classes").get<int>();
    spec.link = link_from_string(j.at("link").get<std::string>());
    spec.discrimination =
        discrimination_from_string(j.value("discrimination", "free"));
    spec.difficulty = difficulty_from_string(j.value("difficulty", "free"));
    spec.check();
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model spec: ") + e.what());
  }
}

json to_json(const ModelSpec& spec, const Parameters& params) {
  json j;
  j["pi"] = to_vector(params.pi);
  json xi = json::array();
  for (int c = 0; c < spec.n_classes; ++c) {
    xi.push_back(to_vector(params.xi.row(c)));
  }
  j["xi"] = xi;
  j["gamma"] = to_vector(params.gamma);
  if (spec.difficulty == Difficulty::Free) {
    json beta = json::array();
    for (const auto& b : params.beta_free) beta.push_back(to_vector(b));
    j["beta_free"] = beta;
  } else {
    j["beta_rs"] = to_vector(params.beta_rs);
    j["tau"] = to_vector(params.tau);
  }
  return j;
}

Parameters params_from_json(const ModelSpec& spec, const json& j) {
  try {
    Parameters params;
    params.pi = from_vector(j.at("pi"));
    const auto& xi = j.at("xi");
    params.xi.resize(spec.n_classes, spec.n_dims);
    for (int c = 0; c < spec.n_classes; ++c) {
      const Eigen::VectorXd row = from_vector(xi.at(c));
      if (row.size() != spec.n_dims) {
        throw ParseError("parameters: xi row has wrong length");
      }
      params.xi.row(c) = row.transpose();
    }
    params.gamma = from_vector(j.at("gamma"));
    if (spec.difficulty == Difficulty::Free) {
      for (const auto& b : j.at("beta_free")) {
        params.beta_free.push_back(from_vector(b));
      }
    } else {
      params.beta_rs = from_vector(j.at("beta_rs"));
      params.tau = from_vector(j.at("tau"));
    }
    return params;
  } catch (const json::exception& e) {
    throw ParseError(std::string("parameters: ") + e.what());
  }
}

json to_json(const ResponseDataset& data) {
  json j;
  j["n"] = data.n;
  j["r"] = data.r;
  j["categories"] = data.categories;
  json patterns = json::array();
  for (std::size_t i = 0; i < data.patterns.size(); ++i) {
    patterns.push_back({{"x", data.patterns[i]}, {"count", data.counts[i]}});
  }
  j["patterns"] = patterns;
  if (!data.rng_name.empty()) {
    j["rng"] = data.rng_name;
    j["seed"] = data.rng_seed;
  }
  return j;
}

ResponseDataset dataset_from_json(const json& j) {
  try {
    ResponseDataset data;
    data.n = j.at("n").get<int>();
    data.r = j.at("r").get<int>();
    data.categories = j.at("categories").get<std::vector<int>>();
    for (const auto& entry : j.at("patterns")) {
      data.patterns.push_back(entry.at("x").get<std::vector<int>>());
      data.counts.push_back(entry.at("count").get<int>());
    }
    if (j.contains("rng")) {
      data.rng_name = j.at("rng").get<std::string>();
      data.rng_seed = j.at("seed").get<std::uint64_t>();
    }
    data.check();
    return data;
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  }
}

json to_json(const ModelSpec& spec, const FitResult& fit, bool with_trace) {
  json j;
  j["model"] = name_model(spec);
  j["spec"] = to_json(spec);
  j["params"] = to_json(spec, fit.params);
  j["loglik"] = fit.summary.loglik;
  j["n_par"] = fit.summary.n_par;
  j["bic"] = fit.summary.bic;
  j["iterations"] = fit.summary.iterations;
  j["converged"] = fit.summary.converged;
  j["start_id"] = fit.summary.start_id;
  json posterior = json::array();
  for (Eigen::Index i = 0; i < fit.posterior.rows(); ++i) {
    posterior.push_back(to_vector(fit.posterior.row(i)));
  }
  j["posterior"] = posterior;
  if (!fit.notes.empty()) j["notes"] = fit.notes;
  if (with_trace) j["trace"] = fit.trace;
  return j;
}

json to_json(const SimConfig& cfg) {
  json j;
  j["spec"] = to_json(cfg.spec);
  j["params"] = to_json(cfg.spec, cfg.params);
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  j["rng"] = "splitmix64";
  return j;
}

SimConfig sim_config_from_json(const json& j) {
  try {
    SimConfig cfg;
    cfg.spec = spec_from_json(j.at("spec"));
    cfg.params = params_from_json(cfg.spec, j.at("params"));
    cfg.n = j.at("n").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
  } catch (const json::exception& e) {
    throw ParseError(std::string("sim config: ") + e.what());
  }
}

namespace {

EmControls controls_from_json(const json& j) {
  EmControls controls;
  controls.tol = j.value("tol", controls.tol);
  controls.max_iter = j.value("max_iter", controls.max_iter);
  controls.inner_max = j.value("inner_max", controls.inner_max);
  controls.n_random = j.value("n_random", controls.n_random);
  controls.seed = j.value("seed", controls.seed);
  controls.pi_floor = j.value("pi_floor", controls.pi_floor);
  controls.threads = j.value("threads", controls.threads);
  return controls;
}

StopAfter stop_after_from_string(const std::string& s) {
  if (s == "none") return StopAfter::None;
  if (s == "k") return StopAfter::K;
  if (s == "link") return StopAfter::Link;
  if (s == "dim") return StopAfter::Dim;
  if (s == "constraints") return StopAfter::Constraints;
  throw ParseError("unknown stop_after value: \"" + s + "\"");
}

std::string stop_after_to_string(StopAfter stage) {
  switch (stage) {
    case StopAfter::None: return "none";
    case StopAfter::K: return "k";
    case StopAfter::Link: return "link";
    case StopAfter::Dim: return "dim";
    case StopAfter::Constraints: return "constraints";
  }
  return "none";
}

json table_to_json(const std::vector<FitTableRow>& table) {
  json rows = json::array();
  for (const auto& row : table) {
    rows.push_back({{"label", row.label},
                    {"loglik", row.loglik},
                    {"n_par", row.n_par},
                    {"bic", row.bic}});
  }
  return rows;
}

json lr_to_json(const LrTestResult& lr) {
  return {{"deviance", lr.deviance}, {"df", lr.df}, {"p_value", lr.p_value}};
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
  try {
    PipelineConfig config;
    config.k_max = j.value("k_max", config.k_max);
    if (j.contains("links")) {
      config.links.clear();
      for (const auto& name : j.at("links")) {
        config.links.push_back(link_from_string(name.get<std::string>()));
      }
    }
    if (j.contains("partitions")) {
      for (const auto& partition : j.at("partitions")) {
        Partition groups;
        for (const auto& group : partition) {
          std::vector<int> items;
          for (int item : group.get<std::vector<int>>()) {
            items.push_back(item - 1);  // 1-based on disk
          }
          groups.push_back(std::move(items));
        }
        config.partitions.push_back(std::move(groups));
      }
    }
    config.alpha = j.value("alpha", config.alpha);
    if (j.contains("controls")) {
      config.controls = controls_from_json(j.at("controls"));
    }
    if (j.contains("stop_after")) {
      config.stop_after =
          stop_after_from_string(j.at("stop_after").get<std::string>());
    }
    return config;
  } catch (const json::exception& e) {
    throw ParseError(std::string("pipeline config: ") + e.what());
  }
}

json to_json(const SelectionReport& report, bool with_trace) {
  json j;
  j["n"] = report.n;
  j["completed_through"] = stop_after_to_string(report.completed_through);
  j["warnings"] = report.warnings;
  if (report.aborted) {
    j["aborted"] = true;
    j["abort_reason"] = report.abort_reason;
    j["abort_kind"] = report.abort_kind;
  }
  if (report.completed_through == StopAfter::None) return j;

  j["k_step"] = {{"chosen_k", report.k_step.chosen_k},
                 {"boundary", report.k_step.boundary},
                 {"table", table_to_json(report.k_step.table)}};
  if (report.completed_through == StopAfter::K) return j;

  j["link_step"] = {{"chosen", to_string(report.link_step.chosen)},
                    {"tie", report.link_step.tie},
                    {"table", table_to_json(report.link_step.table)}};
  if (report.completed_through == StopAfter::Link) return j;

  {
    json tests = json::array();
    const auto& decision = report.dim_step.decision;
    for (std::size_t i = 0; i < decision.tests.size(); ++i) {
      tests.push_back({{"lr", lr_to_json(decision.tests[i])},
                       {"accepted", static_cast<bool>(decision.accepted[i])},
                       {"df_zero", static_cast<bool>(decision.df_zero[i])}});
    }
    json chosen_partition = json::array();
    for (const auto& group : report.dim_step.chosen) {
      json items = json::array();
      for (int item : group) items.push_back(item + 1);
      chosen_partition.push_back(items);
    }
    j["dim_step"] = {{"chosen_index", report.dim_step.chosen_index},
                     {"chosen_partition", chosen_partition},
                     {"table", table_to_json(report.dim_step.table)},
                     {"tests", tests}};
  }
  if (report.completed_through == StopAfter::Dim) return j;

  {
    json tests = json::array();
    for (const auto& test : report.constraint_step.tests) {
      tests.push_back({{"constrained", test.constrained_label},
                       {"reference", test.reference_label},
                       {"lr", lr_to_json(test.lr)},
                       {"accepted", test.accepted}});
    }
    j["constraint_step"] = {
        {"discrimination",
         to_string(report.constraint_step.discrimination)},
        {"difficulty", to_string(report.constraint_step.difficulty)},
        {"table", table_to_json(report.constraint_step.table)},
        {"tests", tests}};
  }

  j["final_spec"] = to_json(report.final_spec);
  if (report.final_fit) {
    j["final_fit"] = to_json(report.final_spec, *report.final_fit,
                             with_trace);
  }
  return j;
}

std::string report_text(const SelectionReport& report) {
  std::ostringstream out;
  auto print_table = [&](const std::string& title,
                         const std::vector<FitTableRow>& table) {
    out << title << "\n";
    out << "  " << "model                    loglik      #par  BIC\n";
    for (const auto& row : table) {
      char line[160];
      std::snprintf(line, sizeof(line), "  %-24s %-11s %-5d %s\n",
                    row.label.c_str(), fixed3(row.loglik).c_str(), row.n_par,
                    fixed3(row.bic).c_str());
      out << line;
    }
  };

  out << "model selection (n = " << report.n << ")\n\n";
  if (report.aborted) {
    out << "ABORTED (" << report.abort_kind << "): " << report.abort_reason
        << "\n\n";
  }
  if (report.completed_through == StopAfter::None) return out.str();
  print_table("step 1: number of latent classes (standard LC models)",
              report.k_step.table);
  out << "  chosen: k = " << report.k_step.chosen_k
      << (report.k_step.boundary ? " (boundary)" : "") << "\n\n";
  if (report.completed_through == StopAfter::K) return out.str();

  print_table("step 2: link function", report.link_step.table);
  out << "  chosen: " << to_string(report.link_step.chosen)
      << (report.link_step.tie ? " (tie)" : "") << "\n\n";
  if (report.completed_through == StopAfter::Link) return out.str();

  print_table("step 3: dimensionality", report.dim_step.table);
  const auto& dim = report.dim_step.decision;
  for (std::size_t i = 0; i < dim.tests.size(); ++i) {
    out << "  " << report.dim_step.table[i + 1].label << " vs "
        << report.dim_step.table[i].label << ": ";
    if (dim.df_zero[i]) {
      out << "equal parameter counts, coarser taken";
    } else {
      out << "D = " << fixed3(dim.tests[i].deviance)
          << ", df = " << dim.tests[i].df
          << ", p = " << fixed3(dim.tests[i].p_value)
          << (dim.accepted[i] ? " (accepted)" : " (rejected)");
    }
    out << "\n";
  }
  out << "  chosen: "
      << report.dim_step.table[report.dim_step.chosen_index].label << "\n\n";
  if (report.completed_through == StopAfter::Dim) return out.str();

  print_table("step 4: item parameter constraints",
              report.constraint_step.table);
  for (const auto& test : report.constraint_step.tests) {
    out << "  " << test.constrained_label << " vs " << test.reference_label
        << ": D = " << fixed3(test.lr.deviance) << ", df = " << test.lr.df
        << ", p = " << fixed3(test.lr.p_value)
        << (test.accepted ? " (accepted)" : " (rejected)") << "\n";
  }
  out << "\nselected model: " << name_model(report.final_spec) << " with k = "
      << report.final_spec.n_classes << "\n";
  if (report.final_fit) {
    out << "  loglik = " << fixed3(report.final_fit->summary.loglik)
        << ", #par = " << report.final_fit->summary.n_par
        << ", BIC = " << fixed3(report.final_fit->summary.bic) << "\n";
  }
  if (!report.warnings.empty()) {
    out << "\nwarnings:\n";
    for (const auto& warning : report.warnings) {
      out << "  - " << warning << "\n";
    }
  }
  return out.str();
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace lcirt
