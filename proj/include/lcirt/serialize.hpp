#pragma once

#include <string>

#include "lcirt/select.hpp"
#include "lcirt/sim.hpp"

// vendored nlohmann/json single header
#include <json.hpp>

namespace lcirt {

using json = nlohmann::json;

json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const json& j);

json to_json(const ModelSpec& spec, const Parameters& params);
Parameters params_from_json(const ModelSpec& spec, const json& j);

json to_json(const ResponseDataset& data);
ResponseDataset dataset_from_json(const json& j);

json to_json(const ModelSpec& spec, const FitResult& fit, bool with_trace);

json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const json& j);

PipelineConfig pipeline_config_from_json(const json& j);

json to_json(const SelectionReport& report, bool with_trace);
std::string report_text(const SelectionReport& report);

json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

}  // namespace lcirt
