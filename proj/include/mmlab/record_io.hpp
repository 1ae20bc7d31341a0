#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mmlab/evaluation.hpp"
#include "mmlab/simulation.hpp"

namespace mmlab {

nlohmann::json to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RegretReport& report, bool with_series = false);
nlohmann::json to_json(const ConcentrationReport& report);
nlohmann::json to_json(const PolicySnapshot& snapshot);
nlohmann::json to_json(const PolicyDiagnostics& diagnostics);

void write_record(const std::filesystem::path& path, const RunRecord& record);
RunRecord read_record(const std::filesystem::path& path);

}  // namespace mmlab
