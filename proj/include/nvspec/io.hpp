#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "nvspec/pipeline.hpp"

// File formats of the CLI: two-column signal CSV with a '#'-prefixed JSON
// provenance header, scenario/result JSON documents, and plot-data CSVs.

namespace nvspec::io {

using json = nlohmann::json;

struct ParseError : std::runtime_error {
    int line = 0;
    int column = 0;
    ParseError(const std::string& msg, int line_, int column_ = 0)
        : std::runtime_error(msg), line(line_), column(column_) {}
};

// Shortest round-trip decimal representation.
std::string format_double(double v);

json config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const json& j);
PipelineConfig load_config(const std::filesystem::path& path);

void write_signal_csv(const std::filesystem::path& path, const Signal& signal,
                      const json& provenance);

struct SignalFile {
    Signal signal;
    json provenance; // null when the header is absent
};
SignalFile read_signal_csv(const std::filesystem::path& path);

void write_scenario_json(const std::filesystem::path& path, const Scenario& scenario,
                         const PipelineConfig& config);
Scenario read_scenario_json(const std::filesystem::path& path);

void write_analysis_json(const std::filesystem::path& path, const AnalysisResult& result,
                         const PipelineConfig& config);
void write_reconstruction_csv(const std::filesystem::path& path, const Signal& signal,
                              const AnalysisResult& result, const json& provenance);
void write_fan_csv(const std::filesystem::path& path, const AnalysisResult& result);
void write_components_csv(const std::filesystem::path& path, const AnalysisResult& result);

json spin_estimate_to_json(const SpinEstimate& est, const FieldConfig& field);

} // namespace nvspec::io
