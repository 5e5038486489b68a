#pragma once

// Subcommand implementations behind the CLI: observation planning, spectral
// reports, stream simulation, end-to-end analysis and figure-data export.
// Each returns the report as a JSON string (12-significant-digit numbers)
// and throws ConfigError / std::invalid_argument on bad inputs.

#include <optional>
#include <string>

#include "starbell/config.hpp"

namespace starbell {

struct AnalyzeInput {
    std::optional<std::string> streams_path;       // binary time tags
    std::optional<std::string> coincidences_path;  // pre-tabulated JSON
    std::optional<std::string> singles_path;
};

std::string cmd_plan(const RunConfig& config);
std::string cmd_spectra(const RunConfig& config);
std::string cmd_simulate(const RunConfig& config, const std::string& output_dir);
std::string cmd_analyze(const RunConfig& config, const AnalyzeInput& input);
std::string cmd_report(const RunConfig& config, const AnalyzeInput& input);

// Human-readable one-screen summaries of the JSON reports.
std::string render_analysis_table(const std::string& report_json);
std::string render_plan_table(const std::string& plan_json);

}  // namespace starbell
