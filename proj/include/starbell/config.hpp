#pragma once

// Global JSON run configuration: sites, run window, timing budget, star
// selection, rate budget, spectral fixtures, analysis and simulation
// parameters. The schema is closed: unknown keys are rejected.

#include <map>
#include <optional>
#include <string>

#include "starbell/bellstats.hpp"
#include "starbell/catalogue.hpp"
#include "starbell/geometry.hpp"
#include "starbell/simulate.hpp"
#include "starbell/timetag.hpp"

namespace starbell {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunWindow {
    UtcTime utc_start;
    double duration_s = 179.0;
    double sample_step_s = 1.0;
};

struct SpectraConfig {
    std::string curves_dir;
    std::map<std::string, double> temperatures_k;
    // Stars to report on: (hip id, side) with an optional fixed airmass.
    struct StarRequest {
        std::string hip;
        Side side = Side::A;
        std::optional<double> airmass_override;
    };
    std::vector<StarRequest> stars;
};

struct AnalysisConfig {
    PipelineOptions pipeline;
    std::optional<double> efficiency_ratio_a;
    std::optional<double> efficiency_ratio_b;
    int memory_n_max = 15;
};

struct RunConfig {
    std::optional<SiteLayout> sites;
    std::optional<RunWindow> run;
    TimingBudget budget;
    std::optional<std::string> catalogue_path;
    SelectionCriteria selection_a;
    SelectionCriteria selection_b;
    std::optional<std::string> star_alice;
    std::optional<std::string> star_bob;
    std::optional<SpectraConfig> spectra;
    std::optional<RateBudget> rates;
    AnalysisConfig analysis;
    std::optional<SimulationConfig> simulation;
    std::string base_dir;  // directory of the config file, for relative paths

    std::string resolve_path(const std::string& path) const;
};

// Parses and validates a configuration document. `base_dir` anchors
// relative file references.
RunConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
RunConfig load_config_file(const std::string& path);

// Applies a dotted-path override ("analysis.window_ps=2500") to raw JSON
// text; values parse as JSON with a string fallback.
std::string apply_override(const std::string& json_text, const std::string& assignment);

// UTC timestamp "YYYY-MM-DDTHH:MM:SS[Z]".
UtcTime parse_utc(const std::string& text);

// Sites file: one site per line, "label=A lat_deg=.. lon_deg=.. elev_m=..".
SiteLayout parse_sites_file(std::istream& stream);

// Rounds to 12 significant digits; applied to every number in emitted
// reports so serialized output is stable and round-trips exactly.
double round12(double value);

}  // namespace starbell
