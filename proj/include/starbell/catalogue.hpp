#pragma once

// Hipparcos-style catalogue ingestion and candidate-star selection: parse a
// delimited catalogue, convert parallaxes to distances, filter on distance /
// distance error / magnitude / sky-window visibility, and rank star pairs by
// a weighted score that folds in the settings-validity geometry.

#include <istream>
#include <string>
#include <vector>

#include "starbell/geometry.hpp"

namespace starbell {

struct CatalogueRecord {
    std::string hip_id;
    double ra_deg = 0.0;
    double dec_deg = 0.0;
    double parallax_mas = 0.0;
    double parallax_error_mas = 0.0;
    double hp_magnitude = 0.0;
};

struct CatalogueParseResult {
    std::vector<CatalogueRecord> records;      // file order
    std::vector<std::string> diagnostics;      // one entry per rejected row
};

class CatalogueFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses a comma-delimited catalogue with a header row naming at least the
// columns {hip, ra_deg, dec_deg, plx_mas, e_plx_mas, hp_mag} (any order).
// A missing column is a hard error. Malformed or invalid rows raise
// CatalogueFormatError unless `lenient` is set, in which case they are
// skipped and reported in `diagnostics` with their line numbers.
CatalogueParseResult parse_catalogue(std::istream& stream, bool lenient = false);

struct DistanceEstimate {
    double distance_ly;
    double error_ly;
};

// d = 3261.6 / parallax[mas], first-order error propagation.
DistanceEstimate parallax_to_distance(double parallax_mas, double parallax_error_mas);

struct SkyWindow {
    double az_min_deg = 0.0;   // window wraps through North when az_min > az_max
    double az_max_deg = 360.0;
    double alt_min_deg = 0.0;
    double alt_max_deg = 90.0;

    bool contains(double az_deg, double alt_deg) const;
};

struct ScoreWeights {
    double brightness = 1.0;
    double distance = 1.0;
    double visibility = 1.0;
    double validity = 1.0;
    double airmass = 1.0;
};

struct SelectionCriteria {
    double min_distance_ly = 500.0;
    double max_fractional_distance_error = 0.5;
    double magnitude_min = 5.0;
    double magnitude_max = 9.0;
    SkyWindow window;
    double min_visible_fraction = 1.0;  // of the run window
    double sample_step_s = 10.0;
    ScoreWeights weights;

    void validate() const;
};

struct RankedCandidate {
    CatalogueRecord record;
    CelestialTarget target;
    double visibility_duration_s = 0.0;
    double min_tau_valid_s = 0.0;
    double airmass_at_mid = 0.0;
    double score = 0.0;
};

// Filters records against the criteria and the sky window over the run
// window, evaluates each survivor's validity-time minimum for `side`, and
// scores the result. An empty return is valid.
std::vector<RankedCandidate> select_candidates(const std::vector<CatalogueRecord>& records,
                                               const SelectionCriteria& criteria,
                                               const SiteLayout& layout, Side side,
                                               const TimingBudget& budget,
                                               const UtcTime& run_start, double duration_s);

struct RankedPair {
    RankedCandidate alice;
    RankedCandidate bob;
    double score = 0.0;
    bool causally_aligned = true;
};

struct PairRanking {
    std::vector<RankedPair> ranked;       // aligned pairs, best first
    std::vector<RankedPair> misaligned;   // flagged, excluded from ranking
};

// Orders all cross pairs by descending score with deterministic hip-id
// tie-breaking; pairs with a nonpositive validity minimum on either side are
// excluded and flagged.
PairRanking rank_pairs(const std::vector<RankedCandidate>& candidates_a,
                       const std::vector<RankedCandidate>& candidates_b);

}  // namespace starbell
