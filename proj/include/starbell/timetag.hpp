#pragma once

// Time-tagged detection streams: binary/text ingestion, clock-drift
// estimation from outcome cross-correlations, setting-validity gating,
// the opposite-color dead-time filter, coincidence matching and singles
// tabulation. Timestamps are integer picoseconds throughout so window
// comparisons stay exact.

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace starbell {

enum class StationId : std::uint8_t { A = 0, B = 1 };

enum class Channel : std::uint8_t {
    outcome_plus = 0,
    outcome_minus = 1,
    setting_red = 2,
    setting_blue = 3,
};

inline bool is_outcome(Channel c)
{
    return c == Channel::outcome_plus || c == Channel::outcome_minus;
}
inline bool is_setting(Channel c) { return !is_outcome(c); }

struct TimeTagEvent {
    std::int64_t t_ps = 0;
    StationId site = StationId::A;
    Channel channel = Channel::outcome_plus;
};

struct EventStreams {
    std::vector<TimeTagEvent> a;
    std::vector<TimeTagEvent> b;
};

class StreamFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary record: site byte, channel byte, unsigned 64-bit little-endian
// picosecond timestamp. Events are returned per site, stably sorted by time.
EventStreams parse_timetags(std::istream& binary);
void write_timetags(std::ostream& binary, const EventStreams& streams);

// Whitespace-delimited alternative: "<A|B> <channel 0..3> <t_ps>" per line.
EventStreams parse_timetags_text(std::istream& text);

// Piecewise-linear clock offset of station B relative to A; subtracting
// offset_at(t) from a B timestamp aligns it with the A clock. Constant
// extrapolation outside the knot range; an empty model is a zero offset.
struct DriftModel {
    std::vector<std::pair<std::int64_t, double>> knots;  // (t_ps, offset_ps)

    double offset_at(std::int64_t t_ps) const;
    double corrected(std::int64_t t_ps) const { return t_ps - offset_at(t_ps); }
};

class NoCorrelationPeakError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DriftEstimationOptions {
    double block_s = 10.0;
    std::int64_t bin_ps = 100;
    std::int64_t search_range_ps = 100000;  // +- around zero offset
};

// Per-block timing cross-correlation histogram of outcome events with
// parabolic peak interpolation; knots at block centers. Throws
// NoCorrelationPeakError when no block shows a peak above background.
DriftModel estimate_drift(const std::vector<TimeTagEvent>& outcomes_a,
                          const std::vector<TimeTagEvent>& outcomes_b,
                          const DriftEstimationOptions& options = {});

// Which physical color feeds setting index 1 on a given side.
struct SettingPortMap {
    Channel port1 = Channel::setting_red;

    int index_of(Channel c) const
    {
        if (!is_setting(c)) throw std::invalid_argument("index_of: not a setting channel");
        return c == port1 ? 1 : 2;
    }
};

struct GatedOutcome {
    TimeTagEvent event;
    int setting = 0;                // 1 or 2; 0 if no setting preceded the outcome
    std::int64_t setting_age_ps = 0;
    bool valid = false;             // setting present and age <= tau_used
    bool deleted = false;           // attributed setting was dead-time-marked
};

// Annotates each outcome with the most recent same-side setting. The
// hardware's forced re-switch after tau_used appears here purely as
// validity expiry. `marked`, when given, must parallel `settings`.
std::vector<GatedOutcome> gate_settings(const std::vector<TimeTagEvent>& outcomes,
                                        const std::vector<TimeTagEvent>& settings,
                                        std::int64_t tau_used_ps,
                                        const SettingPortMap& ports = {},
                                        const std::vector<bool>* marked = nullptr);

struct DeadTimeFilterResult {
    std::vector<bool> marked;                // parallel to the settings input
    std::vector<std::size_t> deletion_log;   // indices of marked settings
};

// Marks any setting click arriving within tau_cut after a click of the
// opposite color on the same side.
DeadTimeFilterResult dead_time_filter(const std::vector<TimeTagEvent>& settings,
                                      std::int64_t tau_cut_ps);

// 4 x 4 settings-by-outcomes coincidence counts. Raw tables hold integers;
// efficiency-corrected tables are real-valued.
struct CoincidenceTable {
    std::array<double, 16> counts{};

    static std::size_t index(int i, int j, bool a_plus, bool b_plus);
    double& at(int i, int j, bool a_plus, bool b_plus);
    double at(int i, int j, bool a_plus, bool b_plus) const;
    double n_ij(int i, int j) const;
    double total() const;
    void validate() const;
};

std::string coincidence_table_to_json(const CoincidenceTable& table);
CoincidenceTable coincidence_table_from_json(const std::string& text);

// Greedy closest-pair matching of drift-corrected valid outcomes within the
// window; each event is used at most once; symmetric tie-breaking keeps the
// result invariant under swapping the roles of A and B.
CoincidenceTable match_coincidences(const std::vector<GatedOutcome>& gated_a,
                                    const std::vector<GatedOutcome>& gated_b,
                                    std::int64_t window_ps, const DriftModel& drift = {});

// Local singles split by the setting active on the distant side at the
// local (drift-corrected) detection time.
struct SinglesTable {
    // alice[outcome][i][j]: outcome 0='+', 1='-'; local setting a_i, distant b_j.
    // bob[outcome][j][i]: local setting b_j, distant a_i.
    std::array<double, 8> alice{};
    std::array<double, 8> bob{};

    static std::size_t index(bool plus, int local, int distant);
    double total() const;
};

std::string singles_table_to_json(const SinglesTable& table);
SinglesTable singles_table_from_json(const std::string& text);

struct SettingTimeline {
    std::vector<TimeTagEvent> settings;  // sorted
    std::vector<bool> marked;            // empty means nothing marked
    std::int64_t tau_used_ps = 0;
    SettingPortMap ports;

    // Setting active at a given instant on this side's clock; nullopt when
    // there is no preceding unexpired, unmarked setting.
    std::optional<int> active_at(double t_ps) const;
};

SinglesTable tabulate_singles(const std::vector<GatedOutcome>& gated_a,
                              const SettingTimeline& timeline_a,
                              const std::vector<GatedOutcome>& gated_b,
                              const SettingTimeline& timeline_b,
                              const DriftModel& drift = {});

struct PipelineOptions {
    std::int64_t window_ps = 2500;
    std::int64_t tau_used_a_ps = 2'000'000;
    std::int64_t tau_used_b_ps = 5'000'000;
    std::int64_t tau_cut_a_ps = 500'000;
    std::int64_t tau_cut_b_ps = 500'000;
    SettingPortMap ports_a{Channel::setting_red};
    SettingPortMap ports_b{Channel::setting_blue};
    bool estimate_drift = true;
    std::optional<DriftModel> drift_override;  // skips estimation when set
    DriftEstimationOptions drift_options;
};

struct PipelineResult {
    CoincidenceTable coincidences;
    SinglesTable singles;
    DriftModel drift;
    std::size_t deleted_settings_a = 0;
    std::size_t deleted_settings_b = 0;
};

// Full stream reduction: drift correction, dead-time filter, validity
// gating, coincidence matching and singles tabulation.
PipelineResult run_pipeline(const EventStreams& streams, const PipelineOptions& options);

}  // namespace starbell
