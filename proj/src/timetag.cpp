#include "starbell/timetag.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace starbell {

namespace {

void stable_sort_by_time(std::vector<TimeTagEvent>& events)
{
    std::stable_sort(events.begin(), events.end(),
                     [](const TimeTagEvent& x, const TimeTagEvent& y) { return x.t_ps < y.t_ps; });
}

}  // namespace

EventStreams parse_timetags(std::istream& binary)
{
    EventStreams streams;
    char record[10];
    while (binary.read(record, sizeof record)) {
        const auto site_byte = static_cast<std::uint8_t>(record[0]);
        const auto channel_byte = static_cast<std::uint8_t>(record[1]);
        if (site_byte > 1)
            throw StreamFormatError("unknown site code " + std::to_string(site_byte));
        if (channel_byte > 3)
            throw StreamFormatError("unknown channel code " + std::to_string(channel_byte));
        std::uint64_t t = 0;
        for (int k = 7; k >= 0; --k) t = (t << 8) | static_cast<std::uint8_t>(record[2 + k]);
        if (t > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            throw StreamFormatError("timestamp overflows the signed picosecond range");
        TimeTagEvent event{static_cast<std::int64_t>(t), static_cast<StationId>(site_byte),
                           static_cast<Channel>(channel_byte)};
        (event.site == StationId::A ? streams.a : streams.b).push_back(event);
    }
    if (binary.gcount() != 0)
        throw StreamFormatError("truncated record at end of stream");
    stable_sort_by_time(streams.a);
    stable_sort_by_time(streams.b);
    return streams;
}

void write_timetags(std::ostream& binary, const EventStreams& streams)
{
    for (const std::vector<TimeTagEvent>* events : {&streams.a, &streams.b})
        for (const TimeTagEvent& e : *events)
            if (e.t_ps < 0)
                throw StreamFormatError("negative timestamp cannot be serialized");
    // Deterministic interleave by timestamp, A first on ties.
    std::size_t ia = 0, ib = 0;
    const auto emit = [&](const TimeTagEvent& e) {
        char record[10];
        record[0] = static_cast<char>(e.site);
        record[1] = static_cast<char>(e.channel);
        auto t = static_cast<std::uint64_t>(e.t_ps);
        for (int k = 0; k < 8; ++k) {
            record[2 + k] = static_cast<char>(t & 0xff);
            t >>= 8;
        }
        binary.write(record, sizeof record);
    };
    while (ia < streams.a.size() || ib < streams.b.size()) {
        const bool take_a = ib >= streams.b.size() ||
                            (ia < streams.a.size() && streams.a[ia].t_ps <= streams.b[ib].t_ps);
        emit(take_a ? streams.a[ia++] : streams.b[ib++]);
    }
}

EventStreams parse_timetags_text(std::istream& text)
{
    EventStreams streams;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(text, line)) {
        ++line_number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        std::string site_token;
        int channel_code = -1;
        long long t = 0;
        if (!(ss >> site_token >> channel_code >> t) || channel_code < 0 || channel_code > 3)
            throw StreamFormatError("bad record at line " + std::to_string(line_number));
        StationId site;
        if (site_token == "A" || site_token == "0") site = StationId::A;
        else if (site_token == "B" || site_token == "1") site = StationId::B;
        else throw StreamFormatError("unknown site '" + site_token + "' at line " +
                                     std::to_string(line_number));
        TimeTagEvent event{static_cast<std::int64_t>(t), site,
                           static_cast<Channel>(channel_code)};
        (site == StationId::A ? streams.a : streams.b).push_back(event);
    }
    stable_sort_by_time(streams.a);
    stable_sort_by_time(streams.b);
    return streams;
}

double DriftModel::offset_at(std::int64_t t_ps) const
{
    if (knots.empty()) return 0.0;
    if (t_ps <= knots.front().first) return knots.front().second;
    if (t_ps >= knots.back().first) return knots.back().second;
    const auto it = std::upper_bound(
        knots.begin(), knots.end(), t_ps,
        [](std::int64_t t, const auto& knot) { return t < knot.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double span = static_cast<double>(hi.first - lo.first);
    const double frac = static_cast<double>(t_ps - lo.first) / span;
    return lo.second + frac * (hi.second - lo.second);
}

DriftModel estimate_drift(const std::vector<TimeTagEvent>& outcomes_a,
                          const std::vector<TimeTagEvent>& outcomes_b,
                          const DriftEstimationOptions& options)
{
    if (!(options.block_s > 0.0) || options.bin_ps <= 0 || options.search_range_ps <= 0)
        throw std::invalid_argument("estimate_drift: bad options");
    if (outcomes_a.empty() || outcomes_b.empty())
        throw NoCorrelationPeakError("no correlation peak: empty outcome stream");

    const std::int64_t block_ps = static_cast<std::int64_t>(options.block_s * 1e12);
    const std::int64_t t_begin = std::min(outcomes_a.front().t_ps, outcomes_b.front().t_ps);
    const std::int64_t t_end = std::max(outcomes_a.back().t_ps, outcomes_b.back().t_ps);
    const std::int64_t n_blocks = std::max<std::int64_t>(1, (t_end - t_begin) / block_ps + 1);

    const std::int64_t range = options.search_range_ps;
    const std::int64_t bin = options.bin_ps;
    const std::size_t n_bins = static_cast<std::size_t>(2 * (range / bin) + 1);

    DriftModel model;
    std::size_t ib_lo = 0;
    for (std::int64_t block = 0; block < n_blocks; ++block) {
        const std::int64_t lo = t_begin + block * block_ps;
        const std::int64_t hi = lo + block_ps;

        std::vector<std::uint32_t> histogram(n_bins, 0);
        std::uint64_t entries = 0;
        const auto a_begin = std::lower_bound(
            outcomes_a.begin(), outcomes_a.end(), lo,
            [](const TimeTagEvent& e, std::int64_t t) { return e.t_ps < t; });
        for (auto ia = a_begin; ia != outcomes_a.end() && ia->t_ps < hi; ++ia) {
            while (ib_lo < outcomes_b.size() &&
                   outcomes_b[ib_lo].t_ps < ia->t_ps - range)
                ++ib_lo;
            for (std::size_t ib = ib_lo;
                 ib < outcomes_b.size() && outcomes_b[ib].t_ps <= ia->t_ps + range; ++ib) {
                const std::int64_t delta = outcomes_b[ib].t_ps - ia->t_ps;
                // centered bins so that a zero offset lands mid-bin
                const auto bin_index = static_cast<std::size_t>((delta + range + bin / 2) / bin);
                if (bin_index < n_bins) {
                    ++histogram[bin_index];
                    ++entries;
                }
            }
        }
        if (entries == 0) continue;

        std::size_t peak = 0;
        for (std::size_t k = 1; k < n_bins; ++k)
            if (histogram[k] > histogram[peak]) peak = k;
        const double background =
            static_cast<double>(entries - histogram[peak]) / std::max<std::size_t>(1, n_bins - 1);
        const double prominence_floor = background + 5.0 * std::sqrt(background + 1.0);
        if (histogram[peak] < 5 || histogram[peak] < prominence_floor) continue;

        double offset = static_cast<double>(static_cast<std::int64_t>(peak) * bin - range);
        if (peak > 0 && peak + 1 < n_bins) {
            const double h_m = histogram[peak - 1];
            const double h_0 = histogram[peak];
            const double h_p = histogram[peak + 1];
            const double denom = h_m - 2.0 * h_0 + h_p;
            if (denom < 0.0) offset += 0.5 * bin * (h_m - h_p) / denom;
        }
        model.knots.emplace_back(lo + block_ps / 2, offset);
    }

    if (model.knots.empty())
        throw NoCorrelationPeakError("no correlation peak found in any block");
    return model;
}

std::vector<GatedOutcome> gate_settings(const std::vector<TimeTagEvent>& outcomes,
                                        const std::vector<TimeTagEvent>& settings,
                                        std::int64_t tau_used_ps,
                                        const SettingPortMap& ports,
                                        const std::vector<bool>* marked)
{
    if (marked && marked->size() != settings.size())
        throw std::invalid_argument("gate_settings: marked flags do not parallel settings");

    std::vector<GatedOutcome> gated;
    gated.reserve(outcomes.size());
    std::size_t is = 0;
    for (const TimeTagEvent& outcome : outcomes) {
        if (!is_outcome(outcome.channel))
            throw std::invalid_argument("gate_settings: outcome stream contains a setting");
        while (is < settings.size() && settings[is].t_ps <= outcome.t_ps) ++is;

        GatedOutcome g;
        g.event = outcome;
        if (is == 0) {
            g.valid = false;  // outcome before any setting
        } else {
            const TimeTagEvent& setting = settings[is - 1];
            if (!is_setting(setting.channel))
                throw std::invalid_argument("gate_settings: settings stream contains an outcome");
            g.setting = ports.index_of(setting.channel);
            g.setting_age_ps = outcome.t_ps - setting.t_ps;
            g.valid = g.setting_age_ps <= tau_used_ps;
            g.deleted = marked && (*marked)[is - 1];
        }
        gated.push_back(g);
    }
    return gated;
}

DeadTimeFilterResult dead_time_filter(const std::vector<TimeTagEvent>& settings,
                                      std::int64_t tau_cut_ps)
{
    DeadTimeFilterResult result;
    result.marked.assign(settings.size(), false);
    std::int64_t last_red = std::numeric_limits<std::int64_t>::min();
    std::int64_t last_blue = std::numeric_limits<std::int64_t>::min();
    for (std::size_t k = 0; k < settings.size(); ++k) {
        const TimeTagEvent& e = settings[k];
        if (!is_setting(e.channel))
            throw std::invalid_argument("dead_time_filter: stream contains an outcome");
        const bool red = e.channel == Channel::setting_red;
        const std::int64_t last_opposite = red ? last_blue : last_red;
        if (last_opposite != std::numeric_limits<std::int64_t>::min() &&
            e.t_ps - last_opposite < tau_cut_ps) {
            result.marked[k] = true;
            result.deletion_log.push_back(k);
        }
        (red ? last_red : last_blue) = e.t_ps;
    }
    return result;
}

std::size_t CoincidenceTable::index(int i, int j, bool a_plus, bool b_plus)
{
    if (i < 1 || i > 2 || j < 1 || j > 2)
        throw std::out_of_range("coincidence table: setting index outside {1,2}");
    return static_cast<std::size_t>((((i - 1) * 2 + (j - 1)) * 2 + (a_plus ? 0 : 1)) * 2 +
                                    (b_plus ? 0 : 1));
}

double& CoincidenceTable::at(int i, int j, bool a_plus, bool b_plus)
{
    return counts[index(i, j, a_plus, b_plus)];
}

double CoincidenceTable::at(int i, int j, bool a_plus, bool b_plus) const
{
    return counts[index(i, j, a_plus, b_plus)];
}

double CoincidenceTable::n_ij(int i, int j) const
{
    return at(i, j, true, true) + at(i, j, true, false) + at(i, j, false, true) +
           at(i, j, false, false);
}

double CoincidenceTable::total() const
{
    return n_ij(1, 1) + n_ij(1, 2) + n_ij(2, 1) + n_ij(2, 2);
}

void CoincidenceTable::validate() const
{
    for (double c : counts)
        if (!std::isfinite(c) || c < 0.0)
            throw std::invalid_argument("coincidence table: negative or non-finite count");
}

std::string coincidence_table_to_json(const CoincidenceTable& table)
{
    nlohmann::json j;
    j["N_ij_AB"] = table.counts;
    return j.dump(2);
}

CoincidenceTable coincidence_table_from_json(const std::string& text)
{
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("N_ij_AB") || !j["N_ij_AB"].is_array() || j["N_ij_AB"].size() != 16)
        throw StreamFormatError("coincidence table: expected 16-element N_ij_AB array");
    CoincidenceTable table;
    for (std::size_t k = 0; k < 16; ++k) table.counts[k] = j["N_ij_AB"][k].get<double>();
    table.validate();
    return table;
}

CoincidenceTable match_coincidences(const std::vector<GatedOutcome>& gated_a,
                                    const std::vector<GatedOutcome>& gated_b,
                                    std::int64_t window_ps, const DriftModel& drift)
{
    struct Entry {
        double t;
        int setting;
        bool plus;
    };
    const auto usable = [](const GatedOutcome& g) { return g.valid && !g.deleted; };

    std::vector<Entry> a;
    a.reserve(gated_a.size());
    for (const GatedOutcome& g : gated_a)
        if (usable(g))
            a.push_back({static_cast<double>(g.event.t_ps), g.setting,
                         g.event.channel == Channel::outcome_plus});
    std::vector<Entry> b;
    b.reserve(gated_b.size());
    for (const GatedOutcome& g : gated_b)
        if (usable(g))
            b.push_back({drift.corrected(g.event.t_ps), g.setting,
                         g.event.channel == Channel::outcome_plus});
    // Drift corrections are slow compared to event spacing, but restore
    // ordering defensively.
    std::stable_sort(a.begin(), a.end(), [](const Entry& x, const Entry& y) { return x.t < y.t; });
    std::stable_sort(b.begin(), b.end(), [](const Entry& x, const Entry& y) { return x.t < y.t; });

    struct Candidate {
        double delta;
        double t_lo, t_hi;
        std::size_t ia, ib;
    };
    std::vector<Candidate> candidates;
    std::size_t lo = 0;
    const double window = static_cast<double>(window_ps);
    for (std::size_t ib = 0; ib < b.size(); ++ib) {
        while (lo < a.size() && a[lo].t < b[ib].t - window) ++lo;
        for (std::size_t ia = lo; ia < a.size() && a[ia].t <= b[ib].t + window; ++ia) {
            candidates.push_back({std::abs(a[ia].t - b[ib].t), std::min(a[ia].t, b[ib].t),
                                  std::max(a[ia].t, b[ib].t), ia, ib});
        }
    }
    // Closest pairs first; the remaining keys are symmetric under swapping
    // the roles of the two stations, which keeps the matching transposable.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
        if (x.delta != y.delta) return x.delta < y.delta;
        if (x.t_lo != y.t_lo) return x.t_lo < y.t_lo;
        if (x.t_hi != y.t_hi) return x.t_hi < y.t_hi;
        if (x.ia != y.ia) return x.ia < y.ia;
        return x.ib < y.ib;
    });

    CoincidenceTable table;
    std::vector<bool> used_a(a.size(), false);
    std::vector<bool> used_b(b.size(), false);
    for (const Candidate& c : candidates) {
        if (used_a[c.ia] || used_b[c.ib]) continue;
        used_a[c.ia] = true;
        used_b[c.ib] = true;
        table.at(a[c.ia].setting, b[c.ib].setting, a[c.ia].plus, b[c.ib].plus) += 1.0;
    }
    return table;
}

std::size_t SinglesTable::index(bool plus, int local, int distant)
{
    if (local < 1 || local > 2 || distant < 1 || distant > 2)
        throw std::out_of_range("singles table: setting index outside {1,2}");
    return static_cast<std::size_t>(((plus ? 0 : 1) * 2 + (local - 1)) * 2 + (distant - 1));
}

double SinglesTable::total() const
{
    double sum = 0.0;
    for (double v : alice) sum += v;
    for (double v : bob) sum += v;
    return sum;
}

std::string singles_table_to_json(const SinglesTable& table)
{
    nlohmann::json j;
    j["N_a_pm_by_b"] = table.alice;
    j["N_b_pm_by_a"] = table.bob;
    return j.dump(2);
}

SinglesTable singles_table_from_json(const std::string& text)
{
    const nlohmann::json j = nlohmann::json::parse(text);
    for (const char* key : {"N_a_pm_by_b", "N_b_pm_by_a"})
        if (!j.contains(key) || !j[key].is_array() || j[key].size() != 8)
            throw StreamFormatError("singles table: expected 8-element " + std::string(key));
    SinglesTable table;
    for (std::size_t k = 0; k < 8; ++k) {
        table.alice[k] = j["N_a_pm_by_b"][k].get<double>();
        table.bob[k] = j["N_b_pm_by_a"][k].get<double>();
    }
    return table;
}

std::optional<int> SettingTimeline::active_at(double t_ps) const
{
    if (!marked.empty() && marked.size() != settings.size())
        throw std::invalid_argument("setting timeline: marked flags do not parallel settings");
    // Latest setting at or before t.
    const auto it = std::upper_bound(
        settings.begin(), settings.end(), t_ps,
        [](double t, const TimeTagEvent& e) { return t < static_cast<double>(e.t_ps); });
    if (it == settings.begin()) return std::nullopt;
    const std::size_t k = static_cast<std::size_t>(it - settings.begin()) - 1;
    if (!marked.empty() && marked[k]) return std::nullopt;
    const double age = t_ps - static_cast<double>(settings[k].t_ps);
    if (age > static_cast<double>(tau_used_ps)) return std::nullopt;
    return ports.index_of(settings[k].channel);
}

PipelineResult run_pipeline(const EventStreams& streams, const PipelineOptions& options)
{
    std::vector<TimeTagEvent> outcomes_a, settings_a, outcomes_b, settings_b;
    for (const TimeTagEvent& e : streams.a)
        (is_outcome(e.channel) ? outcomes_a : settings_a).push_back(e);
    for (const TimeTagEvent& e : streams.b)
        (is_outcome(e.channel) ? outcomes_b : settings_b).push_back(e);

    PipelineResult result;
    if (options.drift_override)
        result.drift = *options.drift_override;
    else if (options.estimate_drift)
        result.drift = estimate_drift(outcomes_a, outcomes_b, options.drift_options);

    const DeadTimeFilterResult dead_a = dead_time_filter(settings_a, options.tau_cut_a_ps);
    const DeadTimeFilterResult dead_b = dead_time_filter(settings_b, options.tau_cut_b_ps);
    result.deleted_settings_a = dead_a.deletion_log.size();
    result.deleted_settings_b = dead_b.deletion_log.size();

    const std::vector<GatedOutcome> gated_a = gate_settings(
        outcomes_a, settings_a, options.tau_used_a_ps, options.ports_a, &dead_a.marked);
    const std::vector<GatedOutcome> gated_b = gate_settings(
        outcomes_b, settings_b, options.tau_used_b_ps, options.ports_b, &dead_b.marked);

    result.coincidences = match_coincidences(gated_a, gated_b, options.window_ps, result.drift);

    SettingTimeline timeline_a{settings_a, dead_a.marked, options.tau_used_a_ps,
                               options.ports_a};
    SettingTimeline timeline_b{settings_b, dead_b.marked, options.tau_used_b_ps,
                               options.ports_b};
    result.singles = tabulate_singles(gated_a, timeline_a, gated_b, timeline_b, result.drift);
    return result;
}

SinglesTable tabulate_singles(const std::vector<GatedOutcome>& gated_a,
                              const SettingTimeline& timeline_a,
                              const std::vector<GatedOutcome>& gated_b,
                              const SettingTimeline& timeline_b,
                              const DriftModel& drift)
{
    SinglesTable table;
    for (const GatedOutcome& g : gated_a) {
        if (!g.valid || g.deleted) continue;
        // Distant clock events are shifted onto the local clock before the
        // lookup: a B setting at t_b is simultaneous with A time t_b - offset.
        const auto distant = timeline_b.active_at(
            static_cast<double>(g.event.t_ps) + drift.offset_at(g.event.t_ps));
        if (!distant) continue;
        table.alice[SinglesTable::index(g.event.channel == Channel::outcome_plus, g.setting,
                                        *distant)] += 1.0;
    }
    for (const GatedOutcome& g : gated_b) {
        if (!g.valid || g.deleted) continue;
        const auto distant = timeline_a.active_at(drift.corrected(g.event.t_ps));
        if (!distant) continue;
        table.bob[SinglesTable::index(g.event.channel == Channel::outcome_plus, g.setting,
                                      *distant)] += 1.0;
    }
    return table;
}

}  // namespace starbell
