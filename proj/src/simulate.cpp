#include "starbell/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace starbell {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

// splitmix64; used to derive independent substream seeds from the master.
std::uint64_t splitmix64(std::uint64_t& state)
{
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256** with hand-rolled samplers, so streams are bit-identical
// across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
    {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next()
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform()  // (0, 1)
    {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1p-53;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    double normal()
    {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool have_cached_ = false;
};

struct SettingClick {
    double t_s;
    int port;  // 1 or 2
    TruthLabel label;
};

// Merged Poisson streams of correct / wrong-way / noise clicks, then the
// per-port detector dead time.
std::vector<SettingClick> generate_settings(const SideSimConfig& side, double duration_s,
                                            Rng& rng)
{
    std::vector<SettingClick> clicks;
    const auto emit_poisson = [&](double rate, auto port_of) {
        if (!(rate > 0.0)) return;
        for (double t = rng.exponential(rate); t < duration_s; t += rng.exponential(rate)) {
            const auto [port, label] = port_of();
            clicks.push_back({t, port, label});
        }
    };
    const double f_out_of[2] = {side.f_1to2, side.f_2to1};
    for (int color = 0; color < 2; ++color) {
        emit_poisson(side.stellar_rate_hz[color], [&]() {
            const bool misrouted = rng.bernoulli(f_out_of[color]);
            const int port = misrouted ? 2 - color : color + 1;
            return std::pair{port, misrouted ? TruthLabel::wrong_way : TruthLabel::stellar};
        });
    }
    for (int port = 0; port < 2; ++port)
        emit_poisson(side.noise_rate_hz[port],
                     [&]() { return std::pair{port + 1, TruthLabel::noise}; });

    std::sort(clicks.begin(), clicks.end(),
              [](const SettingClick& x, const SettingClick& y) {
                  return x.t_s != y.t_s ? x.t_s < y.t_s : x.port < y.port;
              });

    if (side.detector_dead_time_ps > 0) {
        const double dead_s = side.detector_dead_time_ps * 1e-12;
        double last_port_time[2] = {-1e18, -1e18};
        std::vector<SettingClick> alive;
        alive.reserve(clicks.size());
        for (const SettingClick& c : clicks) {
            if (c.t_s - last_port_time[c.port - 1] < dead_s) continue;
            last_port_time[c.port - 1] = c.t_s;
            alive.push_back(c);
        }
        clicks.swap(alive);
    }
    return clicks;
}

Channel port_channel(const SettingPortMap& ports, int port)
{
    const Channel first = ports.port1;
    const Channel second =
        first == Channel::setting_red ? Channel::setting_blue : Channel::setting_red;
    return port == 1 ? first : second;
}

double port_angle(const SideSimConfig& side, int port)
{
    return port == 1 ? side.angle_port1_deg : side.angle_port2_deg;
}

}  // namespace

void SimulationConfig::validate() const
{
    if (!(duration_s > 0.0)) throw std::invalid_argument("simulate: duration must be positive");
    if (pair_rate_hz < 0.0) throw std::invalid_argument("simulate: negative pair rate");
    if (visibility < 0.0 || visibility > 1.0)
        throw std::invalid_argument("simulate: visibility outside [0, 1]");
    if (detection_efficiency < 0.0 || detection_efficiency > 1.0)
        throw std::invalid_argument("simulate: detection efficiency outside [0, 1]");
    for (const SideSimConfig* side : {&alice, &bob}) {
        for (int k = 0; k < 2; ++k)
            if (side->stellar_rate_hz[k] < 0.0 || side->noise_rate_hz[k] < 0.0)
                throw std::invalid_argument("simulate: negative rate");
        if (side->f_1to2 < 0.0 || side->f_1to2 > 1.0 || side->f_2to1 < 0.0 ||
            side->f_2to1 > 1.0)
            throw std::invalid_argument("simulate: wrong-way fraction outside [0, 1]");
        if (!std::isfinite(side->angle_port1_deg) || !std::isfinite(side->angle_port2_deg))
            throw std::invalid_argument("simulate: non-finite analyzer angle");
        if (side->tau_used_ps <= 0)
            throw std::invalid_argument("simulate: tau_used must be positive");
    }
}

SimulationOutput simulate_run(const SimulationConfig& config)
{
    config.validate();
    std::uint64_t master = config.seed;
    Rng rng_settings_a(splitmix64(master));
    Rng rng_settings_b(splitmix64(master));
    Rng rng_pairs(splitmix64(master));
    Rng rng_outcomes(splitmix64(master));
    Rng rng_jitter(splitmix64(master));

    const std::vector<SettingClick> settings_a =
        generate_settings(config.alice, config.duration_s, rng_settings_a);
    const std::vector<SettingClick> settings_b =
        generate_settings(config.bob, config.duration_s, rng_settings_b);

    std::vector<double> pair_times;
    if (config.pair_rate_hz > 0.0)
        for (double t = rng_pairs.exponential(config.pair_rate_hz); t < config.duration_s;
             t += rng_pairs.exponential(config.pair_rate_hz))
            pair_times.push_back(t);

    const auto drift_ps = [&](double t_s) {
        return config.drift_offset_ps + config.drift_ps_per_s * t_s;
    };

    SimulationOutput out;
    out.a.reserve(settings_a.size() + pair_times.size());
    out.b.reserve(settings_b.size() + pair_times.size());

    for (const SettingClick& c : settings_a)
        out.a.push_back({{static_cast<std::int64_t>(std::llround(c.t_s * 1e12)), StationId::A,
                          port_channel(config.alice.ports, c.port)},
                         c.label,
                         -1});
    for (const SettingClick& c : settings_b)
        out.b.push_back({{std::max<std::int64_t>(
                              0, std::llround(c.t_s * 1e12 + drift_ps(c.t_s))),
                          StationId::B, port_channel(config.bob.ports, c.port)},
                         c.label,
                         -1});

    // Most recent setting at arrival decides the analyzer angle; outcomes
    // are sampled regardless of validity, downstream gating filters them.
    std::size_t ia = 0, ib = 0;
    std::int64_t pair_id = 0;
    for (const double t : pair_times) {
        while (ia < settings_a.size() && settings_a[ia].t_s <= t) ++ia;
        while (ib < settings_b.size() && settings_b[ib].t_s <= t) ++ib;

        bool a_plus;
        bool b_plus;
        if (ia == 0 || ib == 0) {
            a_plus = rng_outcomes.bernoulli(0.5);
            b_plus = rng_outcomes.bernoulli(0.5);
        } else {
            const double angle_a = port_angle(config.alice, settings_a[ia - 1].port);
            const double angle_b = port_angle(config.bob, settings_b[ib - 1].port);
            const double p_same =
                0.5 * (1.0 -
                       config.visibility * std::cos(2.0 * (angle_a - angle_b) * kDegToRad));
            a_plus = rng_outcomes.bernoulli(0.5);
            b_plus = rng_outcomes.bernoulli(p_same) ? a_plus : !a_plus;
        }

        const bool detect_a = config.detection_efficiency >= 1.0 ||
                              rng_outcomes.bernoulli(config.detection_efficiency);
        const bool detect_b = config.detection_efficiency >= 1.0 ||
                              rng_outcomes.bernoulli(config.detection_efficiency);
        if (detect_a)
            out.a.push_back({{static_cast<std::int64_t>(std::llround(t * 1e12)), StationId::A,
                              a_plus ? Channel::outcome_plus : Channel::outcome_minus},
                             TruthLabel::outcome,
                             pair_id});
        if (detect_b) {
            const double jitter =
                config.jitter_ps > 0.0 ? config.jitter_ps * rng_jitter.normal() : 0.0;
            out.b.push_back(
                {{std::max<std::int64_t>(0, std::llround(t * 1e12 + drift_ps(t) + jitter)),
                  StationId::B, b_plus ? Channel::outcome_plus : Channel::outcome_minus},
                 TruthLabel::outcome,
                 pair_id});
        }
        ++pair_id;
    }

    const auto by_time = [](const SimEvent& x, const SimEvent& y) {
        return x.event.t_ps < y.event.t_ps;
    };
    std::stable_sort(out.a.begin(), out.a.end(), by_time);
    std::stable_sort(out.b.begin(), out.b.end(), by_time);
    return out;
}

EventStreams SimulationOutput::streams() const
{
    EventStreams s;
    s.a.reserve(a.size());
    s.b.reserve(b.size());
    for (const SimEvent& e : a) s.a.push_back(e.event);
    for (const SimEvent& e : b) s.b.push_back(e.event);
    return s;
}

void SimulationOutput::write_truth(std::ostream& text) const
{
    static const char* kLabels[] = {"stellar", "wrongway", "noise", "pair"};
    const auto dump = [&](const std::vector<SimEvent>& events, const char* site) {
        for (std::size_t k = 0; k < events.size(); ++k) {
            text << site << ' ' << k << ' ' << kLabels[static_cast<int>(events[k].label)];
            if (events[k].label == TruthLabel::outcome) text << ' ' << events[k].pair_id;
            text << '\n';
        }
    };
    dump(a, "A");
    dump(b, "B");
}

EventStreams synthesize_from_tables(const CoincidenceTable& coincidences,
                                    const SinglesTable* singles,
                                    const SynthesisOptions& options)
{
    coincidences.validate();
    const auto require_integer = [](double v, const char* what) {
        if (std::abs(v - std::round(v)) > 1e-9)
            throw std::invalid_argument(std::string("synthesize_from_tables: non-integer ") +
                                        what);
        return static_cast<long long>(std::llround(v));
    };
    if (options.setting_lead_ps >= options.tau_used_a_ps ||
        options.setting_lead_ps >= options.tau_used_b_ps)
        throw std::invalid_argument("synthesize_from_tables: setting lead exceeds tau_used");
    const long long span =
        options.setting_lead_ps + options.batch_size * options.intra_batch_step_ps;
    if (span >= std::min(options.tau_used_a_ps, options.tau_used_b_ps) ||
        span >= options.trial_spacing_ps / 2)
        throw std::invalid_argument("synthesize_from_tables: batch span exceeds the validity window");

    EventStreams streams;
    std::int64_t t = options.trial_spacing_ps;

    const auto setting_pair = [&](int i, int j, std::int64_t at) {
        streams.a.push_back({at - options.setting_lead_ps, StationId::A,
                             port_channel(options.ports_a, i)});
        streams.b.push_back({at - options.setting_lead_ps, StationId::B,
                             port_channel(options.ports_b, j)});
    };

    // Coincident trials, one per count.
    for (int i = 1; i <= 2; ++i)
        for (int j = 1; j <= 2; ++j)
            for (const bool a_plus : {true, false})
                for (const bool b_plus : {true, false}) {
                    const long long count =
                        require_integer(coincidences.at(i, j, a_plus, b_plus), "coincidence count");
                    for (long long k = 0; k < count; ++k) {
                        setting_pair(i, j, t);
                        streams.a.push_back({t, StationId::A,
                                             a_plus ? Channel::outcome_plus
                                                    : Channel::outcome_minus});
                        streams.b.push_back({t, StationId::B,
                                             b_plus ? Channel::outcome_plus
                                                    : Channel::outcome_minus});
                        t += options.trial_spacing_ps;
                    }
                }

    if (singles) {
        // Top up the non-coincident remainder of each singles cell in
        // batches that share one setting pair.
        const auto emit_batches = [&](StationId site, int local, int distant, bool plus,
                                      long long extra) {
            while (extra > 0) {
                const long long batch = std::min<long long>(extra, options.batch_size);
                const int i = site == StationId::A ? local : distant;
                const int j = site == StationId::A ? distant : local;
                setting_pair(i, j, t);
                auto& stream = site == StationId::A ? streams.a : streams.b;
                for (long long k = 0; k < batch; ++k)
                    stream.push_back({t + k * options.intra_batch_step_ps, site,
                                      plus ? Channel::outcome_plus : Channel::outcome_minus});
                extra -= batch;
                t += options.trial_spacing_ps;
            }
        };

        for (int local = 1; local <= 2; ++local)
            for (int distant = 1; distant <= 2; ++distant)
                for (const bool plus : {true, false}) {
                    const long long target_a = require_integer(
                        singles->alice[SinglesTable::index(plus, local, distant)],
                        "singles count");
                    long long coincident_a = 0;
                    for (const bool b_plus : {true, false})
                        coincident_a += require_integer(
                            coincidences.at(local, distant, plus, b_plus), "coincidence count");
                    if (target_a < coincident_a)
                        throw std::invalid_argument(
                            "synthesize_from_tables: inconsistent targets (singles below "
                            "coincidence contribution on side A)");
                    emit_batches(StationId::A, local, distant, plus, target_a - coincident_a);

                    const long long target_b = require_integer(
                        singles->bob[SinglesTable::index(plus, local, distant)],
                        "singles count");
                    long long coincident_b = 0;
                    for (const bool a_plus : {true, false})
                        coincident_b += require_integer(
                            coincidences.at(distant, local, a_plus, plus), "coincidence count");
                    if (target_b < coincident_b)
                        throw std::invalid_argument(
                            "synthesize_from_tables: inconsistent targets (singles below "
                            "coincidence contribution on side B)");
                    emit_batches(StationId::B, local, distant, plus, target_b - coincident_b);
                }
    }

    return streams;
}

}  // namespace starbell
