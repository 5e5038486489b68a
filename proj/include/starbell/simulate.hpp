#pragma once

// Synthetic experiment generator: polarization-singlet outcome pairs gated
// by stellar-photon setting streams with configurable noise, wrong-way
// routing, clock drift and jitter. Every event carries a ground-truth label
// so pipeline behavior can be checked against known inputs. Also builds
// artificial streams that reproduce given count tables exactly.

#include <cstdint>
#include <ostream>
#include <vector>

#include "starbell/timetag.hpp"

namespace starbell {

enum class TruthLabel : std::uint8_t {
    stellar = 0,     // correctly routed stellar photon
    wrong_way = 1,   // stellar photon routed to the opposite port
    noise = 2,       // sky glow / dark count
    outcome = 3,     // entangled-pair detection; pair_id identifies the twin
};

struct SimEvent {
    TimeTagEvent event;
    TruthLabel label = TruthLabel::outcome;
    std::int64_t pair_id = -1;
};

struct SideSimConfig {
    // Detected stellar photon rates per port under correct identification.
    double stellar_rate_hz[2] = {0.0, 0.0};
    double noise_rate_hz[2] = {0.0, 0.0};
    double f_1to2 = 0.0;
    double f_2to1 = 0.0;
    std::int64_t tau_used_ps = 2'000'000;
    std::int64_t detector_dead_time_ps = 0;  // per setting port
    SettingPortMap ports;
    // Analyzer angle implied by a click on each port, degrees.
    double angle_port1_deg = 0.0;
    double angle_port2_deg = 45.0;
};

struct SimulationConfig {
    std::uint64_t seed = 1;
    double duration_s = 10.0;
    double pair_rate_hz = 1000.0;
    double visibility = 1.0;
    double detection_efficiency = 1.0;
    // Port colors and analyzer angles follow the conventional assignment:
    // Alice red = 0/90 and blue = 45/135; Bob blue = 22.5/112.5 and
    // red = -22.5/67.5, with port 1 = red on Alice's side and blue on Bob's.
    SideSimConfig alice{};
    SideSimConfig bob{.tau_used_ps = 5'000'000,
                      .ports = {Channel::setting_blue},
                      .angle_port1_deg = 22.5,
                      .angle_port2_deg = -22.5};
    double drift_offset_ps = 0.0;  // constant clock offset applied to B stamps
    double drift_ps_per_s = 0.0;   // linear clock drift applied to B stamps
    double jitter_ps = 0.0;        // gaussian timing jitter on B outcomes

    void validate() const;
};

struct SimulationOutput {
    std::vector<SimEvent> a;
    std::vector<SimEvent> b;

    EventStreams streams() const;
    // Sidecar truth format: "<site> <event_index> <label>[ <pair_id>]".
    void write_truth(std::ostream& text) const;
};

// Poisson pair emissions and setting streams; outcomes follow the singlet
// correlation p(A=B | a,b) = (1 - V cos 2(a-b)) / 2 conditioned on the
// settings active at arrival time. Deterministic given the seed.
SimulationOutput simulate_run(const SimulationConfig& config);

struct SynthesisOptions {
    std::int64_t trial_spacing_ps = 20'000'000;
    std::int64_t setting_lead_ps = 1'000'000;  // setting click before outcomes
    std::int64_t intra_batch_step_ps = 10'000;
    int batch_size = 64;                       // singles sharing one setting pair
    std::int64_t tau_used_a_ps = 2'000'000;
    std::int64_t tau_used_b_ps = 5'000'000;
    SettingPortMap ports_a{Channel::setting_red};
    SettingPortMap ports_b{Channel::setting_blue};
};

// Streams whose pipeline tabulation reproduces the given coincidence table
// exactly; when `singles` is non-null its extra (non-coincident) counts are
// reproduced as well. Throws std::invalid_argument on inconsistent targets
// (non-integer counts, or singles below their coincidence contribution).
EventStreams synthesize_from_tables(const CoincidenceTable& coincidences,
                                    const SinglesTable* singles = nullptr,
                                    const SynthesisOptions& options = {});

}  // namespace starbell
