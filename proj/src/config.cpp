#include "starbell/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace starbell {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed)
{
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

double get_number(const json& obj, const std::string& where, const char* key)
{
    if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    if (!obj[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return obj[key].get<double>();
}

double get_number_or(const json& obj, const char* key, double fallback)
{
    if (!obj.contains(key)) return fallback;
    return obj[key].get<double>();
}

std::string get_string(const json& obj, const std::string& where, const char* key)
{
    if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    if (!obj[key].is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return obj[key].get<std::string>();
}

GeodeticSite parse_site(const json& obj, const std::string& where, const char* fallback_label)
{
    require_keys(obj, where, {"label", "lat_deg", "lon_deg", "elev_m"});
    GeodeticSite site;
    site.label = obj.contains("label") ? obj["label"].get<std::string>() : fallback_label;
    site.latitude_deg = get_number(obj, where, "lat_deg");
    site.longitude_deg = get_number(obj, where, "lon_deg");
    site.elevation_m = get_number(obj, where, "elev_m");
    site.validate();
    return site;
}

SkyWindow parse_window(const json& obj, const std::string& where)
{
    require_keys(obj, where, {"az", "alt"});
    SkyWindow window;
    for (const char* key : {"az", "alt"}) {
        if (!obj.contains(key) || !obj[key].is_array() || obj[key].size() != 2)
            throw ConfigError(where + "." + key + ": expected [min, max]");
    }
    window.az_min_deg = obj["az"][0].get<double>();
    window.az_max_deg = obj["az"][1].get<double>();
    window.alt_min_deg = obj["alt"][0].get<double>();
    window.alt_max_deg = obj["alt"][1].get<double>();
    return window;
}

SideRates parse_side_rates(const json& obj, const std::string& where)
{
    require_keys(obj, where,
                 {"total_hz", "total_sigma_hz", "noise_hz", "noise_sigma_hz", "f_1to2",
                  "f_2to1", "sigma_f_over_f"});
    SideRates side;
    const auto pair_of = [&](const char* key, bool required) -> std::array<double, 2> {
        if (!obj.contains(key)) {
            if (required) throw ConfigError(where + ": missing key '" + key + "'");
            return {0.0, 0.0};
        }
        if (!obj[key].is_array() || obj[key].size() != 2)
            throw ConfigError(where + "." + key + ": expected [port1, port2]");
        return {obj[key][0].get<double>(), obj[key][1].get<double>()};
    };
    side.total_hz = pair_of("total_hz", true);
    side.total_sigma_hz = pair_of("total_sigma_hz", false);
    side.noise_hz = pair_of("noise_hz", true);
    side.noise_sigma_hz = pair_of("noise_sigma_hz", false);
    side.f_1to2 = get_number(obj, where, "f_1to2");
    side.f_2to1 = get_number(obj, where, "f_2to1");
    side.sigma_f_over_f = get_number_or(obj, "sigma_f_over_f", 0.1);
    return side;
}

SettingPortMap parse_port_map(const json& obj, const std::string& where, const char* key,
                              Channel fallback)
{
    if (!obj.contains(key)) return {fallback};
    const std::string color = obj[key].get<std::string>();
    if (color == "red") return {Channel::setting_red};
    if (color == "blue") return {Channel::setting_blue};
    throw ConfigError(where + "." + key + ": expected \"red\" or \"blue\"");
}

SelectionCriteria parse_selection(const json& obj, const std::string& where, Side side)
{
    require_keys(obj, where,
                 {"min_distance_ly", "max_fractional_distance_error", "magnitude_range",
                  "alice_window", "bob_window", "min_visible_fraction", "sample_step_s",
                  "weights"});
    SelectionCriteria criteria;
    criteria.min_distance_ly = get_number_or(obj, "min_distance_ly", 500.0);
    criteria.max_fractional_distance_error =
        get_number_or(obj, "max_fractional_distance_error", 0.5);
    if (obj.contains("magnitude_range")) {
        if (!obj["magnitude_range"].is_array() || obj["magnitude_range"].size() != 2)
            throw ConfigError(where + ".magnitude_range: expected [min, max]");
        criteria.magnitude_min = obj["magnitude_range"][0].get<double>();
        criteria.magnitude_max = obj["magnitude_range"][1].get<double>();
    }
    const char* window_key = side == Side::A ? "alice_window" : "bob_window";
    if (obj.contains(window_key))
        criteria.window = parse_window(obj[window_key], where + "." + window_key);
    criteria.min_visible_fraction = get_number_or(obj, "min_visible_fraction", 1.0);
    criteria.sample_step_s = get_number_or(obj, "sample_step_s", 10.0);
    if (obj.contains("weights")) {
        const json& w = obj["weights"];
        require_keys(w, where + ".weights",
                     {"brightness", "distance", "visibility", "validity", "airmass"});
        criteria.weights.brightness = get_number_or(w, "brightness", 1.0);
        criteria.weights.distance = get_number_or(w, "distance", 1.0);
        criteria.weights.visibility = get_number_or(w, "visibility", 1.0);
        criteria.weights.validity = get_number_or(w, "validity", 1.0);
        criteria.weights.airmass = get_number_or(w, "airmass", 1.0);
    }
    return criteria;
}

SideSimConfig parse_sim_side(const json& obj, const std::string& where,
                             const SideSimConfig& defaults)
{
    require_keys(obj, where,
                 {"stellar_rate_hz", "noise_rate_hz", "f_1to2", "f_2to1", "tau_used_ps",
                  "dead_time_ps", "port1_color", "angles_deg"});
    SideSimConfig side = defaults;
    const auto pair_of = [&](const char* key, double out[2]) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_array() || obj[key].size() != 2)
            throw ConfigError(where + "." + key + ": expected [port1, port2]");
        out[0] = obj[key][0].get<double>();
        out[1] = obj[key][1].get<double>();
    };
    pair_of("stellar_rate_hz", side.stellar_rate_hz);
    pair_of("noise_rate_hz", side.noise_rate_hz);
    side.f_1to2 = get_number_or(obj, "f_1to2", defaults.f_1to2);
    side.f_2to1 = get_number_or(obj, "f_2to1", defaults.f_2to1);
    side.tau_used_ps =
        static_cast<std::int64_t>(get_number_or(obj, "tau_used_ps", defaults.tau_used_ps));
    side.detector_dead_time_ps = static_cast<std::int64_t>(
        get_number_or(obj, "dead_time_ps", defaults.detector_dead_time_ps));
    side.ports = parse_port_map(obj, where, "port1_color", defaults.ports.port1);
    if (obj.contains("angles_deg")) {
        if (!obj["angles_deg"].is_array() || obj["angles_deg"].size() != 2)
            throw ConfigError(where + ".angles_deg: expected [port1, port2]");
        side.angle_port1_deg = obj["angles_deg"][0].get<double>();
        side.angle_port2_deg = obj["angles_deg"][1].get<double>();
    }
    return side;
}

}  // namespace

UtcTime parse_utc(const std::string& text)
{
    UtcTime utc;
    int seconds_int = 0;
    char trailing = '\0';
    const int fields = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d%c", &utc.year, &utc.month,
                                   &utc.day, &utc.hour, &utc.minute, &seconds_int, &trailing);
    if (fields < 6 || (fields == 7 && trailing != 'Z'))
        throw ConfigError("bad UTC timestamp '" + text + "', expected YYYY-MM-DDTHH:MM:SS[Z]");
    if (utc.month < 1 || utc.month > 12 || utc.day < 1 || utc.day > 31 || utc.hour < 0 ||
        utc.hour > 23 || utc.minute < 0 || utc.minute > 59 || seconds_int < 0 ||
        seconds_int > 60)
        throw ConfigError("UTC timestamp fields out of range in '" + text + "'");
    utc.second = seconds_int;
    return utc;
}

SiteLayout parse_sites_file(std::istream& stream)
{
    std::map<std::string, GeodeticSite> sites;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(stream, line)) {
        ++line_number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        GeodeticSite site;
        bool have[4] = {false, false, false, false};
        std::istringstream ss(line);
        std::string token;
        while (ss >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos)
                throw ConfigError("sites file line " + std::to_string(line_number) +
                                  ": expected key=value tokens");
            const std::string key = token.substr(0, eq);
            const std::string value = token.substr(eq + 1);
            if (key == "label") {
                site.label = value;
                have[0] = true;
            } else if (key == "lat_deg") {
                site.latitude_deg = std::strtod(value.c_str(), nullptr);
                have[1] = true;
            } else if (key == "lon_deg") {
                site.longitude_deg = std::strtod(value.c_str(), nullptr);
                have[2] = true;
            } else if (key == "elev_m") {
                site.elevation_m = std::strtod(value.c_str(), nullptr);
                have[3] = true;
            } else {
                throw ConfigError("sites file line " + std::to_string(line_number) +
                                  ": unknown key '" + key + "'");
            }
        }
        if (!(have[0] && have[1] && have[2] && have[3]))
            throw ConfigError("sites file line " + std::to_string(line_number) +
                              ": needs label, lat_deg, lon_deg, elev_m");
        site.validate();
        sites[site.label] = site;
    }
    for (const char* label : {"A", "B", "S"})
        if (!sites.count(label))
            throw ConfigError(std::string("sites file: missing site '") + label + "'");
    return {sites["A"], sites["B"], sites["S"]};
}

std::string RunConfig::resolve_path(const std::string& path) const
{
    if (path.empty() || path.front() == '/') return path;
    return base_dir + "/" + path;
}

RunConfig parse_config(const std::string& json_text, const std::string& base_dir)
{
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ConfigError(std::string("config is not valid JSON: ") + err.what());
    }
    require_keys(doc, "config",
                 {"sites", "sites_file", "run", "budget", "catalogue", "selection", "stars",
                  "spectra", "rates", "analysis", "simulate", "output"});

    RunConfig config;
    config.base_dir = base_dir;

    if (doc.contains("sites_file")) {
        std::ifstream in(config.resolve_path(doc["sites_file"].get<std::string>()));
        if (!in) throw ConfigError("cannot open sites file");
        config.sites = parse_sites_file(in);
    }
    if (doc.contains("sites")) {
        const json& s = doc["sites"];
        require_keys(s, "sites", {"alice", "bob", "source"});
        for (const char* key : {"alice", "bob", "source"})
            if (!s.contains(key)) throw ConfigError(std::string("sites: missing '") + key + "'");
        config.sites = SiteLayout{parse_site(s["alice"], "sites.alice", "A"),
                                  parse_site(s["bob"], "sites.bob", "B"),
                                  parse_site(s["source"], "sites.source", "S")};
    }

    if (doc.contains("run")) {
        const json& r = doc["run"];
        require_keys(r, "run", {"utc_start", "duration_s", "sample_step_s"});
        RunWindow window;
        window.utc_start = parse_utc(get_string(r, "run", "utc_start"));
        window.duration_s = get_number_or(r, "duration_s", 179.0);
        window.sample_step_s = get_number_or(r, "sample_step_s", 1.0);
        if (!(window.duration_s > 0.0) || !(window.sample_step_s > 0.0))
            throw ConfigError("run: duration and step must be positive");
        config.run = window;
    }

    if (doc.contains("budget")) {
        const json& b = doc["budget"];
        require_keys(b, "budget",
                     {"tau_set_s", "tau_buffer_a_s", "tau_buffer_b_s", "tau_atm_s",
                      "index_air", "cable_delay_a", "cable_delay_b"});
        config.budget.tau_set_s = get_number_or(b, "tau_set_s", config.budget.tau_set_s);
        config.budget.tau_buffer_a_s =
            get_number_or(b, "tau_buffer_a_s", config.budget.tau_buffer_a_s);
        config.budget.tau_buffer_b_s =
            get_number_or(b, "tau_buffer_b_s", config.budget.tau_buffer_b_s);
        config.budget.tau_atm_s = get_number_or(b, "tau_atm_s", config.budget.tau_atm_s);
        config.budget.index_air = get_number_or(b, "index_air", config.budget.index_air);
        config.budget.cable_delay_a =
            get_number_or(b, "cable_delay_a", config.budget.cable_delay_a);
        config.budget.cable_delay_b =
            get_number_or(b, "cable_delay_b", config.budget.cable_delay_b);
        config.budget.validate();
    }

    if (doc.contains("catalogue")) {
        const json& c = doc["catalogue"];
        require_keys(c, "catalogue", {"path"});
        config.catalogue_path = config.resolve_path(get_string(c, "catalogue", "path"));
    }

    if (doc.contains("selection")) {
        config.selection_a = parse_selection(doc["selection"], "selection", Side::A);
        config.selection_b = parse_selection(doc["selection"], "selection", Side::B);
    }

    if (doc.contains("stars")) {
        const json& s = doc["stars"];
        require_keys(s, "stars", {"alice", "bob"});
        if (s.contains("alice")) config.star_alice = s["alice"].get<std::string>();
        if (s.contains("bob")) config.star_bob = s["bob"].get<std::string>();
    }

    if (doc.contains("spectra")) {
        const json& s = doc["spectra"];
        require_keys(s, "spectra", {"curves_dir", "temperatures_k", "stars"});
        SpectraConfig spectra;
        spectra.curves_dir = config.resolve_path(get_string(s, "spectra", "curves_dir"));
        if (s.contains("temperatures_k")) {
            for (const auto& [hip, value] : s["temperatures_k"].items())
                spectra.temperatures_k[hip] = value.get<double>();
        }
        if (s.contains("stars")) {
            for (const json& entry : s["stars"]) {
                require_keys(entry, "spectra.stars[]", {"hip", "side", "airmass"});
                SpectraConfig::StarRequest request;
                request.hip = get_string(entry, "spectra.stars[]", "hip");
                const std::string side = entry.contains("side")
                                             ? entry["side"].get<std::string>()
                                             : "A";
                if (side == "A" || side == "alice") request.side = Side::A;
                else if (side == "B" || side == "bob") request.side = Side::B;
                else throw ConfigError("spectra.stars[].side: expected A or B");
                if (entry.contains("airmass"))
                    request.airmass_override = entry["airmass"].get<double>();
                spectra.stars.push_back(std::move(request));
            }
        }
        config.spectra = std::move(spectra);
    }

    if (doc.contains("rates")) {
        const json& r = doc["rates"];
        require_keys(r, "rates", {"alice", "bob", "duration_total_s", "duration_noise_s"});
        if (!r.contains("alice") || !r.contains("bob"))
            throw ConfigError("rates: both 'alice' and 'bob' are required");
        RateBudget budget;
        budget.alice = parse_side_rates(r["alice"], "rates.alice");
        budget.bob = parse_side_rates(r["bob"], "rates.bob");
        budget.duration_total_s = get_number_or(r, "duration_total_s", 179.0);
        budget.duration_noise_s = get_number_or(r, "duration_noise_s", 59.0);
        budget.validate();
        config.rates = budget;
    }

    if (doc.contains("analysis")) {
        const json& a = doc["analysis"];
        require_keys(a, "analysis",
                     {"window_ps", "tau_used_a_ps", "tau_used_b_ps", "tau_cut_a_ps",
                      "tau_cut_b_ps", "port1_color_a", "port1_color_b", "estimate_drift",
                      "drift", "efficiency_ratio_a", "efficiency_ratio_b", "memory_n_max"});
        PipelineOptions& p = config.analysis.pipeline;
        p.window_ps = static_cast<std::int64_t>(get_number_or(a, "window_ps", 2500));
        p.tau_used_a_ps =
            static_cast<std::int64_t>(get_number_or(a, "tau_used_a_ps", 2'000'000));
        p.tau_used_b_ps =
            static_cast<std::int64_t>(get_number_or(a, "tau_used_b_ps", 5'000'000));
        p.tau_cut_a_ps = static_cast<std::int64_t>(get_number_or(a, "tau_cut_a_ps", 500'000));
        p.tau_cut_b_ps = static_cast<std::int64_t>(get_number_or(a, "tau_cut_b_ps", 500'000));
        p.ports_a = parse_port_map(a, "analysis", "port1_color_a", Channel::setting_red);
        p.ports_b = parse_port_map(a, "analysis", "port1_color_b", Channel::setting_blue);
        if (a.contains("estimate_drift")) p.estimate_drift = a["estimate_drift"].get<bool>();
        if (a.contains("drift")) {
            const json& d = a["drift"];
            require_keys(d, "analysis.drift", {"block_s", "bin_ps", "search_range_ps"});
            p.drift_options.block_s = get_number_or(d, "block_s", 10.0);
            p.drift_options.bin_ps =
                static_cast<std::int64_t>(get_number_or(d, "bin_ps", 100));
            p.drift_options.search_range_ps =
                static_cast<std::int64_t>(get_number_or(d, "search_range_ps", 100000));
        }
        if (a.contains("efficiency_ratio_a"))
            config.analysis.efficiency_ratio_a = a["efficiency_ratio_a"].get<double>();
        if (a.contains("efficiency_ratio_b"))
            config.analysis.efficiency_ratio_b = a["efficiency_ratio_b"].get<double>();
        config.analysis.memory_n_max =
            static_cast<int>(get_number_or(a, "memory_n_max", 15));
        if (config.analysis.memory_n_max < 1)
            throw ConfigError("analysis.memory_n_max must be >= 1");
    }

    if (doc.contains("simulate")) {
        const json& s = doc["simulate"];
        require_keys(s, "simulate",
                     {"seed", "duration_s", "pair_rate_hz", "visibility",
                      "detection_efficiency", "alice", "bob", "drift_offset_ps",
                      "drift_ps_per_s", "jitter_ps"});
        SimulationConfig sim;
        if (s.contains("seed")) sim.seed = s["seed"].get<std::uint64_t>();
        sim.duration_s = get_number_or(s, "duration_s", sim.duration_s);
        sim.pair_rate_hz = get_number_or(s, "pair_rate_hz", sim.pair_rate_hz);
        sim.visibility = get_number_or(s, "visibility", sim.visibility);
        sim.detection_efficiency =
            get_number_or(s, "detection_efficiency", sim.detection_efficiency);
        if (s.contains("alice")) sim.alice = parse_sim_side(s["alice"], "simulate.alice", sim.alice);
        if (s.contains("bob")) sim.bob = parse_sim_side(s["bob"], "simulate.bob", sim.bob);
        sim.drift_offset_ps = get_number_or(s, "drift_offset_ps", 0.0);
        sim.drift_ps_per_s = get_number_or(s, "drift_ps_per_s", 0.0);
        sim.jitter_ps = get_number_or(s, "jitter_ps", 0.0);
        sim.validate();
        config.simulation = sim;
    }

    if (doc.contains("output")) {
        require_keys(doc["output"], "output", {"dir"});
    }

    return config;
}

RunConfig load_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const auto slash = path.find_last_of('/');
    const std::string base_dir = slash == std::string::npos ? "." : path.substr(0, slash);
    return parse_config(buffer.str(), base_dir);
}

std::string apply_override(const std::string& json_text, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    json doc = json::parse(json_text);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::parse_error&) {
        value = value_text;  // plain string
    }

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("override path has an empty segment");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
    return doc.dump();
}

double round12(double value)
{
    if (!std::isfinite(value)) return value;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.11e", value);
    return std::strtod(buf, nullptr);
}

}  // namespace starbell
