#include "starbell/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "starbell/math_util.hpp"
#include "starbell/spectra.hpp"

namespace starbell {

using nlohmann::json;

namespace {

json rounded(const std::vector<double>& values)
{
    json out = json::array();
    for (double v : values) out.push_back(round12(v));
    return out;
}

template <std::size_t N>
json rounded(const std::array<double, N>& values)
{
    json out = json::array();
    for (double v : values) out.push_back(round12(v));
    return out;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

const SiteLayout& require_sites(const RunConfig& config)
{
    if (!config.sites) throw ConfigError("this command needs a 'sites' section");
    return *config.sites;
}

const RunWindow& require_run(const RunConfig& config)
{
    if (!config.run) throw ConfigError("this command needs a 'run' section");
    return *config.run;
}

}  // namespace

std::string cmd_plan(const RunConfig& config)
{
    const SiteLayout& sites = require_sites(config);
    const RunWindow& run = require_run(config);
    if (!config.catalogue_path) throw ConfigError("plan needs a 'catalogue' section");

    std::ifstream in(*config.catalogue_path);
    if (!in) throw ConfigError("cannot open catalogue " + *config.catalogue_path);
    const CatalogueParseResult parsed = parse_catalogue(in, true);

    const auto candidates_a =
        select_candidates(parsed.records, config.selection_a, sites, Side::A, config.budget,
                          run.utc_start, run.duration_s);
    const auto candidates_b =
        select_candidates(parsed.records, config.selection_b, sites, Side::B, config.budget,
                          run.utc_start, run.duration_s);
    if (candidates_a.empty() || candidates_b.empty())
        throw std::invalid_argument(std::string("no candidates on side ") +
                                    (candidates_a.empty() ? "A" : "B"));

    const PairRanking ranking = rank_pairs(candidates_a, candidates_b);

    const auto candidate_json = [&](const RankedCandidate& cand, Side side) {
        json j;
        j["hip"] = cand.record.hip_id;
        j["distance_ly"] = round12(cand.target.distance_ly);
        j["sigma_distance_ly"] = round12(cand.target.distance_error_ly);
        j["hp_mag"] = round12(cand.record.hp_magnitude);
        j["visibility_s"] = round12(cand.visibility_duration_s);
        j["airmass_mid"] = round12(cand.airmass_at_mid);
        j["min_tau_valid_us"] = round12(cand.min_tau_valid_s * 1e6);
        if (cand.min_tau_valid_s > 0.0) {
            try {
                j["tau_used_us"] = round12(tau_used(cand.min_tau_valid_s, config.budget, side) * 1e6);
            } catch (const WindowExhaustedError&) {
                j["tau_used_us"] = nullptr;
            }
        } else {
            j["tau_used_us"] = nullptr;
        }
        const StarPointing mid =
            star_direction_jd(cand.target, julian_date(run.utc_start) +
                                               0.5 * run.duration_s / 86400.0,
                              side == Side::A ? sites.alice : sites.bob);
        j["az_mid_deg"] = round12(mid.azimuth_deg);
        j["alt_mid_deg"] = round12(mid.altitude_deg);
        return j;
    };

    const auto pair_json = [&](const RankedPair& pair) {
        json j;
        j["alice"] = candidate_json(pair.alice, Side::A);
        j["bob"] = candidate_json(pair.bob, Side::B);
        j["score"] = round12(pair.score);
        const double alpha = angular_separation_deg(pair.alice.target, pair.bob.target);
        j["angular_separation_deg"] = round12(alpha);
        const LookbackResult lookback = lookback_intersection(
            pair.alice.target.distance_ly, pair.alice.target.distance_error_ly,
            pair.bob.target.distance_ly, pair.bob.target.distance_error_ly, alpha);
        j["lookback_years"] = round12(lookback.t_years);
        j["sigma_lookback_years"] = round12(lookback.sigma_years);
        j["causally_aligned"] = pair.causally_aligned;
        return j;
    };

    json out;
    out["pairs"] = json::array();
    for (const RankedPair& pair : ranking.ranked) out["pairs"].push_back(pair_json(pair));
    out["misaligned"] = json::array();
    for (const RankedPair& pair : ranking.misaligned)
        out["misaligned"].push_back(pair_json(pair));
    out["candidates"] = {{"alice", candidates_a.size()}, {"bob", candidates_b.size()}};
    return out.dump(2);
}

namespace {

SettingReaderModel load_reader_model(const std::string& dir)
{
    SettingReaderModel model;
    model.shortpass_transmission = load_curve_file(dir + "/shortpass_transmission.dat");
    model.shortpass_reflection = load_curve_file(dir + "/shortpass_reflection.dat");
    model.longpass_transmission = load_curve_file(dir + "/longpass_transmission.dat");
    model.lens = load_curve_file(dir + "/lens.dat");
    model.mirror = load_curve_file(dir + "/mirror.dat");
    model.detector = load_curve_file(dir + "/detector_qe.dat");
    model.atmosphere_zenith = load_curve_file(dir + "/atmosphere_zenith.dat");
    model.validate();
    return model;
}

}  // namespace

std::string cmd_spectra(const RunConfig& config)
{
    if (!config.spectra) throw ConfigError("spectra command needs a 'spectra' section");
    const SpectraConfig& spectra = *config.spectra;
    const SettingReaderModel model = load_reader_model(spectra.curves_dir);

    json out;
    out["stars"] = json::array();
    for (const SpectraConfig::StarRequest& request : spectra.stars) {
        const auto temperature = spectra.temperatures_k.find(request.hip);
        if (temperature == spectra.temperatures_k.end())
            throw ConfigError("no temperature configured for star " + request.hip);

        double airmass_x = 0.0;
        if (request.airmass_override) {
            airmass_x = *request.airmass_override;
        } else {
            // Airmass from the star's mid-run altitude at its assigned site.
            const SiteLayout& sites = require_sites(config);
            const RunWindow& run = require_run(config);
            if (!config.catalogue_path)
                throw ConfigError("spectra without explicit airmass needs a catalogue");
            std::ifstream in(*config.catalogue_path);
            if (!in) throw ConfigError("cannot open catalogue " + *config.catalogue_path);
            const CatalogueParseResult parsed = parse_catalogue(in, true);
            const CatalogueRecord* record = nullptr;
            for (const CatalogueRecord& r : parsed.records)
                if (r.hip_id == request.hip) record = &r;
            if (!record) throw ConfigError("star " + request.hip + " not in the catalogue");
            const CelestialTarget target = CelestialTarget::from_parallax(
                record->hip_id, record->ra_deg, record->dec_deg, record->parallax_mas,
                record->parallax_error_mas, record->hp_magnitude);
            const StarPointing mid = star_direction_jd(
                target, julian_date(run.utc_start) + 0.5 * run.duration_s / 86400.0,
                request.side == Side::A ? sites.alice : sites.bob);
            if (mid.altitude_deg <= 0.0)
                throw std::invalid_argument("star " + request.hip + " below the horizon");
            airmass_x = airmass(mid.altitude_deg);
        }

        const SpectralCurve star = blackbody(
            temperature->second, make_grid(model.atmosphere_zenith.min_wavelength(),
                                           model.atmosphere_zenith.max_wavelength(), 1.0));
        const WrongWayReport report = optimal_cutoff(star, model, airmass_x);

        json j;
        j["hip"] = request.hip;
        j["side"] = request.side == Side::A ? "A" : "B";
        j["temperature_k"] = round12(temperature->second);
        j["airmass"] = round12(airmass_x);
        j["cutoff_nm"] = round12(report.cutoff_nm);
        j["f_red_to_blue"] = round12(report.f_red_to_blue);
        j["f_blue_to_red"] = round12(report.f_blue_to_red);
        // Port-index view, matching this side's port-1 color.
        const SettingPortMap ports = request.side == Side::A
                                         ? config.analysis.pipeline.ports_a
                                         : config.analysis.pipeline.ports_b;
        const bool port1_red = ports.port1 == Channel::setting_red;
        j["f_1to2"] = round12(port1_red ? report.f_red_to_blue : report.f_blue_to_red);
        j["f_2to1"] = round12(port1_red ? report.f_blue_to_red : report.f_red_to_blue);
        j["efficiency"] = round12(report.efficiency);
        out["stars"].push_back(std::move(j));
    }
    return out.dump(2);
}

std::string cmd_simulate(const RunConfig& config, const std::string& output_dir)
{
    if (!config.simulation) throw ConfigError("simulate command needs a 'simulate' section");
    const SimulationOutput output = simulate_run(*config.simulation);

    std::filesystem::create_directories(output_dir);
    const std::string streams_path = output_dir + "/streams.bin";
    const std::string truth_path = output_dir + "/truth.txt";
    {
        std::ofstream out(streams_path, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + streams_path);
        write_timetags(out, output.streams());
    }
    {
        std::ofstream out(truth_path);
        if (!out) throw ConfigError("cannot write " + truth_path);
        output.write_truth(out);
    }

    json j;
    j["events_a"] = output.a.size();
    j["events_b"] = output.b.size();
    j["streams"] = streams_path;
    j["truth"] = truth_path;
    return j.dump(2);
}

namespace {

struct AnalysisData {
    CoincidenceTable coincidences;
    std::optional<SinglesTable> singles;
    std::optional<DriftModel> drift;
};

AnalysisData obtain_tables(const RunConfig& config, const AnalyzeInput& input)
{
    AnalysisData data;
    if (input.streams_path) {
        std::ifstream in(config.resolve_path(*input.streams_path), std::ios::binary);
        if (!in) throw ConfigError("cannot open streams " + *input.streams_path);
        const EventStreams streams = parse_timetags(in);
        const PipelineResult result = run_pipeline(streams, config.analysis.pipeline);
        data.coincidences = result.coincidences;
        data.singles = result.singles;
        data.drift = result.drift;
    } else if (input.coincidences_path) {
        data.coincidences = coincidence_table_from_json(
            read_file(config.resolve_path(*input.coincidences_path)));
        if (input.singles_path)
            data.singles =
                singles_table_from_json(read_file(config.resolve_path(*input.singles_path)));
    } else {
        throw ConfigError("analyze needs either a streams file or a coincidence table");
    }
    return data;
}

json significance_json(const SignificanceReport& report, double nu_naive)
{
    json j;
    j["N_win"] = rounded(report.n_win);
    j["W"] = round12(report.w);
    j["W_expected"] = round12(report.w_expected);
    j["f_opt"] = rounded(report.f_opt);
    j["sigma_W_opt"] = round12(report.sigma_w_opt);
    j["nu_bar"] = round12(report.nu_bar);
    j["delta_nu"] = round12(report.delta_nu);
    j["nu_n"] = round12(report.nu_n);
    j["p_cond"] = round12(report.p_cond);
    j["p"] = round12(report.p);
    j["log10_p"] = round12(report.log_p / std::log(10.0));
    j["nu_equivalent"] = round12(report.nu_equivalent);
    j["nu_naive_iid"] = round12(nu_naive);
    j["C"] = round12(report.chsh_c);
    j["eps"] = round12(report.eps);
    j["violates_adapted_bound"] = report.violates_adapted_bound;
    return j;
}

json no_signaling_json(const NoSignalingReport& report)
{
    json j;
    j["p_A_plus"] = rounded(report.p_a_plus);
    j["p_B_plus"] = rounded(report.p_b_plus);
    j["z"] = rounded(report.z);
    j["p_values"] = rounded(report.p_values);
    return j;
}

json build_analysis_report(const RunConfig& config, const AnalysisData& data)
{
    if (!config.rates) throw ConfigError("analyze needs a 'rates' section");

    const SettingProbabilities probs = setting_probabilities(data.coincidences);
    const Chi2Result chi2 = chi2_independence(probs);
    const ChshEstimate est = chsh(data.coincidences);
    const PredictabilityTable pred = predictability(*config.rates);
    const SignificanceReport sig = significance(data.coincidences, pred);
    const MemoryBound memory = memory_bound(probs, pred, config.analysis.memory_n_max);
    const MemoryAdjusted adjusted = memory_adjusted_p(sig.log_p, memory.b);

    json report;
    report["chsh"] = {{"p_same", rounded(est.p_same)},
                      {"C", round12(est.c)},
                      {"E", rounded(est.e)},
                      {"S", round12(est.s)},
                      {"violates_local_realism", est.c > 0.0}};
    report["chi2"] = {{"q", rounded(probs.q)},
                      {"p_a", rounded(probs.p_a)},
                      {"p_b", rounded(probs.p_b)},
                      {"N_ij", rounded(probs.n_ij)},
                      {"N", round12(probs.n_total)},
                      {"chi2", round12(chi2.chi2)},
                      {"p_value", round12(chi2.p_value)}};
    report["predictability"] = {{"s_total_a", round12(pred.s_total_a)},
                                {"s_total_b", round12(pred.s_total_b)},
                                {"eps_a", rounded(pred.eps_a)},
                                {"sigma_eps_a", rounded(pred.sigma_eps_a)},
                                {"eps_b", rounded(pred.eps_b)},
                                {"sigma_eps_b", rounded(pred.sigma_eps_b)},
                                {"eps_ij", rounded(pred.eps_ij)},
                                {"sigma_eps_ij", rounded(pred.sigma_eps_ij)},
                                {"eps", round12(pred.eps)},
                                {"sigma_eps", round12(pred.sigma_eps)},
                                {"eps_bar", round12(pred.eps_bar)}};
    report["significance"] = significance_json(sig, naive_iid_sigma(data.coincidences));

    json mem;
    mem["n_max"] = config.analysis.memory_n_max;
    mem["p_left_max"] = rounded(memory.p_left_max);
    mem["best_composition"] = memory.best_composition;
    mem["B"] = round12(memory.b);
    mem["n_at_max"] = memory.n_at_max;
    mem["p_mem"] = round12(adjusted.p_mem);
    mem["log10_p_mem"] = round12(adjusted.log_p_mem / std::log(10.0));
    mem["nu_equivalent"] = round12(adjusted.nu_equivalent);
    report["memory"] = mem;

    json ns;
    if (data.singles) {
        ns = no_signaling_json(no_signaling(*data.singles));
        ns["source"] = "singles";
    } else {
        ns["source"] = "absent";
    }
    if (config.analysis.efficiency_ratio_a || config.analysis.efficiency_ratio_b) {
        const double r_a = config.analysis.efficiency_ratio_a.value_or(1.0);
        const double r_b = config.analysis.efficiency_ratio_b.value_or(1.0);
        const CoincidenceTable corrected =
            efficiency_correction(data.coincidences, r_a, r_b);
        json c = no_signaling_json(no_signaling_from_coincidences(corrected));
        c["R_A"] = round12(r_a);
        c["R_B"] = round12(r_b);
        ns["corrected_coincidence_marginals"] = c;
        ns["uncorrected_coincidence_marginals"] =
            no_signaling_json(no_signaling_from_coincidences(data.coincidences));
    }
    report["no_signaling"] = ns;

    if (data.drift) {
        json knots = json::array();
        for (const auto& [t, offset] : data.drift->knots)
            knots.push_back({{"t_ps", t}, {"offset_ps", round12(offset)}});
        report["drift"] = {{"knots", knots}};
    }
    return report;
}

}  // namespace

std::string cmd_analyze(const RunConfig& config, const AnalyzeInput& input)
{
    const AnalysisData data = obtain_tables(config, input);
    return build_analysis_report(config, data).dump(2);
}

std::string cmd_report(const RunConfig& config, const AnalyzeInput& input)
{
    const AnalysisData data = obtain_tables(config, input);
    const json analysis = build_analysis_report(config, data);

    json out;
    out["figures"]["chsh_bars"] = {
        {"labels", {"E11", "E12", "E21", "E22"}},
        {"E", analysis["chsh"]["E"]},
        {"chsh_signs", {-1, -1, -1, 1}},
    };
    json n_axis = json::array();
    for (std::size_t k = 0; k < analysis["memory"]["p_left_max"].size(); ++k)
        n_axis.push_back(k + 1);
    out["figures"]["memory_p_left"] = {
        {"n", n_axis},
        {"p_left_max", analysis["memory"]["p_left_max"]},
    };
    return out.dump(2);
}

std::string render_plan_table(const std::string& plan_json)
{
    const json plan = json::parse(plan_json);
    std::ostringstream out;
    char line[200];
    out << "  A star      B star      score  tauA[us] tauB[us] usedA usedB  alpha[deg]  "
           "lookback[yr]\n";
    for (const json& pair : plan["pairs"]) {
        const auto used = [](const json& j) {
            return j.is_null() ? 0.0 : j.get<double>();
        };
        std::snprintf(line, sizeof line,
                      "  %-10s  %-10s  %.3f  %7.3f  %7.3f  %5.2f %5.2f  %9.1f  %6.0f +- %.0f\n",
                      pair["alice"]["hip"].get<std::string>().c_str(),
                      pair["bob"]["hip"].get<std::string>().c_str(),
                      pair["score"].get<double>(),
                      pair["alice"]["min_tau_valid_us"].get<double>(),
                      pair["bob"]["min_tau_valid_us"].get<double>(),
                      used(pair["alice"]["tau_used_us"]), used(pair["bob"]["tau_used_us"]),
                      pair["angular_separation_deg"].get<double>(),
                      pair["lookback_years"].get<double>(),
                      pair["sigma_lookback_years"].get<double>());
        out << line;
    }
    if (!plan["misaligned"].empty())
        out << "  (" << plan["misaligned"].size() << " causally misaligned pairs excluded)\n";
    return out.str();
}

std::string render_analysis_table(const std::string& report_json)
{
    const json r = json::parse(report_json);
    std::ostringstream out;
    char line[160];

    out << "CHSH\n";
    std::snprintf(line, sizeof line, "  C = %.4f   S = %.4f   (local realism: C <= 0, S <= 2)\n",
                  r["chsh"]["C"].get<double>(), r["chsh"]["S"].get<double>());
    out << line;
    std::snprintf(line, sizeof line, "  settings independence: chi2 = %.3f, p = %.3f\n",
                  r["chi2"]["chi2"].get<double>(), r["chi2"]["p_value"].get<double>());
    out << line;

    out << "Predictability\n";
    const auto& eps = r["predictability"]["eps_ij"];
    std::snprintf(line, sizeof line,
                  "  eps_ij = [%.5f, %.5f, %.5f, %.5f]   eps = %.4f +- %.4f\n",
                  eps[0].get<double>(), eps[1].get<double>(), eps[2].get<double>(),
                  eps[3].get<double>(), r["predictability"]["eps"].get<double>(),
                  r["predictability"]["sigma_eps"].get<double>());
    out << line;

    out << "Significance\n";
    std::snprintf(line, sizeof line,
                  "  W = %.5g   <W> = %.5g   sigma_W = %.4g   nu_bar = %.2f\n",
                  r["significance"]["W"].get<double>(),
                  r["significance"]["W_expected"].get<double>(),
                  r["significance"]["sigma_W_opt"].get<double>(),
                  r["significance"]["nu_bar"].get<double>());
    out << line;
    std::snprintf(line, sizeof line, "  delta_nu = %.3f   nu = %.2f   p = %.3g\n",
                  r["significance"]["delta_nu"].get<double>(),
                  r["significance"]["nu_n"].get<double>(), r["significance"]["p"].get<double>());
    out << line;
    std::snprintf(line, sizeof line, "  memory: B = %.4f (n = %d)   p_mem <= %.3g   nu >= %.2f\n",
                  r["memory"]["B"].get<double>(), r["memory"]["n_at_max"].get<int>(),
                  r["memory"]["p_mem"].get<double>(),
                  r["memory"]["nu_equivalent"].get<double>());
    out << line;

    if (r["no_signaling"]["source"] == "singles") {
        const auto& p = r["no_signaling"]["p_values"];
        std::snprintf(line, sizeof line, "No-signaling p-values: %.3f %.3f %.3f %.3f\n",
                      p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                      p[3].get<double>());
        out << line;
    }
    return out.str();
}

}  // namespace starbell
