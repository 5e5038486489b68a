#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "starbell/commands.hpp"

using namespace starbell;
using nlohmann::json;

namespace {

const std::string kDataDir = STARBELL_DATA_DIR;
const std::string kRun1Config = kDataDir + "/configs/run1.json";
const std::string kRun2Config = kDataDir + "/configs/run2.json";

AnalyzeInput run1_tables()
{
    AnalyzeInput input;
    input.coincidences_path = "../tables/run1_coincidences.json";  // relative to the config
    input.singles_path = "../tables/run1_singles.json";
    return input;
}

}  // namespace

TEST_CASE("run configuration parses with schema validation")
{
    const RunConfig config = load_config_file(kRun1Config);
    REQUIRE(config.sites.has_value());
    CHECK(config.sites->alice.latitude_deg == doctest::Approx(48.21645));
    REQUIRE(config.run.has_value());
    CHECK(config.run->duration_s == doctest::Approx(179.0));
    REQUIRE(config.rates.has_value());
    CHECK(config.rates->alice.total_hz[0] == doctest::Approx(105571));
    CHECK(config.analysis.pipeline.ports_b.port1 == Channel::setting_blue);
    CHECK(config.analysis.efficiency_ratio_b == doctest::Approx(0.81));
}

TEST_CASE("unknown keys are rejected everywhere")
{
    CHECK_THROWS_WITH_AS(parse_config(R"({"sitez": 1})"), doctest::Contains("unknown key"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"run": {"utc_start": "2016-04-21T21:23:00Z",
                                                  "durations_s": 10}})"),
                         doctest::Contains("unknown key"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
}

TEST_CASE("config overrides rewrite nested keys")
{
    const std::string base = R"({"run": {"utc_start": "2016-04-21T21:23:00Z"}})";
    const std::string overridden = apply_override(base, "run.duration_s=42.5");
    const RunConfig config = parse_config(overridden);
    CHECK(config.run->duration_s == doctest::Approx(42.5));
    CHECK_THROWS_AS(apply_override(base, "no_equals_sign"), ConfigError);
}

TEST_CASE("UTC timestamps parse and validate")
{
    const UtcTime utc = parse_utc("2016-04-21T21:23:00Z");
    CHECK(utc.year == 2016);
    CHECK(utc.hour == 21);
    CHECK(parse_utc("2016-04-21T21:23:00").minute == 23);
    CHECK_THROWS_AS(parse_utc("2016-04-21 21:23:00"), ConfigError);
    CHECK_THROWS_AS(parse_utc("2016-13-21T21:23:00Z"), ConfigError);
}

TEST_CASE("sites file round trip")
{
    std::ifstream in(kDataDir + "/sites/vienna_sites.txt");
    REQUIRE(in.good());
    const SiteLayout layout = parse_sites_file(in);
    CHECK(layout.alice.label == "A");
    CHECK(layout.source.elevation_m == doctest::Approx(205.0));

    std::istringstream missing("label=A lat_deg=1 lon_deg=2 elev_m=3\n");
    CHECK_THROWS_WITH_AS(parse_sites_file(missing), doctest::Contains("missing site"),
                         ConfigError);
}

TEST_CASE("plan lists the observed pair with its lookback time")
{
    const RunConfig config = load_config_file(kRun1Config);
    const std::string report = cmd_plan(config);
    const json plan = json::parse(report);
    REQUIRE(!plan["pairs"].empty());

    bool found = false;
    for (const json& pair : plan["pairs"]) {
        if (pair["alice"]["hip"] == "56127" && pair["bob"]["hip"] == "105259A") {
            found = true;
            CHECK(std::abs(pair["lookback_years"].get<double>() - 2409.0) < 2.0);
            CHECK(std::abs(pair["sigma_lookback_years"].get<double>() - 598.0) < 5.0);
            CHECK(pair["alice"]["min_tau_valid_us"].get<double>() > 0.0);
            CHECK(pair["bob"]["min_tau_valid_us"].get<double>() > 0.0);
            CHECK(std::abs(pair["angular_separation_deg"].get<double>() - 119.0) < 1.0);
        }
    }
    CHECK(found);

    // reruns are byte-identical
    CHECK(cmd_plan(config) == report);
}

TEST_CASE("sites can come from a standalone sites file")
{
    const std::string text = R"({"sites_file": "../sites/vienna_sites.txt"})";
    const RunConfig config = parse_config(text, kDataDir + "/configs");
    REQUIRE(config.sites.has_value());
    CHECK(config.sites->bob.latitude_deg == doctest::Approx(48.23160));
}

TEST_CASE("plan renders a human-readable table")
{
    const RunConfig config = load_config_file(kRun1Config);
    const std::string table = render_plan_table(cmd_plan(config));
    CHECK(table.find("56127") != std::string::npos);
    CHECK(table.find("lookback") != std::string::npos);
}

TEST_CASE("plan fails cleanly when the window admits no candidates")
{
    std::ifstream in(kRun1Config);
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    text = apply_override(text, "selection.alice_window={\"az\":[0,1],\"alt\":[80,81]}");
    const RunConfig config = parse_config(text, kDataDir + "/configs");
    CHECK_THROWS_WITH_AS(cmd_plan(config), doctest::Contains("no candidates"),
                         std::invalid_argument);
}

TEST_CASE("analyze from the published tables emits the full report")
{
    const RunConfig config = load_config_file(kRun1Config);
    const std::string report_text = cmd_analyze(config, run1_tables());
    const json report = json::parse(report_text);

    CHECK(std::abs(report["chsh"]["C"].get<double>() - 0.2125) < 5e-4);
    CHECK(std::abs(report["chsh"]["S"].get<double>() - 2.425) < 5e-4);
    CHECK(report["chsh"]["violates_local_realism"].get<bool>());
    CHECK(std::abs(report["chi2"]["chi2"].get<double>() - 1.132) < 0.002);
    CHECK(std::abs(report["predictability"]["eps"].get<double>() - 0.1779) < 3e-4);
    CHECK(std::abs(report["significance"]["nu_n"].get<double>() - 7.54) < 0.05);
    CHECK(report["memory"]["B"].get<double>() == doctest::Approx(0.7393).epsilon(0.003));
    CHECK(report["memory"]["p_mem"].get<double>() / 1.78e-13 < 2.0);
    CHECK(report["no_signaling"]["source"] == "singles");
    CHECK(std::abs(report["no_signaling"]["p_values"][0].get<double>() - 0.211) < 0.01);
    for (const json& p : report["no_signaling"]["corrected_coincidence_marginals"]["p_values"])
        CHECK(p.get<double>() > 0.05);

    // serialized reports round-trip exactly
    CHECK(json::parse(report.dump()) == report);

    const std::string table = render_analysis_table(report_text);
    CHECK(table.find("CHSH") != std::string::npos);
    CHECK(table.find("memory") != std::string::npos);
}

TEST_CASE("analyze run 2 without singles falls back to the property-tested path")
{
    const RunConfig config = load_config_file(kRun2Config);
    AnalyzeInput input;
    input.coincidences_path = "../tables/run2_coincidences.json";
    const json report = json::parse(cmd_analyze(config, input));
    CHECK(std::abs(report["chsh"]["S"].get<double>() - 2.502) < 5e-4);
    CHECK(report["no_signaling"]["source"] == "absent");
    CHECK(std::abs(report["memory"]["B"].get<double>() - 0.8500) < 0.002);
}

TEST_CASE("analyze requires some input")
{
    const RunConfig config = load_config_file(kRun1Config);
    CHECK_THROWS_AS(cmd_analyze(config, {}), ConfigError);
}

TEST_CASE("spectra command reports the optimal cutoff per star")
{
    const RunConfig config = load_config_file(kRun1Config);
    const json report = json::parse(cmd_spectra(config));
    REQUIRE(report["stars"].size() == 2);
    for (const json& star : report["stars"]) {
        CHECK(std::abs(star["cutoff_nm"].get<double>() - 703.0) <= 5.0);
        CHECK(star["efficiency"].get<double>() > 0.2);
        CHECK(star["efficiency"].get<double>() < 0.3);
    }
    CHECK(std::abs(report["stars"][0]["f_1to2"].get<double>() - 0.0142) < 0.005);
    CHECK(std::abs(report["stars"][0]["f_2to1"].get<double>() - 0.0192) < 0.005);
}

TEST_CASE("figure data export carries the CHSH bars and the backslide curve")
{
    const RunConfig config = load_config_file(kRun1Config);
    const json report = json::parse(cmd_report(config, run1_tables()));
    CHECK(report["figures"]["chsh_bars"]["E"].size() == 4);
    CHECK(report["figures"]["memory_p_left"]["n"].size() == 15);
    CHECK(report["figures"]["memory_p_left"]["p_left_max"][0].get<double>() ==
          doctest::Approx(0.7393).epsilon(0.003));
}

TEST_CASE("simulate command writes reproducible stream files")
{
    std::ifstream in(kRun1Config);
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    text = apply_override(
        text,
        "simulate={\"seed\":7,\"duration_s\":0.5,\"pair_rate_hz\":2000,\"visibility\":1.0,"
        "\"alice\":{\"stellar_rate_hz\":[20000,20000]},"
        "\"bob\":{\"stellar_rate_hz\":[20000,20000]}}");
    const RunConfig config = parse_config(text, kDataDir + "/configs");

    const std::string dir1 = std::string(STARBELL_BINARY_DIR) + "/sim_out_1";
    const std::string dir2 = std::string(STARBELL_BINARY_DIR) + "/sim_out_2";
    cmd_simulate(config, dir1);
    cmd_simulate(config, dir2);

    const auto slurp = [](const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        REQUIRE(f.good());
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    CHECK(slurp(dir1 + "/streams.bin") == slurp(dir2 + "/streams.bin"));
    CHECK(slurp(dir1 + "/truth.txt") == slurp(dir2 + "/truth.txt"));
    CHECK(!slurp(dir1 + "/streams.bin").empty());
}

TEST_CASE("simulate then analyze closes the loop at the configured visibility")
{
    std::ifstream in(kRun1Config);
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    text = apply_override(
        text,
        "simulate={\"seed\":99,\"duration_s\":2.0,\"pair_rate_hz\":10000,\"visibility\":0.95,"
        "\"alice\":{\"stellar_rate_hz\":[30000,30000],\"tau_used_ps\":50000000},"
        "\"bob\":{\"stellar_rate_hz\":[30000,30000],\"tau_used_ps\":50000000}}");
    text = apply_override(text, "analysis.tau_used_a_ps=50000000");
    text = apply_override(text, "analysis.tau_used_b_ps=50000000");
    text = apply_override(text, "analysis.tau_cut_a_ps=0");
    text = apply_override(text, "analysis.tau_cut_b_ps=0");
    const RunConfig config = parse_config(text, kDataDir + "/configs");

    const std::string dir = std::string(STARBELL_BINARY_DIR) + "/sim_loop";
    cmd_simulate(config, dir);
    AnalyzeInput input;
    input.streams_path = dir + "/streams.bin";
    const json report = json::parse(cmd_analyze(config, input));

    const double n_total = report["chi2"]["N"].get<double>();
    REQUIRE(n_total > 10000);
    const double sigma_s = std::sqrt(8.0 / n_total);  // binomial bound across 4 cells
    const double expected = 0.95 * 2.0 * std::sqrt(2.0);
    CHECK(std::abs(report["chsh"]["S"].get<double>() - expected) < 3.0 * sigma_s);
    CHECK(report["chsh"]["violates_local_realism"].get<bool>());

    // and a visibility-free run shows no violation
    std::string flat_text = apply_override(text, "simulate.visibility=0.0");
    flat_text = apply_override(flat_text, "simulate.seed=100");
    const RunConfig flat_config = parse_config(flat_text, kDataDir + "/configs");
    const std::string flat_dir = std::string(STARBELL_BINARY_DIR) + "/sim_loop_flat";
    cmd_simulate(flat_config, flat_dir);
    AnalyzeInput flat_input;
    flat_input.streams_path = flat_dir + "/streams.bin";
    const json flat = json::parse(cmd_analyze(flat_config, flat_input));
    CHECK(std::abs(flat["chsh"]["S"].get<double>()) < 3.0 * sigma_s);
    CHECK(!flat["chsh"]["violates_local_realism"].get<bool>());
}

TEST_CASE("round-trip value fidelity of the 12-digit report numbers")
{
    CHECK(round12(0.2125434) == doctest::Approx(0.2125434).epsilon(1e-11));
    CHECK(round12(4.64e-14) == doctest::Approx(4.64e-14).epsilon(1e-11));
    const double rounded = round12(1.0 / 3.0);
    CHECK(round12(rounded) == rounded);  // idempotent
}

TEST_CASE("command-line binary propagates exit codes")
{
    const std::string binary = std::string(STARBELL_BINARY_DIR) + "/tools/starbell";
    std::ifstream exists(binary);
    REQUIRE(exists.good());

    const auto run = [&](const std::string& args) {
        const std::string command = binary + " " + args + " > /dev/null 2>&1";
        const int status = std::system(command.c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("analyze --config " + kRun1Config +
              " --coincidences ../tables/run1_coincidences.json") == 0);
    CHECK(run("analyze --config /nonexistent.json --coincidences x.json") == 2);
    CHECK(run("analyze --config " + kRun1Config) == 2);  // no input given
    CHECK(run("") != 0);                                  // missing subcommand
}
