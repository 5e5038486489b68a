// starbell: plan stellar-settings Bell-test observations, model the color
// setting reader, simulate runs, and analyze time-tag or count-table data.
//
// Exit codes: 0 success, 2 bad input, 3 internal failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "starbell/commands.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_path;  // empty = stdout
    bool table = false;
};

starbell::RunConfig load(const CommonArgs& args)
{
    std::ifstream in(args.config_path);
    if (!in) throw starbell::ConfigError("cannot open config file " + args.config_path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();
    for (const std::string& assignment : args.overrides)
        text = starbell::apply_override(text, assignment);
    const auto slash = args.config_path.find_last_of('/');
    const std::string base_dir =
        slash == std::string::npos ? "." : args.config_path.substr(0, slash);
    return starbell::parse_config(text, base_dir);
}

void emit(const CommonArgs& args, const std::string& text)
{
    if (args.output_path.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(args.output_path);
    if (!out) throw starbell::ConfigError("cannot write " + args.output_path);
    out << text << '\n';
}

void add_common(CLI::App* cmd, CommonArgs& args)
{
    cmd->add_option("-c,--config", args.config_path, "JSON run configuration")->required();
    cmd->add_option("--set", args.overrides, "override a config key (section.key=value)");
    cmd->add_option("-o,--out", args.output_path, "write the report here instead of stdout");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"stellar-settings Bell test toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string sim_output_dir = "out";
    starbell::AnalyzeInput input;
    std::string streams_path, coincidences_path, singles_path;

    CLI::App* plan = app.add_subcommand("plan", "rank candidate star pairs");
    add_common(plan, args);
    plan->add_flag("--table", args.table, "human-readable summary instead of JSON");

    CLI::App* spectra = app.add_subcommand("spectra", "wrong-way fractions per star");
    add_common(spectra, args);

    CLI::App* simulate = app.add_subcommand("simulate", "generate synthetic streams");
    add_common(simulate, args);
    simulate->add_option("--out-dir", sim_output_dir, "directory for stream + truth files");

    CLI::App* analyze = app.add_subcommand("analyze", "full statistical analysis");
    add_common(analyze, args);
    analyze->add_option("--streams", streams_path, "binary time-tag file");
    analyze->add_option("--coincidences", coincidences_path, "coincidence table JSON");
    analyze->add_option("--singles", singles_path, "singles table JSON");
    analyze->add_flag("--table", args.table, "human-readable summary instead of JSON");

    CLI::App* report = app.add_subcommand("report", "figure data tables");
    add_common(report, args);
    report->add_option("--streams", streams_path, "binary time-tag file");
    report->add_option("--coincidences", coincidences_path, "coincidence table JSON");
    report->add_option("--singles", singles_path, "singles table JSON");

    CLI11_PARSE(app, argc, argv);

    if (!streams_path.empty()) input.streams_path = streams_path;
    if (!coincidences_path.empty()) input.coincidences_path = coincidences_path;
    if (!singles_path.empty()) input.singles_path = singles_path;

    try {
        const starbell::RunConfig config = load(args);
        if (plan->parsed()) {
            const std::string json = starbell::cmd_plan(config);
            emit(args, args.table ? starbell::render_plan_table(json) : json);
        } else if (spectra->parsed()) {
            emit(args, starbell::cmd_spectra(config));
        } else if (simulate->parsed()) {
            emit(args, starbell::cmd_simulate(config, sim_output_dir));
        } else if (analyze->parsed()) {
            const std::string json = starbell::cmd_analyze(config, input);
            emit(args, args.table ? starbell::render_analysis_table(json) : json);
        } else if (report->parsed()) {
            emit(args, starbell::cmd_report(config, input));
        }
    } catch (const starbell::ConfigError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    } catch (const std::out_of_range& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "internal error: " << err.what() << '\n';
        return 3;
    }
    return 0;
}
