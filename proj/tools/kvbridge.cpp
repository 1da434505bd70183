#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "kvbridge/commands.hpp"
#include "kvbridge/errors.hpp"

namespace fs = std::filesystem;
using namespace kvbridge;

namespace {

struct CommonFlags {
    std::string config;
    std::string out = ".";
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
    auto* opt = cmd->add_option("--config", flags.config, "run configuration (JSON)");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", flags.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", flags.seed, "override the dataset and workload seed");
}

RunConfig load_with_seed(const CommonFlags& flags) {
    RunConfig rc = load_run_config(flags.config);
    if (flags.seed) rc.seed = *flags.seed;
    return rc;
}

// A plan input may be a scenario file or a run configuration naming one.
Scenario load_plan_input(const fs::path& path) {
    try {
        return load_scenario(path);
    } catch (const ParseError& e) {
        if (e.where() != "scenario.format") throw;
    }
    const RunConfig rc = load_run_config(path);
    if (!rc.scenario) throw ParseError("run.plan.scenario", "no scenario given");
    return load_scenario(*rc.scenario);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-model KV cache reuse: profiling, transfer planning and serving simulation"};
    app.require_subcommand(1);

    CommonFlags profile_flags;
    auto* profile = app.add_subcommand("profile", "sweep recompute configs and write the quality frontier");
    add_common(profile, profile_flags, true);

    CommonFlags plan_flags;
    std::string strategy_name = "pipelined";
    std::string scenario_path;
    auto* plan_cmd = app.add_subcommand("plan", "schedule a transfer scenario and print the total TTFT");
    add_common(plan_cmd, plan_flags, false);
    plan_cmd->add_option("--strategy", strategy_name, "naive | reuse-only | pipelined")
        ->check(CLI::IsMember({"naive", "reuse-only", "pipelined"}))
        ->capture_default_str();
    plan_cmd->add_option("--scenario", scenario_path, "scenario file")->check(CLI::ExistingFile);

    CommonFlags serve_flags;
    auto* serve = app.add_subcommand("serve", "simulate serving over the configured arrival-rate grid");
    add_common(serve, serve_flags, true);
    std::string serve_profile;
    serve->add_option("--profile", serve_profile, "profile artifact (default: <out>/profile.json)")->check(CLI::ExistingFile);

    CommonFlags report_flags;
    std::string metrics_path;
    auto* report = app.add_subcommand("report", "summarize a metrics CSV and write plot data");
    add_common(report, report_flags, false);
    report->add_option("metrics", metrics_path, "metrics CSV from serve")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*profile) {
            const RunConfig rc = load_with_seed(profile_flags);
            const Profile p = cmd_profile(rc, profile_flags.out);
            const auto chosen = select_by_quality_floor(p.frontier, rc.profile.delta);
            std::cout << "configs " << p.points.size() << "\n";
            std::cout << "baseline_quality " << p.frontier.baseline_quality << "\n";
            std::cout << "floor_config " << chosen.to_string() << "\n";
        } else if (*plan_cmd) {
            fs::path input = scenario_path.empty() ? fs::path(plan_flags.config) : fs::path(scenario_path);
            if (input.empty()) {
                std::cerr << "plan: give --scenario or --config\n";
                return 2;
            }
            const Timeline t = cmd_plan(load_plan_input(input), parse_strategy(strategy_name), plan_flags.out);
            std::cout << "total_ttft " << t.total_ttft() << "\n";
        } else if (*serve) {
            RunConfig rc = load_with_seed(serve_flags);
            if (!serve_profile.empty()) rc.serve.profile = serve_profile;
            const ServeResult r = cmd_serve(rc, serve_flags.out);
            for (const auto& p : r.sweep) {
                std::cout << "lambda " << p.rate << " completed " << p.metrics.completed << " p90_ttft "
                          << p.metrics.ttft.p90 << " violation_rate " << p.metrics.violation_rate << "\n";
            }
            if (r.sustained_throughput) {
                std::cout << "sustained_throughput " << *r.sustained_throughput << "\n";
            } else {
                std::cout << "sustained_throughput none\n";
            }
        } else if (*report) {
            std::cout << cmd_report(metrics_path, report_flags.out);
        }
    } catch (const NoData& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
