#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvbridge/profiler.hpp"
#include "kvbridge/run_config.hpp"
#include "kvbridge/scheduler.hpp"
#include "kvbridge/serve_sim.hpp"

namespace kvbridge {

// Writes <out>/profile.json and <out>/points.csv.
Profile cmd_profile(const RunConfig& config, const std::filesystem::path& out_dir);
std::string points_csv(const Profile& profile);

// Writes <out>/timeline.csv.
Timeline cmd_plan(const Scenario& scenario, Strategy strategy, const std::filesystem::path& out_dir);

struct ServeResult {
    std::vector<SweepPoint> sweep;
    std::optional<double> sustained_throughput;
    RecomputeConfig static_config;
};

// Runs the rate sweep; writes <out>/metrics.csv and <out>/summary.json.
ServeResult cmd_serve(const RunConfig& config, const std::filesystem::path& out_dir);
ServeResult run_serve(const RunConfig& config, const Profile& profile);
std::string metrics_csv(std::span<const SweepPoint> sweep);
std::string summary_json(const ServeResult& result, const RunConfig& config);

struct MetricsRow {
    double rate = 0.0;
    int request_id = 0;
    double arrival = 0.0;
    double ttft = 0.0;
    double mean_tbt = 0.0;
    double e2e = 0.0;
    int config_k = 0;
    int replica = 0;
    bool slo_fallback = false;
};

std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct RateSummary {
    double rate = 0.0;
    Summary ttft;
    Summary tbt;
    Summary e2e;
    size_t fallbacks = 0;
};

// Groups rows by rate in ascending order. Throws NoData on an empty table.
std::vector<RateSummary> summarize_metrics(std::span<const MetricsRow> rows);
std::string report_text(std::span<const RateSummary> summaries);
// Whitespace-delimited columns: rate mean median p90.
std::string report_dat(std::span<const RateSummary> summaries, const Summary RateSummary::*metric, const std::string& name);

// Writes ttft.dat, tbt.dat, e2e.dat and summary.txt under `out_dir`; returns the summary text.
std::string cmd_report(const std::filesystem::path& metrics_path, const std::filesystem::path& out_dir);

}  // namespace kvbridge
