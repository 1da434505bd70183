#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvbridge/profiler.hpp"
#include "kvbridge/scheduler.hpp"

namespace kvbridge {

struct WorkloadSpec {
    double rate = 1.0;        // requests per time unit
    double duration = 100.0;
    int context_length = 64;  // n; the reuse window is n - 1 positions
    int output_length = 8;    // decode steps after the first token
    uint64_t seed = 0;
    std::string model = "receiver";
    int n_layers = 8;

    void validate() const;
};

struct ClusterSpec {
    int replicas = 1;
    double decode_cost = 0.05;  // time per decode step
    CostModel cost;             // per-replica link and compute

    void validate() const;
};

struct SloPolicy {
    double latency_slo = 1.0;
    double min_quality = 0.95;
    bool adapt = false;
    RecomputeConfig static_config;  // used when adaptation is off

    void validate() const;
};

struct RequestRecord {
    int id = 0;
    double arrival = 0.0;
    double ttft = 0.0;
    double mean_tbt = 0.0;
    double e2e = 0.0;
    int config_k = 0;
    int replica = 0;
    bool slo_fallback = false;  // idle-system choice could not meet the latency SLO
    bool completed = false;
    std::vector<double> tbt;
};

// Nearest-rank order statistics.
struct Summary {
    size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double p90 = 0.0;
};

struct RunMetrics {
    std::vector<RequestRecord> requests;
    Summary ttft;
    Summary tbt;
    Summary e2e;
    double violation_rate = 0.0;
    size_t generated = 0;
    size_t completed = 0;
    size_t in_flight = 0;
    std::vector<RecomputeConfig> adaptive_choices;  // distinct configs picked by adaptation
};

std::vector<ScheduledRequest> generate_workload(const WorkloadSpec& spec);

int route(size_t sequence, int replicas);

// Picks the recompute config for a request about to start prefill. With a
// non-empty queue the cheapest config meeting the quality target wins; on an
// idle replica the most accurate config whose TTFT estimate fits the SLO wins.
RecomputeConfig adapt_config(size_t queue_depth, const ScheduledRequest& request, const ParetoFrontier& frontier,
                             const SloPolicy& policy, const CostModel& cost, bool* slo_fallback = nullptr);

RunMetrics simulate(const WorkloadSpec& workload, const ClusterSpec& cluster, const SloPolicy& policy,
                    const ParetoFrontier& frontier, double horizon = std::numeric_limits<double>::infinity());

Summary aggregate(std::span<const double> values);
double percentile_nearest_rank(std::span<const double> values, double p);
double violation_rate(std::span<const double> ttft, double slo);

struct SweepPoint {
    double rate = 0.0;
    RunMetrics metrics;
};

std::vector<SweepPoint> sweep_rates(std::span<const double> rates, WorkloadSpec workload, const ClusterSpec& cluster,
                                    const SloPolicy& policy, const ParetoFrontier& frontier);

// Largest swept rate whose p90 TTFT meets `slo`.
std::optional<double> sustained_throughput(std::span<const SweepPoint> sweep, double slo);

}  // namespace kvbridge
