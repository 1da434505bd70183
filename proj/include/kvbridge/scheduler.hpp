#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvbridge/errors.hpp"
#include "kvbridge/model.hpp"
#include "kvbridge/recompute_config.hpp"

namespace kvbridge {

enum class Strategy { Naive, ReuseOnly, Pipelined };

Strategy parse_strategy(std::string_view name);
const char* to_string(Strategy strategy);

// Time cost of moving or recomputing one layer for one request.
//
// Unit mode charges a flat `transfer_unit` per layer transfer (KV or E) and
// `compute_unit` per recomputed layer, independent of context length. Byte
// mode derives transfer time from layer bytes and link bandwidth, and
// recompute time from the position count.
struct CostModel {
    bool unit_mode = true;
    double transfer_unit = 1.0;
    double compute_unit = 1.0;
    double link_bandwidth = 1.0;          // bytes per time unit
    double compute_per_position = 1.0;    // time per layer per position
    size_t kv_bytes_per_position = 0;
    size_t e_bytes_per_position = 0;

    static CostModel unit(double transfer_unit = 1.0, double compute_unit = 1.0);
    static CostModel bytes(const ModelConfig& config, double link_bandwidth, double compute_per_position);

    void validate() const;

    size_t kv_layer_bytes(int positions) const { return kv_bytes_per_position * static_cast<size_t>(positions); }
    size_t e_layer_bytes(int positions) const { return e_bytes_per_position * static_cast<size_t>(positions); }
    double kv_transfer_time(int positions) const;
    double e_transfer_time(int positions) const;
    double recompute_time(int positions) const;
    // Final-position pass through all layers: free in unit mode.
    double anchor_time(int n_layers) const;
};

size_t bytes_of(CacheKind kind, int positions, const ModelConfig& config);

struct ScheduledRequest {
    std::string id;
    double arrival = 0.0;
    std::string model;
    RecomputeConfig config;
    int n_layers = 0;
    int positions = 1;  // reuse-window length; only byte mode uses it
};

enum class EventKind { ETransfer, KVTransfer, Recompute, Anchor };

struct TimelineEvent {
    std::string request;
    std::string resource;  // "link" or "compute:<model>"
    EventKind kind = EventKind::Recompute;
    int layer = -1;
    double start = 0.0;
    double end = 0.0;
    size_t bytes = 0;  // transfers only

    bool on_link() const { return kind == EventKind::ETransfer || kind == EventKind::KVTransfer; }
    std::string label() const;
};

struct RequestTiming {
    std::string id;
    double arrival = 0.0;
    double ready = 0.0;

    double ttft() const { return ready - arrival; }
};

struct Timeline {
    std::vector<TimelineEvent> events;
    std::vector<RequestTiming> requests;

    double total_ttft() const;
    const RequestTiming& request(const std::string& id) const;
    std::string to_csv() const;
};

// Pipelined placement with persistent resource state: one shared FIFO link and
// one compute resource per model. Requests must be added in arrival order.
class PipelinedPlanner {
public:
    explicit PipelinedPlanner(CostModel cost) : cost_(std::move(cost)) {}

    RequestTiming add(const ScheduledRequest& request, std::vector<TimelineEvent>* events = nullptr);

    double link_free() const { return link_free_; }

private:
    CostModel cost_;
    double link_free_ = 0.0;
    std::map<std::string, double> compute_free_;
};

Timeline plan(Strategy strategy, std::span<const ScheduledRequest> requests, const CostModel& cost);

// TTFT of `request` running alone under the pipelined strategy.
double estimate_ttft(const ScheduledRequest& request, const CostModel& cost);

struct Scenario {
    CostModel cost;
    std::vector<ScheduledRequest> requests;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace kvbridge
