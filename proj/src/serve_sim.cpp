#include "kvbridge/serve_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include "kvbridge/rng.hpp"

namespace kvbridge {

void WorkloadSpec::validate() const {
    if (!(rate > 0.0)) throw std::invalid_argument("arrival rate must be positive");
    if (!(duration >= 0.0)) throw std::invalid_argument("duration must be non-negative");
    if (context_length < 2) throw std::invalid_argument("context length must be at least 2");
    if (output_length < 1) throw std::invalid_argument("output length must be at least 1");
    if (n_layers < 1) throw std::invalid_argument("layer count must be positive");
}

void ClusterSpec::validate() const {
    if (replicas < 1) throw std::invalid_argument("need at least one replica");
    if (!(decode_cost > 0.0)) throw std::invalid_argument("decode cost must be positive");
    cost.validate();
}

void SloPolicy::validate() const {
    if (!(latency_slo > 0.0)) throw std::invalid_argument("latency SLO must be positive");
    if (!(min_quality >= 0.0 && min_quality <= 1.0)) throw std::invalid_argument("quality target must be in [0,1]");
}

std::vector<ScheduledRequest> generate_workload(const WorkloadSpec& spec) {
    spec.validate();
    std::vector<ScheduledRequest> out;
    Rng rng(mix_seed(spec.seed, 0x706f6973736f6eULL));
    double t = 0.0;
    for (int i = 0;; ++i) {
        t += rng.exponential() / spec.rate;
        if (t > spec.duration) break;
        ScheduledRequest r;
        r.id = std::to_string(i);
        r.arrival = t;
        r.model = spec.model;
        r.n_layers = spec.n_layers;
        r.positions = spec.context_length - 1;
        out.push_back(std::move(r));
    }
    return out;
}

int route(size_t sequence, int replicas) {
    if (replicas < 1) throw std::invalid_argument("need at least one replica");
    return static_cast<int>(sequence % static_cast<size_t>(replicas));
}

RecomputeConfig adapt_config(size_t queue_depth, const ScheduledRequest& request, const ParetoFrontier& frontier,
                             const SloPolicy& policy, const CostModel& cost, bool* slo_fallback) {
    if (slo_fallback) *slo_fallback = false;
    if (!policy.adapt) return policy.static_config;
    const auto& cheapest = smallest_meeting(frontier, policy.min_quality);
    if (queue_depth > 0) return cheapest.config();

    const FrontierEntry* best = nullptr;
    for (const auto& e : frontier.entries) {
        if (e.k < cheapest.k) continue;
        ScheduledRequest probe = request;
        probe.arrival = 0.0;
        probe.config = e.config();
        if (estimate_ttft(probe, cost) <= policy.latency_slo) best = &e;
    }
    if (best) return best->config();
    if (slo_fallback) *slo_fallback = true;
    return cheapest.config();
}

namespace {

struct Active {
    size_t index;
    int remaining;
    double last_emit;
};

}  // namespace

RunMetrics simulate(const WorkloadSpec& workload, const ClusterSpec& cluster, const SloPolicy& policy,
                    const ParetoFrontier& frontier, double horizon) {
    cluster.validate();
    policy.validate();
    if (policy.adapt) frontier.validate();
    const auto requests = generate_workload(workload);

    RunMetrics m;
    m.generated = requests.size();
    m.requests.resize(requests.size());
    std::vector<std::vector<size_t>> per_replica(static_cast<size_t>(cluster.replicas));
    for (size_t i = 0; i < requests.size(); ++i) {
        auto& rec = m.requests[i];
        rec.id = static_cast<int>(i);
        rec.arrival = requests[i].arrival;
        rec.replica = route(i, cluster.replicas);
        per_replica[static_cast<size_t>(rec.replica)].push_back(i);
    }

    // Each replica is one executor: a waiting prefill preempts decode turns
    // (at turn boundaries); decode turns rotate over active requests.
    for (const auto& assigned : per_replica) {
        std::deque<size_t> waiting;
        std::deque<Active> active;
        size_t next = 0;
        double t = 0.0;
        while (t <= horizon) {
            while (next < assigned.size() && requests[assigned[next]].arrival <= t) waiting.push_back(assigned[next++]);
            if (!waiting.empty()) {
                const size_t i = waiting.front();
                waiting.pop_front();
                ScheduledRequest r = requests[i];
                bool fallback = false;
                r.config = adapt_config(waiting.size(), r, frontier, policy, cluster.cost, &fallback);
                r.arrival = 0.0;
                const double prefill = estimate_ttft(r, cluster.cost);
                if (t + prefill > horizon) break;
                t += prefill;
                auto& rec = m.requests[i];
                rec.ttft = t - rec.arrival;
                rec.config_k = r.config.recomputed_layer_count();
                rec.slo_fallback = fallback;
                if (policy.adapt &&
                    std::find(m.adaptive_choices.begin(), m.adaptive_choices.end(), r.config) == m.adaptive_choices.end()) {
                    m.adaptive_choices.push_back(r.config);
                }
                active.push_back({i, workload.output_length, t});
            } else if (!active.empty()) {
                if (t + cluster.decode_cost > horizon) break;
                auto turn = active.front();
                active.pop_front();
                t += cluster.decode_cost;
                auto& rec = m.requests[turn.index];
                rec.tbt.push_back(t - turn.last_emit);
                turn.last_emit = t;
                if (--turn.remaining == 0) {
                    rec.e2e = t - rec.arrival;
                    rec.completed = true;
                    rec.mean_tbt = std::accumulate(rec.tbt.begin(), rec.tbt.end(), 0.0) / static_cast<double>(rec.tbt.size());
                } else {
                    active.push_back(turn);
                }
            } else if (next < assigned.size()) {
                t = requests[assigned[next]].arrival;
            } else {
                break;
            }
        }
    }

    std::vector<double> ttft, tbt, e2e;
    for (const auto& rec : m.requests) {
        if (!rec.completed) continue;
        ++m.completed;
        ttft.push_back(rec.ttft);
        tbt.push_back(rec.mean_tbt);
        e2e.push_back(rec.e2e);
    }
    m.in_flight = m.generated - m.completed;
    if (!ttft.empty()) {
        m.ttft = aggregate(ttft);
        m.tbt = aggregate(tbt);
        m.e2e = aggregate(e2e);
        m.violation_rate = violation_rate(ttft, policy.latency_slo);
    }
    return m;
}

double percentile_nearest_rank(std::span<const double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const auto rank = static_cast<size_t>(std::max(1.0, std::ceil(p * n - 1e-9)));
    return sorted[std::min(rank, sorted.size()) - 1];
}

Summary aggregate(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("cannot aggregate an empty sample");
    Summary s;
    s.count = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.median = percentile_nearest_rank(values, 0.5);
    s.p90 = percentile_nearest_rank(values, 0.9);
    return s;
}

double violation_rate(std::span<const double> ttft, double slo) {
    if (ttft.empty()) throw std::invalid_argument("violation rate of an empty sample");
    const auto violations = std::count_if(ttft.begin(), ttft.end(), [&](double v) { return v > slo; });
    return static_cast<double>(violations) / static_cast<double>(ttft.size());
}

std::vector<SweepPoint> sweep_rates(std::span<const double> rates, WorkloadSpec workload, const ClusterSpec& cluster,
                                    const SloPolicy& policy, const ParetoFrontier& frontier) {
    std::vector<SweepPoint> out;
    for (double rate : rates) {
        workload.rate = rate;
        out.push_back({rate, simulate(workload, cluster, policy, frontier)});
    }
    return out;
}

std::optional<double> sustained_throughput(std::span<const SweepPoint> sweep, double slo) {
    std::optional<double> best;
    for (const auto& p : sweep) {
        if (p.metrics.completed > 0 && p.metrics.ttft.p90 <= slo && (!best || p.rate > *best)) best = p.rate;
    }
    return best;
}

}  // namespace kvbridge
