#include "kvbridge/scheduler.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json_fields.hpp"

namespace kvbridge {

using detail::field;
using detail::field_or;
using nlohmann::json;

Strategy parse_strategy(std::string_view name) {
    if (name == "naive") return Strategy::Naive;
    if (name == "reuse-only" || name == "reuse_only") return Strategy::ReuseOnly;
    if (name == "pipelined") return Strategy::Pipelined;
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "' (expected naive, reuse-only or pipelined)");
}

const char* to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::Naive: return "naive";
        case Strategy::ReuseOnly: return "reuse-only";
        case Strategy::Pipelined: return "pipelined";
    }
    return "?";
}

CostModel CostModel::unit(double transfer_unit, double compute_unit) {
    CostModel c;
    c.unit_mode = true;
    c.transfer_unit = transfer_unit;
    c.compute_unit = compute_unit;
    return c;
}

CostModel CostModel::bytes(const ModelConfig& config, double link_bandwidth, double compute_per_position) {
    CostModel c;
    c.unit_mode = false;
    c.link_bandwidth = link_bandwidth;
    c.compute_per_position = compute_per_position;
    c.kv_bytes_per_position = config.kv_bytes_per_position();
    c.e_bytes_per_position = config.e_bytes_per_position();
    return c;
}

void CostModel::validate() const {
    if (unit_mode) {
        if (!(transfer_unit > 0.0) || !(compute_unit > 0.0)) throw std::invalid_argument("unit costs must be positive");
    } else {
        if (!(link_bandwidth > 0.0) || !(compute_per_position > 0.0) || kv_bytes_per_position == 0 ||
            e_bytes_per_position == 0) {
            throw std::invalid_argument("byte-mode rates and sizes must be positive");
        }
    }
}

double CostModel::kv_transfer_time(int positions) const {
    return unit_mode ? transfer_unit : static_cast<double>(kv_layer_bytes(positions)) / link_bandwidth;
}

double CostModel::e_transfer_time(int positions) const {
    return unit_mode ? transfer_unit : static_cast<double>(e_layer_bytes(positions)) / link_bandwidth;
}

double CostModel::recompute_time(int positions) const {
    return unit_mode ? compute_unit : compute_per_position * positions;
}

double CostModel::anchor_time(int n_layers) const { return unit_mode ? 0.0 : compute_per_position * n_layers; }

size_t bytes_of(CacheKind kind, int positions, const ModelConfig& config) {
    if (positions < 1) throw std::invalid_argument("positions must be at least 1");
    const size_t per = kind == CacheKind::KV ? config.kv_bytes_per_position() : config.e_bytes_per_position();
    return per * static_cast<size_t>(positions);
}

std::string TimelineEvent::label() const {
    switch (kind) {
        case EventKind::ETransfer: return "E-transfer(" + std::to_string(layer) + ")";
        case EventKind::KVTransfer: return "KV-transfer(" + std::to_string(layer) + ")";
        case EventKind::Recompute: return "recompute(" + std::to_string(layer) + ")";
        case EventKind::Anchor: return "anchor";
    }
    return "?";
}

double Timeline::total_ttft() const {
    double total = 0.0;
    for (const auto& r : requests) total += r.ttft();
    return total;
}

const RequestTiming& Timeline::request(const std::string& id) const {
    for (const auto& r : requests) {
        if (r.id == id) return r;
    }
    throw std::out_of_range("no request '" + id + "' in timeline");
}

std::string Timeline::to_csv() const {
    std::ostringstream out;
    out << "# kvbridge-timeline v1\n";
    out << "request,resource,label,start,end\n";
    for (const auto& e : events) {
        out << e.request << ',' << e.resource << ',' << e.label() << ',' << detail::format_double(e.start) << ','
            << detail::format_double(e.end) << '\n';
    }
    return out.str();
}

namespace {

void check_request(const ScheduledRequest& r) {
    if (!(r.arrival >= 0.0)) throw std::invalid_argument("request " + r.id + ": arrival must be non-negative");
    if (r.n_layers < 1) throw std::invalid_argument("request " + r.id + ": layer count must be positive");
    if (r.positions < 1) throw std::invalid_argument("request " + r.id + ": positions must be positive");
    r.config.validate(r.n_layers);
}

std::string compute_resource(const ScheduledRequest& r) { return "compute:" + r.model; }

// Strict one-request-at-a-time execution: transfers, then recompute, then anchor.
Timeline plan_serial(std::span<const ScheduledRequest> requests, const CostModel& cost, bool transfer_all) {
    Timeline t;
    double prev_ready = 0.0;
    for (const auto& r : requests) {
        const std::string compute = compute_resource(r);
        double clock = std::max(r.arrival, prev_ready);
        auto transfer = [&](EventKind kind, int layer) {
            const bool is_e = kind == EventKind::ETransfer;
            const double d = is_e ? cost.e_transfer_time(r.positions) : cost.kv_transfer_time(r.positions);
            const size_t b = is_e ? cost.e_layer_bytes(r.positions) : cost.kv_layer_bytes(r.positions);
            t.events.push_back({r.id, "link", kind, layer, clock, clock + d, b});
            clock += d;
        };
        for (int a : r.config.transition_layers()) transfer(EventKind::ETransfer, a);
        for (int l = 0; l < r.n_layers; ++l) {
            if (transfer_all || !r.config.recomputes(l)) transfer(EventKind::KVTransfer, l);
        }
        for (const auto& g : r.config.groups()) {
            for (int l = g.first; l <= g.last; ++l) {
                const double d = cost.recompute_time(r.positions);
                t.events.push_back({r.id, compute, EventKind::Recompute, l, clock, clock + d, 0});
                clock += d;
            }
        }
        const double anchor = cost.anchor_time(r.n_layers);
        t.events.push_back({r.id, compute, EventKind::Anchor, -1, clock, clock + anchor, 0});
        clock += anchor;
        t.requests.push_back({r.id, r.arrival, clock});
        prev_ready = clock;
    }
    return t;
}

}  // namespace

RequestTiming PipelinedPlanner::add(const ScheduledRequest& r, std::vector<TimelineEvent>* events) {
    check_request(r);
    const std::string compute = compute_resource(r);
    auto emit = [&](TimelineEvent e) {
        if (events) events->push_back(std::move(e));
    };

    // Link jobs in FIFO order: E for each transition layer first, then reused KV.
    std::map<int, double> e_arrival;
    double done = r.arrival;
    for (int a : r.config.transition_layers()) {
        const double start = std::max(link_free_, r.arrival);
        link_free_ = start + cost_.e_transfer_time(r.positions);
        e_arrival[a] = link_free_;
        done = std::max(done, link_free_);
        emit({r.id, "link", EventKind::ETransfer, a, start, link_free_, cost_.e_layer_bytes(r.positions)});
    }
    for (int l : r.config.reused_layers(r.n_layers)) {
        const double start = std::max(link_free_, r.arrival);
        link_free_ = start + cost_.kv_transfer_time(r.positions);
        done = std::max(done, link_free_);
        emit({r.id, "link", EventKind::KVTransfer, l, start, link_free_, cost_.kv_layer_bytes(r.positions)});
    }

    // A group starts once its E cache has arrived (immediately at layer 0).
    auto [slot, inserted] = compute_free_.try_emplace(r.model, 0.0);
    double& compute_free = slot->second;
    for (const auto& g : r.config.groups()) {
        double clock = std::max({g.first > 0 ? e_arrival.at(g.first) : r.arrival, compute_free, r.arrival});
        for (int l = g.first; l <= g.last; ++l) {
            const double d = cost_.recompute_time(r.positions);
            emit({r.id, compute, EventKind::Recompute, l, clock, clock + d, 0});
            clock += d;
        }
        compute_free = clock;
        done = std::max(done, clock);
    }

    const double anchor = cost_.anchor_time(r.n_layers);
    const double anchor_start = anchor > 0.0 ? std::max(done, compute_free) : done;
    emit({r.id, compute, EventKind::Anchor, -1, anchor_start, anchor_start + anchor, 0});
    if (anchor > 0.0) compute_free = anchor_start + anchor;
    return {r.id, r.arrival, anchor_start + anchor};
}

Timeline plan(Strategy strategy, std::span<const ScheduledRequest> requests, const CostModel& cost) {
    cost.validate();
    for (size_t i = 0; i < requests.size(); ++i) {
        check_request(requests[i]);
        if (i > 0 && requests[i].arrival < requests[i - 1].arrival) {
            throw std::invalid_argument("requests must be sorted by arrival");
        }
    }
    switch (strategy) {
        case Strategy::Naive: return plan_serial(requests, cost, true);
        case Strategy::ReuseOnly: return plan_serial(requests, cost, false);
        case Strategy::Pipelined: {
            Timeline t;
            PipelinedPlanner planner(cost);
            for (const auto& r : requests) t.requests.push_back(planner.add(r, &t.events));
            return t;
        }
    }
    throw std::invalid_argument("unknown strategy");
}

double estimate_ttft(const ScheduledRequest& request, const CostModel& cost) {
    PipelinedPlanner planner(cost);
    return planner.add(request).ttft();
}

namespace detail {

CostModel parse_cost(const json& c, const std::string& path, const ModelConfig* model) {
    CostModel cost;
    const std::string mode = field<std::string>(c, "mode", path);
    if (mode == "unit") {
        cost = CostModel::unit(field_or<double>(c, "transfer_unit", path, 1.0), field_or<double>(c, "compute_unit", path, 1.0));
    } else if (mode == "bytes") {
        ModelConfig mc;
        if (c.contains("model") || !model) {
            const auto& m = object_field(c, "model", path);
            mc.d_model = field<int>(m, "d_model", path + ".model");
            mc.n_heads = field<int>(m, "n_heads", path + ".model");
            mc.n_kv_heads = field<int>(m, "n_kv_heads", path + ".model");
            mc.head_dim = field<int>(m, "head_dim", path + ".model");
        } else {
            mc = *model;
        }
        cost = CostModel::bytes(mc, field<double>(c, "link_bandwidth", path), field<double>(c, "compute_per_position", path));
    } else {
        throw ParseError(path + ".mode", "expected 'unit' or 'bytes', got '" + mode + "'");
    }
    try {
        cost.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(path, e.what());
    }
    return cost;
}

}  // namespace detail

Scenario parse_scenario(const std::string& text) {
    const json j = detail::parse_json_text(text);
    detail::check_header(j, "kvbridge-scenario", 1, "scenario");
    Scenario s;
    s.cost = detail::parse_cost(detail::object_field(j, "cost", "scenario"), "scenario.cost", nullptr);
    if (!j.contains("requests") || !j["requests"].is_array()) throw ParseError("scenario.requests", "expected an array");
    for (size_t i = 0; i < j["requests"].size(); ++i) {
        const std::string path = "scenario.requests[" + std::to_string(i) + "]";
        const auto& r = j["requests"][i];
        ScheduledRequest req;
        req.id = field<std::string>(r, "id", path);
        req.arrival = field<double>(r, "arrival", path);
        req.model = field<std::string>(r, "model", path);
        req.n_layers = field<int>(r, "L", path);
        req.positions = field_or<int>(r, "positions", path, 1);
        std::vector<LayerRange> groups;
        const auto raw = field<std::vector<std::vector<int>>>(r, "groups", path);
        for (size_t g = 0; g < raw.size(); ++g) {
            if (raw[g].size() != 2) throw ParseError(path + ".groups[" + std::to_string(g) + "]", "expected [first, last]");
            groups.push_back({raw[g][0], raw[g][1]});
        }
        try {
            req.config = RecomputeConfig(groups);
            check_request(req);
        } catch (const std::invalid_argument& e) {
            throw ParseError(path, e.what());
        }
        s.requests.push_back(std::move(req));
    }
    std::stable_sort(s.requests.begin(), s.requests.end(),
                     [](const ScheduledRequest& a, const ScheduledRequest& b) { return a.arrival < b.arrival; });
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

}  // namespace kvbridge
