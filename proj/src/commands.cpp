#include "kvbridge/commands.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "json_fields.hpp"

namespace kvbridge {

using detail::format_double;
using nlohmann::json;

namespace {

constexpr const char* kPointsHeader = "# kvbridge-points v1";
constexpr const char* kMetricsHeader = "# kvbridge-metrics v1";
constexpr const char* kMetricsColumns = "lambda,request_id,arrival,ttft,mean_tbt,e2e,config_k,replica,slo_fallback";

void ensure_dir(const std::filesystem::path& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

}  // namespace

std::string points_csv(const Profile& profile) {
    std::ostringstream out;
    out << kPointsHeader << "\na,b,k,quality\n";
    for (const auto& p : profile.points) {
        out << p.group.first << ',' << p.group.last << ',' << p.k() << ',' << format_double(p.quality) << '\n';
    }
    return out.str();
}

Profile cmd_profile(const RunConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    const auto sender = build_sender(config);
    const auto receiver = build_receiver(config);
    PairEvaluator evaluator(sender, receiver, load_dataset(config), config.profile.horizon, config.pair.sender_id);
    const auto pair = pair_info(config.pair.sender_id, config.pair.receiver_id, config.model);
    Profile profile = run_profile(evaluator, pair, config.profile.granularity, config.profile.delta);
    ensure_dir(out_dir);
    save_profile(profile, out_dir / "profile.json");
    detail::write_text_file(out_dir / "points.csv", points_csv(profile));
    return profile;
}

Timeline cmd_plan(const Scenario& scenario, Strategy strategy, const std::filesystem::path& out_dir) {
    Timeline t = plan(strategy, scenario.requests, scenario.cost);
    ensure_dir(out_dir);
    detail::write_text_file(out_dir / "timeline.csv", t.to_csv());
    return t;
}

ServeResult run_serve(const RunConfig& config, const Profile& profile) {
    config.validate();
    const auto& sv = config.serve;
    check_compatible(profile, pair_info(config.pair.sender_id, config.pair.receiver_id, config.model));

    ServeResult result;
    switch (sv.static_choice) {
        case StaticChoice::RecomputeAll: result.static_config = RecomputeConfig::all(config.model.n_layers); break;
        case StaticChoice::QualityFloor:
            result.static_config = select_by_quality_floor(profile.frontier, config.profile.delta);
            break;
        case StaticChoice::Explicit: result.static_config = sv.static_config; break;
    }

    WorkloadSpec workload;
    workload.duration = sv.duration;
    workload.context_length = sv.context_length;
    workload.output_length = sv.output_length;
    workload.seed = config.seed;
    workload.model = config.pair.receiver_id;
    workload.n_layers = config.model.n_layers;

    ClusterSpec cluster;
    cluster.replicas = sv.replicas;
    cluster.decode_cost = sv.decode_cost;
    cluster.cost = sv.cost;

    SloPolicy policy;
    policy.latency_slo = sv.latency_slo;
    policy.min_quality = sv.min_quality;
    policy.adapt = sv.adapt;
    policy.static_config = result.static_config;

    result.sweep = sweep_rates(sv.rates, workload, cluster, policy, profile.frontier);
    result.sustained_throughput = sustained_throughput(result.sweep, sv.latency_slo);
    return result;
}

ServeResult cmd_serve(const RunConfig& config, const std::filesystem::path& out_dir) {
    const auto profile_path = config.serve.profile.value_or(out_dir / "profile.json");
    const ServeResult result = run_serve(config, load_profile(profile_path));
    ensure_dir(out_dir);
    detail::write_text_file(out_dir / "metrics.csv", metrics_csv(result.sweep));
    detail::write_text_file(out_dir / "summary.json", summary_json(result, config));
    return result;
}

std::string metrics_csv(std::span<const SweepPoint> sweep) {
    std::ostringstream out;
    out << kMetricsHeader << '\n' << kMetricsColumns << '\n';
    for (const auto& point : sweep) {
        for (const auto& r : point.metrics.requests) {
            if (!r.completed) continue;
            out << format_double(point.rate) << ',' << r.id << ',' << format_double(r.arrival) << ','
                << format_double(r.ttft) << ',' << format_double(r.mean_tbt) << ',' << format_double(r.e2e) << ','
                << r.config_k << ',' << r.replica << ',' << (r.slo_fallback ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

namespace {

json summary_object(const Summary& s) {
    return {{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"p90", s.p90}};
}

}  // namespace

std::string summary_json(const ServeResult& result, const RunConfig& config) {
    json j;
    j["format"] = "kvbridge-serve-summary";
    j["version"] = 1;
    j["slo"] = config.serve.latency_slo;
    j["min_quality"] = config.serve.min_quality;
    j["adapt"] = config.serve.adapt;
    j["static_config"] = result.static_config.to_string();
    j["replicas"] = config.serve.replicas;
    j["seed"] = config.seed;
    j["sustained_throughput"] = result.sustained_throughput ? json(*result.sustained_throughput) : json(nullptr);
    j["points"] = json::array();
    for (const auto& p : result.sweep) {
        const auto& m = p.metrics;
        json pj = {{"lambda", p.rate},
                   {"generated", m.generated},
                   {"completed", m.completed},
                   {"in_flight", m.in_flight},
                   {"violation_rate", m.violation_rate}};
        if (m.completed > 0) {
            pj["ttft"] = summary_object(m.ttft);
            pj["tbt"] = summary_object(m.tbt);
            pj["e2e"] = summary_object(m.e2e);
        }
        j["points"].push_back(std::move(pj));
    }
    return j.dump(2) + "\n";
}

namespace {

template <typename T>
T parse_cell(std::string_view cell, size_t line, const char* column) {
    T v{};
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError("line " + std::to_string(line), std::string("bad value in column ") + column);
    }
    return v;
}

}  // namespace

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    auto next_line = [&]() {
        const bool ok = static_cast<bool>(std::getline(in, line));
        if (ok) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
        }
        return ok;
    };
    if (!next_line() || line.empty()) throw NoData("no data: metrics file is empty");
    if (line != kMetricsHeader) throw ParseError("line 1", "expected '" + std::string(kMetricsHeader) + "'");
    if (!next_line() || line.empty()) throw NoData("no data: metrics file has no column header");
    if (line != kMetricsColumns) throw ParseError("line 2", "column header does not match the metrics schema");

    std::vector<MetricsRow> rows;
    while (next_line()) {
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::string_view rest(line);
        for (;;) {
            const size_t comma = rest.find(',');
            cells.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (cells.size() != 9) {
            throw ParseError("line " + std::to_string(line_no), "expected 9 columns, got " + std::to_string(cells.size()));
        }
        MetricsRow r;
        r.rate = parse_cell<double>(cells[0], line_no, "lambda");
        r.request_id = parse_cell<int>(cells[1], line_no, "request_id");
        r.arrival = parse_cell<double>(cells[2], line_no, "arrival");
        r.ttft = parse_cell<double>(cells[3], line_no, "ttft");
        r.mean_tbt = parse_cell<double>(cells[4], line_no, "mean_tbt");
        r.e2e = parse_cell<double>(cells[5], line_no, "e2e");
        r.config_k = parse_cell<int>(cells[6], line_no, "config_k");
        r.replica = parse_cell<int>(cells[7], line_no, "replica");
        r.slo_fallback = parse_cell<int>(cells[8], line_no, "slo_fallback") != 0;
        rows.push_back(r);
    }
    return rows;
}

std::vector<RateSummary> summarize_metrics(std::span<const MetricsRow> rows) {
    if (rows.empty()) throw NoData("no data: metrics file has no rows");
    std::map<double, std::vector<const MetricsRow*>> by_rate;
    for (const auto& r : rows) by_rate[r.rate].push_back(&r);
    std::vector<RateSummary> out;
    for (const auto& [rate, group] : by_rate) {
        std::vector<double> ttft, tbt, e2e;
        RateSummary s;
        s.rate = rate;
        for (const auto* r : group) {
            ttft.push_back(r->ttft);
            tbt.push_back(r->mean_tbt);
            e2e.push_back(r->e2e);
            if (r->slo_fallback) ++s.fallbacks;
        }
        s.ttft = aggregate(ttft);
        s.tbt = aggregate(tbt);
        s.e2e = aggregate(e2e);
        out.push_back(s);
    }
    return out;
}

std::string report_text(std::span<const RateSummary> summaries) {
    std::ostringstream out;
    for (const auto& s : summaries) {
        out << "lambda " << format_double(s.rate) << ": " << s.ttft.count << " requests";
        if (s.fallbacks > 0) out << ", " << s.fallbacks << " SLO fallbacks";
        out << '\n';
        const std::pair<const char*, const Summary*> metrics[] = {{"ttft", &s.ttft}, {"tbt", &s.tbt}, {"e2e", &s.e2e}};
        for (const auto& [name, m] : metrics) {
            out << "  " << name << "  mean " << format_double(m->mean) << "  median " << format_double(m->median)
                << "  p90 " << format_double(m->p90) << '\n';
        }
    }
    return out.str();
}

std::string report_dat(std::span<const RateSummary> summaries, const Summary RateSummary::*metric, const std::string& name) {
    std::ostringstream out;
    out << "# " << name << " vs lambda\n# lambda mean median p90\n";
    for (const auto& s : summaries) {
        const Summary& m = s.*metric;
        out << format_double(s.rate) << ' ' << format_double(m.mean) << ' ' << format_double(m.median) << ' '
            << format_double(m.p90) << '\n';
    }
    return out.str();
}

std::string cmd_report(const std::filesystem::path& metrics_path, const std::filesystem::path& out_dir) {
    const auto rows = parse_metrics_csv(detail::read_text_file(metrics_path));
    const auto summaries = summarize_metrics(rows);
    const std::string text = report_text(summaries);
    ensure_dir(out_dir);
    detail::write_text_file(out_dir / "ttft.dat", report_dat(summaries, &RateSummary::ttft, "ttft"));
    detail::write_text_file(out_dir / "tbt.dat", report_dat(summaries, &RateSummary::tbt, "tbt"));
    detail::write_text_file(out_dir / "e2e.dat", report_dat(summaries, &RateSummary::e2e, "e2e"));
    detail::write_text_file(out_dir / "summary.txt", text);
    return text;
}

}  // namespace kvbridge
