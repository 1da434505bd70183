#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kvbridge/commands.hpp"
#include "kvbridge/errors.hpp"

namespace py = pybind11;
using namespace kvbridge;

namespace {

RecomputeConfig config_from(const std::vector<std::pair<int, int>>& groups) {
    std::vector<LayerRange> ranges;
    for (const auto& [a, b] : groups) ranges.push_back({a, b});
    return RecomputeConfig(ranges);
}

std::vector<std::pair<int, int>> groups_of(const RecomputeConfig& c) {
    std::vector<std::pair<int, int>> out;
    for (const auto& g : c.groups()) out.emplace_back(g.first, g.last);
    return out;
}

RunConfig run_config(const std::filesystem::path& path, std::optional<uint64_t> seed) {
    auto rc = load_run_config(path);
    if (seed) rc.seed = *seed;
    return rc;
}

py::dict summary_dict(const Summary& s) {
    py::dict d;
    d["count"] = s.count;
    d["mean"] = s.mean;
    d["median"] = s.median;
    d["p90"] = s.p90;
    return d;
}

}  // namespace

PYBIND11_MODULE(_kvbridge, m) {
    m.doc() = "Cross-model KV cache reuse: model, store, profiler, scheduler and serving simulator.";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<NoData>(m, "NoData", PyExc_RuntimeError);
    py::register_exception<CacheMiss>(m, "CacheMiss", PyExc_KeyError);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("n_kv_heads", &ModelConfig::n_kv_heads)
        .def_readwrite("head_dim", &ModelConfig::head_dim)
        .def_readwrite("d_ff", &ModelConfig::d_ff)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("max_seq", &ModelConfig::max_seq)
        .def_readwrite("base_seed", &ModelConfig::base_seed)
        .def("validate", &ModelConfig::validate);

    py::class_<RecomputeConfig>(m, "RecomputeConfig")
        .def(py::init(&config_from), py::arg("groups") = std::vector<std::pair<int, int>>{})
        .def_static("all", &RecomputeConfig::all, py::arg("n_layers"))
        .def_property_readonly("groups", &groups_of)
        .def_property_readonly("k", &RecomputeConfig::recomputed_layer_count)
        .def("recomputes", &RecomputeConfig::recomputes)
        .def("validate", &RecomputeConfig::validate)
        .def("__eq__", [](const RecomputeConfig& a, const RecomputeConfig& b) { return a == b; })
        .def("__repr__", [](const RecomputeConfig& c) { return "RecomputeConfig(" + c.to_string() + ")"; });

    py::class_<ModelWeights>(m, "Model").def_property_readonly("config", [](const ModelWeights& w) { return w.config; });

    m.def(
        "build_model",
        [](const ModelConfig& config, std::optional<std::vector<double>> eps, uint64_t noise_seed) {
            if (!eps) return build_model(config);
            return build_model(config, PerturbationSpec{*eps, noise_seed});
        },
        py::arg("config"), py::arg("eps") = py::none(), py::arg("noise_seed") = 0);
    m.def("synthetic_dataset", &synthetic_dataset, py::arg("config"), py::arg("seed"), py::arg("count"),
          py::arg("length"));
    m.def(
        "prefill_logits",
        [](const ModelWeights& model, const TokenSequence& tokens) { return full_prefill(model, tokens).logits; },
        py::arg("model"), py::arg("tokens"));
    m.def(
        "reuse_logits",
        [](const ModelWeights& sender, const ModelWeights& receiver, const TokenSequence& tokens,
           const RecomputeConfig& config) {
            return partial_prefill(receiver, tokens, config, SenderCaches::from_prefill(full_prefill(sender, tokens)))
                .logits;
        },
        py::arg("sender"), py::arg("receiver"), py::arg("tokens"), py::arg("config"));
    m.def(
        "agreement",
        [](const ModelWeights& sender, const ModelWeights& receiver, const TokenSequence& tokens,
           const RecomputeConfig& config, int horizon) {
            return agreement_score(sender, receiver, tokens, config, horizon).score;
        },
        py::arg("sender"), py::arg("receiver"), py::arg("tokens"), py::arg("config"), py::arg("horizon") = 32);

    m.def(
        "context_hash", [](const TokenSequence& tokens) { return context_hash(tokens).hex(); }, py::arg("tokens"));
    m.def(
        "layer_bytes",
        [](const std::string& kind, int positions, const ModelConfig& config) {
            if (kind != "kv" && kind != "e") throw std::invalid_argument("kind must be 'kv' or 'e'");
            return bytes_of(kind == "kv" ? CacheKind::KV : CacheKind::E, positions, config);
        },
        py::arg("kind"), py::arg("positions"), py::arg("config"));
    m.def("enumerate_groups", &enumerate_groups, py::arg("n_layers"), py::arg("granularity"));

    m.def(
        "profile",
        [](const std::filesystem::path& config, const std::filesystem::path& out, std::optional<uint64_t> seed) {
            const auto p = cmd_profile(run_config(config, seed), out);
            py::list frontier;
            for (const auto& e : p.frontier.entries) {
                frontier.append(py::make_tuple(e.k, e.quality, e.config()));
            }
            py::dict d;
            d["configs"] = p.points.size();
            d["baseline_quality"] = p.frontier.baseline_quality;
            d["frontier"] = frontier;
            d["floor_config"] = select_by_quality_floor(p.frontier, p.frontier.floor_delta);
            return d;
        },
        py::arg("config"), py::arg("out") = ".", py::arg("seed") = py::none());
    m.def(
        "plan",
        [](const std::filesystem::path& scenario, const std::string& strategy, const std::filesystem::path& out) {
            const auto t = cmd_plan(load_scenario(scenario), parse_strategy(strategy), out);
            py::dict ready;
            for (const auto& r : t.requests) ready[py::str(r.id)] = py::make_tuple(r.arrival, r.ready);
            py::dict d;
            d["total_ttft"] = t.total_ttft();
            d["requests"] = ready;
            return d;
        },
        py::arg("scenario"), py::arg("strategy") = "pipelined", py::arg("out") = ".");
    m.def(
        "serve",
        [](const std::filesystem::path& config, const std::filesystem::path& out, std::optional<uint64_t> seed) {
            const auto r = cmd_serve(run_config(config, seed), out);
            py::list points;
            for (const auto& p : r.sweep) {
                py::dict d;
                d["rate"] = p.rate;
                d["completed"] = p.metrics.completed;
                d["violation_rate"] = p.metrics.violation_rate;
                d["ttft"] = summary_dict(p.metrics.ttft);
                d["e2e"] = summary_dict(p.metrics.e2e);
                points.append(d);
            }
            py::dict d;
            d["points"] = points;
            d["sustained_throughput"] = r.sustained_throughput;
            return d;
        },
        py::arg("config"), py::arg("out") = ".", py::arg("seed") = py::none());
    m.def("report", &cmd_report, py::arg("metrics"), py::arg("out") = ".");
}
