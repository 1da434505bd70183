#include "kvbridge/run_config.hpp"

#include <charconv>
#include <stdexcept>

#include "json_fields.hpp"
#include "kvbridge/profiler.hpp"

namespace kvbridge {

using detail::field;
using detail::field_or;
using nlohmann::json;

void RunConfig::validate() const {
    model.validate();
    if (!pair.perturbation.eps.empty() && pair.perturbation.eps.size() != static_cast<size_t>(model.n_layers)) {
        throw std::invalid_argument("perturbation needs one eps per layer");
    }
    for (double e : pair.perturbation.eps) {
        if (!(e >= 0.0)) throw std::invalid_argument("perturbation eps must be non-negative");
    }
    if (pair.sender_id.empty() || pair.receiver_id.empty()) throw std::invalid_argument("model ids must be non-empty");
    if (dataset.files.empty()) {
        if (dataset.count < 1) throw std::invalid_argument("dataset count must be positive");
        if (dataset.length < 2) throw std::invalid_argument("dataset sequences need at least 2 tokens");
        if (dataset.length + profile.horizon > model.max_seq) {
            throw std::invalid_argument("sequence length plus horizon exceeds max_seq");
        }
    }
    if (profile.granularity < 1) throw std::invalid_argument("granularity must be positive");
    if (profile.horizon < 1) throw std::invalid_argument("horizon must be positive");
    if (!(profile.delta >= 0.0 && profile.delta < 1.0)) throw std::invalid_argument("delta must be in [0,1)");
    if (serve.rates.empty()) throw std::invalid_argument("rate grid must be non-empty");
    for (double r : serve.rates) {
        if (!(r > 0.0)) throw std::invalid_argument("rates must be positive");
    }
    if (!(serve.duration >= 0.0)) throw std::invalid_argument("duration must be non-negative");
    if (serve.context_length < 2) throw std::invalid_argument("context length must be at least 2");
    if (serve.output_length < 1) throw std::invalid_argument("output length must be at least 1");
    if (serve.replicas < 1) throw std::invalid_argument("need at least one replica");
    if (!(serve.decode_cost > 0.0)) throw std::invalid_argument("decode cost must be positive");
    if (!(serve.latency_slo > 0.0)) throw std::invalid_argument("latency SLO must be positive");
    if (!(serve.min_quality >= 0.0 && serve.min_quality <= 1.0)) throw std::invalid_argument("min_quality must be in [0,1]");
    if (serve.static_choice == StaticChoice::Explicit) serve.static_config.validate(model.n_layers);
    serve.cost.validate();
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

RecomputeConfig parse_groups(const json& j, const std::string& path) {
    std::vector<LayerRange> groups;
    if (!j.is_array()) throw ParseError(path, "expected a list of [first, last] pairs");
    for (size_t g = 0; g < j.size(); ++g) {
        const auto& pair = j[g];
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
            throw ParseError(path + "[" + std::to_string(g) + "]", "expected [first, last]");
        }
        groups.push_back({pair[0].get<int>(), pair[1].get<int>()});
    }
    try {
        return RecomputeConfig(groups);
    } catch (const std::invalid_argument& e) {
        throw ParseError(path, e.what());
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    const json j = detail::parse_json_text(text);
    detail::check_header(j, "kvbridge-run", 1, "run");
    RunConfig rc;
    rc.seed = field_or<uint64_t>(j, "seed", "run", 0);

    if (j.contains("model")) {
        const auto& m = detail::object_field(j, "model", "run");
        const std::string p = "run.model";
        rc.model.n_layers = field_or<int>(m, "L", p, rc.model.n_layers);
        rc.model.d_model = field_or<int>(m, "d_model", p, rc.model.d_model);
        rc.model.n_heads = field_or<int>(m, "n_heads", p, rc.model.n_heads);
        rc.model.n_kv_heads = field_or<int>(m, "n_kv_heads", p, rc.model.n_kv_heads);
        rc.model.head_dim = field_or<int>(m, "head_dim", p, rc.model.head_dim);
        rc.model.d_ff = field_or<int>(m, "d_ff", p, rc.model.d_ff);
        rc.model.vocab_size = field_or<int>(m, "vocab", p, rc.model.vocab_size);
        rc.model.max_seq = field_or<int>(m, "max_seq", p, rc.model.max_seq);
        rc.model.base_seed = field_or<uint64_t>(m, "seed", p, rc.model.base_seed);
    }

    if (j.contains("pair")) {
        const auto& pj = detail::object_field(j, "pair", "run");
        rc.pair.sender_id = field_or<std::string>(pj, "sender_id", "run.pair", rc.pair.sender_id);
        rc.pair.receiver_id = field_or<std::string>(pj, "receiver_id", "run.pair", rc.pair.receiver_id);
        if (pj.contains("perturbation")) {
            const auto& pert = detail::object_field(pj, "perturbation", "run.pair");
            const std::string p = "run.pair.perturbation";
            const auto noise_seed = field_or<uint64_t>(pert, "seed", p, 0);
            if (pert.contains("eps") && pert.contains("block")) throw ParseError(p, "give either 'eps' or 'block', not both");
            if (pert.contains("eps")) {
                rc.pair.perturbation.eps = field<std::vector<double>>(pert, "eps", p);
                rc.pair.perturbation.noise_seed = noise_seed;
            } else if (pert.contains("block")) {
                const auto& b = detail::object_field(pert, "block", p);
                rc.pair.perturbation = PerturbationSpec::block(rc.model.n_layers, field<int>(b, "first", p + ".block"),
                                                               field<int>(b, "last", p + ".block"),
                                                               field<double>(b, "magnitude", p + ".block"), noise_seed);
            }
        }
    }

    if (j.contains("dataset")) {
        const auto& d = detail::object_field(j, "dataset", "run");
        rc.dataset.count = field_or<int>(d, "count", "run.dataset", rc.dataset.count);
        rc.dataset.length = field_or<int>(d, "length", "run.dataset", rc.dataset.length);
        for (const auto& f : field_or<std::vector<std::string>>(d, "files", "run.dataset", {})) {
            rc.dataset.files.push_back(resolve(base_dir, f));
        }
    }

    if (j.contains("profile")) {
        const auto& p = detail::object_field(j, "profile", "run");
        rc.profile.granularity = field_or<int>(p, "granularity", "run.profile", rc.profile.granularity);
        rc.profile.horizon = field_or<int>(p, "horizon", "run.profile", rc.profile.horizon);
        rc.profile.delta = field_or<double>(p, "delta", "run.profile", rc.profile.delta);
    }

    if (j.contains("plan")) {
        const auto& p = detail::object_field(j, "plan", "run");
        rc.scenario = resolve(base_dir, field<std::string>(p, "scenario", "run.plan"));
    }

    if (j.contains("serve")) {
        const auto& s = detail::object_field(j, "serve", "run");
        const std::string p = "run.serve";
        auto& sv = rc.serve;
        if (s.contains("profile")) sv.profile = resolve(base_dir, field<std::string>(s, "profile", p));
        sv.rates = field_or<std::vector<double>>(s, "rates", p, sv.rates);
        sv.duration = field_or<double>(s, "duration", p, sv.duration);
        sv.context_length = field_or<int>(s, "context_length", p, sv.context_length);
        sv.output_length = field_or<int>(s, "output_length", p, sv.output_length);
        sv.replicas = field_or<int>(s, "replicas", p, sv.replicas);
        sv.decode_cost = field_or<double>(s, "decode_cost", p, sv.decode_cost);
        sv.latency_slo = field_or<double>(s, "slo", p, sv.latency_slo);
        sv.min_quality = field_or<double>(s, "min_quality", p, sv.min_quality);
        sv.adapt = field_or<bool>(s, "adapt", p, sv.adapt);
        if (s.contains("static")) {
            const auto& st = s.at("static");
            if (st.is_string()) {
                const auto name = st.get<std::string>();
                if (name == "full") {
                    sv.static_choice = StaticChoice::RecomputeAll;
                } else if (name == "floor") {
                    sv.static_choice = StaticChoice::QualityFloor;
                } else {
                    throw ParseError(p + ".static", "expected 'full', 'floor' or a group list, got '" + name + "'");
                }
            } else {
                sv.static_choice = StaticChoice::Explicit;
                sv.static_config = parse_groups(st, p + ".static");
            }
        }
        if (s.contains("cost")) sv.cost = detail::parse_cost(detail::object_field(s, "cost", p), p + ".cost", &rc.model);
    }

    try {
        rc.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError("run", e.what());
    }
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(detail::read_text_file(path), path.parent_path());
}

TokenSequence read_token_file(const std::filesystem::path& path) {
    const std::string text = detail::read_text_file(path);
    TokenSequence out;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        const size_t end = std::min(text.find('\n', pos), text.size());
        ++line_no;
        std::string_view line(text.data() + pos, end - pos);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
        while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
        if (!line.empty()) {
            int32_t v = 0;
            const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
            if (ec != std::errc() || ptr != line.data() + line.size() || v < 0) {
                throw ParseError(path.string() + ":" + std::to_string(line_no), "expected a non-negative token id");
            }
            out.push_back(v);
        }
        pos = end + 1;
    }
    return out;
}

ModelWeights build_sender(const RunConfig& config) { return build_model(config.model); }

ModelWeights build_receiver(const RunConfig& config) {
    if (config.pair.perturbation.eps.empty()) return build_model(config.model);
    return build_model(config.model, config.pair.perturbation);
}

std::vector<TokenSequence> load_dataset(const RunConfig& config) {
    std::vector<TokenSequence> out;
    if (config.dataset.files.empty()) {
        out = synthetic_dataset(config.model, config.seed, config.dataset.count, config.dataset.length);
    } else {
        for (const auto& f : config.dataset.files) out.push_back(read_token_file(f));
    }
    for (const auto& seq : out) validate_tokens(config.model, seq);
    return out;
}

}  // namespace kvbridge
