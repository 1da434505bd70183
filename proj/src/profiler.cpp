#include "kvbridge/profiler.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json_fields.hpp"
#include "kvbridge/errors.hpp"

namespace kvbridge {

using nlohmann::json;
using detail::field;

namespace {

constexpr const char* kProfileFormat = "kvbridge-profile";
constexpr int kProfileVersion = 1;

}  // namespace

void ParetoFrontier::validate() const {
    if (entries.empty()) throw std::invalid_argument("frontier is empty");
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.k != e.group.size()) throw std::invalid_argument("frontier entry k does not match its group");
        if (e.quality < 0.0 || e.quality > 1.0) throw std::invalid_argument("frontier quality outside [0,1]");
        if (i > 0) {
            if (e.k <= entries[i - 1].k) throw std::invalid_argument("frontier k must strictly increase");
            if (e.quality < entries[i - 1].quality) throw std::invalid_argument("frontier quality must not decrease");
        }
    }
    const auto& last = entries.back();
    if (last.group.first != 0 || last.quality != baseline_quality) {
        throw std::invalid_argument("last frontier entry must be recompute-all at the baseline quality");
    }
}

std::vector<RecomputeConfig> enumerate_groups(int n_layers, int granularity) {
    if (n_layers < 1) throw std::invalid_argument("layer count must be positive");
    if (granularity < 1 || granularity > n_layers) {
        throw std::invalid_argument("granularity " + std::to_string(granularity) + " outside [1, " +
                                    std::to_string(n_layers) + "]");
    }
    const int blocks = (n_layers + granularity - 1) / granularity;
    std::vector<RecomputeConfig> out;
    out.reserve(static_cast<size_t>(blocks) * (blocks + 1) / 2);
    for (int first = 0; first < blocks; ++first) {
        for (int last = first; last < blocks; ++last) {
            out.emplace_back(std::vector<LayerRange>{
                {first * granularity, std::min(n_layers, (last + 1) * granularity) - 1}});
        }
    }
    return out;
}

PairEvaluator::PairEvaluator(const ModelWeights& sender, const ModelWeights& receiver,
                             std::vector<TokenSequence> train_set, int horizon, std::string sender_id)
    : sender_(sender), receiver_(receiver), train_set_(std::move(train_set)), horizon_(horizon),
      sender_id_(std::move(sender_id)) {
    if (train_set_.empty()) throw std::invalid_argument("training set is empty");
    if (horizon_ < 1) throw std::invalid_argument("horizon must be at least 1");
    if (!(sender_.config == receiver_.config)) {
        throw std::invalid_argument("sender and receiver must share the base architecture");
    }
    reference_.reserve(train_set_.size());
    for (const auto& tokens : train_set_) {
        auto sender_prefill = full_prefill(sender_, tokens);
        publish_prefill(store_, sender_id_, tokens, sender_prefill, StoreMode::Profiling);
        auto prefill = full_prefill(receiver_, tokens);
        reference_.push_back(decode_greedy(receiver_, std::move(prefill.kv), prefill.logits, horizon_).tokens);
    }
}

std::vector<Agreement> PairEvaluator::agreements(const RecomputeConfig& config) const {
    const int n_layers = receiver_.config.n_layers;
    config.validate(n_layers);
    std::vector<Agreement> out;
    out.reserve(train_set_.size());
    for (size_t i = 0; i < train_set_.size(); ++i) {
        const auto& tokens = train_set_[i];
        auto mixed = partial_prefill(receiver_, tokens, config,
                                     fetch_sender_caches(store_, sender_id_, tokens, n_layers, config));
        auto decoded = decode_greedy(receiver_, std::move(mixed.kv), mixed.logits, horizon_);
        out.push_back(compare_streams(reference_[i], decoded.tokens));
    }
    return out;
}

double PairEvaluator::mean_agreement(const RecomputeConfig& config) const {
    double sum = 0.0;
    for (const auto& a : agreements(config)) sum += a.score;
    return sum / static_cast<double>(train_set_.size());
}

ProfilePoint PairEvaluator::evaluate(const LayerRange& group) const {
    return ProfilePoint{group, mean_agreement(RecomputeConfig({group}))};
}

std::vector<double> PairEvaluator::leave_one_out_drop() const {
    const int n_layers = receiver_.config.n_layers;
    const double baseline = mean_agreement(RecomputeConfig::all(n_layers));
    std::vector<double> drop;
    for (int l = 0; l < n_layers; ++l) {
        std::vector<LayerRange> groups;
        if (l > 0) groups.push_back({0, l - 1});
        if (l < n_layers - 1) groups.push_back({l + 1, n_layers - 1});
        drop.push_back(baseline - mean_agreement(RecomputeConfig(groups)));
    }
    return drop;
}

ProfilePoint evaluate_config(const ModelWeights& sender, const ModelWeights& receiver, const LayerRange& group,
                             const std::vector<TokenSequence>& train_set, int horizon) {
    return PairEvaluator(sender, receiver, train_set, horizon).evaluate(group);
}

ParetoFrontier build_frontier(std::vector<ProfilePoint> points, double floor_delta) {
    if (points.empty()) throw std::invalid_argument("cannot build a frontier from no points");
    std::stable_sort(points.begin(), points.end(), [](const ProfilePoint& a, const ProfilePoint& b) {
        return a.k() != b.k() ? a.k() < b.k() : a.group.first < b.group.first;
    });
    const auto& all = points.back();
    if (all.group.first != 0) throw std::invalid_argument("profile points must include the recompute-all config");
    const int n_layers = all.k();

    ParetoFrontier frontier;
    frontier.baseline_quality = all.quality;
    frontier.floor_delta = floor_delta;
    double best = -1.0;
    for (size_t i = 0; i < points.size();) {
        // Best point for this k; stable order keeps the lowest group start on ties.
        const int k = points[i].k();
        const ProfilePoint* winner = &points[i];
        for (; i < points.size() && points[i].k() == k; ++i) {
            if (points[i].quality > winner->quality) winner = &points[i];
        }
        if (k < n_layers && winner->quality > best) {
            best = winner->quality;
            frontier.entries.push_back({k, winner->quality, winner->group});
        }
    }
    if (all.quality < best) {
        throw std::invalid_argument("recompute-all quality is below a partial config; the frontier would not be monotone");
    }
    frontier.entries.push_back({n_layers, all.quality, {0, n_layers - 1}});
    return frontier;
}

const FrontierEntry& smallest_meeting(const ParetoFrontier& frontier, double min_quality) {
    if (frontier.entries.empty()) throw std::invalid_argument("frontier is empty");
    for (const auto& e : frontier.entries) {
        if (e.quality >= min_quality) return e;
    }
    return frontier.entries.back();
}

RecomputeConfig select_by_quality_floor(const ParetoFrontier& frontier, double delta) {
    return smallest_meeting(frontier, (1.0 - delta) * frontier.baseline_quality).config();
}

RecomputeConfig select_by_layer_budget(const ParetoFrontier& frontier, int budget) {
    if (budget < 0) throw std::invalid_argument("layer budget must be non-negative");
    const FrontierEntry* chosen = nullptr;
    for (const auto& e : frontier.entries) {
        if (e.k <= budget) chosen = &e;
    }
    return chosen ? chosen->config() : RecomputeConfig::none();
}

PairInfo pair_info(const std::string& sender_id, const std::string& receiver_id, const ModelConfig& config) {
    return PairInfo{sender_id, receiver_id, config.n_layers, config.d_model, config.n_heads, config.n_kv_heads};
}

Profile run_profile(const PairEvaluator& evaluator, const PairInfo& pair, int granularity, double floor_delta) {
    Profile profile;
    profile.pair = pair;
    profile.granularity = granularity;
    profile.horizon = evaluator.horizon();
    for (const auto& config : enumerate_groups(pair.n_layers, granularity)) {
        profile.points.push_back(evaluator.evaluate(config.groups().front()));
    }
    std::stable_sort(profile.points.begin(), profile.points.end(), [](const ProfilePoint& a, const ProfilePoint& b) {
        return a.k() != b.k() ? a.k() < b.k() : a.group.first < b.group.first;
    });
    profile.frontier = build_frontier(profile.points, floor_delta);
    return profile;
}

std::string serialize_profile(const Profile& p) {
    json j;
    j["format"] = kProfileFormat;
    j["version"] = kProfileVersion;
    j["pair"] = {{"sender_id", p.pair.sender_id}, {"receiver_id", p.pair.receiver_id}, {"L", p.pair.n_layers},
                 {"d_model", p.pair.d_model},     {"n_heads", p.pair.n_heads},         {"n_kv_heads", p.pair.n_kv_heads}};
    j["granularity"] = p.granularity;
    j["horizon"] = p.horizon;
    j["hash_fn"] = p.hash_fn;
    j["frontier_mode"] = "cumulative-max";
    j["floor_delta"] = p.frontier.floor_delta;
    j["baseline_quality"] = p.frontier.baseline_quality;
    j["points"] = json::array();
    for (const auto& pt : p.points) {
        j["points"].push_back({{"a", pt.group.first}, {"b", pt.group.last}, {"k", pt.k()}, {"quality", pt.quality}});
    }
    j["frontier"] = json::array();
    for (const auto& e : p.frontier.entries) {
        j["frontier"].push_back({{"k", e.k}, {"a", e.group.first}, {"b", e.group.last}, {"quality", e.quality}});
    }
    return j.dump(2) + "\n";
}

namespace {

LayerRange range_field(const json& obj, const std::string& path, int n_layers) {
    const int a = field<int>(obj, "a", path);
    const int b = field<int>(obj, "b", path);
    const int k = field<int>(obj, "k", path);
    if (a < 0 || b < a || b >= n_layers) throw ParseError(path, "layer range out of bounds");
    if (k != b - a + 1) throw ParseError(path + ".k", "does not match the group length");
    return {a, b};
}

}  // namespace

Profile parse_profile(const std::string& text) {
    const json j = detail::parse_json_text(text);
    detail::check_header(j, kProfileFormat, kProfileVersion, "profile");
    Profile p;
    const auto& pair = j.contains("pair") ? j["pair"] : json();
    p.pair.sender_id = field<std::string>(pair, "sender_id", "profile.pair");
    p.pair.receiver_id = field<std::string>(pair, "receiver_id", "profile.pair");
    p.pair.n_layers = field<int>(pair, "L", "profile.pair");
    p.pair.d_model = field<int>(pair, "d_model", "profile.pair");
    p.pair.n_heads = field<int>(pair, "n_heads", "profile.pair");
    p.pair.n_kv_heads = field<int>(pair, "n_kv_heads", "profile.pair");
    if (p.pair.n_layers < 1) throw ParseError("profile.pair.L", "must be positive");
    p.granularity = field<int>(j, "granularity", "profile");
    p.horizon = field<int>(j, "horizon", "profile");
    p.hash_fn = field<std::string>(j, "hash_fn", "profile");
    p.frontier.floor_delta = field<double>(j, "floor_delta", "profile");
    p.frontier.baseline_quality = field<double>(j, "baseline_quality", "profile");
    if (!j.contains("points") || !j["points"].is_array()) throw ParseError("profile.points", "expected an array");
    for (size_t i = 0; i < j["points"].size(); ++i) {
        const std::string path = "profile.points[" + std::to_string(i) + "]";
        const auto& pt = j["points"][i];
        p.points.push_back({range_field(pt, path, p.pair.n_layers), field<double>(pt, "quality", path)});
    }
    if (!j.contains("frontier") || !j["frontier"].is_array()) throw ParseError("profile.frontier", "expected an array");
    for (size_t i = 0; i < j["frontier"].size(); ++i) {
        const std::string path = "profile.frontier[" + std::to_string(i) + "]";
        const auto& e = j["frontier"][i];
        const auto group = range_field(e, path, p.pair.n_layers);
        FrontierEntry entry{group.size(), field<double>(e, "quality", path), group};
        if (!p.frontier.entries.empty()) {
            if (entry.k <= p.frontier.entries.back().k) throw ParseError(path + ".k", "frontier k must strictly increase");
            if (entry.quality < p.frontier.entries.back().quality) {
                throw ParseError(path + ".quality", "frontier quality must not decrease");
            }
        }
        p.frontier.entries.push_back(entry);
    }
    try {
        p.frontier.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError("profile.frontier", e.what());
    }
    if (p.frontier.n_layers() != p.pair.n_layers) throw ParseError("profile.frontier", "does not end at recompute-all");
    return p;
}

void save_profile(const Profile& profile, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_profile(profile);
}

Profile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_profile(buf.str());
}

void check_compatible(const Profile& profile, const PairInfo& pair) {
    if (profile.pair.n_layers != pair.n_layers) {
        throw std::invalid_argument("profile is for " + std::to_string(profile.pair.n_layers) + " layers, model has " +
                                    std::to_string(pair.n_layers));
    }
    if (profile.pair.sender_id != pair.sender_id || profile.pair.receiver_id != pair.receiver_id) {
        throw std::invalid_argument("profile is for pair " + profile.pair.sender_id + "->" + profile.pair.receiver_id +
                                    ", not " + pair.sender_id + "->" + pair.receiver_id);
    }
    if (!(profile.pair == pair)) throw std::invalid_argument("profile model geometry does not match");
}

}  // namespace kvbridge
