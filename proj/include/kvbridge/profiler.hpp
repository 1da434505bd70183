#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kvbridge/kv_store.hpp"
#include "kvbridge/model.hpp"
#include "kvbridge/recompute_config.hpp"

namespace kvbridge {

struct ProfilePoint {
    LayerRange group;
    double quality = 0.0;

    int k() const { return group.size(); }
    RecomputeConfig config() const { return RecomputeConfig({group}); }

    friend bool operator==(const ProfilePoint&, const ProfilePoint&) = default;
};

struct FrontierEntry {
    int k = 0;
    double quality = 0.0;
    LayerRange group;

    RecomputeConfig config() const { return RecomputeConfig({group}); }

    friend bool operator==(const FrontierEntry&, const FrontierEntry&) = default;
};

// Best quality per recomputed-layer count, built as a cumulative maximum so
// quality never decreases with k. The last entry is always recompute-all.
struct ParetoFrontier {
    std::vector<FrontierEntry> entries;
    double baseline_quality = 1.0;
    double floor_delta = 0.05;

    int n_layers() const { return entries.empty() ? 0 : entries.back().k; }

    // Throws std::invalid_argument if the invariants do not hold.
    void validate() const;

    friend bool operator==(const ParetoFrontier&, const ParetoFrontier&) = default;
};

// All runs of whole g-blocks: G(G+1)/2 single-group configs with G = ceil(L/g).
std::vector<RecomputeConfig> enumerate_groups(int n_layers, int granularity);

// Scores recompute configs for one sender/receiver pair over a training set.
// Sender caches are published once to a profiling-mode store and reference
// decodes are computed once per input.
class PairEvaluator {
public:
    PairEvaluator(const ModelWeights& sender, const ModelWeights& receiver, std::vector<TokenSequence> train_set,
                  int horizon, std::string sender_id = "sender");

    ProfilePoint evaluate(const LayerRange& group) const;
    double mean_agreement(const RecomputeConfig& config) const;
    std::vector<Agreement> agreements(const RecomputeConfig& config) const;

    // 1 - agreement when only `layer` reuses sender KV; one value per layer.
    std::vector<double> leave_one_out_drop() const;

    const KvStore& store() const { return store_; }
    const std::vector<TokenSequence>& train_set() const { return train_set_; }
    int horizon() const { return horizon_; }

private:
    const ModelWeights& sender_;
    const ModelWeights& receiver_;
    std::vector<TokenSequence> train_set_;
    int horizon_;
    std::string sender_id_;
    KvStore store_;
    std::vector<TokenSequence> reference_;
};

ProfilePoint evaluate_config(const ModelWeights& sender, const ModelWeights& receiver, const LayerRange& group,
                             const std::vector<TokenSequence>& train_set, int horizon);

ParetoFrontier build_frontier(std::vector<ProfilePoint> points, double floor_delta = 0.05);

RecomputeConfig select_by_quality_floor(const ParetoFrontier& frontier, double delta = 0.05);

// Smallest-k entry with quality >= min_quality, recompute-all if none.
const FrontierEntry& smallest_meeting(const ParetoFrontier& frontier, double min_quality);

RecomputeConfig select_by_layer_budget(const ParetoFrontier& frontier, int budget);

struct PairInfo {
    std::string sender_id;
    std::string receiver_id;
    int n_layers = 0;
    int d_model = 0;
    int n_heads = 0;
    int n_kv_heads = 0;

    friend bool operator==(const PairInfo&, const PairInfo&) = default;
};

PairInfo pair_info(const std::string& sender_id, const std::string& receiver_id, const ModelConfig& config);

struct Profile {
    PairInfo pair;
    int granularity = 2;
    int horizon = 32;
    std::string hash_fn = kContextHashName;
    std::vector<ProfilePoint> points;  // sorted by (k, group start)
    ParetoFrontier frontier;

    friend bool operator==(const Profile&, const Profile&) = default;
};

Profile run_profile(const PairEvaluator& evaluator, const PairInfo& pair, int granularity, double floor_delta = 0.05);

std::string serialize_profile(const Profile& profile);
Profile parse_profile(const std::string& text);

void save_profile(const Profile& profile, const std::filesystem::path& path);
Profile load_profile(const std::filesystem::path& path);

// Throws std::invalid_argument when `profile` was built for a different pair.
void check_compatible(const Profile& profile, const PairInfo& pair);

}  // namespace kvbridge
