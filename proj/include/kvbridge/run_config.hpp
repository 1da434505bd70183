#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kvbridge/model.hpp"
#include "kvbridge/recompute_config.hpp"
#include "kvbridge/scheduler.hpp"

namespace kvbridge {

struct PairSpec {
    std::string sender_id = "base";
    std::string receiver_id = "variant";
    PerturbationSpec perturbation;  // applied to the receiver; empty eps = identical models
};

struct DatasetSpec {
    int count = 12;
    int length = 48;
    std::vector<std::filesystem::path> files;  // overrides the synthetic corpus when non-empty
};

struct ProfileParams {
    int granularity = 2;
    int horizon = 32;
    double delta = 0.05;
};

enum class StaticChoice { RecomputeAll, QualityFloor, Explicit };

struct ServeParams {
    std::optional<std::filesystem::path> profile;  // defaults to <out>/profile.json
    std::vector<double> rates{1.0};
    double duration = 200.0;
    int context_length = 64;
    int output_length = 8;
    int replicas = 1;
    double decode_cost = 0.05;
    double latency_slo = 4.0;
    double min_quality = 0.95;
    bool adapt = false;
    StaticChoice static_choice = StaticChoice::RecomputeAll;
    RecomputeConfig static_config;  // StaticChoice::Explicit only
    CostModel cost;
};

struct RunConfig {
    uint64_t seed = 0;  // dataset and workload seed; --seed overrides it
    ModelConfig model;
    PairSpec pair;
    DatasetSpec dataset;
    ProfileParams profile;
    std::optional<std::filesystem::path> scenario;
    ServeParams serve;

    // Throws std::invalid_argument on out-of-range parameters.
    void validate() const;
};

// Relative paths inside the file resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// One sequence per file: newline-delimited integer token ids.
TokenSequence read_token_file(const std::filesystem::path& path);

ModelWeights build_sender(const RunConfig& config);
ModelWeights build_receiver(const RunConfig& config);
std::vector<TokenSequence> load_dataset(const RunConfig& config);

}  // namespace kvbridge
