#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "kvbridge/recompute_config.hpp"

namespace kvbridge {

struct ModelConfig {
    int n_layers = 8;
    int d_model = 64;
    int n_heads = 4;
    int n_kv_heads = 1;
    int head_dim = 16;
    int d_ff = 128;
    int vocab_size = 256;
    int max_seq = 256;
    uint64_t base_seed = 0;

    // Throws std::invalid_argument on a shape inconsistency.
    void validate() const;

    size_t kv_bytes_per_position() const {
        return 2 * static_cast<size_t>(n_kv_heads) * static_cast<size_t>(head_dim) * sizeof(float);
    }
    size_t e_bytes_per_position() const { return static_cast<size_t>(d_model) * sizeof(float); }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Per-layer noise magnitudes that turn the base model into a variant.
struct PerturbationSpec {
    std::vector<double> eps;
    uint64_t noise_seed = 0;

    // eps = magnitude on layers [first, last], zero elsewhere.
    static PerturbationSpec block(int n_layers, int first, int last, double magnitude, uint64_t noise_seed);
};

using TokenSequence = std::vector<int32_t>;

struct LayerWeights {
    std::vector<float> attn_norm;  // [d_model]
    std::vector<float> wq;         // [d_model, n_heads * head_dim]
    std::vector<float> wk;         // [d_model, n_kv_heads * head_dim]
    std::vector<float> wv;         // [d_model, n_kv_heads * head_dim]
    std::vector<float> wo;         // [d_model, d_model]
    std::vector<float> ffn_norm;   // [d_model]
    std::vector<float> w_up;       // [d_model, d_ff]
    std::vector<float> w_down;     // [d_ff, d_model]

    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct ModelWeights {
    ModelConfig config;
    std::vector<float> embedding;    // [vocab, d_model]
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;   // [d_model]
    std::vector<float> unembedding;  // [d_model, vocab]
};

// Head-major [heads, positions, head_dim] tensor that grows along positions.
class HeadTensor {
public:
    HeadTensor() = default;
    HeadTensor(int heads, int head_dim) : head_dim_(head_dim), data_(static_cast<size_t>(heads)) {}

    int heads() const { return static_cast<int>(data_.size()); }
    int head_dim() const { return head_dim_; }
    int positions() const { return data_.empty() ? 0 : static_cast<int>(data_[0].size()) / head_dim_; }

    const float* row(int head, int pos) const { return data_[head].data() + static_cast<size_t>(pos) * head_dim_; }
    float* row(int head, int pos) { return data_[head].data() + static_cast<size_t>(pos) * head_dim_; }

    // Appends one position; `values` holds heads() * head_dim() floats, head-major.
    void append(std::span<const float> values);
    void truncate(int positions);

    // Row-major copy in [heads, positions, head_dim] order.
    std::vector<float> flatten() const;
    static HeadTensor from_flat(int heads, int positions, int head_dim, std::span<const float> flat);

    friend bool operator==(const HeadTensor&, const HeadTensor&) = default;

private:
    int head_dim_ = 0;
    std::vector<std::vector<float>> data_;
};

struct KVLayer {
    HeadTensor k;
    HeadTensor v;

    int positions() const { return k.positions(); }
    size_t bytes() const {
        return 2 * static_cast<size_t>(k.heads()) * k.head_dim() * positions() * sizeof(float);
    }
    KVLayer prefix(int positions) const;

    friend bool operator==(const KVLayer&, const KVLayer&) = default;
};

struct LayerKV {
    std::vector<KVLayer> layers;

    int positions() const { return layers.empty() ? 0 : layers.front().positions(); }
    size_t bytes() const;

    friend bool operator==(const LayerKV&, const LayerKV&) = default;
};

// Hidden states entering `layer`, row-major [positions, d_model].
struct ECache {
    int layer = 0;
    int d_model = 0;
    std::vector<float> hidden;

    int positions() const { return d_model == 0 ? 0 : static_cast<int>(hidden.size()) / d_model; }
    size_t bytes() const { return hidden.size() * sizeof(float); }

    friend bool operator==(const ECache&, const ECache&) = default;
};

struct PrefillResult {
    LayerKV kv;
    std::vector<ECache> e;  // indexed by layer; empty for mixed prefills
    std::vector<float> logits;
};

// Caches made available by the sender for one context. Layers may be absent.
struct SenderCaches {
    std::map<int, KVLayer> kv;
    std::map<int, ECache> e;

    static SenderCaches from_prefill(const PrefillResult& sender);
};

struct DecodeResult {
    TokenSequence tokens;
    LayerKV cache;
};

struct Agreement {
    double score = 0.0;
    int first_divergence = 0;  // equals the horizon when the streams never diverge
};

struct TokenSelectiveResult {
    LayerKV kv;
    std::vector<float> logits;
    std::vector<int> selected;        // recomputed positions, ascending
    std::vector<double> deviation;    // per reuse-window position
};

ModelWeights build_model(const ModelConfig& config, const std::optional<PerturbationSpec>& perturbation = std::nullopt);

// Throws DegenerateInput or std::invalid_argument if the tokens can't be prefilled by `config`.
void validate_tokens(const ModelConfig& config, std::span<const int32_t> tokens);

PrefillResult full_prefill(const ModelWeights& model, std::span<const int32_t> tokens);

// Recomputes `config`'s groups over the reuse window (all positions but the last) and
// reuses sender KV elsewhere, then runs the last position through every layer.
PrefillResult partial_prefill(const ModelWeights& receiver, std::span<const int32_t> tokens,
                              const RecomputeConfig& config, const SenderCaches& sender);

DecodeResult decode_greedy(const ModelWeights& model, LayerKV cache, std::span<const float> last_logits, int steps);

int argmax(std::span<const float> logits);

Agreement compare_streams(std::span<const int32_t> reference, std::span<const int32_t> candidate);

Agreement agreement_score(const ModelWeights& sender, const ModelWeights& receiver, std::span<const int32_t> tokens,
                          const RecomputeConfig& config, int horizon);

TokenSelectiveResult token_selective_prefill(const ModelWeights& receiver, std::span<const int32_t> tokens,
                                             const SenderCaches& sender, double ratio);

// Seeded uniform token sequences of the given length.
std::vector<TokenSequence> synthetic_dataset(const ModelConfig& config, uint64_t seed, int count, int length);

}  // namespace kvbridge
