#include "kvbridge/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "kvbridge/errors.hpp"
#include "kvbridge/rng.hpp"

namespace kvbridge {

void ModelConfig::validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || n_kv_heads <= 0 || head_dim <= 0 || d_ff <= 0 ||
        vocab_size <= 0 || max_seq <= 0) {
        throw std::invalid_argument("model config: all dimensions must be positive");
    }
    if (d_model != n_heads * head_dim) {
        throw std::invalid_argument("model config: d_model must equal n_heads * head_dim");
    }
    if (n_heads % n_kv_heads != 0) {
        throw std::invalid_argument("model config: n_kv_heads must divide n_heads");
    }
    if (max_seq < 2) {
        throw std::invalid_argument("model config: max_seq must be at least 2");
    }
}

PerturbationSpec PerturbationSpec::block(int n_layers, int first, int last, double magnitude, uint64_t noise_seed) {
    PerturbationSpec p;
    p.eps.assign(static_cast<size_t>(n_layers), 0.0);
    for (int l = first; l <= last && l < n_layers; ++l) p.eps[static_cast<size_t>(l)] = magnitude;
    p.noise_seed = noise_seed;
    return p;
}

void HeadTensor::append(std::span<const float> values) {
    if (values.size() != data_.size() * static_cast<size_t>(head_dim_)) {
        throw std::invalid_argument("HeadTensor::append: expected " + std::to_string(data_.size() * head_dim_) +
                                    " values, got " + std::to_string(values.size()));
    }
    for (size_t h = 0; h < data_.size(); ++h) {
        auto row = values.subspan(h * head_dim_, head_dim_);
        data_[h].insert(data_[h].end(), row.begin(), row.end());
    }
}

void HeadTensor::truncate(int positions) {
    for (auto& d : data_) d.resize(std::min(d.size(), static_cast<size_t>(positions) * head_dim_));
}

std::vector<float> HeadTensor::flatten() const {
    std::vector<float> out;
    for (const auto& d : data_) out.insert(out.end(), d.begin(), d.end());
    return out;
}

HeadTensor HeadTensor::from_flat(int heads, int positions, int head_dim, std::span<const float> flat) {
    const size_t per_head = static_cast<size_t>(positions) * head_dim;
    if (flat.size() != per_head * heads) throw std::invalid_argument("HeadTensor::from_flat: size mismatch");
    HeadTensor t(heads, head_dim);
    for (int h = 0; h < heads; ++h) {
        auto part = flat.subspan(h * per_head, per_head);
        t.data_[h].assign(part.begin(), part.end());
    }
    return t;
}

KVLayer KVLayer::prefix(int positions) const {
    KVLayer out = *this;
    out.k.truncate(positions);
    out.v.truncate(positions);
    return out;
}

size_t LayerKV::bytes() const {
    size_t total = 0;
    for (const auto& l : layers) total += l.bytes();
    return total;
}

SenderCaches SenderCaches::from_prefill(const PrefillResult& sender) {
    SenderCaches out;
    for (size_t l = 0; l < sender.kv.layers.size(); ++l) out.kv.emplace(static_cast<int>(l), sender.kv.layers[l]);
    for (const auto& e : sender.e) out.e.emplace(e.layer, e);
    return out;
}

namespace {

// Initialisation scales. A large embedding scale keeps each layer's output a
// small correction to the residual stream, so greedy decoding reacts to large
// cache deviations but tolerates small ones.
constexpr double kEmbeddingScale = 30.0;
constexpr double kNormJitter = 0.1;
constexpr float kNormEpsilon = 1e-5f;

enum Matrix : uint64_t { kAttnNorm, kWq, kWk, kWv, kWo, kFfnNorm, kWUp, kWDown, kMatrixCount };
constexpr uint64_t kGlobalTag = 0xffffffffULL;

std::vector<float> gaussian(uint64_t seed, uint64_t a, uint64_t b, size_t count, double stddev, double mean = 0.0) {
    Rng rng(mix_seed(seed, a, b));
    std::vector<float> out(count);
    for (auto& x : out) x = static_cast<float>(mean + stddev * rng.normal());
    return out;
}

void perturb(std::vector<float>& w, double eps, uint64_t seed, uint64_t layer, uint64_t matrix) {
    double sq = 0.0;
    for (float x : w) sq += static_cast<double>(x) * x;
    const double rms = std::sqrt(sq / static_cast<double>(w.size()));
    Rng rng(mix_seed(seed, layer, matrix));
    for (auto& x : w) x = static_cast<float>(x + eps * rms * rng.normal());
}

std::vector<float>& matrix_of(LayerWeights& lw, uint64_t m) {
    switch (m) {
        case kAttnNorm: return lw.attn_norm;
        case kWq: return lw.wq;
        case kWk: return lw.wk;
        case kWv: return lw.wv;
        case kWo: return lw.wo;
        case kFfnNorm: return lw.ffn_norm;
        case kWUp: return lw.w_up;
        default: return lw.w_down;
    }
}

void rmsnorm(const float* x, const std::vector<float>& gain, float* out) {
    const size_t d = gain.size();
    float ss = 0.0f;
    for (size_t i = 0; i < d; ++i) ss += x[i] * x[i];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(d) + kNormEpsilon);
    for (size_t i = 0; i < d; ++i) out[i] = x[i] * inv * gain[i];
}

// y = x W with W row-major [in, out].
void matvec(const float* x, const std::vector<float>& w, size_t in, size_t out, float* y) {
    std::fill(y, y + out, 0.0f);
    for (size_t i = 0; i < in; ++i) {
        const float xi = x[i];
        const float* row = w.data() + i * out;
        for (size_t j = 0; j < out; ++j) y[j] += xi * row[j];
    }
}

float gelu(float x) {
    return 0.5f * x * (1.0f + std::tanh(0.7978845608f * (x + 0.044715f * x * x * x)));
}

struct Projection {
    std::vector<float> q;
    std::vector<float> kv;  // k then v, each n_kv_heads * head_dim
};

Projection project(const ModelConfig& c, const LayerWeights& lw, const float* hidden) {
    const size_t d = c.d_model;
    const size_t kv_width = static_cast<size_t>(c.n_kv_heads) * c.head_dim;
    std::vector<float> x(d);
    rmsnorm(hidden, lw.attn_norm, x.data());
    Projection p;
    p.q.resize(d);
    p.kv.resize(2 * kv_width);
    matvec(x.data(), lw.wq, d, d, p.q.data());
    matvec(x.data(), lw.wk, d, kv_width, p.kv.data());
    matvec(x.data(), lw.wv, d, kv_width, p.kv.data() + kv_width);
    return p;
}

void store_kv(const ModelConfig& c, const Projection& p, KVLayer& layer) {
    const size_t kv_width = static_cast<size_t>(c.n_kv_heads) * c.head_dim;
    layer.k.append(std::span<const float>(p.kv.data(), kv_width));
    layer.v.append(std::span<const float>(p.kv.data() + kv_width, kv_width));
}

void overwrite_kv(const ModelConfig& c, const Projection& p, KVLayer& layer, int pos) {
    const size_t kv_width = static_cast<size_t>(c.n_kv_heads) * c.head_dim;
    for (int h = 0; h < c.n_kv_heads; ++h) {
        std::copy_n(p.kv.data() + h * c.head_dim, c.head_dim, layer.k.row(h, pos));
        std::copy_n(p.kv.data() + kv_width + h * c.head_dim, c.head_dim, layer.v.row(h, pos));
    }
}

// Causal attention of one query over cache positions [0, upto].
std::vector<float> attend(const ModelConfig& c, const std::vector<float>& q, const KVLayer& kv, int upto) {
    const int group = c.n_heads / c.n_kv_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(c.head_dim));
    std::vector<float> out(static_cast<size_t>(c.d_model), 0.0f);
    std::vector<float> scores(static_cast<size_t>(upto) + 1);
    for (int h = 0; h < c.n_heads; ++h) {
        const int g = h / group;
        const float* qh = q.data() + static_cast<size_t>(h) * c.head_dim;
        float max_score = -INFINITY;
        for (int j = 0; j <= upto; ++j) {
            const float* kj = kv.k.row(g, j);
            float s = 0.0f;
            for (int i = 0; i < c.head_dim; ++i) s += qh[i] * kj[i];
            scores[j] = s * scale;
            max_score = std::max(max_score, scores[j]);
        }
        float denom = 0.0f;
        for (int j = 0; j <= upto; ++j) {
            scores[j] = std::exp(scores[j] - max_score);
            denom += scores[j];
        }
        float* oh = out.data() + static_cast<size_t>(h) * c.head_dim;
        for (int j = 0; j <= upto; ++j) {
            const float w = scores[j] / denom;
            const float* vj = kv.v.row(g, j);
            for (int i = 0; i < c.head_dim; ++i) oh[i] += w * vj[i];
        }
    }
    return out;
}

// Output projection, residual and feed-forward block; updates `hidden` in place.
void finish_layer(const ModelConfig& c, const LayerWeights& lw, const std::vector<float>& attn, float* hidden) {
    const size_t d = c.d_model;
    const size_t ff = c.d_ff;
    std::vector<float> tmp(d);
    matvec(attn.data(), lw.wo, d, d, tmp.data());
    for (size_t i = 0; i < d; ++i) hidden[i] += tmp[i];
    std::vector<float> x(d), up(ff);
    rmsnorm(hidden, lw.ffn_norm, x.data());
    matvec(x.data(), lw.w_up, d, ff, up.data());
    for (auto& u : up) u = gelu(u);
    matvec(up.data(), lw.w_down, ff, d, tmp.data());
    for (size_t i = 0; i < d; ++i) hidden[i] += tmp[i];
}

KVLayer empty_layer(const ModelConfig& c) {
    return KVLayer{HeadTensor(c.n_kv_heads, c.head_dim), HeadTensor(c.n_kv_heads, c.head_dim)};
}

std::vector<float> embed_window(const ModelWeights& m, std::span<const int32_t> tokens, int window) {
    const size_t d = m.config.d_model;
    std::vector<float> hidden(static_cast<size_t>(window) * d);
    for (int p = 0; p < window; ++p) {
        std::copy_n(m.embedding.data() + static_cast<size_t>(tokens[p]) * d, d, hidden.data() + p * d);
    }
    return hidden;
}

// Runs layer `l` over window positions [0, rows) with hidden states `hidden`,
// writing fresh K/V into `out`.
void run_layer_window(const ModelWeights& m, int l, std::vector<float>& hidden, KVLayer& out) {
    const auto& c = m.config;
    const auto& lw = m.layers[static_cast<size_t>(l)];
    const size_t d = c.d_model;
    const int rows = static_cast<int>(hidden.size() / d);
    std::vector<std::vector<float>> queries;
    queries.reserve(static_cast<size_t>(rows));
    for (int p = 0; p < rows; ++p) {
        auto proj = project(c, lw, hidden.data() + p * d);
        store_kv(c, proj, out);
        queries.push_back(std::move(proj.q));
    }
    for (int p = 0; p < rows; ++p) {
        finish_layer(c, lw, attend(c, queries[p], out, p), hidden.data() + p * d);
    }
}

// Runs one new position through every layer, appending its K/V to `cache`.
std::vector<float> forward_position(const ModelWeights& m, LayerKV& cache, int32_t token) {
    const auto& c = m.config;
    const size_t d = c.d_model;
    std::vector<float> hidden(m.embedding.begin() + static_cast<ptrdiff_t>(token * d),
                              m.embedding.begin() + static_cast<ptrdiff_t>((token + 1) * d));
    for (int l = 0; l < c.n_layers; ++l) {
        const auto& lw = m.layers[static_cast<size_t>(l)];
        auto& layer = cache.layers[static_cast<size_t>(l)];
        auto proj = project(c, lw, hidden.data());
        store_kv(c, proj, layer);
        finish_layer(c, lw, attend(c, proj.q, layer, layer.positions() - 1), hidden.data());
    }
    std::vector<float> x(d), logits(static_cast<size_t>(c.vocab_size));
    rmsnorm(hidden.data(), m.final_norm, x.data());
    matvec(x.data(), m.unembedding, d, logits.size(), logits.data());
    return logits;
}

const KVLayer& require_kv(const SenderCaches& sender, int layer, int window) {
    auto it = sender.kv.find(layer);
    if (it == sender.kv.end()) throw CacheMiss(layer, CacheKind::KV);
    if (it->second.positions() < window) {
        throw std::invalid_argument("sender KV at layer " + std::to_string(layer) + " covers " +
                                    std::to_string(it->second.positions()) + " positions, need " +
                                    std::to_string(window));
    }
    return it->second;
}

}  // namespace

ModelWeights build_model(const ModelConfig& config, const std::optional<PerturbationSpec>& perturbation) {
    config.validate();
    if (perturbation) {
        if (perturbation->eps.size() != static_cast<size_t>(config.n_layers)) {
            throw std::invalid_argument("perturbation has " + std::to_string(perturbation->eps.size()) +
                                        " entries for " + std::to_string(config.n_layers) + " layers");
        }
        for (double e : perturbation->eps) {
            if (!(e >= 0.0)) throw std::invalid_argument("perturbation magnitudes must be non-negative");
        }
    }
    const size_t d = config.d_model;
    const size_t kv_width = static_cast<size_t>(config.n_kv_heads) * config.head_dim;
    const size_t ff = config.d_ff;
    const size_t vocab = config.vocab_size;
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(d));
    const uint64_t seed = config.base_seed;

    ModelWeights m;
    m.config = config;
    m.embedding = gaussian(seed, kGlobalTag, 0, vocab * d, kEmbeddingScale);
    m.final_norm = gaussian(seed, kGlobalTag, 1, d, kNormJitter, 1.0);
    m.unembedding = gaussian(seed, kGlobalTag, 2, d * vocab, in_scale);
    m.layers.resize(static_cast<size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
        auto& lw = m.layers[static_cast<size_t>(l)];
        const auto L = static_cast<uint64_t>(l);
        lw.attn_norm = gaussian(seed, L, kAttnNorm, d, kNormJitter, 1.0);
        lw.wq = gaussian(seed, L, kWq, d * d, in_scale);
        lw.wk = gaussian(seed, L, kWk, d * kv_width, in_scale);
        lw.wv = gaussian(seed, L, kWv, d * kv_width, in_scale);
        lw.wo = gaussian(seed, L, kWo, d * d, in_scale);
        lw.ffn_norm = gaussian(seed, L, kFfnNorm, d, kNormJitter, 1.0);
        lw.w_up = gaussian(seed, L, kWUp, d * ff, in_scale);
        lw.w_down = gaussian(seed, L, kWDown, ff * d, 1.0 / std::sqrt(static_cast<double>(ff)));
        if (perturbation && perturbation->eps[static_cast<size_t>(l)] > 0.0) {
            for (uint64_t mat = 0; mat < kMatrixCount; ++mat) {
                perturb(matrix_of(lw, mat), perturbation->eps[static_cast<size_t>(l)], perturbation->noise_seed, L,
                        mat);
            }
        }
    }
    return m;
}

void validate_tokens(const ModelConfig& config, std::span<const int32_t> tokens) {
    if (tokens.size() < 2) throw DegenerateInput("token sequence needs at least 2 positions");
    if (tokens.size() > static_cast<size_t>(config.max_seq)) {
        throw std::invalid_argument("token sequence of length " + std::to_string(tokens.size()) +
                                    " exceeds max_seq " + std::to_string(config.max_seq));
    }
    for (auto t : tokens) {
        if (t < 0 || t >= config.vocab_size) throw std::invalid_argument("token id " + std::to_string(t) + " out of range");
    }
}

PrefillResult full_prefill(const ModelWeights& model, std::span<const int32_t> tokens) {
    const auto& c = model.config;
    validate_tokens(c, tokens);
    const int window = static_cast<int>(tokens.size()) - 1;
    PrefillResult out;
    out.kv.layers.assign(static_cast<size_t>(c.n_layers), empty_layer(c));
    out.e.reserve(static_cast<size_t>(c.n_layers));
    auto hidden = embed_window(model, tokens, window);
    for (int l = 0; l < c.n_layers; ++l) {
        out.e.push_back(ECache{l, c.d_model, hidden});
        run_layer_window(model, l, hidden, out.kv.layers[static_cast<size_t>(l)]);
    }
    out.logits = forward_position(model, out.kv, tokens.back());
    return out;
}

PrefillResult partial_prefill(const ModelWeights& receiver, std::span<const int32_t> tokens,
                              const RecomputeConfig& config, const SenderCaches& sender) {
    const auto& c = receiver.config;
    validate_tokens(c, tokens);
    config.validate(c.n_layers);
    const int window = static_cast<int>(tokens.size()) - 1;
    const size_t d = c.d_model;

    // Resolve every required cache entry before computing anything.
    std::vector<const KVLayer*> reused(static_cast<size_t>(c.n_layers), nullptr);
    std::map<int, const ECache*> starts;
    for (int l = 0; l < c.n_layers; ++l) {
        if (!config.recomputes(l)) {
            reused[static_cast<size_t>(l)] = &require_kv(sender, l, window);
        }
    }
    for (int a : config.transition_layers()) {
        auto it = sender.e.find(a);
        if (it == sender.e.end()) throw CacheMiss(a, CacheKind::E);
        if (it->second.positions() < window || it->second.d_model != c.d_model) {
            throw std::invalid_argument("sender E cache at layer " + std::to_string(a) + " has the wrong shape");
        }
        starts.emplace(a, &it->second);
    }

    PrefillResult out;
    out.kv.layers.assign(static_cast<size_t>(c.n_layers), empty_layer(c));
    for (int l = 0; l < c.n_layers; ++l) {
        if (reused[static_cast<size_t>(l)]) out.kv.layers[static_cast<size_t>(l)] = reused[static_cast<size_t>(l)]->prefix(window);
    }
    for (const auto& g : config.groups()) {
        std::vector<float> hidden;
        if (g.first == 0) {
            hidden = embed_window(receiver, tokens, window);
        } else {
            const auto& e = starts.at(g.first)->hidden;
            hidden.assign(e.begin(), e.begin() + static_cast<ptrdiff_t>(window * d));
        }
        for (int l = g.first; l <= g.last; ++l) {
            run_layer_window(receiver, l, hidden, out.kv.layers[static_cast<size_t>(l)]);
        }
    }
    out.logits = forward_position(receiver, out.kv, tokens.back());
    return out;
}

int argmax(std::span<const float> logits) {
    if (logits.empty()) throw std::invalid_argument("argmax of empty logits");
    // max_element returns the first maximum, i.e. the lowest token id on ties.
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

DecodeResult decode_greedy(const ModelWeights& model, LayerKV cache, std::span<const float> last_logits, int steps) {
    const auto& c = model.config;
    if (steps < 1) throw std::invalid_argument("decode needs at least one step");
    if (cache.positions() < 1) throw std::invalid_argument("decode needs a non-empty cache");
    if (cache.layers.size() != static_cast<size_t>(c.n_layers)) throw std::invalid_argument("cache layer count mismatch");
    if (cache.positions() + steps > c.max_seq) {
        throw std::invalid_argument("decoding " + std::to_string(steps) + " steps from " +
                                    std::to_string(cache.positions()) + " positions exceeds max_seq " +
                                    std::to_string(c.max_seq));
    }
    DecodeResult out;
    out.tokens.reserve(static_cast<size_t>(steps));
    std::vector<float> logits(last_logits.begin(), last_logits.end());
    for (int s = 0; s < steps; ++s) {
        const int32_t token = argmax(logits);
        out.tokens.push_back(token);
        logits = forward_position(model, cache, token);
    }
    out.cache = std::move(cache);
    return out;
}

Agreement compare_streams(std::span<const int32_t> reference, std::span<const int32_t> candidate) {
    if (reference.empty() || reference.size() != candidate.size()) {
        throw std::invalid_argument("compare_streams: streams must be non-empty and of equal length");
    }
    Agreement a;
    a.first_divergence = static_cast<int>(reference.size());
    int matches = 0;
    for (size_t i = 0; i < reference.size(); ++i) {
        if (reference[i] == candidate[i]) {
            ++matches;
        } else if (a.first_divergence == static_cast<int>(reference.size())) {
            a.first_divergence = static_cast<int>(i);
        }
    }
    a.score = static_cast<double>(matches) / static_cast<double>(reference.size());
    return a;
}

Agreement agreement_score(const ModelWeights& sender, const ModelWeights& receiver, std::span<const int32_t> tokens,
                          const RecomputeConfig& config, int horizon) {
    if (horizon < 1) throw std::invalid_argument("agreement horizon must be at least 1");
    auto reference = full_prefill(receiver, tokens);
    auto expected = decode_greedy(receiver, std::move(reference.kv), reference.logits, horizon);
    auto mixed = partial_prefill(receiver, tokens, config, SenderCaches::from_prefill(full_prefill(sender, tokens)));
    auto got = decode_greedy(receiver, std::move(mixed.kv), mixed.logits, horizon);
    return compare_streams(expected.tokens, got.tokens);
}

TokenSelectiveResult token_selective_prefill(const ModelWeights& receiver, std::span<const int32_t> tokens,
                                             const SenderCaches& sender, double ratio) {
    const auto& c = receiver.config;
    validate_tokens(c, tokens);
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("token selection ratio must be in (0, 1]");
    const int window = static_cast<int>(tokens.size()) - 1;
    const size_t d = c.d_model;

    TokenSelectiveResult out;
    out.kv.layers.reserve(static_cast<size_t>(c.n_layers));
    for (int l = 0; l < c.n_layers; ++l) out.kv.layers.push_back(require_kv(sender, l, window).prefix(window));

    // Rank window positions by how far the receiver's layer-0 K/V drift from the sender's.
    const auto& first = out.kv.layers[0];
    auto embedded = embed_window(receiver, tokens, window);
    out.deviation.resize(static_cast<size_t>(window));
    for (int p = 0; p < window; ++p) {
        auto proj = project(c, receiver.layers[0], embedded.data() + p * d);
        const size_t kv_width = static_cast<size_t>(c.n_kv_heads) * c.head_dim;
        double dk = 0.0, dv = 0.0;
        for (int h = 0; h < c.n_kv_heads; ++h) {
            for (int i = 0; i < c.head_dim; ++i) {
                const double ek = proj.kv[h * c.head_dim + i] - first.k.row(h, p)[i];
                const double ev = proj.kv[kv_width + h * c.head_dim + i] - first.v.row(h, p)[i];
                dk += ek * ek;
                dv += ev * ev;
            }
        }
        out.deviation[static_cast<size_t>(p)] = std::sqrt(dk) + std::sqrt(dv);
    }
    std::vector<int> order(static_cast<size_t>(window));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return out.deviation[a] > out.deviation[b]; });
    const auto count = static_cast<size_t>(std::min<double>(window, std::ceil(ratio * window)));
    out.selected.assign(order.begin(), order.begin() + static_cast<ptrdiff_t>(count));
    std::sort(out.selected.begin(), out.selected.end());

    std::vector<float> hidden(count * d);
    for (size_t i = 0; i < count; ++i) {
        std::copy_n(embedded.data() + out.selected[i] * d, d, hidden.data() + i * d);
    }
    for (int l = 0; l < c.n_layers; ++l) {
        const auto& lw = receiver.layers[static_cast<size_t>(l)];
        auto& layer = out.kv.layers[static_cast<size_t>(l)];
        std::vector<std::vector<float>> queries;
        queries.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            auto proj = project(c, lw, hidden.data() + i * d);
            overwrite_kv(c, proj, layer, out.selected[i]);
            queries.push_back(std::move(proj.q));
        }
        for (size_t i = 0; i < count; ++i) {
            finish_layer(c, lw, attend(c, queries[i], layer, out.selected[i]), hidden.data() + i * d);
        }
    }
    out.logits = forward_position(receiver, out.kv, tokens.back());
    return out;
}

std::vector<TokenSequence> synthetic_dataset(const ModelConfig& config, uint64_t seed, int count, int length) {
    std::vector<TokenSequence> out;
    out.reserve(static_cast<size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(i), 0x746f6b656e73ULL));
        TokenSequence seq(static_cast<size_t>(length));
        for (auto& t : seq) t = static_cast<int32_t>(rng.below(static_cast<uint64_t>(config.vocab_size)));
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace kvbridge
