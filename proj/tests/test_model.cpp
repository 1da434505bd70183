#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "kvbridge/errors.hpp"
#include "kvbridge/model.hpp"
#include "kvbridge/rng.hpp"

using namespace kvbridge;

namespace {

ModelConfig small_config(uint64_t seed = 7) {
    ModelConfig c;
    c.base_seed = seed;
    return c;
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
    EXPECT_EQ(a.size(), b.size());
    float m = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Straightforward double-precision forward pass over the whole sequence.
std::vector<double> reference_logits(const ModelWeights& m, const TokenSequence& tokens) {
    const auto& c = m.config;
    const int n = static_cast<int>(tokens.size());
    const int d = c.d_model, hd = c.head_dim, kvw = c.n_kv_heads * hd;
    auto norm = [&](const std::vector<double>& x, const std::vector<float>& g) {
        double ss = 0;
        for (double v : x) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss / d + 1e-5);
        std::vector<double> y(x.size());
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * g[i];
        return y;
    };
    auto mul = [](const std::vector<double>& x, const std::vector<float>& w, int out) {
        std::vector<double> y(static_cast<size_t>(out), 0.0);
        for (size_t i = 0; i < x.size(); ++i)
            for (int j = 0; j < out; ++j) y[j] += x[i] * w[i * out + j];
        return y;
    };
    std::vector<std::vector<double>> h(n, std::vector<double>(d));
    for (int p = 0; p < n; ++p)
        for (int i = 0; i < d; ++i) h[p][i] = m.embedding[static_cast<size_t>(tokens[p]) * d + i];
    for (const auto& lw : m.layers) {
        std::vector<std::vector<double>> q(n), k(n), v(n);
        for (int p = 0; p < n; ++p) {
            auto x = norm(h[p], lw.attn_norm);
            q[p] = mul(x, lw.wq, d);
            k[p] = mul(x, lw.wk, kvw);
            v[p] = mul(x, lw.wv, kvw);
        }
        for (int p = 0; p < n; ++p) {
            std::vector<double> attn(d, 0.0);
            for (int head = 0; head < c.n_heads; ++head) {
                const int g = head / (c.n_heads / c.n_kv_heads);
                std::vector<double> s(p + 1);
                double mx = -1e300;
                for (int j = 0; j <= p; ++j) {
                    double dot = 0;
                    for (int i = 0; i < hd; ++i) dot += q[p][head * hd + i] * k[j][g * hd + i];
                    s[j] = dot / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, s[j]);
                }
                double z = 0;
                for (auto& e : s) z += (e = std::exp(e - mx));
                for (int j = 0; j <= p; ++j)
                    for (int i = 0; i < hd; ++i) attn[head * hd + i] += s[j] / z * v[j][g * hd + i];
            }
            auto o = mul(attn, lw.wo, d);
            for (int i = 0; i < d; ++i) h[p][i] += o[i];
            auto up = mul(norm(h[p], lw.ffn_norm), lw.w_up, c.d_ff);
            for (auto& u : up) u = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
            auto down = mul(up, lw.w_down, d);
            for (int i = 0; i < d; ++i) h[p][i] += down[i];
        }
    }
    return mul(norm(h[n - 1], m.final_norm), m.unembedding, c.vocab_size);
}

std::vector<RecomputeConfig> random_configs(int n_layers, uint64_t seed, int count) {
    Rng rng(seed);
    std::vector<RecomputeConfig> out;
    for (int i = 0; i < count; ++i) {
        std::vector<LayerRange> groups;
        const int n_groups = static_cast<int>(rng.below(3));
        for (int g = 0; g < n_groups; ++g) {
            const int a = static_cast<int>(rng.below(static_cast<uint64_t>(n_layers)));
            const int b = a + static_cast<int>(rng.below(static_cast<uint64_t>(n_layers - a)));
            groups.push_back({a, b});
        }
        out.emplace_back(groups);
    }
    return out;
}

}  // namespace

TEST(ModelConfig, ValidatesShapes) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.head_dim = 8;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ModelConfig{};
    c.n_kv_heads = 3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ModelConfig{};
    c.max_seq = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(BuildModel, DeterministicWeights) {
    const auto a = build_model(small_config());
    const auto b = build_model(small_config());
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_EQ(a.layers, b.layers);
    EXPECT_EQ(a.unembedding, b.unembedding);
}

TEST(BuildModel, ZeroPerturbationIsBase) {
    const auto base = build_model(small_config());
    const auto same = build_model(small_config(), PerturbationSpec{std::vector<double>(8, 0.0), 99});
    EXPECT_EQ(base.layers, same.layers);
    EXPECT_EQ(base.embedding, same.embedding);
}

TEST(BuildModel, PerturbationTouchesOnlyItsLayers) {
    const auto base = build_model(small_config());
    const auto variant = build_model(small_config(), PerturbationSpec{{0, 0, 0, 0, 0.5, 0.5, 0, 0}, 3});
    for (int l = 0; l < 8; ++l) {
        const bool touched = l == 4 || l == 5;
        EXPECT_EQ(base.layers[l] == variant.layers[l], !touched) << "layer " << l;
    }
    const auto& w = base.layers[4].wq;
    const auto& v = variant.layers[4].wq;
    size_t changed = 0;
    for (size_t i = 0; i < w.size(); ++i) changed += w[i] != v[i];
    EXPECT_GT(changed, w.size() * 9 / 10);
}

TEST(BuildModel, RejectsPerturbationLengthMismatch) {
    EXPECT_THROW(build_model(small_config(), PerturbationSpec{{0.1, 0.1}, 0}), std::invalid_argument);
}

TEST(FullPrefill, MatchesDoublePrecisionReference) {
    const auto m = build_model(small_config());
    for (const auto& tokens : synthetic_dataset(m.config, 11, 3, 24)) {
        const auto got = full_prefill(m, tokens);
        const auto want = reference_logits(m, tokens);
        double scale = 0, err = 0;
        for (size_t i = 0; i < want.size(); ++i) {
            scale = std::max(scale, std::abs(want[i]));
            err = std::max(err, std::abs(want[i] - got.logits[i]));
        }
        EXPECT_LT(err, 1e-4 * scale);
        const auto best = std::max_element(want.begin(), want.end()) - want.begin();
        EXPECT_EQ(argmax(got.logits), best);
    }
}

TEST(FullPrefill, CacheShapesAndLayerZeroE) {
    const auto m = build_model(small_config());
    const TokenSequence tokens{17, 42};
    const auto r = full_prefill(m, tokens);
    ASSERT_EQ(r.kv.layers.size(), 8u);
    for (const auto& l : r.kv.layers) EXPECT_EQ(l.positions(), 2);
    ASSERT_EQ(r.e.size(), 8u);
    ASSERT_EQ(r.e[0].positions(), 1);
    const std::vector<float> row(m.embedding.begin() + 17 * 64, m.embedding.begin() + 18 * 64);
    EXPECT_EQ(r.e[0].hidden, row);
    EXPECT_EQ(r.logits.size(), 256u);
}

TEST(FullPrefill, Deterministic) {
    const auto m = build_model(small_config());
    const auto tokens = synthetic_dataset(m.config, 5, 1, 30)[0];
    const auto a = full_prefill(m, tokens);
    const auto b = full_prefill(m, tokens);
    EXPECT_EQ(a.kv, b.kv);
    EXPECT_EQ(a.logits, b.logits);
    for (size_t l = 0; l < a.e.size(); ++l) EXPECT_EQ(a.e[l], b.e[l]);
}

TEST(FullPrefill, ByteSizes) {
    const auto m = build_model(small_config());
    const auto tokens = synthetic_dataset(m.config, 5, 1, 101)[0];
    const auto r = full_prefill(m, tokens);
    // E covers the 100-position reuse window; compare against a 100-position KV prefix.
    EXPECT_EQ(r.kv.layers[0].prefix(100).bytes(), 12800u);
    EXPECT_EQ(r.e[3].bytes(), 25600u);
    EXPECT_EQ(r.e[3].bytes(), 2 * r.kv.layers[3].prefix(100).bytes());
}

TEST(FullPrefill, RejectsBadInput) {
    const auto m = build_model(small_config());
    EXPECT_THROW(full_prefill(m, TokenSequence{1}), DegenerateInput);
    EXPECT_THROW(full_prefill(m, TokenSequence(257, 1)), std::invalid_argument);
    EXPECT_THROW(full_prefill(m, TokenSequence{1, 256}), std::invalid_argument);
}

TEST(PartialPrefill, RecomputeAllIsBitwiseFullPrefill) {
    const auto sender = build_model(small_config(1));
    const auto receiver = build_model(small_config(2));
    const auto tokens = synthetic_dataset(sender.config, 3, 1, 40)[0];
    const auto full = full_prefill(receiver, tokens);
    const auto mixed =
        partial_prefill(receiver, tokens, RecomputeConfig::all(8), SenderCaches::from_prefill(full_prefill(sender, tokens)));
    EXPECT_EQ(mixed.logits, full.logits);
    EXPECT_EQ(mixed.kv, full.kv);
}

TEST(PartialPrefill, IdentityReuseAcrossConfigs) {
    const auto m = build_model(small_config());
    const auto data = synthetic_dataset(m.config, 8, 4, 32);
    const auto configs = random_configs(8, 123, 12);
    for (const auto& tokens : data) {
        const auto full = full_prefill(m, tokens);
        const auto caches = SenderCaches::from_prefill(full);
        for (const auto& cfg : configs) {
            const auto mixed = partial_prefill(m, tokens, cfg, caches);
            EXPECT_LE(max_abs_diff(mixed.logits, full.logits), 1e-5f) << cfg.to_string();
            EXPECT_EQ(argmax(mixed.logits), argmax(full.logits));
            EXPECT_EQ(mixed.kv.positions(), static_cast<int>(tokens.size()));
        }
    }
}

TEST(PartialPrefill, MissingCachesAreNamed) {
    const auto m = build_model(small_config());
    const auto tokens = synthetic_dataset(m.config, 8, 1, 16)[0];
    auto caches = SenderCaches::from_prefill(full_prefill(m, tokens));
    caches.kv.erase(6);
    try {
        partial_prefill(m, tokens, RecomputeConfig({{2, 3}}), caches);
        FAIL() << "expected a cache miss";
    } catch (const CacheMiss& e) {
        EXPECT_EQ(e.layer(), 6);
        EXPECT_EQ(e.kind(), CacheKind::KV);
    }
    caches = SenderCaches::from_prefill(full_prefill(m, tokens));
    caches.e.erase(2);
    try {
        partial_prefill(m, tokens, RecomputeConfig({{2, 3}}), caches);
        FAIL() << "expected a cache miss";
    } catch (const CacheMiss& e) {
        EXPECT_EQ(e.layer(), 2);
        EXPECT_EQ(e.kind(), CacheKind::E);
    }
    // A group at layer 0 needs no E cache.
    caches.e.clear();
    EXPECT_NO_THROW(partial_prefill(m, tokens, RecomputeConfig({{0, 3}}), caches));
    EXPECT_THROW(partial_prefill(m, TokenSequence{3}, RecomputeConfig(), caches), DegenerateInput);
}

TEST(PartialPrefill, CriticalBlockRecomputeBeatsFullReuse) {
    const auto base = build_model(small_config(1000));
    const auto variant = build_model(small_config(1000), PerturbationSpec::block(8, 4, 5, 1.0, 77));
    double with_block = 0, without = 0;
    for (const auto& tokens : synthetic_dataset(base.config, 42, 8, 48)) {
        with_block += agreement_score(base, variant, tokens, RecomputeConfig({{4, 5}}), 32).score;
        without += agreement_score(base, variant, tokens, RecomputeConfig(), 32).score;
    }
    EXPECT_GT(with_block, without);
}

TEST(DecodeGreedy, SingleStepIsArgmax) {
    const auto m = build_model(small_config());
    const auto tokens = synthetic_dataset(m.config, 1, 1, 10)[0];
    auto r = full_prefill(m, tokens);
    const auto d = decode_greedy(m, r.kv, r.logits, 1);
    ASSERT_EQ(d.tokens.size(), 1u);
    EXPECT_EQ(d.tokens[0], argmax(r.logits));
    EXPECT_EQ(d.cache.positions(), 11);
}

TEST(DecodeGreedy, RespectsMaxSeq) {
    auto c = small_config();
    c.max_seq = 16;
    const auto m = build_model(c);
    const auto tokens = synthetic_dataset(c, 1, 1, 10)[0];
    auto r = full_prefill(m, tokens);
    EXPECT_NO_THROW(decode_greedy(m, r.kv, r.logits, 6));
    EXPECT_THROW(decode_greedy(m, r.kv, r.logits, 7), std::invalid_argument);
}

TEST(DecodeGreedy, ArgmaxTiesPickLowestId) {
    const std::vector<float> logits{0.5f, 2.0f, 2.0f, -1.0f};
    EXPECT_EQ(argmax(logits), 1);
}

TEST(DecodeGreedy, GoldenStream) {
    const auto base = build_model(small_config(1000));
    const auto variant = build_model(small_config(1000), PerturbationSpec::block(8, 4, 5, 1.0, 77));
    const auto tokens = synthetic_dataset(base.config, 500, 1, 48)[0];
    auto r = full_prefill(variant, tokens);
    const auto d = decode_greedy(variant, std::move(r.kv), r.logits, 32);
    const TokenSequence golden{21, 52, 92, 154, 7, 236, 90, 30, 162, 93, 31, 146, 152, 104, 2, 137,
                               21, 52, 92, 154, 7, 208, 153, 9, 231, 164, 213, 101, 22, 247, 122, 21};
    EXPECT_EQ(d.tokens, golden);
}

TEST(Agreement, CompareStreams) {
    const TokenSequence a{1, 2, 3, 4}, b{1, 2, 9, 4};
    const auto s = compare_streams(a, b);
    EXPECT_DOUBLE_EQ(s.score, 0.75);
    EXPECT_EQ(s.first_divergence, 2);
    EXPECT_EQ(compare_streams(a, a).first_divergence, 4);
}

TEST(Agreement, IdentityAndRecomputeAll) {
    const auto base = build_model(small_config(1000));
    const auto variant = build_model(small_config(1000), PerturbationSpec::block(8, 4, 5, 1.0, 77));
    const auto tokens = synthetic_dataset(base.config, 9, 1, 40)[0];
    EXPECT_EQ(agreement_score(base, base, tokens, RecomputeConfig(), 32).score, 1.0);
    EXPECT_EQ(agreement_score(base, variant, tokens, RecomputeConfig::all(8), 32).score, 1.0);
}

TEST(Agreement, FullReuseDamagesPerturbedPair) {
    const auto base = build_model(small_config(1000));
    const auto variant = build_model(small_config(1000), PerturbationSpec::block(8, 4, 5, 1.0, 77));
    double worst = 1.0;
    for (const auto& tokens : synthetic_dataset(base.config, 42, 8, 48)) {
        const auto a = agreement_score(base, variant, tokens, RecomputeConfig(), 32);
        EXPECT_GE(a.score, 0.0);
        EXPECT_LE(a.score, 1.0);
        worst = std::min(worst, a.score);
    }
    EXPECT_LT(worst, 1.0);
}

TEST(TokenSelective, FullRatioMatchesFullPrefill) {
    const auto base = build_model(small_config(1));
    const auto variant = build_model(small_config(1), PerturbationSpec::block(8, 4, 5, 1.0, 77));
    const auto tokens = synthetic_dataset(base.config, 4, 1, 30)[0];
    const auto r = token_selective_prefill(variant, tokens, SenderCaches::from_prefill(full_prefill(base, tokens)), 1.0);
    EXPECT_LE(max_abs_diff(r.logits, full_prefill(variant, tokens).logits), 1e-5f);
    EXPECT_EQ(r.selected.size(), tokens.size() - 1);
}

TEST(TokenSelective, IdentityHasZeroDeviationAndLowestPositionTies) {
    const auto m = build_model(small_config());
    const auto tokens = synthetic_dataset(m.config, 4, 1, 21)[0];
    const auto full = full_prefill(m, tokens);
    const auto r = token_selective_prefill(m, tokens, SenderCaches::from_prefill(full), 0.15);
    for (double dv : r.deviation) EXPECT_EQ(dv, 0.0);
    EXPECT_EQ(r.selected, (std::vector<int>{0, 1, 2}));  // ceil(0.15 * 20)
    EXPECT_LE(max_abs_diff(r.logits, full.logits), 1e-5f);
}

TEST(TokenSelective, SelectsLargestLayerZeroDeviation) {
    const auto base = build_model(small_config(1));
    // Layer 0 differs, so layer-0 K/V deviations are non-trivial.
    const auto variant = build_model(small_config(1), PerturbationSpec::block(8, 0, 0, 0.5, 5));
    const auto tokens = synthetic_dataset(base.config, 4, 1, 41)[0];
    const auto r = token_selective_prefill(variant, tokens, SenderCaches::from_prefill(full_prefill(base, tokens)), 0.1);
    ASSERT_EQ(r.selected.size(), 4u);
    std::vector<int> order(r.deviation.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return r.deviation[a] > r.deviation[b]; });
    std::vector<int> top(order.begin(), order.begin() + 4);
    std::sort(top.begin(), top.end());
    EXPECT_EQ(r.selected, top);
}
