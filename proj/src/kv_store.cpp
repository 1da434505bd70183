#include "kvbridge/kv_store.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace kvbridge {

namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw std::runtime_error("libsodium initialisation failed");
}

void write_le_floats(std::ostream& out, std::span<const float> values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> read_le_floats(std::istream& in, size_t count) {
    std::vector<unsigned char> bytes(count * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(in.gcount()) != bytes.size()) throw std::runtime_error("truncated blob");
    std::vector<float> out(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(bytes[i * 4 + b]) << (8 * b);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

constexpr const char* kSnapshotHeader = "# kvbridge-kvstore v1";

}  // namespace

std::string ContextId::hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : digest) {
        s += digits[b >> 4];
        s += digits[b & 0xf];
    }
    return s;
}

ContextId ContextId::from_hex(const std::string& hex) {
    if (hex.size() != 32) throw std::invalid_argument("context id must be 32 hex digits");
    ContextId id;
    for (size_t i = 0; i < 16; ++i) id.digest[i] = static_cast<uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
    return id;
}

ContextId context_hash(std::span<const int32_t> tokens) {
    ensure_sodium();
    std::vector<unsigned char> bytes(tokens.size() * 4);
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto v = static_cast<uint32_t>(tokens[i]);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(v >> (8 * b));
    }
    ContextId id;
    crypto_generichash(id.digest.data(), id.digest.size(), bytes.data(), bytes.size(), nullptr, 0);
    return id;
}

size_t payload_bytes(const CachePayload& payload) {
    return std::visit([](const auto& p) { return p.bytes(); }, payload);
}

size_t KvStore::store(const CacheKey& key, CachePayload payload, const ModelConfig& config) {
    if (key.layer < 0 || key.layer >= config.n_layers) {
        throw std::invalid_argument("cache key layer " + std::to_string(key.layer) + " out of range");
    }
    if (key.kind == CacheKind::KV) {
        const auto* kv = std::get_if<KVLayer>(&payload);
        if (!kv) throw std::invalid_argument("KV key with a non-KV payload");
        if (kv->k.heads() != config.n_kv_heads || kv->v.heads() != config.n_kv_heads ||
            kv->k.head_dim() != config.head_dim || kv->v.head_dim() != config.head_dim ||
            kv->k.positions() != kv->v.positions()) {
            throw std::invalid_argument("KV payload shape does not match the model config");
        }
    } else {
        const auto* e = std::get_if<ECache>(&payload);
        if (!e) throw std::invalid_argument("E key with a non-E payload");
        if (e->d_model != config.d_model || e->layer != key.layer ||
            e->hidden.size() != static_cast<size_t>(e->positions()) * config.d_model) {
            throw std::invalid_argument("E payload shape does not match the model config");
        }
    }
    return store(key, std::move(payload));
}

size_t KvStore::store(const CacheKey& key, CachePayload payload) {
    const bool is_kv = std::holds_alternative<KVLayer>(payload);
    if (is_kv != (key.kind == CacheKind::KV)) throw std::invalid_argument("payload kind does not match key kind");
    const size_t bytes = payload_bytes(payload);
    std::unique_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end() && *it->second.payload == payload) {
        it->second.last_used = ++clock_;
        return bytes;
    }
    if (capacity_ && bytes > *capacity_) {
        throw EvictionRefused("entry of " + std::to_string(bytes) + " bytes exceeds store capacity " +
                              std::to_string(*capacity_));
    }
    if (it != entries_.end()) {
        total_bytes_ -= it->second.bytes;
        entries_.erase(it);
    }
    evict_for(bytes);
    entries_[key] = Entry{std::make_shared<const CachePayload>(std::move(payload)), bytes, ++clock_};
    total_bytes_ += bytes;
    return bytes;
}

void KvStore::evict_for(size_t incoming) {
    if (!capacity_) return;
    while (total_bytes_ + incoming > *capacity_ && !entries_.empty()) {
        auto victim = std::min_element(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
            return a.second.last_used < b.second.last_used;
        });
        total_bytes_ -= victim->second.bytes;
        entries_.erase(victim);
    }
}

std::optional<CachePayload> KvStore::fetch(const CacheKey& key) const {
    std::shared_ptr<const CachePayload> payload;
    {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        it->second.last_used = ++clock_;
        payload = it->second.payload;
    }
    return *payload;
}

bool KvStore::contains(const CacheKey& key) const {
    std::shared_lock lock(mutex_);
    return entries_.count(key) > 0;
}

size_t KvStore::total_bytes() const {
    std::shared_lock lock(mutex_);
    return total_bytes_;
}

size_t KvStore::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::vector<CacheKey> KvStore::keys() const {
    std::shared_lock lock(mutex_);
    std::vector<CacheKey> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

void KvStore::save_snapshot(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::shared_lock lock(mutex_);
    std::ofstream index(dir / "index.tsv");
    if (!index) throw std::runtime_error("cannot write " + (dir / "index.tsv").string());
    index << kSnapshotHeader << "\n";
    index << "# context\tmodel\tlayer\tkind\tblob\tbytes\tpositions\tdim0\tdim1\n";
    size_t n = 0;
    for (const auto& [key, entry] : entries_) {
        char name[32];
        std::snprintf(name, sizeof(name), "blob_%06zu.f32", n++);
        std::ofstream blob(dir / name, std::ios::binary);
        if (!blob) throw std::runtime_error(std::string("cannot write blob ") + name);
        int positions = 0, dim0 = 0, dim1 = 0;
        if (const auto* kv = std::get_if<KVLayer>(entry.payload.get())) {
            write_le_floats(blob, kv->k.flatten());
            write_le_floats(blob, kv->v.flatten());
            positions = kv->positions();
            dim0 = kv->k.heads();
            dim1 = kv->k.head_dim();
        } else {
            const auto& e = std::get<ECache>(*entry.payload);
            write_le_floats(blob, e.hidden);
            positions = e.positions();
            dim0 = e.d_model;
        }
        if (key.model.find_first_of("\t\n") != std::string::npos) {
            throw std::invalid_argument("model id contains a tab or newline");
        }
        index << key.context.hex() << '\t' << key.model << '\t' << key.layer << '\t' << to_string(key.kind) << '\t'
              << name << '\t' << entry.bytes << '\t' << positions << '\t' << dim0 << '\t' << dim1 << '\n';
    }
}

std::unique_ptr<KvStore> KvStore::load_snapshot(const std::filesystem::path& dir) {
    std::ifstream index(dir / "index.tsv");
    if (!index) throw std::runtime_error("cannot read " + (dir / "index.tsv").string());
    auto store = std::make_unique<KvStore>();
    std::string line;
    int line_no = 0;
    if (!std::getline(index, line) || line != kSnapshotHeader) {
        throw ParseError("index.tsv:1", "unsupported snapshot header");
    }
    ++line_no;
    while (std::getline(index, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::string where = "index.tsv:" + std::to_string(line_no);
        std::istringstream fields(line);
        std::string ctx, model, kind, blob_name;
        int layer = 0, positions = 0, dim0 = 0, dim1 = 0;
        size_t bytes = 0;
        if (!std::getline(fields, ctx, '\t') || !std::getline(fields, model, '\t') || !(fields >> layer) ||
            !(fields >> kind) || !(fields >> blob_name) || !(fields >> bytes) || !(fields >> positions) ||
            !(fields >> dim0) || !(fields >> dim1)) {
            throw ParseError(where, "expected 9 tab-separated fields");
        }
        if (kind != "KV" && kind != "E") throw ParseError(where, "unknown kind '" + kind + "'");
        CacheKey key{ContextId::from_hex(ctx), model, layer, kind == "KV" ? CacheKind::KV : CacheKind::E};
        std::ifstream blob(dir / blob_name, std::ios::binary);
        if (!blob) throw ParseError(where, "missing blob " + blob_name);
        if (key.kind == CacheKind::KV) {
            const size_t count = static_cast<size_t>(positions) * dim0 * dim1;
            auto k = read_le_floats(blob, count);
            auto v = read_le_floats(blob, count);
            store->store(key, KVLayer{HeadTensor::from_flat(dim0, positions, dim1, k),
                                      HeadTensor::from_flat(dim0, positions, dim1, v)});
        } else {
            store->store(key, ECache{layer, dim0, read_le_floats(blob, static_cast<size_t>(positions) * dim0)});
        }
        if (payload_bytes(*store->fetch(key)) != bytes) throw ParseError(where, "byte count does not match blob");
    }
    return store;
}

size_t publish_prefill(KvStore& store, const std::string& model_id, std::span<const int32_t> tokens,
                       const PrefillResult& prefill, StoreMode mode, const RecomputeConfig& active) {
    const auto context = context_hash(tokens);
    const int window = static_cast<int>(tokens.size()) - 1;
    size_t bytes = 0;
    for (size_t l = 0; l < prefill.kv.layers.size(); ++l) {
        bytes += store.store({context, model_id, static_cast<int>(l), CacheKind::KV},
                             prefill.kv.layers[l].prefix(window));
    }
    std::vector<int> e_layers;
    if (mode == StoreMode::Profiling) {
        for (const auto& e : prefill.e) e_layers.push_back(e.layer);
    } else {
        e_layers = active.transition_layers();
    }
    for (int l : e_layers) {
        if (l < 0 || static_cast<size_t>(l) >= prefill.e.size()) {
            throw std::invalid_argument("no E cache for layer " + std::to_string(l) + " in the prefill result");
        }
        bytes += store.store({context, model_id, l, CacheKind::E}, prefill.e[static_cast<size_t>(l)]);
    }
    return bytes;
}

SenderCaches fetch_sender_caches(const KvStore& store, const std::string& model_id, std::span<const int32_t> tokens,
                                 int n_layers, const RecomputeConfig& config) {
    const auto context = context_hash(tokens);
    SenderCaches out;
    for (int l : config.reused_layers(n_layers)) {
        if (auto p = store.fetch({context, model_id, l, CacheKind::KV})) out.kv.emplace(l, std::get<KVLayer>(std::move(*p)));
    }
    for (int l : config.transition_layers()) {
        if (auto p = store.fetch({context, model_id, l, CacheKind::E})) out.e.emplace(l, std::get<ECache>(std::move(*p)));
    }
    return out;
}

}  // namespace kvbridge
