#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kvbridge/errors.hpp"
#include "kvbridge/model.hpp"

namespace kvbridge {

// BLAKE2b with a 16-byte digest over the token ids encoded as little-endian u32.
inline constexpr const char* kContextHashName = "blake2b-128/u32le";

struct ContextId {
    std::array<uint8_t, 16> digest{};

    std::string hex() const;
    static ContextId from_hex(const std::string& hex);

    friend auto operator<=>(const ContextId&, const ContextId&) = default;
};

ContextId context_hash(std::span<const int32_t> tokens);

struct CacheKey {
    ContextId context;
    std::string model;
    int layer = 0;
    CacheKind kind = CacheKind::KV;

    friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

using CachePayload = std::variant<KVLayer, ECache>;

size_t payload_bytes(const CachePayload& payload);

// Which E layers a sender prefill publishes.
enum class StoreMode {
    Profiling,  // every layer, so any group can be evaluated
    Serving,    // only the transition layers of the active config
};

// Content-addressed, layer-granular cache store. Thread-safe.
//
// With a byte capacity set, inserting evicts the least recently fetched
// entries; an entry larger than the capacity is refused.
class KvStore {
public:
    KvStore() = default;
    explicit KvStore(std::optional<size_t> capacity_bytes) : capacity_(capacity_bytes) {}

    KvStore(const KvStore&) = delete;
    KvStore& operator=(const KvStore&) = delete;

    // Returns the payload's byte size. Re-storing identical content is a no-op.
    size_t store(const CacheKey& key, CachePayload payload);

    // Shape-checked store against the geometry of `config`.
    size_t store(const CacheKey& key, CachePayload payload, const ModelConfig& config);

    std::optional<CachePayload> fetch(const CacheKey& key) const;

    bool contains(const CacheKey& key) const;
    size_t total_bytes() const;
    size_t size() const;
    std::vector<CacheKey> keys() const;
    std::optional<size_t> capacity() const { return capacity_; }

    // Directory of little-endian f32 blobs plus an `index.tsv`.
    void save_snapshot(const std::filesystem::path& dir) const;
    static std::unique_ptr<KvStore> load_snapshot(const std::filesystem::path& dir);

private:
    struct Entry {
        std::shared_ptr<const CachePayload> payload;
        size_t bytes = 0;
        mutable uint64_t last_used = 0;
    };

    void evict_for(size_t incoming);

    mutable std::shared_mutex mutex_;
    std::map<CacheKey, Entry> entries_;
    std::optional<size_t> capacity_;
    size_t total_bytes_ = 0;
    mutable std::atomic<uint64_t> clock_{0};
};

// Publishes a sender's full-prefill caches for `tokens`: KV at every layer over the
// reuse window, E per `mode`. Returns the bytes stored.
size_t publish_prefill(KvStore& store, const std::string& model_id, std::span<const int32_t> tokens,
                       const PrefillResult& prefill, StoreMode mode, const RecomputeConfig& active = {});

// Fetches what `config` needs from the store. Absent entries are left out, so
// partial_prefill reports them as cache misses.
SenderCaches fetch_sender_caches(const KvStore& store, const std::string& model_id, std::span<const int32_t> tokens,
                                 int n_layers, const RecomputeConfig& config);

}  // namespace kvbridge
