#pragma once

#include <string>
#include <vector>

namespace kvbridge {

// Inclusive, 0-based layer range.
struct LayerRange {
    int first = 0;
    int last = 0;

    int size() const { return last - first + 1; }
    bool contains(int layer) const { return layer >= first && layer <= last; }
    friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

// Set of layer groups the receiver recomputes; every other layer reuses sender KV.
// Groups are kept sorted, disjoint and non-adjacent (touching ranges are merged).
class RecomputeConfig {
public:
    RecomputeConfig() = default;
    explicit RecomputeConfig(std::vector<LayerRange> groups);

    static RecomputeConfig all(int n_layers) { return RecomputeConfig({{0, n_layers - 1}}); }
    static RecomputeConfig none() { return {}; }

    const std::vector<LayerRange>& groups() const { return groups_; }
    bool empty() const { return groups_.empty(); }
    int recomputed_layer_count() const;
    bool recomputes(int layer) const;

    // Group starts above layer 0; these need the sender's E cache.
    std::vector<int> transition_layers() const;
    std::vector<int> reused_layers(int n_layers) const;

    // Throws std::invalid_argument if any layer falls outside [0, n_layers).
    void validate(int n_layers) const;

    std::string to_string() const;

    friend bool operator==(const RecomputeConfig&, const RecomputeConfig&) = default;

private:
    std::vector<LayerRange> groups_;
};

}  // namespace kvbridge
