#include "kvbridge/recompute_config.hpp"

#include <algorithm>
#include <stdexcept>

namespace kvbridge {

RecomputeConfig::RecomputeConfig(std::vector<LayerRange> groups) {
    for (const auto& g : groups) {
        if (g.first < 0 || g.last < g.first) {
            throw std::invalid_argument("invalid layer range [" + std::to_string(g.first) + "," +
                                        std::to_string(g.last) + "]");
        }
    }
    std::sort(groups.begin(), groups.end(),
              [](const LayerRange& a, const LayerRange& b) { return a.first < b.first; });
    for (const auto& g : groups) {
        if (!groups_.empty() && g.first <= groups_.back().last + 1) {
            groups_.back().last = std::max(groups_.back().last, g.last);
        } else {
            groups_.push_back(g);
        }
    }
}

int RecomputeConfig::recomputed_layer_count() const {
    int k = 0;
    for (const auto& g : groups_) k += g.size();
    return k;
}

bool RecomputeConfig::recomputes(int layer) const {
    return std::any_of(groups_.begin(), groups_.end(), [&](const LayerRange& g) { return g.contains(layer); });
}

std::vector<int> RecomputeConfig::transition_layers() const {
    std::vector<int> out;
    for (const auto& g : groups_) {
        if (g.first > 0) out.push_back(g.first);
    }
    return out;
}

std::vector<int> RecomputeConfig::reused_layers(int n_layers) const {
    std::vector<int> out;
    for (int l = 0; l < n_layers; ++l) {
        if (!recomputes(l)) out.push_back(l);
    }
    return out;
}

void RecomputeConfig::validate(int n_layers) const {
    for (const auto& g : groups_) {
        if (g.last >= n_layers) {
            throw std::invalid_argument("recompute group " + to_string() + " out of range for " +
                                        std::to_string(n_layers) + " layers");
        }
    }
}

std::string RecomputeConfig::to_string() const {
    std::string s = "[";
    for (size_t i = 0; i < groups_.size(); ++i) {
        if (i) s += ",";
        s += "[" + std::to_string(groups_[i].first) + "," + std::to_string(groups_[i].last) + "]";
    }
    return s + "]";
}

}  // namespace kvbridge
