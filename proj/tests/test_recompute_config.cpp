#include <gtest/gtest.h>

#include "kvbridge/recompute_config.hpp"

using namespace kvbridge;

TEST(RecomputeConfig, SortsAndMergesTouchingRanges) {
    RecomputeConfig c({{5, 6}, {0, 1}, {2, 3}});
    ASSERT_EQ(c.groups().size(), 2u);
    EXPECT_EQ(c.groups()[0], (LayerRange{0, 3}));
    EXPECT_EQ(c.groups()[1], (LayerRange{5, 6}));
    EXPECT_EQ(c.recomputed_layer_count(), 6);
}

TEST(RecomputeConfig, MergesOverlaps) {
    RecomputeConfig c({{2, 5}, {4, 7}});
    ASSERT_EQ(c.groups().size(), 1u);
    EXPECT_EQ(c.groups()[0], (LayerRange{2, 7}));
}

TEST(RecomputeConfig, TransitionLayersSkipLayerZero) {
    RecomputeConfig c({{0, 2}, {5, 5}, {7, 8}});
    EXPECT_EQ(c.transition_layers(), (std::vector<int>{5, 7}));
    EXPECT_EQ(c.reused_layers(10), (std::vector<int>{3, 4, 6, 9}));
}

TEST(RecomputeConfig, RejectsInvertedRange) { EXPECT_THROW(RecomputeConfig({{3, 2}}), std::invalid_argument); }

TEST(RecomputeConfig, ValidateChecksLayerBounds) {
    EXPECT_NO_THROW(RecomputeConfig({{0, 7}}).validate(8));
    EXPECT_THROW(RecomputeConfig({{6, 8}}).validate(8), std::invalid_argument);
    EXPECT_THROW(RecomputeConfig({{-1, 2}}).validate(8), std::invalid_argument);
}

TEST(RecomputeConfig, AllAndNone) {
    EXPECT_EQ(RecomputeConfig::all(8).recomputed_layer_count(), 8);
    EXPECT_TRUE(RecomputeConfig::none().empty());
    EXPECT_EQ(RecomputeConfig::none().reused_layers(3), (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(RecomputeConfig({{4, 5}}).to_string(), "[[4,5]]");
}
