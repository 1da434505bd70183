#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <map>

#include "kvbridge/errors.hpp"
#include "kvbridge/rng.hpp"
#include "kvbridge/scheduler.hpp"

using namespace kvbridge;

namespace {

std::vector<ScheduledRequest> golden_requests() {
    return {{"A", 0, "A", RecomputeConfig({{3, 9}}), 10, 1}, {"B", 2, "B", RecomputeConfig({{0, 2}}), 10, 1}};
}

// Tick-by-tick replay of the pipelined semantics with unit costs and integer arrivals.
std::vector<int> tick_oracle(const std::vector<ScheduledRequest>& reqs) {
    struct LinkJob {
        size_t req;
        bool is_e;
        int layer;
    };
    struct ComputeJob {
        size_t req;
        int layer;
        int needs_e;  // -1 when the job waits on no E cache
    };
    std::deque<LinkJob> link;
    std::map<std::string, std::deque<ComputeJob>> compute;
    for (size_t i = 0; i < reqs.size(); ++i) {
        const auto& r = reqs[i];
        for (int a : r.config.transition_layers()) link.push_back({i, true, a});
        for (int l : r.config.reused_layers(r.n_layers)) link.push_back({i, false, l});
        for (const auto& g : r.config.groups()) {
            for (int l = g.first; l <= g.last; ++l) {
                compute[r.model].push_back({i, l, l == g.first && g.first > 0 ? g.first : -1});
            }
        }
        compute.try_emplace(r.model);
    }
    std::vector<int> ready(reqs.size());
    for (size_t i = 0; i < reqs.size(); ++i) ready[i] = static_cast<int>(reqs[i].arrival);
    std::map<std::pair<size_t, int>, int> e_done;
    for (int t = 0; t < 100000; ++t) {
        // Work that completes at t + 1 starts at t.
        std::vector<std::pair<size_t, int>> arrivals_this_tick;
        if (!link.empty() && reqs[link.front().req].arrival <= t) {
            const auto job = link.front();
            link.pop_front();
            ready[job.req] = std::max(ready[job.req], t + 1);
            if (job.is_e) arrivals_this_tick.push_back({job.req, job.layer});
        }
        for (auto& [model, queue] : compute) {
            if (queue.empty()) continue;
            const auto& job = queue.front();
            if (reqs[job.req].arrival > t) continue;
            if (job.needs_e >= 0) {
                auto it = e_done.find({job.req, job.needs_e});
                if (it == e_done.end() || it->second > t) continue;
            }
            ready[job.req] = std::max(ready[job.req], t + 1);
            queue.pop_front();
        }
        for (const auto& k : arrivals_this_tick) e_done[k] = t + 1;
        bool idle = link.empty();
        for (const auto& [model, queue] : compute) idle = idle && queue.empty();
        if (idle) break;
    }
    return ready;
}

std::vector<ScheduledRequest> random_requests(Rng& rng, bool integer_arrivals) {
    const int n = 1 + static_cast<int>(rng.below(5));
    std::vector<ScheduledRequest> reqs;
    double t = 0;
    for (int i = 0; i < n; ++i) {
        ScheduledRequest r;
        r.id = "r" + std::to_string(i);
        r.n_layers = 4 + static_cast<int>(rng.below(13));
        t += integer_arrivals ? static_cast<double>(rng.below(6)) : rng.uniform() * 20.0;
        r.arrival = t;
        r.model = "m" + std::to_string(rng.below(3));
        r.positions = 1 + static_cast<int>(rng.below(200));
        std::vector<LayerRange> groups;
        const int n_groups = static_cast<int>(rng.below(4));
        for (int g = 0; g < n_groups; ++g) {
            const int a = static_cast<int>(rng.below(static_cast<uint64_t>(r.n_layers)));
            groups.push_back({a, a + static_cast<int>(rng.below(static_cast<uint64_t>(r.n_layers - a)))});
        }
        r.config = RecomputeConfig(groups);
        reqs.push_back(std::move(r));
    }
    return reqs;
}

void expect_timeline_invariants(const Timeline& t, const std::vector<ScheduledRequest>& reqs) {
    std::map<std::string, std::vector<const TimelineEvent*>> by_resource;
    // Zero-length anchors are markers and hold no resource.
    for (const auto& e : t.events) {
        if (e.end > e.start) by_resource[e.resource].push_back(&e);
    }
    for (auto& [res, events] : by_resource) {
        std::sort(events.begin(), events.end(), [](auto* a, auto* b) { return a->start < b->start; });
        for (size_t i = 1; i < events.size(); ++i) {
            EXPECT_LE(events[i - 1]->end, events[i]->start + 1e-9) << res;
        }
    }
    std::map<std::string, double> arrival;
    for (const auto& r : reqs) arrival[r.id] = r.arrival;
    std::map<std::pair<std::string, int>, double> e_end;
    for (const auto& e : t.events) {
        EXPECT_GE(e.start, arrival[e.request] - 1e-12);
        if (e.kind == EventKind::Anchor) {
            EXPECT_GE(e.end, e.start);
        } else {
            EXPECT_GT(e.end, e.start);
        }
        if (e.kind == EventKind::ETransfer) e_end[{e.request, e.layer}] = e.end;
    }
    for (const auto& r : reqs) {
        for (const auto& g : r.config.groups()) {
            if (g.first == 0) continue;
            for (const auto& e : t.events) {
                if (e.request == r.id && e.kind == EventKind::Recompute && e.layer == g.first) {
                    EXPECT_GE(e.start, e_end.at({r.id, g.first}) - 1e-9);
                }
            }
        }
    }
}

}  // namespace

TEST(Strategy, Parse) {
    EXPECT_EQ(parse_strategy("naive"), Strategy::Naive);
    EXPECT_EQ(parse_strategy("reuse-only"), Strategy::ReuseOnly);
    EXPECT_EQ(parse_strategy("reuse_only"), Strategy::ReuseOnly);
    EXPECT_EQ(parse_strategy("pipelined"), Strategy::Pipelined);
    EXPECT_THROW(parse_strategy("eager"), std::invalid_argument);
}

TEST(BytesOf, Formulas) {
    ModelConfig c;
    EXPECT_EQ(bytes_of(CacheKind::KV, 100, c), 12800u);
    EXPECT_EQ(bytes_of(CacheKind::E, 100, c), 25600u);
    c.n_kv_heads = 4;
    EXPECT_EQ(2 * bytes_of(CacheKind::E, 10, c), bytes_of(CacheKind::KV, 10, c));
    EXPECT_THROW(bytes_of(CacheKind::KV, 0, c), std::invalid_argument);
}

TEST(GoldenTimeline, Naive) {
    const auto t = plan(Strategy::Naive, golden_requests(), CostModel::unit());
    EXPECT_EQ(t.request("A").ready, 18);
    EXPECT_EQ(t.request("B").ready, 31);
    EXPECT_EQ(t.total_ttft(), 47);
}

TEST(GoldenTimeline, ReuseOnly) {
    const auto t = plan(Strategy::ReuseOnly, golden_requests(), CostModel::unit());
    EXPECT_EQ(t.request("A").ready, 11);
    EXPECT_EQ(t.request("B").ready, 21);
    EXPECT_EQ(t.total_ttft(), 30);
}

TEST(GoldenTimeline, Pipelined) {
    const auto t = plan(Strategy::Pipelined, golden_requests(), CostModel::unit());
    EXPECT_EQ(t.request("A").ready, 8);
    EXPECT_EQ(t.request("B").ready, 11);
    EXPECT_EQ(t.total_ttft(), 17);
    auto find = [&](const std::string& req, const std::string& label) {
        for (const auto& e : t.events) {
            if (e.request == req && e.label() == label) return std::pair{e.start, e.end};
        }
        return std::pair{-1.0, -1.0};
    };
    EXPECT_EQ(find("A", "E-transfer(3)"), (std::pair{0.0, 1.0}));
    EXPECT_EQ(find("A", "recompute(3)"), (std::pair{1.0, 2.0}));
    EXPECT_EQ(find("A", "recompute(9)"), (std::pair{7.0, 8.0}));
    EXPECT_EQ(find("A", "KV-transfer(2)"), (std::pair{3.0, 4.0}));
    EXPECT_EQ(find("B", "recompute(0)"), (std::pair{2.0, 3.0}));
    EXPECT_EQ(find("B", "KV-transfer(3)"), (std::pair{4.0, 5.0}));
    EXPECT_EQ(find("B", "KV-transfer(9)"), (std::pair{10.0, 11.0}));
}

TEST(EstimateTtft, ClosedForms) {
    const auto cost = CostModel::unit();
    EXPECT_EQ(estimate_ttft(golden_requests()[0], cost), 8);
    EXPECT_EQ(estimate_ttft({"x", 5, "m", RecomputeConfig(), 10, 1}, cost), 10);
    EXPECT_EQ(estimate_ttft({"x", 5, "m", RecomputeConfig::all(10), 10, 1}, cost), 10);
    const auto cheap = CostModel::unit(0.1, 1.0);
    EXPECT_NEAR(estimate_ttft({"x", 0, "m", RecomputeConfig({{4, 5}}), 8, 1}, cheap), 2.1, 1e-12);
}

TEST(EstimateTtft, ByteModeAnchor) {
    ModelConfig c;
    const auto cost = CostModel::bytes(c, 1000.0, 0.5);
    const ScheduledRequest r{"x", 0, "m", RecomputeConfig::all(8), 8, 10};
    // 8 layers of recompute at 10 positions plus the 8-layer anchor.
    EXPECT_DOUBLE_EQ(estimate_ttft(r, cost), 8 * 5.0 + 8 * 0.5);
    const ScheduledRequest reuse{"y", 0, "m", RecomputeConfig(), 8, 10};
    EXPECT_DOUBLE_EQ(estimate_ttft(reuse, cost), 8 * 1280 / 1000.0 + 4.0);
}

TEST(Pipelined, MatchesTickOracle) {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        auto reqs = random_requests(rng, true);
        const auto t = plan(Strategy::Pipelined, reqs, CostModel::unit());
        const auto oracle = tick_oracle(reqs);
        for (size_t i = 0; i < reqs.size(); ++i) {
            ASSERT_EQ(t.requests[i].ready, oracle[i]) << "trial " << trial << " request " << i;
        }
    }
}

TEST(Serial, ClosedFormReadyTimes) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto reqs = random_requests(rng, false);
        const auto naive = plan(Strategy::Naive, reqs, CostModel::unit());
        const auto reuse = plan(Strategy::ReuseOnly, reqs, CostModel::unit());
        double prev_n = 0, prev_r = 0;
        for (size_t i = 0; i < reqs.size(); ++i) {
            const auto& r = reqs[i];
            const double e = static_cast<double>(r.config.transition_layers().size());
            const double k = r.config.recomputed_layer_count();
            prev_n = std::max(r.arrival, prev_n) + e + r.n_layers + k;
            prev_r = std::max(r.arrival, prev_r) + e + (r.n_layers - k) + k;
            EXPECT_DOUBLE_EQ(naive.requests[i].ready, prev_n);
            EXPECT_DOUBLE_EQ(reuse.requests[i].ready, prev_r);
        }
    }
}

TEST(Properties, DominanceExclusivityCausalityBytes) {
    Rng rng(2025);
    ModelConfig c;
    for (int trial = 0; trial < 200; ++trial) {
        const auto reqs = random_requests(rng, false);
        const auto cost = trial % 2 ? CostModel::unit() : CostModel::bytes(c, 100.0 + rng.uniform() * 1e5, 0.01 + rng.uniform());
        const auto naive = plan(Strategy::Naive, reqs, cost);
        const auto reuse = plan(Strategy::ReuseOnly, reqs, cost);
        const auto pipe = plan(Strategy::Pipelined, reqs, cost);
        EXPECT_LE(pipe.total_ttft(), reuse.total_ttft() + 1e-9);
        EXPECT_LE(reuse.total_ttft(), naive.total_ttft() + 1e-9);
        for (const auto* t : {&naive, &reuse, &pipe}) {
            expect_timeline_invariants(*t, reqs);
            if (!cost.unit_mode) {
                for (const auto& e : t->events) {
                    if (e.on_link()) {
                        EXPECT_NEAR((e.end - e.start) * cost.link_bandwidth, double(e.bytes), 1e-6 * e.bytes);
                    }
                }
            }
        }
    }
}

TEST(Properties, PipelinedLinkIsWorkConserving) {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const auto reqs = random_requests(rng, false);
        const auto t = plan(Strategy::Pipelined, reqs, CostModel::unit());
        double link_free = 0;
        for (const auto& e : t.events) {
            if (!e.on_link()) continue;
            double arrival = 0;
            for (const auto& r : reqs) {
                if (r.id == e.request) arrival = r.arrival;
            }
            EXPECT_DOUBLE_EQ(e.start, std::max(link_free, arrival));
            link_free = e.end;
        }
    }
}

TEST(Plan, RejectsBadInput) {
    auto reqs = golden_requests();
    std::swap(reqs[0], reqs[1]);
    EXPECT_THROW(plan(Strategy::Naive, reqs, CostModel::unit()), std::invalid_argument);
    reqs = golden_requests();
    reqs[0].config = RecomputeConfig({{3, 10}});
    EXPECT_THROW(plan(Strategy::Pipelined, reqs, CostModel::unit()), std::invalid_argument);
}

TEST(Timeline, CsvFormat) {
    const auto t = plan(Strategy::Pipelined, golden_requests(), CostModel::unit());
    const auto csv = t.to_csv();
    EXPECT_EQ(csv.rfind("# kvbridge-timeline v1\nrequest,resource,label,start,end\nA,link,E-transfer(3),0,1\n", 0), 0u);
}

TEST(Scenario, ParsesBundledGolden) {
    const auto s = load_scenario(std::string(KVBRIDGE_SOURCE_DIR) + "/scenarios/golden_two_model.json");
    ASSERT_EQ(s.requests.size(), 2u);
    EXPECT_TRUE(s.cost.unit_mode);
    EXPECT_EQ(plan(Strategy::Pipelined, s.requests, s.cost).total_ttft(), 17);
}

TEST(Scenario, ParseErrorsCarryLocation) {
    const std::string bad_group = R"({"format": "kvbridge-scenario", "version": 1, "cost": {"mode": "unit"},
        "requests": [{"id": "A", "arrival": 0, "model": "A", "L": 4, "groups": [[1]]}]})";
    try {
        parse_scenario(bad_group);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.where(), "scenario.requests[0].groups[0]");
    }
    try {
        parse_scenario(R"({"format": "kvbridge-scenario", "version": 1, "cost": {"mode": "warp"}, "requests": []})");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.where(), "scenario.cost.mode");
    }
    try {
        parse_scenario(R"({"format": "kvbridge-scenario", "version": 3})");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.where(), "scenario.version");
    }
}
