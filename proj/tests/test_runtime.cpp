#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "pimsherpa/runtime.hpp"

using namespace sherpa;

namespace {

System one_b() {
    PlacementPolicy pol;
    pol.active_channels = 4;
    return make_system(presets::llama32_1b(), presets::s24plus(), s24plus_map(), pol);
}

System toy(std::uint64_t layers) {
    auto m = presets::toy64();
    m.layers = layers;
    return make_system(m, presets::s24plus(), desk_1k_map(), PlacementPolicy{});
}

double gap(const System& sys, std::uint64_t sl) {
    const double d = run_prefill(ScenarioKind::S_DDB, sys, sl).ttft_seconds();
    const double f = run_prefill(ScenarioKind::FACIL_O, sys, sl).ttft_seconds();
    return (d - f) / f;
}

std::size_t copy_critical(const PrefillResult& r) {
    return static_cast<std::size_t>(std::count_if(r.steps.begin(), r.steps.end(), [](const StepCritical& s) { return s.copy_critical(); }));
}

const std::vector<std::uint64_t> kGrid{64, 96, 128, 160, 192};

}  // namespace

TEST(Scenario, NamesRoundTrip) {
    for (auto k : kAllScenarios) EXPECT_EQ(scenario_from_string(std::string(to_string(k))), k);
    EXPECT_EQ(scenario_from_string("s-ddb"), ScenarioKind::S_DDB);
    EXPECT_EQ(scenario_from_string("facil-o"), ScenarioKind::FACIL_O);
    EXPECT_FALSE(scenario_from_string("ddb").has_value());
}

TEST(Prefill, OwrIsFacilPlusSerialCopies) {
    const auto sys = one_b();
    for (std::uint64_t sl : {1, 16, 32, 64, 192}) {
        const auto owr = run_prefill(ScenarioKind::S_OWR, sys, sl);
        const auto facil = run_prefill(ScenarioKind::FACIL_O, sys, sl);
        EXPECT_EQ(owr.ttft, facil.ttft + owr.smc_total) << sl;
        EXPECT_EQ(owr.gemm_total, facil.gemm_total);
        EXPECT_EQ(owr.copied_bytes, sys.padding.pim_bytes);
    }
}

TEST(Prefill, WdAndCgemmMatchFacil) {
    const auto sys = one_b();
    const auto f = run_prefill(ScenarioKind::FACIL_O, sys, 64).ttft;
    EXPECT_EQ(run_prefill(ScenarioKind::WD, sys, 64).ttft, f);
    EXPECT_EQ(run_prefill(ScenarioKind::C_GEMM, sys, 64).ttft, f);
}

TEST(Prefill, DdbHiddenCopiesCostOnlyThePreload) {
    const auto sys = one_b();
    for (std::uint64_t sl : {160, 192}) {
        const auto d = run_prefill(ScenarioKind::S_DDB, sys, sl);
        EXPECT_EQ(copy_critical(d), 0u);
        EXPECT_EQ(d.ttft, run_prefill(ScenarioKind::FACIL_O, sys, sl).ttft + d.preload) << sl;
    }
}

TEST(Prefill, DdbHidingLaw) {
    const auto sys = one_b();
    for (std::uint64_t sl = 16; sl <= 256; sl += 16) {
        const auto d = run_prefill(ScenarioKind::S_DDB, sys, sl);
        Picos want = d.preload;
        for (const auto& s : d.steps) want += std::max(s.compute, s.copy);
        EXPECT_EQ(d.ttft, want) << sl;
        const auto f = run_prefill(ScenarioKind::FACIL_O, sys, sl).ttft;
        EXPECT_GE(d.ttft, f + d.preload);
        EXPECT_LE(d.ttft, f + d.smc_total);
        EXPECT_EQ(d.copied_bytes, sys.padding.pim_bytes);
    }
}

TEST(Prefill, DdbGapsShrinkWithLength) {
    const auto sys = one_b();
    for (std::uint64_t sl : {128, 160, 192}) EXPECT_LE(gap(sys, sl), 0.01) << sl;
    for (std::uint64_t sl : {64, 96}) {
        EXPECT_GT(gap(sys, sl), 0.0) << sl;
        EXPECT_LE(gap(sys, sl), 0.25) << sl;
    }
    double prev = gap(sys, 16);
    for (std::uint64_t sl = 32; sl <= 256; sl += 16) {
        const double g = gap(sys, sl);
        EXPECT_LE(g, prev + 1e-12) << sl;
        prev = g;
    }
}

TEST(Prefill, CopyBoundCrossoverBetween96And192) {
    const auto sys = one_b();
    std::uint64_t crossover = 0;
    for (std::uint64_t sl = 32; sl <= 256; sl += 32) {
        if (copy_critical(run_prefill(ScenarioKind::S_DDB, sys, sl)) == 0) {
            crossover = sl;
            break;
        }
    }
    EXPECT_GE(crossover, 96u);
    EXPECT_LE(crossover, 192u);
    EXPECT_GT(copy_critical(run_prefill(ScenarioKind::S_DDB, sys, 32)), 0u);
}

TEST(Prefill, NonCacheableGemmDegrades) {
    const auto sys = one_b();
    const double nc96 = run_prefill(ScenarioKind::NC_GEMM, sys, 96).ttft_seconds();
    const double nc192 = run_prefill(ScenarioKind::NC_GEMM, sys, 192).ttft_seconds();
    EXPECT_GE(nc192 / nc96, 1.8);
    EXPECT_GE(nc192 / run_prefill(ScenarioKind::C_GEMM, sys, 192).ttft_seconds(), 10.0);
}

TEST(Prefill, ZeroLengthRejected) { EXPECT_THROW(run_prefill(ScenarioKind::FACIL_O, one_b(), 0), Error); }

TEST(Prefill, AttentionSegmentsDelayEveryScenarioEqually) {
    auto sys = one_b();
    const auto base = run_prefill(ScenarioKind::FACIL_O, sys, 32).ttft;
    sys.hw.attention_time_per_layer = 0.001;
    const auto r = run_prefill(ScenarioKind::FACIL_O, sys, 32);
    EXPECT_EQ(r.ttft, base + 16 * to_picos(0.001));
    const auto owr = run_prefill(ScenarioKind::S_OWR, sys, 32);
    EXPECT_EQ(owr.ttft, r.ttft + owr.smc_total);
    EXPECT_EQ(std::count_if(r.timeline.segments.begin(), r.timeline.segments.end(), [](const Segment& s) { return s.role == Role::Host; }), 16);
}

TEST(DdbPlan, CopiedBytesPerConsumerEqualItsImage) {
    for (const auto& sys : {one_b(), toy(1), toy(2)}) {
        const auto plan = plan_ddb(sys);
        std::map<std::string, std::uint64_t> got;
        for (const auto& c : plan.preload) got[c.consumer] += c.bytes;
        for (const auto& ph : plan.phases) {
            for (const auto& c : ph.copies) got[c.consumer] += c.bytes;
        }
        const auto steps = gemm_steps(sys);
        ASSERT_EQ(got.size(), steps.size());
        for (const auto& s : steps) EXPECT_EQ(got[s.tag], s.pim_bytes) << s.tag;
    }
}

TEST(DdbPlan, NeverCopiesIntoTheLiveBuffer) {
    const auto plan = plan_ddb(one_b());
    for (const auto& ph : plan.phases) {
        for (const auto& c : ph.copies) EXPECT_NE(c.buffer, ph.buffer) << ph.step.tag << " <- " << c.tag;
    }
}

TEST(DdbPlan, ConsumerReadsTheBufferItWasCopiedTo) {
    const auto plan = plan_ddb(one_b());
    std::map<std::string, int> dest;
    for (const auto& c : plan.preload) dest[c.consumer] = c.buffer;
    for (const auto& ph : plan.phases) {
        EXPECT_EQ(dest.at(ph.step.tag), ph.buffer) << ph.step.tag;
        for (const auto& c : ph.copies) dest[c.consumer] = c.buffer;
    }
}

TEST(DdbPlan, LayoutOfOneBModel) {
    const auto sys = one_b();
    const auto plan = plan_ddb(sys);
    ASSERT_EQ(plan.preload.size(), 4u);
    EXPECT_EQ(plan.preload[0].tag, "L0.Q");
    EXPECT_EQ(plan.phases.size(), 16u * 7 + 16);  // 128256 / 8192 rows per chunk -> 16 chunks
    EXPECT_EQ(plan.phases[0].copies[0].tag, "L0.FF0/1");
    EXPECT_EQ(plan.phases[3].copies[0].tag, "L0.FF0/4");
    EXPECT_EQ(plan.phases[6].copies.size(), 4u);
    EXPECT_EQ(plan.phases[6].copies[0].tag, "L1.Q");
    EXPECT_EQ(plan.phases[16 * 7 - 1].copies[0].tag, "lm_head[0]");
    EXPECT_TRUE(plan.phases.back().copies.empty());
}

TEST(DdbPlan, SingleLayerModelSchedules) {
    const auto sys = toy(1);
    const auto r = run_prefill(ScenarioKind::S_DDB, sys, 8);
    EXPECT_EQ(r.steps.size(), 7u + gemm_steps(sys).size() - 7);
    EXPECT_EQ(r.copied_bytes, sys.padding.pim_bytes);
}

TEST(DdbPlan, TooSmallBufferIsScheduleError) {
    auto m = presets::toy64();
    m.intermediate = 16;  // Q,K,V,O no longer fit H x I
    const auto sys = make_system(m, presets::s24plus(), desk_1k_map(), PlacementPolicy{});
    try {
        (void)plan_ddb(sys);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Schedule);
    }
}

TEST(Timeline, AgentsNeverOverlapThemselves) {
    const auto sys = one_b();
    for (auto k : kAllScenarios) {
        for (std::uint64_t sl : {32, 128}) {
            auto r = run_prefill(k, sys, sl);
            std::map<std::string, std::vector<Segment>> by_agent;
            for (const auto& s : r.timeline.segments) {
                EXPECT_LE(s.start, s.end);
                by_agent[s.agent].push_back(s);
            }
            for (auto& [agent, segs] : by_agent) {
                std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.start < b.start; });
                for (std::size_t i = 1; i < segs.size(); ++i) ASSERT_LE(segs[i - 1].end, segs[i].start) << agent;
            }
        }
    }
}

TEST(Timeline, ComputeWaitsForItsCopy) {
    const auto r = run_prefill(ScenarioKind::S_DDB, one_b(), 32);
    std::map<std::string, Picos> ready;
    for (const auto& s : r.timeline.segments) {
        if (s.role == Role::Copy) ready[s.consumer] = std::max(ready[s.consumer], s.end);
    }
    for (const auto& s : r.timeline.segments) {
        if (s.role == Role::Compute) { EXPECT_GE(s.start, ready.at(s.tag)) << s.tag; }
    }
}

TEST(Capacity, TooSmallDeviceRejectsScenario) {
    auto sys = one_b();
    sys.hw.dram_capacity_bytes = 3'000'000'000;
    EXPECT_NO_THROW(run_prefill(ScenarioKind::C_GEMM, sys, 8));
    try {
        run_prefill(ScenarioKind::WD, sys, 8);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Capacity);
    }
}

TEST(Decode, SpeedupNeverExceedsMultiplier) {
    auto sys = one_b();
    for (double mult : {1.0, 2.0, 8.0, 16.0}) {
        sys.hw.pim_bw_multiplier = mult;
        for (auto k : kAllScenarios) EXPECT_LE(token_time(ScenarioKind::C_GEMM, sys) / token_time(k, sys), mult + 1e-12);
    }
    EXPECT_THROW(run_decode(ScenarioKind::FACIL_O, sys, 0), Error);
    const auto d = run_decode(ScenarioKind::FACIL_O, sys, 10);
    EXPECT_DOUBLE_EQ(d.decode_time, 10 * d.token_time);
}

TEST(EndToEnd, ZeroOutputIsPrefillOnly) {
    const auto e = run_end_to_end(ScenarioKind::S_DDB, one_b(), 64, 0);
    EXPECT_EQ(e.total, e.ttft);
    EXPECT_EQ(e.decode_time, 0.0);
}

TEST(EndToEnd, FacilAndDdbConvergeForLongPrompts) {
    const auto sys = one_b();
    for (std::uint64_t in : {128, 160, 192}) {
        for (std::uint64_t out : kGrid) {
            const double f = run_end_to_end(ScenarioKind::FACIL_O, sys, in, out).total;
            const double d = run_end_to_end(ScenarioKind::S_DDB, sys, in, out).total;
            EXPECT_LE(std::abs(d - f) / f, 0.01) << in << "/" << out;
        }
    }
}

TEST(EndToEnd, OwrGridPeakAndMonotoneInOutput) {
    const auto pts = speedup_grid(one_b(), kGrid, kGrid, {ScenarioKind::S_OWR});
    double peak = 0.0;
    for (const auto& p : pts) peak = std::max(peak, p.speedup);
    EXPECT_GE(peak, 2.5);
    EXPECT_LE(peak, 8.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i % kGrid.size() != 0) { EXPECT_GT(pts[i].speedup, pts[i - 1].speedup); }
    }
    EXPECT_NEAR(pts[4].speedup, run_end_to_end(ScenarioKind::S_OWR, one_b(), 64, 192).speedup, 1e-12);
}

TEST(EndToEnd, GridRejectsEmptyAxes) { EXPECT_THROW(speedup_grid(one_b(), {}, kGrid, {ScenarioKind::S_OWR}), Error); }

TEST(Functional, EveryScenarioComputesTheSameGemms) {
    MemoryConfig mc;
    mc.map = desk_1k_map();
    for (auto k : kAllScenarios) {
        const auto r = functional_prefill(k, presets::toy64(), mc, PlacementPolicy{}, 2, 7);
        EXPECT_TRUE(r.ok()) << to_string(k) << " mismatches " << r.mismatches << " conflicts " << r.buffer_conflicts;
        EXPECT_EQ(r.matrices_checked, gemm_steps(toy(2)).size());
        if (k != ScenarioKind::WD && k != ScenarioKind::C_GEMM) { EXPECT_GT(r.smc_source_reads, 0u); }
    }
}
