#include <gtest/gtest.h>

#include "pimsherpa/runtime.hpp"

using namespace sherpa;

namespace {

System llama(const ModelSpec& m) {
    PlacementPolicy pol;
    pol.active_channels = 4;
    return make_system(m, presets::s24plus(), s24plus_map(), pol);
}

struct Row {
    const char* label;
    std::int64_t gemm, sum, sum_pct, max, max_pct;
};

// Serial vs overlapped rearrangement, in units of one weight stream.
const Row kTable[] = {
    {"1 - 4", 1, 4, 400, 3, 300}, {"8", 2, 5, 250, 3, 150},    {"16", 4, 7, 175, 4, 100},    {"32", 8, 11, 138, 8, 100},
    {"64", 16, 19, 119, 16, 100}, {"128", 32, 35, 109, 32, 100}, {"192", 48, 51, 106, 48, 100},
};

}  // namespace

TEST(Analytical, OverheadTableMatchesReference) {
    const auto rows = rearrangement_overhead_table(presets::s24plus());
    ASSERT_EQ(rows.size(), std::size(kTable));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& w = kTable[i];
        EXPECT_EQ(r.label, w.label);
        EXPECT_EQ(r.gemm, Rational(w.gemm)) << w.label;
        EXPECT_EQ(r.dram, Rational(1));
        EXPECT_EQ(r.online, Rational(3));
        EXPECT_EQ(r.sum, Rational(w.sum)) << w.label;
        EXPECT_EQ(r.sum_pct, w.sum_pct) << w.label;
        EXPECT_EQ(r.max, Rational(w.max)) << w.label;
        EXPECT_EQ(r.max_pct, w.max_pct) << w.label;
    }
}

TEST(Analytical, SmallLengthsShareTheFloor) {
    const auto hw = presets::s24plus();
    for (std::uint64_t sl = 1; sl <= 4; ++sl) EXPECT_EQ(gemm_t_units(sl, hw), Rational(1));
    EXPECT_EQ(gemm_t_units(5, hw), Rational(5, 4));
    EXPECT_THROW(gemm_t_units(0, hw), Error);
}

TEST(Analytical, MaxNeverExceedsSumAndHidesAboveThreshold) {
    const auto hw = presets::s24plus();
    for (std::uint64_t sl = 1; sl <= 512; ++sl) {
        const auto r = overhead_row(std::to_string(sl), sl, hw);
        EXPECT_LE(r.max, r.sum);
        EXPECT_GE(r.max, r.gemm);
        if (r.gemm >= Rational(3)) { EXPECT_EQ(r.max_pct, 100) << sl; }
    }
}

TEST(Analytical, ScenarioTotals) {
    const auto hw = presets::s24plus();
    EXPECT_EQ(analytical_prefill(ScenarioKind::S_OWR, 16, hw).overhead_pct, 175);
    EXPECT_EQ(analytical_prefill(ScenarioKind::S_DDB, 8, hw).overhead_pct, 150);
    EXPECT_EQ(analytical_prefill(ScenarioKind::FACIL_O, 8, hw).overhead_pct, 100);
    EXPECT_EQ(analytical_prefill(ScenarioKind::NC_GEMM, 192, hw).total, Rational(192));
    EXPECT_EQ(analytical_prefill(ScenarioKind::NC_GEMM, 192, hw).overhead_pct, 400);
}

TEST(Analytical, NonIntegerIntensityStaysExact) {
    auto hw = presets::s24plus();
    hw.table_flop_per_byte = 3;
    EXPECT_EQ(gemm_t_units(32, hw), Rational(32, 3));
    EXPECT_EQ(overhead_row("32", 32, hw).sum_pct, 128);  // 41/32 = 128.125%
}

TEST(Calibrated, GemmTimeAtThirtyTwoTokens) {
    const auto sys = llama(presets::llama32_1b());
    double g = 0.0;
    for (const auto& s : gemm_steps(sys)) g += gemm_time(s.host_bytes, s.params, 32, sys.hw);
    EXPECT_NEAR(g, 0.74, 0.74 * 0.05);
    // Below the intensity threshold GEMM is a single weight stream.
    double g1 = 0.0;
    for (const auto& s : gemm_steps(sys)) g1 += gemm_time(s.host_bytes, s.params, 1, sys.hw);
    EXPECT_NEAR(g1, static_cast<double>(sys.padding.host_bytes) / (sys.hw.dram_bw * kGiga), 1e-9);
}

TEST(Calibrated, SmcLatenciesWithinTwentyPercent) {
    const auto one = llama(presets::llama32_1b());
    const auto three = llama(presets::llama32_3b());
    auto within = [](double got, double want) { return std::abs(got - want) <= 0.2 * want; };
    EXPECT_TRUE(within(smc_time(one.padding.pim_bytes, 2, one.hw), 0.89)) << smc_time(one.padding.pim_bytes, 2, one.hw);
    EXPECT_TRUE(within(smc_time(three.padding.pim_bytes, 2, three.hw), 2.54)) << smc_time(three.padding.pim_bytes, 2, three.hw);
    EXPECT_TRUE(within(smc_time(one.padding.pim_bytes, 4, one.hw), 0.6)) << smc_time(one.padding.pim_bytes, 4, one.hw);
    EXPECT_TRUE(within(smc_time(three.padding.pim_bytes, 4, three.hw), 1.4)) << smc_time(three.padding.pim_bytes, 4, three.hw);
}

TEST(Calibrated, SmcBandwidthSelection) {
    const auto hw = presets::s24plus();
    EXPECT_EQ(smc_bandwidth(2, hw), hw.smc_bw_2agents);
    EXPECT_EQ(smc_bandwidth(4, hw), hw.smc_bw_4agents);
    EXPECT_EQ(smc_bandwidth(3, hw, 5.0), 5.0);
    try {
        (void)smc_bandwidth(3, hw);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
    const auto est = smc_bandwidth_estimates(hw);
    EXPECT_NEAR(est.quarter_peak, 17.066, 1e-3);
    EXPECT_NEAR(est.three_transaction, 68.264 / 6, 1e-9);
}

TEST(Calibrated, HardwareValidation) {
    auto hw = presets::s24plus();
    hw.dram_bw = 0;
    EXPECT_THROW(validate_hardware(hw), Error);
    hw = presets::s24plus();
    hw.gemm_effective_gflops = 400;
    EXPECT_THROW(validate_hardware(hw), Error);
    hw = presets::s24plus();
    hw.host_overhead_per_token = -1;
    EXPECT_THROW(validate_hardware(hw), Error);
    EXPECT_NO_THROW(validate_hardware(presets::s24plus()));
}

TEST(Capacity, ComputedSavingsForOneB) {
    const auto sys = llama(presets::llama32_1b());
    const auto rep = capacity_report(capacity_inputs(sys));
    EXPECT_EQ(rep.inputs.host_bytes, 2'471'493'632u);
    EXPECT_EQ(rep.inputs.buffer_bytes, 2048u * 8192 * 2);
    EXPECT_NEAR(*rep.line("FACIL_O").savings_pct, 49.30, 0.05);
    EXPECT_NEAR(*rep.line("S_DDB").savings_pct, 47.96, 0.05);
    EXPECT_NEAR(*rep.line("S_OWR").savings_pct, 48.63, 0.05);
    EXPECT_EQ(*rep.line("WD").savings_pct, 0.0);
    EXPECT_EQ(rep.line("S_OWR").total, rep.line("S_DDB").total - rep.inputs.buffer_bytes);
    EXPECT_EQ(rep.line("S_DDB").total, rep.line("FACIL_O").total + 2 * rep.inputs.buffer_bytes);
    EXPECT_THROW((void)rep.line("nope"), Error);
}

TEST(Capacity, ReportedBasisNearHalf) {
    const auto sys = llama(presets::llama32_1b());
    const auto rep = capacity_report(capacity_inputs(sys, CapacityBasis::Reported));
    EXPECT_EQ(rep.inputs.host_bytes, 2'470'000'000u);
    EXPECT_EQ(rep.inputs.pim_bytes, 2'550'000'000u);
    EXPECT_NEAR(*rep.line("FACIL_O").savings_pct, 49.2, 0.05);
    for (const char* s : {"FACIL_O", "S_DDB", "S_OWR"}) EXPECT_NEAR(*rep.line(s).savings_pct, 48.0, 1.5) << s;
}

TEST(Capacity, ZeroLayerModelHasOnlyBuffersAndHead) {
    auto m = presets::toy64();
    m.layers = 0;
    const auto sys = make_system(m, presets::s24plus(), desk_1k_map(), PlacementPolicy{});
    const auto rep = capacity_report(capacity_inputs(sys));
    EXPECT_EQ(rep.inputs.host_bytes, 512u * 64 * 2);
    EXPECT_EQ(rep.line("S_DDB").total - rep.line("FACIL_O").total, 2 * sys.buffer_bytes());
    EXPECT_EQ(rep.line("S_OWR").total - rep.line("FACIL_O").total, sys.buffer_bytes());
}

TEST(Capacity, EmptyInputsHaveNoPercentage) {
    const auto rep = capacity_report(CapacityInputs{});
    EXPECT_FALSE(rep.line("WD").savings_pct.has_value());
}

TEST(Decode, MultiplierScalesTokenTime) {
    auto hw = presets::s24plus();
    EXPECT_NEAR(decode_token_time(1'000'000'000, hw, false) / decode_token_time(1'000'000'000, hw, true), 8.0, 1e-12);
    hw.pim_bw_multiplier = 1.0;
    EXPECT_EQ(decode_token_time(1'000'000'000, hw, false), decode_token_time(1'000'000'000, hw, true));
    hw.host_overhead_per_token = 0.01;
    EXPECT_NEAR(decode_token_time(0, hw, true), 0.01, 1e-15);
}

TEST(Decode, NonCacheableGemmIsFarSlower) {
    const auto sys = llama(presets::llama32_1b());
    double nc = 0.0, c = 0.0;
    for (const auto& s : gemm_steps(sys)) {
        nc += nc_gemm_time(s.pim_bytes, s.params, 192, sys.hw);
        c += gemm_time(s.host_bytes, s.params, 192, sys.hw);
    }
    EXPECT_GT(nc / c, 10.0);
    auto hw = sys.hw;
    hw.nc_tile_reuse = 192;
    double nc_reuse = 0.0;
    for (const auto& s : gemm_steps(sys)) nc_reuse += nc_gemm_time(s.pim_bytes, s.params, 192, hw);
    EXPECT_LT(nc_reuse, nc / 10.0);
}
