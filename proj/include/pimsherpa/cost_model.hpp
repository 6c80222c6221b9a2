#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pimsherpa/error.hpp"
#include "pimsherpa/numeric.hpp"

namespace sherpa {

inline constexpr double kGiga = 1e9;

/// Host and PIM platform parameters. Bandwidths in GB/s (1e9 bytes), compute in GFLOP/s.
struct HardwareSpec {
    std::string name = "s24plus";
    double peak_gflops = 321.0;
    double dram_bw = 68.264;
    double flop_per_byte = 4.7;
    std::int64_t table_flop_per_byte = 4;  ///< rounded intensity used by the t-unit overhead table
    double pim_bw_multiplier = 8.0;
    double gemm_effective_gflops = 107.0;  ///< four GEMM cores, back-computed from 0.74 s at SL 32 on 1B
    double smc_bw_2agents = 2.87;          ///< fitted: 0.89 s for the 1B image on two copy agents
    double smc_bw_4agents = 4.25;          ///< fitted: 0.6 s for the 1B image on four copy agents
    double nc_read_penalty = 2.0;          ///< non-cacheable vs cacheable copy slowdown
    double nc_gemm_bw = 2.64;              ///< fitted: ~0.4 TPS of host GEMM over non-cacheable 3B weights
    std::uint64_t nc_tile_reuse = 1;       ///< input tokens served per non-cacheable weight pass
    double host_overhead_per_token = 0.0;  ///< seconds of non-GEMV work per decode token
    double attention_time_per_layer = 0.0; ///< seconds of attention/normalization per decoder layer
    std::uint64_t ddb_copy_agents = 2;
    std::uint64_t owr_copy_agents = 4;
    std::uint64_t dram_capacity_bytes = 12'000'000'000;

    friend bool operator==(const HardwareSpec&, const HardwareSpec&) = default;
};

inline void validate_hardware(const HardwareSpec& hw) {
    const double positive[] = {hw.peak_gflops,        hw.dram_bw,         hw.flop_per_byte,   hw.pim_bw_multiplier,
                               hw.gemm_effective_gflops, hw.smc_bw_2agents, hw.smc_bw_4agents, hw.nc_read_penalty,
                               hw.nc_gemm_bw};
    for (double v : positive) {
        if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::Config, "hardware parameters must be strictly positive");
    }
    if (hw.gemm_effective_gflops > hw.peak_gflops) throw Error(ErrorCode::Config, "gemm_effective_gflops exceeds peak_gflops");
    if (hw.table_flop_per_byte <= 0 || hw.nc_tile_reuse == 0 || hw.ddb_copy_agents == 0 || hw.owr_copy_agents == 0) {
        throw Error(ErrorCode::Config, "hardware integer parameters must be >= 1");
    }
    if (hw.host_overhead_per_token < 0.0 || hw.attention_time_per_layer < 0.0) {
        throw Error(ErrorCode::Config, "host latency terms must be non-negative");
    }
}

enum class CostMode { Analytical, Calibrated };

constexpr const char* to_string(CostMode m) { return m == CostMode::Analytical ? "analytical" : "calibrated"; }

// ---------------------------------------------------------------------------
// Analytical model, in units of t = one streaming pass over the weights.

/// GEMM time in t-units: t up to the intensity threshold, then SL / (FLOP/B) * t.
inline Rational gemm_t_units(std::uint64_t sl, const HardwareSpec& hw) {
    if (sl == 0) throw Error(ErrorCode::Config, "sequence length must be >= 1");
    return max(Rational(1), Rational(static_cast<std::int64_t>(sl), hw.table_flop_per_byte));
}

/// Online rearrangement: read the non-cacheable source, fill the destination line, write it back.
inline Rational smc_t_units() { return Rational(3); }

struct OverheadRow {
    std::string label;
    std::uint64_t sl = 0;
    Rational gemm;
    Rational dram;
    Rational online;
    Rational sum;
    std::int64_t sum_pct = 0;
    Rational max;
    std::int64_t max_pct = 0;
};

inline OverheadRow overhead_row(std::string label, std::uint64_t sl, const HardwareSpec& hw) {
    OverheadRow r;
    r.label = std::move(label);
    r.sl = sl;
    r.gemm = gemm_t_units(sl, hw);
    r.dram = Rational(1);
    r.online = smc_t_units();
    r.sum = r.gemm + r.online;
    r.max = max(r.gemm, r.online);
    r.sum_pct = (r.sum / r.gemm * Rational(100)).round();
    r.max_pct = (r.max / r.gemm * Rational(100)).round();
    return r;
}

/// Serial (SUM) vs overlapped (MAX) rearrangement cost across input lengths.
inline std::vector<OverheadRow> rearrangement_overhead_table(const HardwareSpec& hw) {
    std::vector<OverheadRow> rows;
    rows.push_back(overhead_row("1 - 4", 4, hw));
    for (std::uint64_t sl : {8, 16, 32, 64, 128, 192}) rows.push_back(overhead_row(std::to_string(sl), sl, hw));
    return rows;
}

// ---------------------------------------------------------------------------
// Calibrated model, in seconds.

inline double gemm_time(std::uint64_t bytes, std::uint64_t params, std::uint64_t sl, const HardwareSpec& hw) {
    if (sl == 0) throw Error(ErrorCode::Config, "sequence length must be >= 1");
    const double stream = static_cast<double>(bytes) / (hw.dram_bw * kGiga);
    const double compute = 2.0 * static_cast<double>(sl) * static_cast<double>(params) / (hw.gemm_effective_gflops * kGiga);
    return std::max(stream, compute);
}

inline double smc_bandwidth(std::uint64_t agents, const HardwareSpec& hw, std::optional<double> override_bw = std::nullopt) {
    if (override_bw) {
        if (!(*override_bw > 0.0)) throw Error(ErrorCode::Config, "SMC bandwidth override must be positive");
        return *override_bw;
    }
    if (agents == 2) return hw.smc_bw_2agents;
    if (agents == 4) return hw.smc_bw_4agents;
    throw Error(ErrorCode::Config, "no calibrated SMC bandwidth for " + std::to_string(agents) + " agents");
}

inline double smc_time(std::uint64_t bytes, std::uint64_t agents, const HardwareSpec& hw,
                       std::optional<double> override_bw = std::nullopt) {
    return static_cast<double>(bytes) / (smc_bandwidth(agents, hw, override_bw) * kGiga);
}

/// Host GEMM over non-cacheable weights: every pass re-streams the weights uncached.
inline double nc_gemm_time(std::uint64_t bytes, std::uint64_t params, std::uint64_t sl, const HardwareSpec& hw) {
    const double compute = 2.0 * static_cast<double>(sl) * static_cast<double>(params) / (hw.gemm_effective_gflops * kGiga);
    const double passes = static_cast<double>(ceil_div(sl, hw.nc_tile_reuse));
    return std::max(compute, passes * static_cast<double>(bytes) / (hw.nc_gemm_bw * kGiga));
}

inline double decode_token_time(std::uint64_t bytes, const HardwareSpec& hw, bool use_pim) {
    const double bw = hw.dram_bw * kGiga * (use_pim ? hw.pim_bw_multiplier : 1.0);
    return static_cast<double>(bytes) / bw + hw.host_overhead_per_token;
}

/// Competing SMC bandwidth figures. Only the fitted values drive timing; the
/// others are reported next to them.
struct SmcBandwidthEstimates {
    double three_transaction = 0.0;  ///< dram_bw / 3 transactions / non-cacheable penalty
    double quarter_peak = 0.0;       ///< dram_bw / 4
    double fitted_2agents = 0.0;
    double fitted_4agents = 0.0;
};

inline SmcBandwidthEstimates smc_bandwidth_estimates(const HardwareSpec& hw) {
    return {hw.dram_bw / 3.0 / hw.nc_read_penalty, hw.dram_bw / 4.0, hw.smc_bw_2agents, hw.smc_bw_4agents};
}

// ---------------------------------------------------------------------------
// Capacity.

struct CapacityInputs {
    std::uint64_t host_bytes = 0;    ///< host-friendly weights
    std::uint64_t pim_bytes = 0;     ///< PIM-aware weights including padding
    std::uint64_t buffer_bytes = 0;  ///< one cacheable buffer (H x I elements)
};

struct CapacityLine {
    std::string scenario;
    std::uint64_t weight_bytes = 0;
    std::uint64_t buffer_bytes = 0;
    std::uint64_t total = 0;
    std::int64_t savings_bytes = 0;  ///< vs weight duplication; negative when larger
    std::optional<double> savings_pct;
};

struct CapacityReport {
    CapacityInputs inputs;
    std::vector<CapacityLine> lines;  ///< WD, FACIL_O, S_DDB, S_OWR, C_GEMM, NC_GEMM

    [[nodiscard]] const CapacityLine& line(const std::string& scenario) const {
        for (const auto& l : lines) {
            if (l.scenario == scenario) return l;
        }
        throw Error(ErrorCode::Config, "unknown scenario " + scenario);
    }
};

inline CapacityReport capacity_report(const CapacityInputs& in) {
    CapacityReport rep{in, {}};
    const std::uint64_t wd = in.host_bytes + in.pim_bytes;
    auto add = [&](const char* name, std::uint64_t weights, std::uint64_t buffers) {
        CapacityLine l{name, weights, buffers, weights + buffers, 0, std::nullopt};
        l.savings_bytes = static_cast<std::int64_t>(wd) - static_cast<std::int64_t>(l.total);
        if (wd > 0) l.savings_pct = 100.0 * static_cast<double>(l.savings_bytes) / static_cast<double>(wd);
        rep.lines.push_back(l);
    };
    add("WD", wd, 0);
    add("FACIL_O", in.pim_bytes, 0);
    add("S_DDB", in.pim_bytes, 2 * in.buffer_bytes);
    add("S_OWR", in.pim_bytes, in.buffer_bytes);
    add("C_GEMM", in.host_bytes, 0);
    add("NC_GEMM", in.pim_bytes, 0);
    return rep;
}

namespace presets {

inline HardwareSpec s24plus() { return HardwareSpec{}; }

inline std::optional<HardwareSpec> hardware_by_name(const std::string& n) {
    if (n == "s24plus") return s24plus();
    return std::nullopt;
}

}  // namespace presets

}  // namespace sherpa
