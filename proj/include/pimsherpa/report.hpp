#pragma once

#include <cstdio>
#include <functional>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimsherpa/config.hpp"
#include "pimsherpa/gemv_check.hpp"
#include "pimsherpa/runtime.hpp"

namespace sherpa {

inline json to_json(const CapacityReport& rep) {
    json lines = json::array();
    for (const auto& l : rep.lines) {
        lines.push_back({{"scenario", l.scenario},
                         {"weight_bytes", l.weight_bytes},
                         {"buffer_bytes", l.buffer_bytes},
                         {"total_bytes", l.total},
                         {"savings_bytes", l.savings_bytes},
                         {"savings_pct", l.savings_pct ? json(*l.savings_pct) : json(nullptr)}});
    }
    return {{"host_bytes", rep.inputs.host_bytes},
            {"pim_bytes", rep.inputs.pim_bytes},
            {"buffer_bytes", rep.inputs.buffer_bytes},
            {"lines", lines}};
}

inline json to_json(const IntegrityReport& r) {
    return {{"status", to_string(r.status)},     {"expected_mac_reads", r.expected_mac_reads},
            {"delivered", r.delivered},          {"deficit", r.deficit},
            {"surplus", r.surplus},              {"observed_mac_bursts", r.observed_mac_bursts},
            {"absorbing_lines", r.absorbing_lines.size()}};
}

inline json to_json(const CommandCounts& c) {
    return {{"input_writes", c.input_writes}, {"mac_reads", c.mac_reads}, {"dummy_reads", c.dummy_reads}, {"output_writes", c.output_writes}};
}

inline json to_json(const CacheStats& s) {
    return {{"hits", s.hits}, {"misses", s.misses}, {"evictions", s.evictions}, {"writebacks", s.writebacks}};
}

/// Gantt-ready timeline: one record per segment, times in seconds and picoseconds.
inline json timeline_json(const Timeline& t) {
    json segs = json::array();
    for (const auto& s : t.segments) {
        segs.push_back({{"agent", s.agent},
                        {"role", std::string(to_string(s.role))},
                        {"layer", s.tag},
                        {"start", to_seconds(s.start)},
                        {"end", to_seconds(s.end)},
                        {"start_ps", s.start},
                        {"end_ps", s.end},
                        {"buffer", s.buffer},
                        {"bytes", s.bytes},
                        {"consumer", s.consumer}});
    }
    return {{"segments", segs}, {"end", to_seconds(t.end())}};
}

/// One JSON record per line: {tick, agent, op, addr, bytes}.
inline std::string trace_ndjson(std::span<const TraceRecord> trace) {
    std::string out;
    for (const auto& r : trace) {
        out += json{{"tick", r.tick}, {"agent", r.agent}, {"op", to_string(r.op)}, {"addr", r.addr}, {"bytes", r.bytes}}.dump();
        out += '\n';
    }
    return out;
}

/// Register files and accumulators of every PIM block, for debugging.
inline json engine_state_json(const PimEngine& e, const DramGeometry& g) {
    json blocks = json::array();
    for (std::uint64_t c = 0; c < g.channels; ++c) {
        for (std::uint64_t r = 0; r < g.ranks_per_channel; ++r) {
            for (std::uint64_t b = 0; b < g.banks_per_rank; ++b) {
                const auto& blk = e.block(c, r, b);
                std::vector<float> in;
                for (auto v : blk.input_rf) in.push_back(v.to_float());
                blocks.push_back({{"channel", c},
                                  {"rank", r},
                                  {"bank", b},
                                  {"input_ptr", blk.input_ptr},
                                  {"input_rf", in},
                                  {"output_rf", blk.output_rf},
                                  {"acc", blk.acc}});
            }
        }
    }
    return {{"lanes", e.lanes()}, {"blocks", blocks}};
}

/// Seeded GEMV on the configured memory system, run twice back to back on the
/// same non-cacheable weights.
inline json integrity_probe(const RunConfig& c) {
    const std::uint64_t m = std::min<std::uint64_t>(c.model.hidden, 256);
    const std::uint64_t k = std::max<std::uint64_t>(c.placement.input_tile, std::min<std::uint64_t>(c.model.hidden, 256));
    std::mt19937_64 rng(job_seed(c.seed, 0));
    std::uniform_int_distribution<int> val(-8, 8);
    WeightMatrix w(m, k);
    for (auto& e : w.data) e = Bf16::from_float(static_cast<float>(val(rng)));
    std::vector<Bf16> x(k);
    for (auto& e : x) e = Bf16::from_float(static_cast<float>(val(rng)));

    PimEngineOptions eo;
    eo.arithmetic = Arithmetic::Exact;
    PimSetup s(c.memory(), c.placement, m, k, Attribute::NonCacheable, eo);
    s.load_weights(w);
    const auto want = oracle_gemv(w, x);
    json runs = json::array();
    for (int i = 0; i < 2; ++i) {
        const auto r = s.run(x);
        runs.push_back({{"integrity", to_json(r.integrity)},
                        {"issued", to_json(r.issued)},
                        {"applied", to_json(r.applied)},
                        {"matches_oracle", r.output == want}});
    }
    return {{"rows", m},
            {"cols", k},
            {"weight_attribute", to_string(Attribute::NonCacheable)},
            {"expected", to_json(expected_commands(s.placement, eo.mode))},
            {"runs", runs},
            {"cache", to_json(s.mem.stats().cache)}};
}

/// Scalar results for one configuration; shared by `run` and `sweep`.
struct PointResult {
    RunConfig config;
    bool feasible = true;
    std::string error;
    PrefillResult prefill;
    std::optional<AnalyticalPrefill> analytical;
    DecodeResult decode;
    EndToEnd e2e;
    CapacityLine capacity;
};

inline PointResult evaluate_point(const RunConfig& c, const System& sys) {
    PointResult p;
    p.config = c;
    p.capacity = capacity_report(capacity_inputs(sys)).line(std::string(to_string(c.scenario)));
    try {
        p.prefill = run_prefill(c.scenario, sys, c.in_len);
        if (c.mode == CostMode::Analytical) p.analytical = analytical_prefill(c.scenario, c.in_len, c.hw);
        const double tt = token_time(c.scenario, sys);
        p.decode = DecodeResult{tt, tt * static_cast<double>(c.out_len), 1.0 / tt};
        p.e2e = run_end_to_end(c.scenario, sys, c.in_len, c.out_len);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Capacity && e.code() != ErrorCode::Schedule) throw;
        p.feasible = false;
        p.error = e.what();
    }
    return p;
}

inline System system_of(const RunConfig& c) { return make_system(c.model, c.hw, c.map, c.placement); }

/// Full run report. `threads` > 1 evaluates independent sections concurrently;
/// the output does not depend on it.
inline json run_report(const RunConfig& c, unsigned threads = 1) {
    const System sys = system_of(c);
    auto launch = [&](auto fn) { return std::async(threads > 1 ? std::launch::async : std::launch::deferred, fn); };
    auto f_point = launch([&] { return evaluate_point(c, sys); });
    auto f_probe = launch([&] { return integrity_probe(c); });
    const PointResult p = f_point.get();

    json rep;
    rep["config"] = to_json(c);
    rep["model"] = {{"params", total_params(c.model)},
                    {"host_bytes", sys.padding.host_bytes},
                    {"pim_bytes", sys.padding.pim_bytes},
                    {"padding_bytes", sys.padding.padding_bytes()},
                    {"padding_fraction", sys.padding.padding_fraction()},
                    {"fits_map", sys.padding.fits}};
    rep["capacity"] = {{"computed", to_json(capacity_report(capacity_inputs(sys)))},
                       {"reported", to_json(capacity_report(capacity_inputs(sys, CapacityBasis::Reported)))},
                       {"scenario_total_bytes", p.capacity.total},
                       {"device_bytes", c.hw.dram_capacity_bytes},
                       {"feasible", p.feasible}};
    if (!p.feasible) {
        rep["error"] = p.error;
    } else {
        int critical = 0;
        for (const auto& s : p.prefill.steps) critical += s.copy_critical() ? 1 : 0;
        rep["prefill"] = {{"ttft_s", p.prefill.ttft_seconds()},
                          {"gemm_s", to_seconds(p.prefill.gemm_total)},
                          {"smc_s", to_seconds(p.prefill.smc_total)},
                          {"preload_s", to_seconds(p.prefill.preload)},
                          {"copied_bytes", p.prefill.copied_bytes},
                          {"weight_bytes_streamed", p.prefill.weight_bytes_streamed},
                          {"copy_critical_steps", critical},
                          {"tokens_per_s", static_cast<double>(c.in_len) / p.prefill.ttft_seconds()}};
        if (p.analytical) {
            rep["prefill"]["analytical"] = {{"gemm_t", p.analytical->gemm.str()},
                                            {"online_t", p.analytical->online.str()},
                                            {"total_t", p.analytical->total.str()},
                                            {"overhead_pct", p.analytical->overhead_pct}};
        }
        rep["decode"] = {{"token_time_s", p.decode.token_time}, {"tps", p.decode.tps}, {"decode_time_s", p.decode.decode_time}};
        rep["end_to_end"] = {{"total_s", p.e2e.total}, {"baseline_total_s", p.e2e.baseline_total}, {"speedup_vs_c_gemm", p.e2e.speedup}};
    }
    const auto est = smc_bandwidth_estimates(c.hw);
    rep["smc_bandwidth"] = {{"fitted_2agents_gbps", est.fitted_2agents},
                            {"fitted_4agents_gbps", est.fitted_4agents},
                            {"three_transaction_gbps", est.three_transaction},
                            {"quarter_peak_gbps", est.quarter_peak},
                            {"note", "timing uses the fitted values; the two bandwidth-derived estimates disagree with them"}};
    rep["trigger_integrity"] = f_probe.get();
    return rep;
}

inline std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Column order of sweep CSV output. ttft, gemm and smc are t-units in analytical
/// mode and seconds otherwise; every other time is seconds.
inline constexpr const char* kSweepHeader =
    "scenario,in_len,out_len,mode,feasible,ttft,gemm,smc,preload_s,token_time_s,decode_time_s,total_s,speedup,overhead_pct,"
    "capacity_bytes,savings_pct";

inline std::string sweep_row(const PointResult& p) {
    const auto& c = p.config;
    std::ostringstream o;
    o << to_string(c.scenario) << ',' << c.in_len << ',' << c.out_len << ',' << to_string(c.mode) << ',' << (p.feasible ? 1 : 0) << ',';
    if (!p.feasible) {
        o << ",,,,,,,,,";
    } else if (p.analytical) {
        o << csv_number(p.analytical->total.to_double()) << ',' << csv_number(p.analytical->gemm.to_double()) << ','
          << csv_number(p.analytical->online.to_double()) << ",,"
          << csv_number(p.decode.token_time) << ',' << csv_number(p.decode.decode_time) << ",,," << p.analytical->overhead_pct << ',';
    } else {
        o << csv_number(p.prefill.ttft_seconds()) << ',' << csv_number(to_seconds(p.prefill.gemm_total)) << ','
          << csv_number(to_seconds(p.prefill.smc_total)) << ',' << csv_number(to_seconds(p.prefill.preload)) << ','
          << csv_number(p.decode.token_time) << ',' << csv_number(p.decode.decode_time) << ',' << csv_number(p.e2e.total) << ','
          << csv_number(p.e2e.speedup) << ",,";
    }
    o << p.capacity.total << ',' << (p.capacity.savings_pct ? csv_number(*p.capacity.savings_pct) : "");
    return o.str();
}

enum class SweepAxis { InLen, OutLen, Scenario };

inline std::optional<SweepAxis> sweep_axis_from_string(const std::string& s) {
    if (s == "in_len") return SweepAxis::InLen;
    if (s == "out_len") return SweepAxis::OutLen;
    if (s == "scenario") return SweepAxis::Scenario;
    return std::nullopt;
}

/// One configuration per value. Scenario values are names; length values are integers.
inline std::vector<RunConfig> sweep_configs(const RunConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError({"sweep.values: at least one value required"});
    std::vector<RunConfig> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        RunConfig c = base;
        const std::string path = "sweep.values[" + std::to_string(i) + "]";
        if (axis == SweepAxis::Scenario) {
            auto k = scenario_from_string(values[i]);
            if (!k) throw ConfigError({path + ": unknown scenario '" + values[i] + "'"});
            c.scenario = *k;
        } else {
            std::size_t used = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(values[i], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != values[i].size() || values[i][0] == '-') {
                throw ConfigError({path + ": expected a non-negative integer"});
            }
            if (axis == SweepAxis::InLen) {
                if (v == 0) throw ConfigError({path + ": in_len must be >= 1"});
                c.in_len = v;
            } else {
                c.out_len = v;
            }
        }
        out.push_back(c);
    }
    return out;
}

/// Evaluates each point, optionally across threads; rows come back in input order.
inline std::vector<PointResult> run_sweep(const std::vector<RunConfig>& cfgs, unsigned threads = 1) {
    std::vector<PointResult> res(cfgs.size());
    if (cfgs.empty()) return res;
    const System sys = system_of(cfgs.front());
    auto work = [&](std::size_t first) {
        for (std::size_t i = first; i < cfgs.size(); i += std::max(1u, threads)) res[i] = evaluate_point(cfgs[i], sys);
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::future<void>> fs;
        for (unsigned t = 0; t < threads; ++t) fs.push_back(std::async(std::launch::async, work, t));
        for (auto& f : fs) f.get();
    }
    return res;
}

inline std::string sweep_csv(const std::vector<PointResult>& rows) {
    std::string out = std::string(kSweepHeader) + "\n";
    for (const auto& r : rows) out += sweep_row(r) + "\n";
    return out;
}

/// Overhead table rows in input-length order.
inline std::string overhead_table_text(const HardwareSpec& hw) {
    std::ostringstream o;
    o << "SL,GEMM,DRAM,Online,SUM,SUM%,MAX,MAX%\n";
    for (const auto& r : rearrangement_overhead_table(hw)) {
        o << r.label << ',' << r.gemm.str() << "t," << r.dram.str() << "t," << r.online.str() << "t," << r.sum.str() << "t,"
          << r.sum_pct << "%," << r.max.str() << "t," << r.max_pct << "%\n";
    }
    return o.str();
}

inline json gemv_battery_json(const GemvBatteryOptions& o, const GemvBatteryResult& r) {
    json j{{"jobs", r.jobs},
           {"seed", o.seed},
           {"arithmetic", o.arithmetic == Arithmetic::Exact ? "exact" : "bf16"},
           {"weight_attribute", to_string(o.weight_attribute)},
           {"mismatched_jobs", r.mismatched_jobs},
           {"integrity_failures", r.integrity_failures},
           {"max_normwise_error", r.max_error},
           {"passed", r.passed()}};
    if (r.first_failure) {
        const auto& f = *r.first_failure;
        j["first_failure"] = {{"job", f.job}, {"job_seed", f.job_seed}, {"m", f.m}, {"got", f.got}, {"want", f.want}, {"error", f.error}};
    }
    if (r.first_integrity_failure) j["first_integrity_failure"] = to_json(*r.first_integrity_failure);
    return j;
}

}  // namespace sherpa
