#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pimsherpa/pim_engine.hpp"

namespace sherpa {

/// Brute-force y = W x over the stored element values, accumulated in double.
inline std::vector<double> oracle_gemv(const WeightMatrix& w, std::span<const Bf16> x) {
    if (x.size() != w.in_dim) throw Error(ErrorCode::SizeMismatch, "input length does not match matrix columns");
    std::vector<double> y(w.out_dim, 0.0);
    for (std::uint64_t k = 0; k < w.in_dim; ++k) {
        const double xv = x[k].to_float();
        for (std::uint64_t m = 0; m < w.out_dim; ++m) y[m] += static_cast<double>(w.at(m, k).to_float()) * xv;
    }
    return y;
}

/// max |got - want| / max |want|; 0 when both are all zero.
inline double normwise_error(std::span<const double> got, std::span<const double> want) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        diff = std::max(diff, std::abs(got[i] - want[i]));
        scale = std::max(scale, std::abs(want[i]));
    }
    if (scale == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
    return diff / scale;
}

inline constexpr double kBf16Tolerance = 1.0 / 128.0;

struct GemvBatteryOptions {
    std::uint64_t jobs = 1000;
    std::uint64_t seed = 1;
    std::uint64_t max_rows = 512;
    std::uint64_t max_cols = 1024;
    Arithmetic arithmetic = Arithmetic::Exact;
    Attribute weight_attribute = Attribute::NonCacheable;
    bool corrupt_mac_order = false;
    bool runs_per_job_twice = false;  ///< second back-to-back GEMV on the same weights
    MemoryConfig memory = battery_memory();
    PlacementPolicy policy;

    static MemoryConfig battery_memory() {
        MemoryConfig c;
        c.map = desk_1k_map();
        return c;
    }
};

struct GemvFailure {
    std::uint64_t job = 0;
    std::uint64_t job_seed = 0;
    std::uint64_t m = 0;  ///< first mismatching output row
    double got = 0.0;
    double want = 0.0;
    double error = 0.0;
};

struct GemvBatteryResult {
    std::uint64_t jobs = 0;
    std::uint64_t mismatched_jobs = 0;
    std::uint64_t integrity_failures = 0;
    double max_error = 0.0;
    std::optional<GemvFailure> first_failure;
    std::optional<IntegrityReport> first_integrity_failure;
    CommandTrace first_trace;  ///< command trace of job 0

    [[nodiscard]] bool passed() const { return mismatched_jobs == 0 && integrity_failures == 0; }
};

inline std::uint64_t job_seed(std::uint64_t seed, std::uint64_t job) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(job)};
    std::array<std::uint32_t, 2> parts{};
    seq.generate(parts.begin(), parts.end());
    return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

struct BatteryJob {
    std::uint64_t seed = 0;
    WeightMatrix w;
    std::vector<Bf16> x;
};

/// Job `j` of a battery: shape and data drawn from its own seed.
inline BatteryJob make_battery_job(const GemvBatteryOptions& o, std::uint64_t j) {
    const std::uint64_t s = job_seed(o.seed, j);
    std::mt19937_64 rng(s);
    const std::uint64_t m = std::uniform_int_distribution<std::uint64_t>(16, o.max_rows)(rng);
    const std::uint64_t k = std::uniform_int_distribution<std::uint64_t>(o.policy.input_tile, o.max_cols)(rng);
    auto draw = [&]() {
        if (o.arithmetic == Arithmetic::Exact) return Bf16::from_float(static_cast<float>(std::uniform_int_distribution<int>(-8, 8)(rng)));
        return Bf16::from_float(std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng));
    };
    BatteryJob job{s, WeightMatrix(m, k), std::vector<Bf16>(k)};
    for (auto& e : job.w.data) e = draw();
    for (auto& e : job.x) e = draw();
    return job;
}

/// Seeded battery of random GEMVs run through the engine and compared with the oracle.
/// Exact mode uses small integers so every partial sum is representable; BF16 mode
/// uses uniform (-1, 1) values and a normwise tolerance of 2^-7.
inline GemvBatteryResult run_gemv_battery(const GemvBatteryOptions& o) {
    GemvBatteryResult res;
    for (std::uint64_t j = 0; j < o.jobs; ++j) {
        const auto [s, w, x] = make_battery_job(o, j);
        const std::uint64_t m = w.out_dim, k = w.in_dim;

        PimEngineOptions eo;
        eo.arithmetic = o.arithmetic;
        eo.corrupt_mac_order = o.corrupt_mac_order;
        PimSetup setup(o.memory, o.policy, m, k, o.weight_attribute, eo);
        setup.load_weights(w);
        GemvResult r = setup.run(x);
        if (o.runs_per_job_twice) r = setup.run(x);
        if (j == 0) res.first_trace = r.trace;

        const auto want = oracle_gemv(w, x);
        const double err = normwise_error(r.output, want);
        res.max_error = std::max(res.max_error, err);
        const bool bad = o.arithmetic == Arithmetic::Exact ? r.output != want : !(err <= kBf16Tolerance);
        if (bad) {
            ++res.mismatched_jobs;
            if (!res.first_failure) {
                GemvFailure f{j, s, 0, 0.0, 0.0, err};
                for (std::uint64_t i = 0; i < m; ++i) {
                    if (r.output[i] != want[i]) {
                        f.m = i;
                        f.got = r.output[i];
                        f.want = want[i];
                        break;
                    }
                }
                res.first_failure = f;
            }
        }
        if (!r.integrity.ok()) {
            ++res.integrity_failures;
            if (!res.first_integrity_failure) res.first_integrity_failure = r.integrity;
        }
        ++res.jobs;
    }
    return res;
}

}  // namespace sherpa
