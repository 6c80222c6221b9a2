#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pimsherpa/cost_model.hpp"
#include "pimsherpa/error.hpp"
#include "pimsherpa/memory_system.hpp"
#include "pimsherpa/model.hpp"
#include "pimsherpa/weight_layout.hpp"

namespace sherpa {

/// Simulated time. Integer picoseconds keep serial compositions exact.
using Picos = std::int64_t;

inline Picos to_picos(double seconds) { return std::llround(seconds * 1e12); }
inline double to_seconds(Picos p) { return static_cast<double>(p) * 1e-12; }

enum class ScenarioKind { WD, FACIL_O, S_DDB, S_OWR, C_GEMM, NC_GEMM };

inline constexpr std::array<ScenarioKind, 6> kAllScenarios{ScenarioKind::WD,    ScenarioKind::FACIL_O, ScenarioKind::S_DDB,
                                                           ScenarioKind::S_OWR, ScenarioKind::C_GEMM,  ScenarioKind::NC_GEMM};

constexpr std::string_view to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::WD: return "WD";
        case ScenarioKind::FACIL_O: return "FACIL_O";
        case ScenarioKind::S_DDB: return "S_DDB";
        case ScenarioKind::S_OWR: return "S_OWR";
        case ScenarioKind::C_GEMM: return "C_GEMM";
        case ScenarioKind::NC_GEMM: return "NC_GEMM";
    }
    return "?";
}

inline std::optional<ScenarioKind> scenario_from_string(std::string s) {
    std::replace(s.begin(), s.end(), '-', '_');
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (auto k : kAllScenarios) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

/// Decode runs on PIM in every scenario except the host-only baseline.
constexpr bool uses_pim_decode(ScenarioKind k) { return k != ScenarioKind::C_GEMM; }

constexpr std::uint64_t buffer_count(ScenarioKind k) {
    return k == ScenarioKind::S_DDB ? 2 : (k == ScenarioKind::S_OWR ? 1 : 0);
}

/// Model, platform and the PIM-aware image layout it implies.
struct System {
    ModelSpec model;
    HardwareSpec hw;
    PaddingReport padding;

    /// One cacheable buffer: H x I elements, the largest decoder weight.
    [[nodiscard]] std::uint64_t buffer_bytes() const { return model.hidden * model.intermediate * model.element_bytes; }
};

inline System make_system(const ModelSpec& model, const HardwareSpec& hw, const AddressMap& map, const PlacementPolicy& policy) {
    validate_model(model);
    validate_hardware(hw);
    return System{model, hw, padded_size(model, map, policy)};
}

enum class CapacityBasis { Computed, Reported };

/// Computed basis uses the modeled layout; reported basis substitutes the checkpoint
/// byte figures carried by the model preset where present.
inline CapacityInputs capacity_inputs(const System& sys, CapacityBasis basis = CapacityBasis::Computed) {
    CapacityInputs in{sys.padding.host_bytes, sys.padding.pim_bytes, sys.buffer_bytes()};
    if (basis == CapacityBasis::Reported && sys.model.reported_host_bytes) {
        in.host_bytes = *sys.model.reported_host_bytes;
        in.pim_bytes = in.host_bytes + sys.model.reported_padding_bytes.value_or(sys.padding.padding_bytes());
    }
    return in;
}

inline void check_capacity(ScenarioKind k, const System& sys) {
    const auto rep = capacity_report(capacity_inputs(sys));
    const auto& line = rep.line(std::string(to_string(k)));
    if (line.total > sys.hw.dram_capacity_bytes) {
        throw Error(ErrorCode::Capacity, std::string(to_string(k)) + " needs " + std::to_string(line.total) + " bytes of DRAM, device has " +
                                             std::to_string(sys.hw.dram_capacity_bytes));
    }
}

/// One GEMM over a (part of a) weight matrix.
struct GemmStep {
    std::string tag;
    MatrixKind kind = MatrixKind::Q;
    std::uint64_t layer = 0;
    std::uint64_t rows = 0;        ///< output rows covered
    std::uint64_t params = 0;
    std::uint64_t host_bytes = 0;
    std::uint64_t pim_bytes = 0;   ///< PIM-aware source bytes an SMC reads
};

/// Decoder GEMMs in execution order, then the LM head in buffer-sized row chunks.
inline std::vector<GemmStep> gemm_steps(const System& sys) {
    std::vector<GemmStep> steps;
    const auto& m = sys.model;
    const MatrixPadding* lm = nullptr;
    for (const auto& mp : sys.padding.matrices) {
        if (mp.shape.kind == MatrixKind::LmHead) {
            lm = &mp;
            continue;
        }
        steps.push_back({mp.shape.tag(), mp.shape.kind, mp.shape.layer, mp.shape.out_dim, mp.shape.params(), mp.host_bytes,
                         mp.pim_bytes});
    }
    if (lm != nullptr) {
        const std::uint64_t chunk_rows = std::max<std::uint64_t>(1, sys.buffer_bytes() / (m.hidden * m.element_bytes));
        const std::uint64_t n = ceil_div(m.vocab, chunk_rows);
        for (std::uint64_t c = 0; c < n; ++c) {
            const std::uint64_t r0 = c * chunk_rows, r1 = std::min(m.vocab, r0 + chunk_rows);
            const std::uint64_t params = (r1 - r0) * m.hidden;
            const std::uint64_t pim = lm->pim_bytes * r1 / m.vocab - lm->pim_bytes * r0 / m.vocab;
            steps.push_back({"lm_head[" + std::to_string(c) + "]", MatrixKind::LmHead, m.layers, r1 - r0, params,
                             params * m.element_bytes, pim});
        }
    }
    return steps;
}

enum class Role { Copy, Compute, Host };

constexpr std::string_view to_string(Role r) {
    switch (r) {
        case Role::Copy: return "copy";
        case Role::Compute: return "compute";
        case Role::Host: return "host";
    }
    return "?";
}

struct Segment {
    std::string agent;
    Role role = Role::Compute;
    std::string tag;
    Picos start = 0;
    Picos end = 0;
    int buffer = -1;           ///< cacheable buffer read (compute) or written (copy)
    std::uint64_t bytes = 0;
    std::string consumer;      ///< for copies: the GEMM that will read these bytes
};

struct Timeline {
    std::vector<Segment> segments;

    [[nodiscard]] Picos end() const {
        Picos e = 0;
        for (const auto& s : segments) e = std::max(e, s.end);
        return e;
    }
    [[nodiscard]] Picos busy(std::string_view agent) const {
        Picos b = 0;
        for (const auto& s : segments) {
            if (s.agent == agent) b += s.end - s.start;
        }
        return b;
    }
};

/// Which agent finished a GEMM step last.
struct StepCritical {
    std::string tag;
    Picos compute = 0;
    Picos copy = 0;

    [[nodiscard]] bool copy_critical() const { return copy > compute; }
};

struct PrefillResult {
    ScenarioKind scenario = ScenarioKind::FACIL_O;
    Picos ttft = 0;
    Picos gemm_total = 0;
    Picos smc_total = 0;
    Picos preload = 0;
    std::uint64_t copied_bytes = 0;
    std::uint64_t weight_bytes_streamed = 0;  ///< DRAM weight traffic of the GEMMs
    Timeline timeline;
    std::vector<StepCritical> steps;

    [[nodiscard]] double ttft_seconds() const { return to_seconds(ttft); }
};

namespace detail {

inline constexpr const char* kComputeAgent = "compute";
inline constexpr const char* kCopyAgent = "copy";

inline Picos gemm_picos(const GemmStep& s, std::uint64_t sl, const HardwareSpec& hw) {
    return to_picos(gemm_time(s.host_bytes, s.params, sl, hw));
}

inline void add_attention(PrefillResult& r, const System& sys, const GemmStep& s, Picos& t) {
    if (s.kind != MatrixKind::V || sys.hw.attention_time_per_layer <= 0.0) return;
    const Picos d = to_picos(sys.hw.attention_time_per_layer);
    r.timeline.segments.push_back({kComputeAgent, Role::Host, "L" + std::to_string(s.layer) + ".attn", t, t + d, -1, 0, {}});
    t += d;
}

}  // namespace detail

struct CopyItem {
    std::string tag;
    std::uint64_t bytes = 0;
    int buffer = 0;
    std::string consumer;
};

/// One barrier interval of the double-buffered schedule.
struct DdbPhase {
    GemmStep step;
    int buffer = 0;              ///< buffer the GEMM reads
    std::vector<CopyItem> copies; ///< issued while the GEMM runs
};

struct DdbPlan {
    std::vector<CopyItem> preload;
    std::vector<DdbPhase> phases;
};

/// Copy plan: Q,K,V,O share buffer 0 and each carries a quarter of FF0 into
/// buffer 1; FF0 carries FF1, FF1 carries FF2, FF2 carries the next layer's
/// Q,K,V,O. LM head chunks ping-pong after the last layer.
inline DdbPlan plan_ddb(const System& sys) {
    const auto steps = gemm_steps(sys);
    const std::uint64_t buf = sys.buffer_bytes();
    const auto& m = sys.model;
    const std::uint64_t qkvo = (2 * m.hidden * m.hidden + 2 * m.hidden * m.kv_dim()) * m.element_bytes;
    if (m.layers > 0 && qkvo > buf) throw Error(ErrorCode::Schedule, "Q,K,V,O do not fit one cacheable buffer");
    for (const auto& s : steps) {
        if (s.host_bytes > buf) throw Error(ErrorCode::Schedule, "buffer smaller than layer " + s.tag);
    }

    auto whole = [](const GemmStep& s, int buffer) { return CopyItem{s.tag, s.pim_bytes, buffer, s.tag}; };
    auto group_of = [&](std::size_t first, int buffer) {
        std::vector<CopyItem> items;
        if (steps[first].kind == MatrixKind::LmHead) {
            items.push_back(whole(steps[first], buffer));
        } else {
            for (std::size_t j = first; j < first + 4; ++j) items.push_back(whole(steps[j], buffer));
        }
        return items;
    };

    DdbPlan plan;
    if (steps.empty()) return plan;
    plan.preload = group_of(0, 0);
    const std::size_t dec = m.layers * 7;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const GemmStep& s = steps[i];
        DdbPhase ph{s, 0, {}};
        if (i < dec) {
            const std::size_t base = i - i % 7;
            const GemmStep& ff0 = steps[base + 4];
            switch (s.kind) {
                case MatrixKind::Q:
                case MatrixKind::K:
                case MatrixKind::V:
                case MatrixKind::O: {
                    const std::uint64_t q = static_cast<std::uint64_t>(s.kind) - static_cast<std::uint64_t>(MatrixKind::Q);
                    const std::uint64_t b0 = ff0.pim_bytes * q / 4, b1 = ff0.pim_bytes * (q + 1) / 4;
                    ph.buffer = 0;
                    ph.copies.push_back({ff0.tag + "/" + std::to_string(q + 1), b1 - b0, 1, ff0.tag});
                    break;
                }
                case MatrixKind::FF0:
                    ph.buffer = 1;
                    ph.copies.push_back(whole(steps[base + 5], 0));
                    break;
                case MatrixKind::FF1:
                    ph.buffer = 0;
                    ph.copies.push_back(whole(steps[base + 6], 1));
                    break;
                case MatrixKind::FF2:
                    ph.buffer = 1;
                    if (i + 1 < steps.size()) ph.copies = group_of(i + 1, 0);
                    break;
                case MatrixKind::LmHead: break;
            }
        } else {
            const std::size_t c = i - dec;
            ph.buffer = static_cast<int>(c % 2);
            if (i + 1 < steps.size()) ph.copies.push_back(whole(steps[i + 1], static_cast<int>((c + 1) % 2)));
        }
        plan.phases.push_back(std::move(ph));
    }
    return plan;
}

/// Double-buffered prefill: copy and compute agents advance together and meet at a
/// barrier after every GEMM. No copy is issued during attention segments. The
/// preload of the first layer is charged to TTFT.
inline PrefillResult build_ddb_schedule(const System& sys, std::uint64_t sl) {
    if (sl == 0) throw Error(ErrorCode::Config, "sequence length must be >= 1");
    const auto plan = plan_ddb(sys);
    const auto& hw = sys.hw;
    PrefillResult r;
    r.scenario = ScenarioKind::S_DDB;
    auto copy_picos = [&](std::uint64_t bytes) { return to_picos(smc_time(bytes, hw.ddb_copy_agents, hw)); };
    auto run_copies = [&](const std::vector<CopyItem>& items, Picos start) {
        Picos t = start;
        for (const auto& c : items) {
            const Picos d = copy_picos(c.bytes);
            r.timeline.segments.push_back({detail::kCopyAgent, Role::Copy, c.tag, t, t + d, c.buffer, c.bytes, c.consumer});
            r.smc_total += d;
            r.copied_bytes += c.bytes;
            t += d;
        }
        return t;
    };

    Picos t = run_copies(plan.preload, 0);
    r.preload = t;
    for (const auto& ph : plan.phases) {
        const Picos g = detail::gemm_picos(ph.step, sl, hw);
        r.timeline.segments.push_back({detail::kComputeAgent, Role::Compute, ph.step.tag, t, t + g, ph.buffer, ph.step.host_bytes, {}});
        r.gemm_total += g;
        r.weight_bytes_streamed += ph.step.host_bytes;
        const Picos copy_end = run_copies(ph.copies, t);
        r.steps.push_back({ph.step.tag, g, copy_end - t});
        t = std::max(t + g, copy_end);
        detail::add_attention(r, sys, ph.step, t);
    }
    r.ttft = r.timeline.end();
    return r;
}

/// Prefill TTFT and timeline for one scenario.
inline PrefillResult run_prefill(ScenarioKind kind, const System& sys, std::uint64_t sl) {
    if (sl == 0) throw Error(ErrorCode::Config, "sequence length must be >= 1");
    check_capacity(kind, sys);
    if (kind == ScenarioKind::S_DDB) return build_ddb_schedule(sys, sl);

    const auto& hw = sys.hw;
    PrefillResult r;
    r.scenario = kind;
    Picos t = 0;
    for (const auto& s : gemm_steps(sys)) {
        if (kind == ScenarioKind::S_OWR) {
            const Picos c = to_picos(smc_time(s.pim_bytes, hw.owr_copy_agents, hw));
            r.timeline.segments.push_back({detail::kCopyAgent, Role::Copy, s.tag, t, t + c, 0, s.pim_bytes, s.tag});
            r.smc_total += c;
            r.copied_bytes += s.pim_bytes;
            t += c;
        }
        Picos g = 0;
        if (kind == ScenarioKind::NC_GEMM) {
            g = to_picos(nc_gemm_time(s.pim_bytes, s.params, sl, hw));
            r.weight_bytes_streamed += s.pim_bytes * ceil_div(sl, hw.nc_tile_reuse);
        } else {
            g = detail::gemm_picos(s, sl, hw);
            r.weight_bytes_streamed += s.host_bytes;
        }
        const int buffer = kind == ScenarioKind::S_OWR ? 0 : -1;
        r.timeline.segments.push_back({detail::kComputeAgent, Role::Compute, s.tag, t, t + g, buffer, s.host_bytes, {}});
        r.gemm_total += g;
        t += g;
        detail::add_attention(r, sys, s, t);
    }
    r.ttft = r.timeline.end();
    return r;
}

/// Analytical prefill for the whole model in t-units (one weight stream).
struct AnalyticalPrefill {
    ScenarioKind scenario = ScenarioKind::FACIL_O;
    Rational gemm;
    Rational online;
    Rational total;
    std::int64_t overhead_pct = 100;  ///< total vs GEMM alone
};

inline AnalyticalPrefill analytical_prefill(ScenarioKind kind, std::uint64_t sl, const HardwareSpec& hw) {
    AnalyticalPrefill a;
    a.scenario = kind;
    a.gemm = gemm_t_units(sl, hw);
    switch (kind) {
        case ScenarioKind::S_OWR:
            a.online = smc_t_units();
            a.total = a.gemm + a.online;
            break;
        case ScenarioKind::S_DDB:
            a.online = smc_t_units();
            a.total = max(a.gemm, a.online);
            break;
        case ScenarioKind::NC_GEMM:
            a.total = max(a.gemm, Rational(static_cast<std::int64_t>(ceil_div(sl, hw.nc_tile_reuse))));
            break;
        default: a.total = a.gemm; break;
    }
    a.overhead_pct = (a.total / a.gemm * Rational(100)).round();
    return a;
}

struct DecodeResult {
    double token_time = 0.0;
    double decode_time = 0.0;
    double tps = 0.0;
};

inline double token_time(ScenarioKind kind, const System& sys) {
    const bool pim = uses_pim_decode(kind);
    return decode_token_time(pim ? sys.padding.pim_bytes : sys.padding.host_bytes, sys.hw, pim);
}

inline DecodeResult run_decode(ScenarioKind kind, const System& sys, std::uint64_t out_len) {
    if (out_len == 0) throw Error(ErrorCode::Config, "output length must be >= 1");
    const double tt = token_time(kind, sys);
    return {tt, tt * static_cast<double>(out_len), 1.0 / tt};
}

struct EndToEnd {
    ScenarioKind scenario = ScenarioKind::FACIL_O;
    std::uint64_t in_len = 0;
    std::uint64_t out_len = 0;
    double ttft = 0.0;
    double token_time = 0.0;
    double decode_time = 0.0;
    double total = 0.0;
    double baseline_total = 0.0;  ///< C_GEMM prefill plus host-only decode
    double speedup = 1.0;
    double prefill_tps = 0.0;     ///< input tokens per second of TTFT
    double decode_tps = 0.0;
};

inline EndToEnd run_end_to_end(ScenarioKind kind, const System& sys, std::uint64_t in_len, std::uint64_t out_len) {
    EndToEnd e;
    e.scenario = kind;
    e.in_len = in_len;
    e.out_len = out_len;
    e.ttft = run_prefill(kind, sys, in_len).ttft_seconds();
    e.token_time = token_time(kind, sys);
    e.decode_time = e.token_time * static_cast<double>(out_len);
    e.total = e.ttft + e.decode_time;
    const double base_ttft = kind == ScenarioKind::C_GEMM ? e.ttft : run_prefill(ScenarioKind::C_GEMM, sys, in_len).ttft_seconds();
    e.baseline_total = base_ttft + token_time(ScenarioKind::C_GEMM, sys) * static_cast<double>(out_len);
    e.speedup = e.baseline_total / e.total;
    e.prefill_tps = static_cast<double>(in_len) / e.ttft;
    e.decode_tps = 1.0 / e.token_time;
    return e;
}

struct SpeedupPoint {
    ScenarioKind scenario;
    std::uint64_t in_len;
    std::uint64_t out_len;
    double speedup;
};

/// End-to-end speedup over the host-only baseline on an (in_len x out_len) grid.
inline std::vector<SpeedupPoint> speedup_grid(const System& sys, const std::vector<std::uint64_t>& in_lens,
                                              const std::vector<std::uint64_t>& out_lens,
                                              const std::vector<ScenarioKind>& scenarios) {
    if (in_lens.empty() || out_lens.empty() || scenarios.empty()) throw Error(ErrorCode::Config, "speedup grid needs non-empty axes");
    std::vector<SpeedupPoint> pts;
    for (auto k : scenarios) {
        for (auto in : in_lens) {
            const double ttft = run_prefill(k, sys, in).ttft_seconds();
            const double base = run_prefill(ScenarioKind::C_GEMM, sys, in).ttft_seconds();
            for (auto out : out_lens) {
                const double o = static_cast<double>(out);
                const double s = (base + o * token_time(ScenarioKind::C_GEMM, sys)) / (ttft + o * token_time(k, sys));
                pts.push_back({k, in, out, s});
            }
        }
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Functional prefill: SMC'd weights vs host-friendly weights, integer-valued data.

struct FunctionalReport {
    std::uint64_t matrices_checked = 0;
    std::uint64_t mismatches = 0;
    std::uint64_t buffer_conflicts = 0;  ///< copies into the buffer the concurrent GEMM reads
    std::uint64_t smc_source_reads = 0;

    [[nodiscard]] bool ok() const { return mismatches == 0 && buffer_conflicts == 0; }
};

/// Converts every matrix of a small model to a PIM-aware image in a non-cacheable
/// region, replays the scenario's copy plan into cacheable buffers, and compares
/// each GEMM over the buffer against the GEMM over the original weights. Values
/// are small integers so both sides are exact. Copies of a phase are applied
/// before its GEMM, so a plan that overwrote the live buffer would show up as a
/// mismatch.
inline FunctionalReport functional_prefill(ScenarioKind kind, const ModelSpec& model, const MemoryConfig& mcfg,
                                           const PlacementPolicy& policy, std::uint64_t sl, std::uint64_t seed) {
    validate_model(model);
    FunctionalReport rep;
    MemorySystem mem(mcfg);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> val(-4, 4);

    const auto pad = padded_size(model, mem.map(), policy);
    std::uint64_t image_rows = 0;
    for (const auto& mp : pad.matrices) image_rows += mp.pim_bytes / mem.map().geometry.row_stride();
    const auto weights_region = mem.allocate_region(RegionKind::ContiguousPool, Attribute::NonCacheable,
                                                    image_rows * mem.map().geometry.row_stride(), "weights");
    const std::uint64_t buf_bytes = model.hidden * model.intermediate * model.element_bytes;
    const MemoryRegion bufs[2] = {mem.allocate_region(RegionKind::General, Attribute::Cacheable, buf_bytes, "buffer0"),
                                  mem.allocate_region(RegionKind::General, Attribute::Cacheable, buf_bytes, "buffer1")};

    const std::uint64_t base_row = weights_region.base / mem.map().geometry.row_stride();
    std::map<std::string, WeightMatrix> host;
    std::map<std::string, PimPlacement> place;
    for (const auto& mp : pad.matrices) {
        WeightMatrix w(mp.shape.out_dim, mp.shape.in_dim);
        for (auto& e : w.data) e = Bf16::from_float(static_cast<float>(val(rng)));
        PimPlacement p(mem.map(), policy, mp.shape.out_dim, mp.shape.in_dim, base_row + mp.base_row);
        mem.write_data(p.base_address(), convert_to_pim_aware(w, p).bytes);
        host.emplace(mp.shape.tag(), std::move(w));
        place.emplace(mp.shape.tag(), std::move(p));
    }

    struct Pending {
        std::string matrix;
        IndexRange rows;
        IndexRange cols;
        int buffer;
        std::uint64_t offset;
    };
    std::map<std::string, std::pair<int, std::uint64_t>> located;  // step tag -> (buffer, offset)
    std::uint64_t fill[2] = {0, 0};
    const auto steps = gemm_steps(System{model, {}, pad});
    const std::uint64_t chunk_rows = std::max<std::uint64_t>(1, buf_bytes / (model.hidden * model.element_bytes));

    auto matrix_of = [&](const GemmStep& s) { return s.kind == MatrixKind::LmHead ? std::string("lm_head") : s.tag; };
    auto rows_of = [&](const GemmStep& s) {
        if (s.kind != MatrixKind::LmHead) return IndexRange{0, s.rows};
        const std::uint64_t c = std::stoull(s.tag.substr(s.tag.find('[') + 1));
        return IndexRange{c * chunk_rows, c * chunk_rows + s.rows};
    };
    auto copy = [&](const GemmStep& s, IndexRange cols, int buffer, std::uint64_t agents) {
        if (!located.count(s.tag)) {
            if (fill[buffer] + s.host_bytes > buf_bytes) fill[buffer] = 0;
            located[s.tag] = {buffer, fill[buffer]};
            fill[buffer] += s.host_bytes;
        }
        const auto [b, off] = located[s.tag];
        const auto rows = rows_of(s);
        const auto& p = place.at(matrix_of(s));
        const PhysAddr dst = bufs[b].base + off + cols.begin * rows.size() * model.element_bytes;
        rep.smc_source_reads += smc_copy_partitioned(mem, p, dst, s.host_bytes, rows, cols, agents).source_reads;
    };
    auto gemm_check = [&](const GemmStep& s, int buffer) {
        const auto [b, off] = located.at(s.tag);
        if (b != buffer) ++rep.mismatches;
        const auto rows = rows_of(s);
        const auto& w = host.at(matrix_of(s));
        std::vector<std::byte> tile(s.host_bytes);
        mem.read_data(bufs[b].base + off, tile);
        std::vector<double> x(w.in_dim * sl);
        for (auto& v : x) v = val(rng);
        for (std::uint64_t m = rows.begin; m < rows.end; ++m) {
            for (std::uint64_t t = 0; t < sl; ++t) {
                std::int64_t ref = 0;
                double got = 0.0;
                for (std::uint64_t k = 0; k < w.in_dim; ++k) {
                    const double xv = x[t * w.in_dim + k];
                    ref += static_cast<std::int64_t>(w.at(m, k).to_float()) * static_cast<std::int64_t>(xv);
                    got += static_cast<double>(load_bf16(tile, (k * rows.size() + m - rows.begin) * 2).to_float()) * xv;
                }
                if (static_cast<double>(ref) != got) ++rep.mismatches;
            }
        }
        ++rep.matrices_checked;
    };

    if (kind == ScenarioKind::S_DDB) {
        const auto plan = plan_ddb(System{model, {}, pad});
        auto apply = [&](const std::vector<CopyItem>& items) {
            for (const auto& c : items) {
                const auto it = std::find_if(steps.begin(), steps.end(), [&](const GemmStep& s) { return s.tag == c.consumer; });
                IndexRange cols{0, place.at(matrix_of(*it)).cols()};
                const auto slash = c.tag.find('/');
                if (slash != std::string::npos) {  // FF0 quarter: a band of input columns
                    const std::uint64_t q = std::stoull(c.tag.substr(slash + 1)) - 1;
                    cols = IndexRange{cols.end * q / 4, cols.end * (q + 1) / 4};
                }
                if (cols.begin == 0) located.erase(c.consumer);
                copy(*it, cols, c.buffer, 2);
            }
        };
        apply(plan.preload);
        for (const auto& ph : plan.phases) {
            for (const auto& c : ph.copies) {
                if (c.buffer == ph.buffer) ++rep.buffer_conflicts;
            }
            gemm_check(ph.step, ph.buffer);
            apply(ph.copies);
        }
    } else {
        for (const auto& s : steps) {
            if (kind == ScenarioKind::S_OWR || kind == ScenarioKind::FACIL_O || kind == ScenarioKind::NC_GEMM) {
                located.erase(s.tag);
                fill[0] = 0;
                copy(s, IndexRange{0, place.at(matrix_of(s)).cols()}, 0, kind == ScenarioKind::S_OWR ? 4 : 1);
                gemm_check(s, 0);
            } else {
                // WD and C_GEMM compute from the host-friendly copy itself.
                located[s.tag] = {0, 0};
                const auto rows = rows_of(s);
                const auto& w = host.at(matrix_of(s));
                std::vector<std::byte> tile(s.host_bytes);
                for (std::uint64_t k = 0; k < w.in_dim; ++k) {
                    for (std::uint64_t m = rows.begin; m < rows.end; ++m) store_bf16(tile, (k * rows.size() + m - rows.begin) * 2, w.at(m, k));
                }
                mem.write_data(bufs[0].base, tile);
                gemm_check(s, 0);
            }
        }
    }
    return rep;
}

}  // namespace sherpa
