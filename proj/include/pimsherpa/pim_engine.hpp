#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pimsherpa/address_map.hpp"
#include "pimsherpa/error.hpp"
#include "pimsherpa/memory_system.hpp"
#include "pimsherpa/numeric.hpp"
#include "pimsherpa/weight_layout.hpp"

namespace sherpa {

inline constexpr std::uint64_t kRfEntries = 8;    ///< input and output register file depth
inline constexpr std::uint64_t kReadGroup = 32;   ///< MAC reads per DRAM-row group
inline constexpr std::uint64_t kDrainReads = 5;   ///< dummy reads that flush the SIMD pipeline
inline constexpr AgentId kPimHostAgent = 100;

enum class PimMode { Standard, MultiBank };
enum class Arithmetic { Bf16, Exact };

/// Per-bank SIMD unit. Accumulators are 32-bit float in BF16 mode and double in exact mode.
struct PimBlock {
    std::vector<Bf16> input_rf;    ///< kRfEntries x lanes
    std::vector<double> output_rf; ///< kRfEntries x lanes
    std::vector<double> acc;       ///< lanes
    std::uint64_t input_ptr = 0;

    explicit PimBlock(std::uint64_t lanes)
        : input_rf(kRfEntries * lanes), output_rf(kRfEntries * lanes), acc(lanes, 0.0) {}
};

/// Tiling of one GEMV over a placement.
struct GemvTiling {
    std::uint64_t num_out_tiles = 0;
    std::uint64_t num_input_tiles = 0;
    std::uint64_t num_tile_rows = 0;  ///< read groups per input tile
    std::uint64_t read_group = kReadGroup;

    static GemvTiling of(const PimPlacement& p) {
        if (p.policy().input_tile != kRfEntries * p.lanes()) {
            throw Error(ErrorCode::Config, "input tile must equal RF entries x lanes for PIM execution");
        }
        if (p.policy().input_tile % kReadGroup != 0) throw Error(ErrorCode::Config, "input tile must be a multiple of the read group");
        return GemvTiling{p.tiles() / p.policy().active_banks, p.padded_cols() / p.policy().input_tile,
                          p.policy().input_tile / kReadGroup, kReadGroup};
    }
};

struct CommandCounts {
    std::uint64_t input_writes = 0;   ///< Write8 of inputs
    std::uint64_t mac_reads = 0;
    std::uint64_t dummy_reads = 0;
    std::uint64_t output_writes = 0;  ///< Write8 of outputs

    friend bool operator==(const CommandCounts&, const CommandCounts&) = default;
};

/// Command counts the host issues for a job.
inline CommandCounts expected_commands(const PimPlacement& p, PimMode mode) {
    const auto t = GemvTiling::of(p);
    const std::uint64_t per_read = mode == PimMode::MultiBank ? 1 : p.policy().active_banks;
    return CommandCounts{t.num_out_tiles * t.num_input_tiles,
                         t.num_out_tiles * t.num_input_tiles * t.num_tile_rows * t.read_group * per_read,
                         t.num_out_tiles * kDrainReads, t.num_out_tiles};
}

/// Addresses of every MAC read, in issue order.
inline std::vector<PhysAddr> mac_read_addresses(const PimPlacement& p, PimMode mode) {
    const auto t = GemvTiling::of(p);
    const std::uint64_t ab = p.policy().active_banks;
    std::vector<PhysAddr> out;
    out.reserve(expected_commands(p, mode).mac_reads);
    for (std::uint64_t ot = 0; ot < t.num_out_tiles; ++ot) {
        const BankUnit u = p.unit_of_tile(ot * ab);
        for (std::uint64_t i = 0; i < t.num_input_tiles; ++i) {
            for (std::uint64_t r = 0; r < t.num_tile_rows; ++r) {
                for (std::uint64_t c = 0; c < t.read_group; ++c) {
                    const std::uint64_t k = i * p.policy().input_tile + r * t.read_group + c;
                    if (mode == PimMode::MultiBank) {
                        out.push_back(encode_coord(p.map(), p.slab_coord(u.channel, u.rank, 0, u.local_tile, k)));
                    } else {
                        for (std::uint64_t b = 0; b < ab; ++b) {
                            out.push_back(encode_coord(p.map(), p.slab_coord(u.channel, u.rank, b, u.local_tile, k)));
                        }
                    }
                }
            }
        }
    }
    return out;
}

enum class IntegrityStatus { Ok, PimBlocked, Desynchronized, BlockedAndDesynchronized };

constexpr const char* to_string(IntegrityStatus s) {
    switch (s) {
        case IntegrityStatus::Ok: return "ok";
        case IntegrityStatus::PimBlocked: return "pim-blocked";
        case IntegrityStatus::Desynchronized: return "desynchronized";
        case IntegrityStatus::BlockedAndDesynchronized: return "pim-blocked+desynchronized";
    }
    return "?";
}

struct IntegrityReport {
    std::uint64_t expected_mac_reads = 0;
    std::uint64_t observed_mac_bursts = 0;  ///< weight-region read bursts that reached DRAM
    std::uint64_t delivered = 0;            ///< issued MAC reads that reached DRAM
    std::uint64_t deficit = 0;              ///< issued MAC reads absorbed by the cache
    std::uint64_t surplus = 0;              ///< weight-region bursts nobody issued as MAC reads
    std::vector<PhysAddr> absorbing_lines;  ///< distinct cache lines that absorbed MAC reads
    IntegrityStatus status = IntegrityStatus::Ok;

    [[nodiscard]] bool ok() const { return status == IntegrityStatus::Ok; }
};

/// Compares the weight-region reads in `trace` against the MAC reads the job must
/// deliver. A MAC read counts as delivered when some read burst in the trace
/// covers its address; the rest were absorbed by the cache.
inline IntegrityReport verify_trigger_integrity(const PimPlacement& p, PimMode mode, std::span<const TraceRecord> trace,
                                                std::uint64_t line_bytes, AgentId host_agent = kPimHostAgent) {
    IntegrityReport rep;
    const auto issued = mac_read_addresses(p, mode);
    rep.expected_mac_reads = expected_commands(p, mode).mac_reads;
    const PhysAddr lo = p.base_address();
    const PhysAddr hi = lo + p.image_bytes();
    const std::uint64_t burst = p.geometry().burst_bytes;

    std::map<PhysAddr, std::uint64_t> covered;
    for (const auto& r : trace) {
        if (r.op != MemOp::Read || (r.agent != host_agent && r.agent != kPrefetchAgent)) continue;
        const PhysAddr first = r.addr & ~(burst - 1);
        for (PhysAddr a = first; a < r.addr + r.bytes; a += burst) {
            if (a >= lo && a < hi) {
                ++covered[a];
                ++rep.observed_mac_bursts;
            }
        }
    }
    std::vector<PhysAddr> lines;
    for (PhysAddr a : issued) {
        auto it = covered.find(a);
        if (it != covered.end() && it->second > 0) {
            --it->second;
            ++rep.delivered;
        } else {
            ++rep.deficit;
            lines.push_back(a & ~(line_bytes - 1));
        }
    }
    std::sort(lines.begin(), lines.end());
    lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
    rep.absorbing_lines = std::move(lines);
    rep.surplus = rep.observed_mac_bursts - rep.delivered;
    if (rep.deficit > 0 && rep.surplus > 0) {
        rep.status = IntegrityStatus::BlockedAndDesynchronized;
    } else if (rep.deficit > 0) {
        rep.status = IntegrityStatus::PimBlocked;
    } else if (rep.surplus > 0) {
        rep.status = IntegrityStatus::Desynchronized;
    }
    return rep;
}

struct GemvJob {
    PimPlacement placement;    ///< weights already resident at placement.base_address()
    std::vector<Bf16> input;   ///< length placement.cols()
};

struct PimEngineOptions {
    PimMode mode = PimMode::MultiBank;
    Arithmetic arithmetic = Arithmetic::Bf16;
    AgentId agent = kPimHostAgent;
    bool require_noncacheable = false;  ///< refuse cacheable weights instead of flagging them
    bool corrupt_mac_order = false;     ///< test hook: MAC j consumes input j+1
};

struct GemvResult {
    std::vector<double> output;  ///< length placement.rows()
    CommandCounts issued;
    CommandCounts applied;       ///< commands the PIM blocks actually saw
    std::uint64_t overflow_triggers = 0;
    CommandTrace trace;
    IntegrityReport integrity;
};

/// Functional model of the PIM blocks of a memory system. The engine drives the
/// host side of the GEMV command protocol through `MemorySystem::access` and
/// applies to the blocks only what appears in the command trace, in trace order.
class PimEngine {
public:
    PimEngine(MemorySystem& mem, MemoryRegion control, MemoryRegion output, PimEngineOptions opts = {})
        : mem_(mem), control_(std::move(control)), output_(std::move(output)), opts_(opts) {
        const auto& g = mem_.map().geometry;
        lanes_ = g.elements_per_burst();
        if (control_.attribute != Attribute::NonCacheable || output_.attribute != Attribute::NonCacheable) {
            throw Error(ErrorCode::Attribute, "PIM control and output regions must be non-cacheable");
        }
        if (control_.size < 2 * input_window_bytes()) throw Error(ErrorCode::Capacity, "PIM control region too small");
        const std::uint64_t banks = g.channels * g.ranks_per_channel * g.banks_per_rank;
        blocks_.assign(banks, PimBlock(lanes_));
    }

    [[nodiscard]] const PimEngineOptions& options() const { return opts_; }
    PimEngineOptions& options() { return opts_; }
    [[nodiscard]] std::uint64_t lanes() const { return lanes_; }
    [[nodiscard]] std::uint64_t input_window_bytes() const { return kRfEntries * mem_.map().geometry.burst_bytes; }
    [[nodiscard]] PhysAddr input_window() const { return control_.base; }
    [[nodiscard]] PhysAddr dummy_address() const { return control_.base + input_window_bytes(); }

    [[nodiscard]] const PimBlock& block(std::uint64_t channel, std::uint64_t rank, std::uint64_t bank) const {
        return blocks_[block_index(channel, rank, bank)];
    }

    /// Selects the (channel, rank) lockstep domain that subsequent RF writes target.
    void select_domain(std::uint64_t channel, std::uint64_t rank) {
        domain_channel_ = channel;
        domain_rank_ = rank;
    }

    /// Write8 of up to one input tile into the input RF. Unused lanes are zero-filled.
    void write_input(PhysAddr staging, std::span<const Bf16> elems) {
        const std::uint64_t cap = kRfEntries * lanes_;
        if (elems.size() > cap) throw Error(ErrorCode::Overflow, "input tile of " + std::to_string(elems.size()) + " elements exceeds RF");
        if (staging != input_window()) throw Error(ErrorCode::Misaligned, "input staging must target the RF window");
        std::vector<std::byte> buf(input_window_bytes(), std::byte{0});
        for (std::size_t i = 0; i < elems.size(); ++i) store_bf16(buf, i * 2, elems[i]);
        mem_.write_data(staging, buf);
        issue(staging, MemOp::Write, buf.size());
    }

    /// Output RF entry 0 of one block after a drain, rounded to element precision.
    [[nodiscard]] std::vector<double> read_output(std::uint64_t channel, std::uint64_t rank, std::uint64_t bank) const {
        const auto& b = blocks_[block_index(channel, rank, bank)];
        return {b.output_rf.begin(), b.output_rf.begin() + static_cast<std::ptrdiff_t>(lanes_)};
    }

    void reset_accumulators() {
        for (auto& b : blocks_) {
            std::fill(b.acc.begin(), b.acc.end(), 0.0);
            b.input_ptr = 0;
        }
    }

    GemvResult gemv_execute(const GemvJob& job) {
        const PimPlacement& p = job.placement;
        if (job.input.size() != p.cols()) throw Error(ErrorCode::SizeMismatch, "input length does not match matrix columns");
        const auto& wr = mem_.region_of(p.base_address());
        if (opts_.require_noncacheable && wr.attribute != Attribute::NonCacheable) {
            throw Error(ErrorCode::Attribute, "PIM weights must live in a non-cacheable region");
        }
        const auto t = GemvTiling::of(p);
        const std::uint64_t ab = p.policy().active_banks, it_len = p.policy().input_tile;
        const std::uint64_t out_bytes = kRfEntries * mem_.map().geometry.burst_bytes;
        if (output_.size < t.num_out_tiles * out_bytes) throw Error(ErrorCode::Capacity, "output region too small");

        weights_ = &p;
        result_ = GemvResult{};
        result_.output.assign(p.rows(), 0.0);
        const std::uint64_t seq = mem_.trace_seq();
        cursor_ = seq;

        for (std::uint64_t ot = 0; ot < t.num_out_tiles; ++ot) {
            const BankUnit u = p.unit_of_tile(ot * ab);
            select_domain(u.channel, u.rank);
            for (std::uint64_t b = 0; b < ab; ++b) {
                auto& blk = blocks_[block_index(u.channel, u.rank, b)];
                std::fill(blk.acc.begin(), blk.acc.end(), 0.0);
            }
            for (std::uint64_t i = 0; i < t.num_input_tiles; ++i) {
                const std::uint64_t k0 = i * it_len;
                const std::uint64_t k1 = std::min<std::uint64_t>(p.cols(), k0 + it_len);
                const std::span<const Bf16> chunk =
                    k0 < k1 ? std::span<const Bf16>(job.input).subspan(k0, k1 - k0) : std::span<const Bf16>{};
                write_input(input_window(), chunk);
                ++result_.issued.input_writes;
                for (std::uint64_t r = 0; r < t.num_tile_rows; ++r) {
                    for (std::uint64_t c = 0; c < t.read_group; ++c) {
                        const std::uint64_t k = k0 + r * t.read_group + c;
                        const std::uint64_t banks = opts_.mode == PimMode::MultiBank ? 1 : ab;
                        for (std::uint64_t b = 0; b < banks; ++b) {
                            issue(encode_coord(p.map(), p.slab_coord(u.channel, u.rank, b, u.local_tile, k)), MemOp::Read,
                                  p.geometry().burst_bytes);
                            ++result_.issued.mac_reads;
                        }
                    }
                }
            }
            for (std::uint64_t d = 0; d < kDrainReads; ++d) {
                issue(dummy_address(), MemOp::Read, p.geometry().burst_bytes);
                ++result_.issued.dummy_reads;
            }
            pending_out_tile_ = ot;
            issue(output_.base + ot * out_bytes, MemOp::Write, out_bytes);
            ++result_.issued.output_writes;
        }
        result_.trace = mem_.records_since(seq);
        result_.integrity = verify_trigger_integrity(p, opts_.mode, result_.trace, mem_.line_bytes(), opts_.agent);
        weights_ = nullptr;
        return std::move(result_);
    }

private:
    [[nodiscard]] std::size_t block_index(std::uint64_t channel, std::uint64_t rank, std::uint64_t bank) const {
        const auto& g = mem_.map().geometry;
        return static_cast<std::size_t>((channel * g.ranks_per_channel + rank) * g.banks_per_rank + bank);
    }

    void issue(PhysAddr addr, MemOp op, std::uint64_t bytes) {
        mem_.access(addr, op, bytes, opts_.agent);
        const std::uint64_t end = mem_.trace_seq();
        for (; cursor_ < end; ++cursor_) apply(mem_.record(cursor_));
    }

    void apply(const TraceRecord& r) {
        if (r.agent != opts_.agent && r.agent != kPrefetchAgent) return;
        const std::uint64_t burst = mem_.map().geometry.burst_bytes;
        if (r.op == MemOp::Write && r.addr == input_window()) {
            load_input_rf();
            ++result_.applied.input_writes;
            return;
        }
        if (r.op == MemOp::Write && output_.contains(r.addr)) {
            drain_to_output();
            ++result_.applied.output_writes;
            return;
        }
        if (r.op != MemOp::Read) return;
        for (PhysAddr a = r.addr & ~(burst - 1); a < r.addr + r.bytes; a += burst) {
            if (a >= dummy_address() && a < dummy_address() + input_window_bytes()) {
                ++result_.applied.dummy_reads;
            } else if (weights_ != nullptr && a >= weights_->base_address() && a < weights_->base_address() + weights_->image_bytes()) {
                trigger_mac(decode_address(mem_.map(), a));
                ++result_.applied.mac_reads;
            }
        }
    }

    void load_input_rf() {
        std::vector<std::byte> buf(input_window_bytes());
        mem_.read_data(input_window(), buf);
        const auto& g = mem_.map().geometry;
        for (std::uint64_t b = 0; b < g.banks_per_rank; ++b) {
            auto& blk = blocks_[block_index(domain_channel_, domain_rank_, b)];
            for (std::uint64_t i = 0; i < blk.input_rf.size(); ++i) blk.input_rf[i] = load_bf16(buf, i * 2);
            blk.input_ptr = 0;
        }
    }

    void trigger_mac(const DramCoord& c) {
        const PimPlacement& p = *weights_;
        const std::uint64_t ab = p.policy().active_banks;
        const std::uint64_t b0 = opts_.mode == PimMode::MultiBank ? 0 : c.bank;
        const std::uint64_t b1 = opts_.mode == PimMode::MultiBank ? ab : c.bank + 1;
        const auto& g = mem_.map().geometry;
        std::vector<std::byte> buf(g.burst_bytes);
        for (std::uint64_t b = b0; b < b1; ++b) {
            auto& blk = blocks_[block_index(c.channel, c.rank, b)];
            const std::uint64_t cap = blk.input_rf.size();
            if (blk.input_ptr >= cap) {
                ++result_.overflow_triggers;
                continue;
            }
            const std::uint64_t idx = opts_.corrupt_mac_order ? (blk.input_ptr + 1) % cap : blk.input_ptr;
            ++blk.input_ptr;
            DramCoord wc = c;
            wc.bank = b;
            wc.burst_offset = 0;
            mem_.read_data(encode_coord(mem_.map(), wc), buf);
            const Bf16 x = blk.input_rf[idx];
            for (std::uint64_t l = 0; l < lanes_; ++l) {
                const Bf16 w = load_bf16(buf, l * g.element_bytes);
                if (opts_.arithmetic == Arithmetic::Bf16) {
                    blk.acc[l] = static_cast<float>(static_cast<float>(blk.acc[l]) + w.to_float() * x.to_float());
                } else {
                    blk.acc[l] += static_cast<double>(w.to_float()) * static_cast<double>(x.to_float());
                }
            }
        }
    }

    void drain_to_output() {
        const PimPlacement& p = *weights_;
        const std::uint64_t ab = p.policy().active_banks;
        for (std::uint64_t b = 0; b < ab; ++b) {
            auto& blk = blocks_[block_index(domain_channel_, domain_rank_, b)];
            for (std::uint64_t l = 0; l < lanes_; ++l) {
                blk.output_rf[l] = opts_.arithmetic == Arithmetic::Bf16 ? round_bf16(static_cast<float>(blk.acc[l])) : blk.acc[l];
            }
            const std::uint64_t tile = pending_out_tile_ * ab + b;
            for (std::uint64_t l = 0; l < lanes_; ++l) {
                const std::uint64_t m = tile * lanes_ + l;
                if (m < p.rows()) result_.output[m] = blk.output_rf[l];
            }
        }
    }

    MemorySystem& mem_;
    MemoryRegion control_;
    MemoryRegion output_;
    PimEngineOptions opts_;
    std::uint64_t lanes_ = 16;
    std::vector<PimBlock> blocks_;
    std::uint64_t domain_channel_ = 0;
    std::uint64_t domain_rank_ = 0;
    std::uint64_t cursor_ = 0;
    std::uint64_t pending_out_tile_ = 0;
    const PimPlacement* weights_ = nullptr;
    GemvResult result_;
};

/// A memory system with a non-cacheable weight region, PIM control and output
/// regions, and a PIM engine. Used by tests, the CLI checker and the runtime demos.
struct PimSetup {
    MemorySystem mem;
    MemoryRegion weights;
    MemoryRegion control;
    MemoryRegion output;
    PimPlacement placement;
    PimEngine engine;

    PimSetup(MemoryConfig cfg, const PlacementPolicy& policy, std::uint64_t rows, std::uint64_t cols, Attribute weight_attr,
             PimEngineOptions opts = {})
        : mem(std::move(cfg)),
          weights(mem.allocate_region(RegionKind::ContiguousPool, weight_attr,
                                      PimPlacement(mem.map(), policy, rows, cols).image_bytes(), "pim-weights")),
          control(mem.allocate_region(RegionKind::General, Attribute::NonCacheable,
                                      2 * kRfEntries * mem.map().geometry.burst_bytes, "pim-control")),
          output(mem.allocate_region(RegionKind::General, Attribute::NonCacheable,
                                     output_bytes(mem.map(), policy, rows, cols), "pim-output")),
          placement(placement_in_region(mem.map(), policy, rows, cols, weights)),
          engine(mem, control, output, opts) {}

    static std::uint64_t output_bytes(const AddressMap& map, const PlacementPolicy& policy, std::uint64_t rows,
                                      std::uint64_t cols) {
        const auto t = GemvTiling::of(PimPlacement(map, policy, rows, cols));
        return std::max<std::uint64_t>(1, t.num_out_tiles) * kRfEntries * map.geometry.burst_bytes;
    }

    void load_weights(const WeightMatrix& w) {
        const auto img = convert_to_pim_aware(w, placement, weights.size);
        mem.write_data(weights.base, img.bytes);
    }

    GemvResult run(std::vector<Bf16> input) { return engine.gemv_execute(GemvJob{placement, std::move(input)}); }
};

}  // namespace sherpa
