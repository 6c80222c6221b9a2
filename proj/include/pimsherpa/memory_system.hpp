#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pimsherpa/address_map.hpp"
#include "pimsherpa/error.hpp"

namespace sherpa {

enum class Attribute { Cacheable, NonCacheable };
enum class RegionKind { General, ContiguousPool };
enum class MemOp { Read, Write };
enum class ServiceSource { Cache, Dram };

constexpr const char* to_string(Attribute a) { return a == Attribute::Cacheable ? "cacheable" : "non-cacheable"; }
constexpr const char* to_string(MemOp op) { return op == MemOp::Read ? "read" : "write"; }
constexpr const char* to_string(ServiceSource s) { return s == ServiceSource::Cache ? "cache" : "dram"; }

using AgentId = std::uint32_t;
inline constexpr AgentId kPrefetchAgent = 0xFFFF;

struct MemoryRegion {
    std::uint32_t id = 0;
    PhysAddr base = 0;
    std::uint64_t size = 0;
    Attribute attribute = Attribute::Cacheable;
    RegionKind kind = RegionKind::General;
    std::string name;

    [[nodiscard]] bool contains(PhysAddr a) const { return a >= base && a - base < size; }
    [[nodiscard]] bool contains(PhysAddr a, std::uint64_t bytes) const {
        return contains(a) && bytes <= size - (a - base);
    }
    [[nodiscard]] PhysAddr end() const { return base + size; }
};

/// One request that reached the memory controller.
struct TraceRecord {
    std::uint64_t tick = 0;
    AgentId agent = 0;
    MemOp op = MemOp::Read;
    PhysAddr addr = 0;
    std::uint64_t bytes = 0;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

using CommandTrace = std::vector<TraceRecord>;

struct CacheConfig {
    std::uint64_t capacity = 8ull << 20;
    std::uint64_t line_bytes = 64;
    std::uint64_t ways = 16;

    [[nodiscard]] std::uint64_t sets() const { return capacity / (line_bytes * ways); }

    friend bool operator==(const CacheConfig&, const CacheConfig&) = default;
};

struct CacheStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;
    std::uint64_t writebacks = 0;

    friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

/// Set-associative LRU tag store, write-back and write-allocate. Holds no data.
class CacheModel {
public:
    struct Outcome {
        bool hit = false;
        std::optional<PhysAddr> writeback;  ///< dirty victim line address
    };

    explicit CacheModel(CacheConfig cfg) : cfg_(cfg), sets_(cfg.sets()) {
        if (cfg.line_bytes == 0 || cfg.ways == 0 || cfg.sets() == 0 || !is_pow2(cfg.line_bytes) ||
            cfg.sets() * cfg.ways * cfg.line_bytes != cfg.capacity) {
            throw Error(ErrorCode::Config, "cache capacity must equal sets * ways * line_bytes");
        }
    }

    [[nodiscard]] const CacheConfig& config() const { return cfg_; }
    [[nodiscard]] const CacheStats& stats() const { return stats_; }
    void reset_stats() { stats_ = {}; }

    [[nodiscard]] PhysAddr line_of(PhysAddr a) const { return a & ~(cfg_.line_bytes - 1); }

    [[nodiscard]] bool contains(PhysAddr line) const {
        const auto& set = sets_[set_index(line)];
        return std::any_of(set.begin(), set.end(), [&](const Way& w) { return w.line == line; });
    }

    Outcome access(PhysAddr line, bool write) {
        auto& set = sets_[set_index(line)];
        for (auto it = set.begin(); it != set.end(); ++it) {
            if (it->line == line) {
                it->dirty = it->dirty || write;
                set.splice(set.begin(), set, it);
                ++stats_.hits;
                return {true, std::nullopt};
            }
        }
        ++stats_.misses;
        return {false, install(set, line, write)};
    }

    /// Fill without counting a demand access (prefetch). Returns a dirty victim if any.
    std::optional<PhysAddr> fill(PhysAddr line) {
        auto& set = sets_[set_index(line)];
        for (const auto& w : set) {
            if (w.line == line) return std::nullopt;
        }
        return install(set, line, false);
    }

private:
    struct Way {
        PhysAddr line;
        bool dirty;
    };

    [[nodiscard]] std::size_t set_index(PhysAddr line) const {
        return static_cast<std::size_t>((line / cfg_.line_bytes) % sets_.size());
    }

    std::optional<PhysAddr> install(std::list<Way>& set, PhysAddr line, bool dirty) {
        std::optional<PhysAddr> wb;
        if (set.size() == cfg_.ways) {
            const Way victim = set.back();
            set.pop_back();
            ++stats_.evictions;
            if (victim.dirty) {
                ++stats_.writebacks;
                wb = victim.line;
            }
        }
        set.push_front(Way{line, dirty});
        return wb;
    }

    CacheConfig cfg_;
    std::vector<std::list<Way>> sets_;  // front = most recently used
    CacheStats stats_;
};

struct MemoryConfig {
    AddressMap map = desk_map();
    CacheConfig cache;
    std::uint64_t contiguous_pool_cap = 1ull << 30;  ///< CMA-style cap on ContiguousPool regions
    bool rogue_prefetcher = false;                    ///< next-line reads that ignore attributes
};

struct MemoryStats {
    CacheStats cache;
    std::uint64_t noncacheable_requests = 0;
    std::uint64_t prefetches = 0;
    std::uint64_t dram_reads = 0;
    std::uint64_t dram_writes = 0;
};

/// Regions, one cache level and the memory-controller boundary. Every access is
/// serialized into a single total order; `trace` holds exactly the requests that
/// reached DRAM. Data lives in a sparse physical store that bypasses timing.
class MemorySystem {
public:
    explicit MemorySystem(MemoryConfig cfg = {}) : cfg_(std::move(cfg)), cache_(cfg_.cache) {
        require_valid(cfg_.map);
        alignment_ = std::max(cfg_.map.geometry.row_stride(), cfg_.cache.line_bytes);
    }

    [[nodiscard]] const MemoryConfig& config() const { return cfg_; }
    [[nodiscard]] const AddressMap& map() const { return cfg_.map; }
    [[nodiscard]] std::uint64_t line_bytes() const { return cfg_.cache.line_bytes; }
    [[nodiscard]] const std::vector<MemoryRegion>& regions() const { return regions_; }
    void set_rogue_prefetcher(bool on) { cfg_.rogue_prefetcher = on; }

    /// Regions are aligned to a full DRAM row stride so PIM placements can start on row boundaries.
    MemoryRegion allocate_region(RegionKind kind, Attribute attribute, std::uint64_t size, std::string name = {}) {
        if (size == 0) throw Error(ErrorCode::Config, "zero-size region request");
        if (kind == RegionKind::ContiguousPool && size > cfg_.contiguous_pool_cap - pool_used_) {
            throw Error(ErrorCode::PoolExhausted, "contiguous pool exhausted: requested " + std::to_string(size) +
                                                      " bytes, " + std::to_string(cfg_.contiguous_pool_cap - pool_used_) +
                                                      " available");
        }
        const PhysAddr base = round_up(next_free_, alignment_);
        const std::uint64_t cap = cfg_.map.geometry.total_capacity();
        if (base > cap || size > cap - base) {
            throw Error(ErrorCode::Capacity, "DRAM capacity exhausted: requested " + std::to_string(size) + " bytes");
        }
        MemoryRegion r{static_cast<std::uint32_t>(regions_.size()), base, size, attribute, kind, std::move(name)};
        regions_.push_back(r);
        next_free_ = base + size;
        if (kind == RegionKind::ContiguousPool) pool_used_ += size;
        return r;
    }

    [[nodiscard]] const MemoryRegion& region_of(PhysAddr addr) const {
        for (const auto& r : regions_) {
            if (r.contains(addr)) return r;
        }
        throw Error(ErrorCode::Unmapped, "address " + std::to_string(addr) + " is not in a registered region");
    }

    [[nodiscard]] const MemoryRegion* find_region(PhysAddr addr) const {
        for (const auto& r : regions_) {
            if (r.contains(addr)) return &r;
        }
        return nullptr;
    }

    /// Timing-relevant access. Non-cacheable requests always reach DRAM; cacheable
    /// requests go through the cache at line granularity.
    ServiceSource access(PhysAddr addr, MemOp op, std::uint64_t bytes, AgentId agent) {
        const auto& region = region_of(addr);
        if (!region.contains(addr, bytes)) throw Error(ErrorCode::Unmapped, "access crosses region '" + region.name + "' end");
        const std::uint64_t tick = tick_++;
        ServiceSource src = ServiceSource::Cache;
        if (region.attribute == Attribute::NonCacheable) {
            ++noncacheable_;
            emit(tick, agent, op, addr, bytes);
            src = ServiceSource::Dram;
        } else {
            const PhysAddr first = cache_.line_of(addr);
            const PhysAddr last = cache_.line_of(addr + std::max<std::uint64_t>(bytes, 1) - 1);
            for (PhysAddr line = first; line <= last; line += line_bytes()) {
                auto out = cache_.access(line, op == MemOp::Write);
                if (out.hit) continue;
                if (out.writeback) emit(tick, agent, MemOp::Write, *out.writeback, line_bytes());
                emit(tick, agent, MemOp::Read, line, line_bytes());
                src = ServiceSource::Dram;
            }
        }
        if (cfg_.rogue_prefetcher && op == MemOp::Read) prefetch_next(tick, addr + bytes);
        return src;
    }

    // Backdoor data path (no timing, no trace).
    void write_data(PhysAddr addr, std::span<const std::byte> data) {
        for (std::size_t i = 0; i < data.size();) {
            auto& page = page_for(addr + i);
            const std::size_t off = (addr + i) % kPageBytes;
            const std::size_t n = std::min(kPageBytes - off, data.size() - i);
            std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(i), n, page.begin() + static_cast<std::ptrdiff_t>(off));
            i += n;
        }
    }

    void read_data(PhysAddr addr, std::span<std::byte> out) const {
        for (std::size_t i = 0; i < out.size();) {
            const std::size_t off = (addr + i) % kPageBytes;
            const std::size_t n = std::min(kPageBytes - off, out.size() - i);
            auto it = pages_.find((addr + i) / kPageBytes);
            if (it == pages_.end()) {
                std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i), n, std::byte{0});
            } else {
                std::copy_n(it->second->begin() + static_cast<std::ptrdiff_t>(off), n, out.begin() + static_cast<std::ptrdiff_t>(i));
            }
            i += n;
        }
    }

    /// Monotonic sequence number of the next trace record.
    [[nodiscard]] std::uint64_t trace_seq() const { return dropped_ + trace_.size(); }

    /// Records with sequence number >= `seq` still held by the system.
    [[nodiscard]] std::vector<TraceRecord> records_since(std::uint64_t seq) const {
        const std::uint64_t from = std::max(seq, dropped_) - dropped_;
        if (from >= trace_.size()) return {};
        return {trace_.begin() + static_cast<std::ptrdiff_t>(from), trace_.end()};
    }

    [[nodiscard]] const TraceRecord& record(std::uint64_t seq) const { return trace_.at(seq - dropped_); }

    /// Returns everything recorded since the previous drain and releases it.
    CommandTrace drain_trace() {
        CommandTrace out(trace_.begin(), trace_.end());
        dropped_ += trace_.size();
        trace_.clear();
        return out;
    }

    [[nodiscard]] MemoryStats stats() const {
        return MemoryStats{cache_.stats(), noncacheable_, prefetches_, dram_reads_, dram_writes_};
    }

    /// Zeroes counters; regions, cache contents and trace are kept.
    void reset_stats() {
        cache_.reset_stats();
        noncacheable_ = prefetches_ = dram_reads_ = dram_writes_ = 0;
    }

    [[nodiscard]] const CacheModel& cache() const { return cache_; }

private:
    static constexpr std::size_t kPageBytes = 4096;

    std::array<std::byte, kPageBytes>& page_for(PhysAddr a) {
        auto& p = pages_[a / kPageBytes];
        if (!p) p = std::make_unique<std::array<std::byte, kPageBytes>>();
        return *p;
    }

    void emit(std::uint64_t tick, AgentId agent, MemOp op, PhysAddr addr, std::uint64_t bytes) {
        trace_.push_back(TraceRecord{tick, agent, op, addr, bytes});
        (op == MemOp::Read ? dram_reads_ : dram_writes_) += 1;
    }

    void prefetch_next(std::uint64_t tick, PhysAddr after) {
        const PhysAddr line = round_up(after, line_bytes());
        const MemoryRegion* r = find_region(line);
        if (r == nullptr || !r->contains(line, line_bytes())) return;
        ++prefetches_;
        if (r->attribute == Attribute::Cacheable) {
            if (cache_.contains(line)) return;
            if (auto wb = cache_.fill(line)) emit(tick, kPrefetchAgent, MemOp::Write, *wb, line_bytes());
        }
        emit(tick, kPrefetchAgent, MemOp::Read, line, line_bytes());
    }

    MemoryConfig cfg_;
    CacheModel cache_;
    std::uint64_t alignment_ = 1;
    std::vector<MemoryRegion> regions_;
    PhysAddr next_free_ = 0;
    std::uint64_t pool_used_ = 0;
    std::uint64_t tick_ = 0;
    std::deque<TraceRecord> trace_;
    std::uint64_t dropped_ = 0;
    std::uint64_t noncacheable_ = 0;
    std::uint64_t prefetches_ = 0;
    std::uint64_t dram_reads_ = 0;
    std::uint64_t dram_writes_ = 0;
    std::unordered_map<std::uint64_t, std::unique_ptr<std::array<std::byte, kPageBytes>>> pages_;
};

}  // namespace sherpa
