#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "pimsherpa/address_map.hpp"
#include "pimsherpa/error.hpp"
#include "pimsherpa/memory_system.hpp"
#include "pimsherpa/model.hpp"
#include "pimsherpa/numeric.hpp"

namespace sherpa {

enum class LayoutKind { HostFriendly, PimAware };

struct LayoutTag {
    LayoutKind kind = LayoutKind::HostFriendly;
    std::uint64_t lanes = 16;
    std::uint64_t active_banks = 16;
};

/// Out x in weight matrix. Host-friendly storage is column-major: element (m, k) at k * out_dim + m.
struct WeightMatrix {
    std::uint64_t out_dim = 0;
    std::uint64_t in_dim = 0;
    std::vector<Bf16> data;
    LayoutTag layout;

    WeightMatrix() = default;
    WeightMatrix(std::uint64_t m, std::uint64_t k) : out_dim(m), in_dim(k), data(m * k) {
        if (m == 0 || k == 0) throw Error(ErrorCode::Config, "weight matrix dimensions must be >= 1");
    }

    [[nodiscard]] Bf16& at(std::uint64_t m, std::uint64_t k) { return data[k * out_dim + m]; }
    [[nodiscard]] Bf16 at(std::uint64_t m, std::uint64_t k) const { return data[k * out_dim + m]; }

    friend bool operator==(const WeightMatrix& a, const WeightMatrix& b) {
        return a.out_dim == b.out_dim && a.in_dim == b.in_dim && a.data == b.data;
    }
};

/// Which DRAM units take part in PIM execution.
struct PlacementPolicy {
    std::uint64_t active_banks = 16;     ///< per rank
    std::uint64_t active_channels = 1;
    std::uint64_t input_tile = 128;      ///< input RF entries x lanes

    friend bool operator==(const PlacementPolicy&, const PlacementPolicy&) = default;
};

struct BankUnit {
    std::uint64_t channel = 0;
    std::uint64_t rank = 0;
    std::uint64_t bank = 0;
    std::uint64_t local_tile = 0;  ///< tile index inside the unit's slab
};

/// PIM-aware placement of one matrix. Output rows are grouped in tiles of `lanes`;
/// tiles go round-robin over active banks, then ranks, then channels, and stack
/// along DRAM rows inside each bank. Burst j of a tile holds rows
/// [tile*lanes, tile*lanes+lanes) of input column j, so a complete matrix row
/// lives in one bank.
class PimPlacement {
public:
    PimPlacement(AddressMap map, PlacementPolicy policy, std::uint64_t rows, std::uint64_t cols, std::uint64_t base_row = 0)
        : map_(std::move(map)), policy_(policy), rows_(rows), cols_(cols), base_row_(base_row) {
        require_valid(map_);
        const auto& g = map_.geometry;
        if (rows == 0 || cols == 0) throw Error(ErrorCode::Config, "matrix dimensions must be >= 1");
        if (policy_.active_banks == 0 || policy_.active_banks > g.banks_per_rank) {
            throw Error(ErrorCode::Config, "active_banks must be in [1, banks_per_rank]");
        }
        if (policy_.active_channels == 0 || policy_.active_channels > g.channels) {
            throw Error(ErrorCode::Config, "active_channels must be in [1, channels]");
        }
        if (policy_.input_tile == 0 || policy_.input_tile % lanes() != 0) {
            throw Error(ErrorCode::Config, "input_tile must be a multiple of the lane count");
        }
        if (!is_most_significant(map_, Field::Row)) {
            throw Error(ErrorCode::InvalidMap, "PIM placement needs row as the most significant address field");
        }
        units_ = policy_.active_banks * g.ranks_per_channel * policy_.active_channels;
        padded_rows_ = round_up(rows_, lanes() * units_);
        padded_cols_ = round_up(cols_, policy_.input_tile);
        tiles_per_unit_ = padded_rows_ / (lanes() * units_);
        rows_used_ = ceil_div(tiles_per_unit_ * padded_cols_, g.columns_per_row);
    }

    [[nodiscard]] const AddressMap& map() const { return map_; }
    [[nodiscard]] const PlacementPolicy& policy() const { return policy_; }
    [[nodiscard]] const DramGeometry& geometry() const { return map_.geometry; }
    [[nodiscard]] std::uint64_t lanes() const { return map_.geometry.elements_per_burst(); }
    [[nodiscard]] std::uint64_t rows() const { return rows_; }
    [[nodiscard]] std::uint64_t cols() const { return cols_; }
    [[nodiscard]] std::uint64_t padded_rows() const { return padded_rows_; }
    [[nodiscard]] std::uint64_t padded_cols() const { return padded_cols_; }
    [[nodiscard]] std::uint64_t units() const { return units_; }
    [[nodiscard]] std::uint64_t tiles() const { return padded_rows_ / lanes(); }
    [[nodiscard]] std::uint64_t tiles_per_unit() const { return tiles_per_unit_; }
    [[nodiscard]] std::uint64_t base_row() const { return base_row_; }
    [[nodiscard]] std::uint64_t dram_rows_used() const { return rows_used_; }
    [[nodiscard]] std::uint64_t image_bytes() const { return rows_used_ * map_.geometry.row_stride(); }
    [[nodiscard]] std::uint64_t host_bytes() const { return rows_ * cols_ * map_.geometry.element_bytes; }
    [[nodiscard]] bool fits() const { return base_row_ + rows_used_ <= map_.geometry.rows_per_bank; }

    [[nodiscard]] PhysAddr base_address() const {
        DramCoord c;
        c.row = base_row_;
        return encode_coord(map_, c);
    }

    [[nodiscard]] BankUnit unit_of_tile(std::uint64_t tile) const {
        const auto& g = map_.geometry;
        const std::uint64_t ab = policy_.active_banks, r = g.ranks_per_channel;
        return BankUnit{(tile / (ab * r)) % policy_.active_channels, (tile / ab) % r, tile % ab, tile / units_};
    }

    /// Coordinate of the burst holding input column `k` of output tile `tile`.
    [[nodiscard]] DramCoord burst_coord(std::uint64_t tile, std::uint64_t k) const {
        if (tile >= tiles() || k >= padded_cols_) throw Error(ErrorCode::Geometry, "tile/column outside padded bounds");
        const BankUnit u = unit_of_tile(tile);
        return slab_coord(u.channel, u.rank, u.bank, u.local_tile, k);
    }

    [[nodiscard]] DramCoord slab_coord(std::uint64_t channel, std::uint64_t rank, std::uint64_t bank, std::uint64_t local_tile,
                                       std::uint64_t k) const {
        const auto& g = map_.geometry;
        const std::uint64_t s = local_tile * padded_cols_ + k;
        DramCoord c;
        c.channel = channel;
        c.rank = rank;
        c.bank = bank;
        c.row = base_row_ + s / g.columns_per_row;
        c.column = s % g.columns_per_row;
        return c;
    }

    [[nodiscard]] DramCoord coord_of_element(std::uint64_t m, std::uint64_t k) const {
        if (m >= padded_rows_ || k >= padded_cols_) {
            throw Error(ErrorCode::Geometry, "element (" + std::to_string(m) + ", " + std::to_string(k) + ") outside padded bounds");
        }
        DramCoord c = burst_coord(m / lanes(), k);
        c.burst_offset = (m % lanes()) * map_.geometry.element_bytes;
        return c;
    }

    /// Byte offset of a coordinate inside this placement's image.
    [[nodiscard]] std::uint64_t image_offset(const DramCoord& c) const { return encode_coord(map_, c) - base_address(); }

private:
    AddressMap map_;
    PlacementPolicy policy_;
    std::uint64_t rows_;
    std::uint64_t cols_;
    std::uint64_t base_row_;
    std::uint64_t units_ = 1;
    std::uint64_t padded_rows_ = 0;
    std::uint64_t padded_cols_ = 0;
    std::uint64_t tiles_per_unit_ = 0;
    std::uint64_t rows_used_ = 0;
};

/// Placement anchored at the start of a memory region.
inline PimPlacement placement_in_region(const AddressMap& map, const PlacementPolicy& policy, std::uint64_t rows,
                                       std::uint64_t cols, const MemoryRegion& region) {
    const std::uint64_t stride = map.geometry.row_stride();
    if (region.base % stride != 0) throw Error(ErrorCode::Misaligned, "PIM region must start on a DRAM row boundary");
    PimPlacement p(map, policy, rows, cols, region.base / stride);
    if (p.image_bytes() > region.size) {
        throw Error(ErrorCode::Capacity, "PIM image of " + std::to_string(p.image_bytes()) + " bytes exceeds region '" +
                                             region.name + "' of " + std::to_string(region.size) + " bytes");
    }
    return p;
}

struct PimImage {
    std::vector<std::byte> bytes;
    std::uint64_t padded_rows = 0;
    std::uint64_t padded_cols = 0;
    std::uint64_t padded_bytes = 0;  ///< image size minus host-friendly size
};

inline void store_bf16(std::span<std::byte> dst, std::uint64_t off, Bf16 v) {
    dst[off] = static_cast<std::byte>(v.bits & 0xFF);
    dst[off + 1] = static_cast<std::byte>(v.bits >> 8);
}

inline Bf16 load_bf16(std::span<const std::byte> src, std::uint64_t off) {
    return Bf16{static_cast<std::uint16_t>(static_cast<unsigned>(src[off]) | (static_cast<unsigned>(src[off + 1]) << 8))};
}

/// Offline model conversion: host-friendly matrix to PIM-aware byte image. Padding is zero.
inline PimImage convert_to_pim_aware(const WeightMatrix& w, const PimPlacement& p, std::uint64_t capacity_limit = UINT64_MAX) {
    if (w.layout.kind != LayoutKind::HostFriendly) throw Error(ErrorCode::Config, "converter expects a host-friendly matrix");
    if (w.out_dim != p.rows() || w.in_dim != p.cols()) throw Error(ErrorCode::SizeMismatch, "matrix shape does not match placement");
    if (!p.fits() || p.image_bytes() > capacity_limit) {
        throw Error(ErrorCode::Capacity, "PIM image of " + std::to_string(p.image_bytes()) + " bytes exceeds region capacity");
    }
    PimImage img;
    img.bytes.assign(p.image_bytes(), std::byte{0});
    img.padded_rows = p.padded_rows();
    img.padded_cols = p.padded_cols();
    img.padded_bytes = p.image_bytes() - p.host_bytes();
    const std::uint64_t lanes = p.lanes(), eb = p.geometry().element_bytes;
    for (std::uint64_t tile = 0; tile * lanes < w.out_dim; ++tile) {
        for (std::uint64_t k = 0; k < w.in_dim; ++k) {
            const std::uint64_t off = p.image_offset(p.burst_coord(tile, k));
            const std::uint64_t m_end = std::min(w.out_dim, (tile + 1) * lanes);
            for (std::uint64_t m = tile * lanes; m < m_end; ++m) store_bf16(img.bytes, off + (m % lanes) * eb, w.at(m, k));
        }
    }
    return img;
}

/// Inverse of `convert_to_pim_aware`, done directly on the image bytes.
inline WeightMatrix unswizzle(std::span<const std::byte> image, const PimPlacement& p) {
    if (image.size() < p.image_bytes()) throw Error(ErrorCode::SizeMismatch, "image smaller than placement footprint");
    WeightMatrix w(p.rows(), p.cols());
    const std::uint64_t lanes = p.lanes(), eb = p.geometry().element_bytes;
    for (std::uint64_t tile = 0; tile * lanes < w.out_dim; ++tile) {
        for (std::uint64_t k = 0; k < w.in_dim; ++k) {
            const std::uint64_t off = p.image_offset(p.burst_coord(tile, k));
            const std::uint64_t m_end = std::min(w.out_dim, (tile + 1) * lanes);
            for (std::uint64_t m = tile * lanes; m < m_end; ++m) w.at(m, k) = load_bf16(image, off + (m % lanes) * eb);
        }
    }
    return w;
}

struct IndexRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    [[nodiscard]] std::uint64_t size() const { return end > begin ? end - begin : 0; }
    [[nodiscard]] bool empty() const { return size() == 0; }
};

struct SmcResult {
    std::uint64_t copied_bytes = 0;
    std::uint64_t source_reads = 0;
    CommandTrace trace;
};

namespace detail {

/// One source burst of an SMC: tile `tile`, input column `k`.
struct SmcStep {
    std::uint64_t tile;
    std::uint64_t k;
};

inline void smc_burst(MemorySystem& mem, const PimPlacement& src, PhysAddr dst, IndexRange rows, IndexRange cols,
                      const SmcStep& step, AgentId agent, SmcResult& res) {
    const std::uint64_t lanes = src.lanes(), eb = src.geometry().element_bytes, burst = src.geometry().burst_bytes;
    const PhysAddr saddr = encode_coord(src.map(), src.burst_coord(step.tile, step.k));
    mem.access(saddr, MemOp::Read, burst, agent);
    ++res.source_reads;
    std::vector<std::byte> buf(burst);
    mem.read_data(saddr, buf);
    const std::uint64_t m0 = std::max(rows.begin, step.tile * lanes);
    const std::uint64_t m1 = std::min(rows.end, (step.tile + 1) * lanes);
    const std::uint64_t n = (m1 - m0) * eb;
    const PhysAddr daddr = dst + ((step.k - cols.begin) * rows.size() + (m0 - rows.begin)) * eb;
    mem.write_data(daddr, std::span<const std::byte>(buf).subspan((m0 % lanes) * eb, n));
    mem.access(daddr, MemOp::Write, n, agent);
    res.copied_bytes += n;
}

inline void check_smc(const MemorySystem& mem, const PimPlacement& src, PhysAddr dst, std::uint64_t dst_bytes, IndexRange rows,
                      IndexRange cols) {
    if (rows.end > src.rows() || cols.end > src.cols()) throw Error(ErrorCode::Geometry, "SMC range outside the matrix");
    const auto& sr = mem.region_of(src.base_address());
    if (sr.attribute != Attribute::NonCacheable) {
        throw Error(ErrorCode::Attribute, "SMC source region '" + sr.name + "' is not non-cacheable");
    }
    const std::uint64_t need = rows.size() * cols.size() * src.geometry().element_bytes;
    if (need > dst_bytes) {
        throw Error(ErrorCode::Overflow, "SMC destination holds " + std::to_string(dst_bytes) + " bytes, tile needs " +
                                             std::to_string(need));
    }
    if (need > 0 && !mem.region_of(dst).contains(dst, need)) throw Error(ErrorCode::Overflow, "SMC destination crosses its region");
}

}  // namespace detail

/// Swizzled memory copy: reads PIM-aware bursts from the non-cacheable source and
/// writes the selected tile to `dst` in column-major host order, with leading
/// dimension rows.size(). Every source burst is one DRAM read through `mem`.
inline SmcResult smc_copy(MemorySystem& mem, const PimPlacement& src, PhysAddr dst, std::uint64_t dst_bytes, IndexRange rows,
                          IndexRange cols, AgentId agent = 0) {
    SmcResult res;
    if (rows.empty() || cols.empty()) return res;
    detail::check_smc(mem, src, dst, dst_bytes, rows, cols);
    const std::uint64_t seq = mem.trace_seq();
    const std::uint64_t lanes = src.lanes();
    for (std::uint64_t k = cols.begin; k < cols.end; ++k) {
        for (std::uint64_t tile = rows.begin / lanes; tile * lanes < rows.end; ++tile) {
            detail::smc_burst(mem, src, dst, rows, cols, {tile, k}, agent, res);
        }
    }
    res.trace = mem.records_since(seq);
    return res;
}

/// SMC split over `agents` copy agents owning disjoint tile-aligned row bands.
/// Agents are interleaved one burst at a time in a fixed round-robin order.
inline SmcResult smc_copy_partitioned(MemorySystem& mem, const PimPlacement& src, PhysAddr dst, std::uint64_t dst_bytes,
                                      IndexRange rows, IndexRange cols, std::uint64_t agents) {
    SmcResult res;
    if (rows.empty() || cols.empty()) return res;
    if (agents == 0) throw Error(ErrorCode::Config, "at least one copy agent required");
    detail::check_smc(mem, src, dst, dst_bytes, rows, cols);
    const std::uint64_t seq = mem.trace_seq();
    const std::uint64_t lanes = src.lanes();
    const std::uint64_t t0 = rows.begin / lanes, t1 = ceil_div(rows.end, lanes);
    const std::uint64_t per = ceil_div(t1 - t0, agents);

    std::vector<std::vector<detail::SmcStep>> work(agents);
    for (std::uint64_t a = 0; a < agents; ++a) {
        const std::uint64_t b = t0 + a * per, e = std::min(t1, b + per);
        for (std::uint64_t k = cols.begin; k < cols.end; ++k) {
            for (std::uint64_t t = b; t < e; ++t) work[a].push_back({t, k});
        }
    }
    std::vector<std::size_t> pos(agents, 0);
    for (bool progressed = true; progressed;) {
        progressed = false;
        for (std::uint64_t a = 0; a < agents; ++a) {
            if (pos[a] == work[a].size()) continue;
            detail::smc_burst(mem, src, dst, rows, cols, work[a][pos[a]++], static_cast<AgentId>(a), res);
            progressed = true;
        }
    }
    res.trace = mem.records_since(seq);
    return res;
}

struct MatrixPadding {
    MatrixShape shape;
    std::uint64_t padded_rows = 0;
    std::uint64_t padded_cols = 0;
    std::uint64_t base_row = 0;
    std::uint64_t host_bytes = 0;
    std::uint64_t pim_bytes = 0;

    [[nodiscard]] std::uint64_t padding() const { return pim_bytes - host_bytes; }
};

struct PaddingReport {
    std::vector<MatrixPadding> matrices;
    std::uint64_t host_bytes = 0;
    std::uint64_t pim_bytes = 0;
    bool fits = true;  ///< every matrix fits below rows_per_bank

    [[nodiscard]] std::uint64_t padding_bytes() const { return pim_bytes - host_bytes; }
    [[nodiscard]] double padding_fraction() const {
        return host_bytes == 0 ? 0.0 : static_cast<double>(padding_bytes()) / static_cast<double>(host_bytes);
    }
};

/// Lays every model matrix out back to back (each on fresh DRAM rows) and reports
/// per-matrix and total padded sizes.
inline PaddingReport padded_size(const ModelSpec& model, const AddressMap& map, const PlacementPolicy& policy) {
    validate_model(model);
    PaddingReport rep;
    std::uint64_t row = 0;
    for (const auto& s : model_matrices(model)) {
        PimPlacement p(map, policy, s.out_dim, s.in_dim, row);
        MatrixPadding mp{s, p.padded_rows(), p.padded_cols(), row, s.params() * model.element_bytes, p.image_bytes()};
        rep.fits = rep.fits && p.fits();
        rep.host_bytes += mp.host_bytes;
        rep.pim_bytes += mp.pim_bytes;
        rep.matrices.push_back(mp);
        row += p.dram_rows_used();
    }
    return rep;
}

}  // namespace sherpa
