#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pimsherpa/error.hpp"
#include "pimsherpa/numeric.hpp"

namespace sherpa {

using PhysAddr = std::uint64_t;

/// DRAM organization. All counts are powers of two so address decoding is pure bit slicing.
struct DramGeometry {
    std::uint64_t channels = 1;
    std::uint64_t ranks_per_channel = 1;
    std::uint64_t banks_per_rank = 16;
    std::uint64_t rows_per_bank = 64;
    std::uint64_t columns_per_row = 32;
    std::uint64_t burst_bytes = 32;   ///< 256-bit DRAM burst
    std::uint64_t element_bytes = 2;  ///< BF16

    [[nodiscard]] std::uint64_t elements_per_burst() const { return burst_bytes / element_bytes; }
    [[nodiscard]] std::uint64_t total_capacity() const {
        return channels * ranks_per_channel * banks_per_rank * rows_per_bank * columns_per_row * burst_bytes;
    }
    /// Bytes spanned by one DRAM row index across every channel, rank and bank.
    [[nodiscard]] std::uint64_t row_stride() const { return total_capacity() / rows_per_bank; }

    friend bool operator==(const DramGeometry&, const DramGeometry&) = default;
};

enum class Field : std::uint8_t { Channel, Rank, Bank, Row, Column };

inline constexpr std::array<Field, 5> kAllFields{Field::Channel, Field::Rank, Field::Bank, Field::Row, Field::Column};

constexpr std::string_view to_string(Field f) {
    switch (f) {
        case Field::Channel: return "channel";
        case Field::Rank: return "rank";
        case Field::Bank: return "bank";
        case Field::Row: return "row";
        case Field::Column: return "column";
    }
    return "?";
}

inline std::optional<Field> field_from_string(std::string_view s) {
    for (Field f : kAllFields) {
        if (to_string(f) == s) return f;
    }
    return std::nullopt;
}

struct FieldSlice {
    Field field;
    unsigned width;

    friend bool operator==(const FieldSlice&, const FieldSlice&) = default;
};

struct DramCoord {
    std::uint64_t channel = 0;
    std::uint64_t rank = 0;
    std::uint64_t bank = 0;
    std::uint64_t row = 0;
    std::uint64_t column = 0;
    std::uint64_t burst_offset = 0;

    [[nodiscard]] std::uint64_t get(Field f) const {
        switch (f) {
            case Field::Channel: return channel;
            case Field::Rank: return rank;
            case Field::Bank: return bank;
            case Field::Row: return row;
            case Field::Column: return column;
        }
        return 0;
    }
    void set(Field f, std::uint64_t v) {
        switch (f) {
            case Field::Channel: channel = v; break;
            case Field::Rank: rank = v; break;
            case Field::Bank: bank = v; break;
            case Field::Row: row = v; break;
            case Field::Column: column = v; break;
        }
    }

    friend bool operator==(const DramCoord&, const DramCoord&) = default;
};

inline std::uint64_t field_count(const DramGeometry& g, Field f) {
    switch (f) {
        case Field::Channel: return g.channels;
        case Field::Rank: return g.ranks_per_channel;
        case Field::Bank: return g.banks_per_rank;
        case Field::Row: return g.rows_per_bank;
        case Field::Column: return g.columns_per_row;
    }
    return 0;
}

enum class MapViolation {
    None,
    ZeroCount,
    NonPowerOfTwo,
    BurstElementMismatch,
    FieldCoverage,
    DuplicateField,
    WidthMismatch,
};

struct MapValidation {
    MapViolation violation = MapViolation::None;
    std::string message;

    [[nodiscard]] bool ok() const { return violation == MapViolation::None; }
};

/// Bijection between flat physical addresses and DRAM coordinates.
/// `field_order` lists the fields from least to most significant, above the
/// intra-burst offset bits which always occupy the lowest bits.
struct AddressMap {
    DramGeometry geometry;
    std::vector<FieldSlice> field_order;

    friend bool operator==(const AddressMap&, const AddressMap&) = default;
};

/// Reports the first violated constraint, or `None`.
inline MapValidation validate_map(const AddressMap& map) {
    const auto& g = map.geometry;
    const std::array<std::pair<const char*, std::uint64_t>, 7> counts{{
        {"channels", g.channels},
        {"ranks_per_channel", g.ranks_per_channel},
        {"banks_per_rank", g.banks_per_rank},
        {"rows_per_bank", g.rows_per_bank},
        {"columns_per_row", g.columns_per_row},
        {"burst_bytes", g.burst_bytes},
        {"element_bytes", g.element_bytes},
    }};
    for (const auto& [name, v] : counts) {
        if (v == 0) return {MapViolation::ZeroCount, std::string(name) + " must be >= 1"};
    }
    for (const auto& [name, v] : counts) {
        if (!is_pow2(v)) return {MapViolation::NonPowerOfTwo, std::string(name) + " = " + std::to_string(v) + " is not a power of two"};
    }
    if (g.burst_bytes % g.element_bytes != 0) {
        return {MapViolation::BurstElementMismatch, "burst_bytes must be a multiple of element_bytes"};
    }

    std::array<int, 5> seen{};
    for (const auto& s : map.field_order) {
        if (++seen[static_cast<std::size_t>(s.field)] > 1) {
            return {MapViolation::DuplicateField, "field '" + std::string(to_string(s.field)) + "' appears more than once"};
        }
    }
    for (Field f : kAllFields) {
        if (seen[static_cast<std::size_t>(f)] == 0) {
            return {MapViolation::FieldCoverage, "field coverage: '" + std::string(to_string(f)) + "' is missing"};
        }
    }
    for (const auto& s : map.field_order) {
        const unsigned want = log2_exact(field_count(g, s.field));
        if (s.width != want) {
            return {MapViolation::WidthMismatch, "width mismatch: '" + std::string(to_string(s.field)) + "' has width " +
                                                     std::to_string(s.width) + ", geometry needs " + std::to_string(want)};
        }
    }
    return {};
}

inline void require_valid(const AddressMap& map) {
    auto v = validate_map(map);
    if (!v.ok()) throw Error(ErrorCode::InvalidMap, v.message);
}

/// Default field order: channel and bank bits lowest so consecutive bursts interleave.
inline AddressMap make_interleaved_map(const DramGeometry& g) {
    return AddressMap{g,
                      {{Field::Channel, log2_exact(g.channels)},
                       {Field::Bank, log2_exact(g.banks_per_rank)},
                       {Field::Column, log2_exact(g.columns_per_row)},
                       {Field::Rank, log2_exact(g.ranks_per_channel)},
                       {Field::Row, log2_exact(g.rows_per_bank)}}};
}

/// 1 channel, 1 rank, 16 banks, 64 rows, 32 columns, 32-byte bursts.
inline AddressMap desk_map() { return make_interleaved_map(DramGeometry{}); }

/// Phone-class LPDDR5X part: 4 channels x 16 banks, 65536 rows of 64 bursts.
inline AddressMap s24plus_map() {
    DramGeometry g;
    g.channels = 4;
    g.rows_per_bank = 65536;
    g.columns_per_row = 64;
    return make_interleaved_map(g);
}

/// Desk geometry with 1024 rows per bank, roomy enough for the toy model and GEMV batteries.
inline AddressMap desk_1k_map() {
    DramGeometry g;
    g.rows_per_bank = 1024;
    return make_interleaved_map(g);
}

inline std::optional<AddressMap> map_by_name(const std::string& n) {
    if (n == "desk") return desk_map();
    if (n == "desk-1k") return desk_1k_map();
    if (n == "s24plus") return s24plus_map();
    return std::nullopt;
}

inline DramCoord decode_address(const AddressMap& map, PhysAddr addr) {
    const auto& g = map.geometry;
    if (addr >= g.total_capacity()) {
        throw Error(ErrorCode::Capacity, "address " + std::to_string(addr) + " >= capacity " + std::to_string(g.total_capacity()));
    }
    DramCoord c;
    c.burst_offset = addr & (g.burst_bytes - 1);
    unsigned shift = log2_exact(g.burst_bytes);
    for (const auto& s : map.field_order) {
        c.set(s.field, (addr >> shift) & ((std::uint64_t{1} << s.width) - 1));
        shift += s.width;
    }
    return c;
}

inline bool coord_in_range(const DramGeometry& g, const DramCoord& c) {
    for (Field f : kAllFields) {
        if (c.get(f) >= field_count(g, f)) return false;
    }
    return c.burst_offset < g.burst_bytes;
}

inline PhysAddr encode_coord(const AddressMap& map, const DramCoord& c) {
    const auto& g = map.geometry;
    if (!coord_in_range(g, c)) throw Error(ErrorCode::Geometry, "coordinate outside geometry");
    PhysAddr addr = c.burst_offset;
    unsigned shift = log2_exact(g.burst_bytes);
    for (const auto& s : map.field_order) {
        addr |= c.get(s.field) << shift;
        shift += s.width;
    }
    return addr;
}

/// True if `f` occupies the most significant non-empty slice.
inline bool is_most_significant(const AddressMap& map, Field f) {
    for (auto it = map.field_order.rbegin(); it != map.field_order.rend(); ++it) {
        if (it->width == 0) continue;
        return it->field == f;
    }
    return false;
}

}  // namespace sherpa
