#include <gtest/gtest.h>

#include <random>
#include <set>

#include "pimsherpa/converter.hpp"
#include "pimsherpa/weight_layout.hpp"

using namespace sherpa;

namespace {

WeightMatrix random_matrix(std::uint64_t m, std::uint64_t k, std::mt19937_64& rng) {
    WeightMatrix w(m, k);
    std::uniform_real_distribution<float> d(-4.0f, 4.0f);
    for (auto& e : w.data) e = Bf16::from_float(d(rng));
    return w;
}

struct Bench {
    MemorySystem mem;
    MemoryRegion src;
    MemoryRegion dst;
    PimPlacement p;

    Bench(std::uint64_t m, std::uint64_t k, Attribute src_attr = Attribute::NonCacheable, PlacementPolicy pol = {},
          MemoryConfig cfg = desk_1k())
        : mem(std::move(cfg)),
          src(mem.allocate_region(RegionKind::ContiguousPool, src_attr, PimPlacement(mem.map(), pol, m, k).image_bytes(), "w")),
          dst(mem.allocate_region(RegionKind::General, Attribute::Cacheable, m * k * 2, "buf")),
          p(placement_in_region(mem.map(), pol, m, k, src)) {}

    static MemoryConfig desk_1k() {
        MemoryConfig c;
        c.map = desk_1k_map();
        return c;
    }

    void load(const WeightMatrix& w) { mem.write_data(p.base_address(), convert_to_pim_aware(w, p).bytes); }

    WeightMatrix read_back(std::uint64_t m, std::uint64_t k) {
        std::vector<std::byte> buf(m * k * 2);
        mem.read_data(dst.base, buf);
        WeightMatrix w(m, k);
        for (std::uint64_t i = 0; i < w.data.size(); ++i) w.data[i] = load_bf16(buf, 2 * i);
        return w;
    }
};

}  // namespace

TEST(Placement, TilesRoundRobinOverBanks) {
    PlacementPolicy pol;
    pol.active_banks = 2;
    PimPlacement p(desk_1k_map(), pol, 32, 128);
    for (std::uint64_t m = 0; m < 16; ++m) EXPECT_EQ(p.coord_of_element(m, 5).bank, 0u);
    for (std::uint64_t m = 16; m < 32; ++m) EXPECT_EQ(p.coord_of_element(m, 5).bank, 1u);
}

TEST(Placement, OriginAndThirdVector) {
    PimPlacement p(desk_map(), PlacementPolicy{}, 256, 128);
    const auto o = p.coord_of_element(0, 0);
    EXPECT_EQ(o.bank, 0u);
    EXPECT_EQ(o.column, 0u);
    EXPECT_EQ(o.row, 0u);
    EXPECT_EQ(o.burst_offset, 0u);
    // Vector (lane group) 3 is the fourth 16-row tile.
    const auto c = p.coord_of_element(3 * 16, 0);
    EXPECT_EQ(c.bank, 3u);
    EXPECT_EQ(c.row, 0u);
}

TEST(Placement, LaneGroupSharesBurst) {
    PimPlacement p(desk_1k_map(), PlacementPolicy{}, 300, 200);
    for (std::uint64_t m0 = 0; m0 < p.padded_rows(); m0 += 16) {
        for (std::uint64_t k : {0ull, 77ull, 199ull}) {
            auto base = p.coord_of_element(m0, k);
            for (std::uint64_t l = 0; l < 16; ++l) {
                auto c = p.coord_of_element(m0 + l, k);
                EXPECT_EQ(c.burst_offset, l * 2);
                c.burst_offset = base.burst_offset;
                EXPECT_EQ(c, base);
            }
        }
    }
}

TEST(Placement, OutOfPaddedBoundsThrows) {
    PimPlacement p(desk_1k_map(), PlacementPolicy{}, 20, 130);
    EXPECT_THROW((void)p.coord_of_element(p.padded_rows(), 0), Error);
    EXPECT_THROW((void)p.coord_of_element(0, p.padded_cols()), Error);
}

TEST(Placement, RejectsRowNotMostSignificant) {
    auto map = desk_map();
    std::swap(map.field_order[1], map.field_order[4]);  // row no longer on top
    EXPECT_THROW(PimPlacement(map, PlacementPolicy{}, 16, 128), Error);
}

TEST(Convert, SingleBankImageIsColumnMajorBurstSequence) {
    DramGeometry g;
    g.banks_per_rank = 1;
    g.rows_per_bank = 16;
    PlacementPolicy pol;
    pol.active_banks = 1;
    PimPlacement p(make_interleaved_map(g), pol, 16, 128);
    std::mt19937_64 rng(3);
    const auto w = random_matrix(16, 128, rng);
    const auto img = convert_to_pim_aware(w, p);
    ASSERT_EQ(img.bytes.size(), 16u * 128 * 2);
    for (std::uint64_t i = 0; i < w.data.size(); ++i) EXPECT_EQ(load_bf16(img.bytes, 2 * i).bits, w.data[i].bits);
}

TEST(Convert, ImageMatchesPlacementAndPadsWithZeros) {
    std::mt19937_64 rng(5);
    const auto w = random_matrix(40, 150, rng);
    PimPlacement p(desk_1k_map(), PlacementPolicy{}, 40, 150);
    const auto img = convert_to_pim_aware(w, p);
    std::set<std::uint64_t> used;
    for (std::uint64_t m = 0; m < 40; ++m) {
        for (std::uint64_t k = 0; k < 150; ++k) {
            const auto off = p.image_offset(p.coord_of_element(m, k));
            EXPECT_EQ(load_bf16(img.bytes, off).bits, w.at(m, k).bits);
            used.insert(off);
        }
    }
    for (std::uint64_t off = 0; off < img.bytes.size(); off += 2) {
        if (!used.count(off)) { ASSERT_EQ(load_bf16(img.bytes, off).bits, 0u) << off; }
    }
}

TEST(Convert, UnswizzleRoundTrip100) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t m = std::uniform_int_distribution<std::uint64_t>(1, 300)(rng);
        const std::uint64_t k = std::uniform_int_distribution<std::uint64_t>(1, 300)(rng);
        const auto w = random_matrix(m, k, rng);
        PimPlacement p(desk_1k_map(), PlacementPolicy{}, m, k);
        EXPECT_EQ(unswizzle(convert_to_pim_aware(w, p).bytes, p), w);
    }
}

TEST(Convert, CapacityOverflow) {
    PimPlacement p(desk_map(), PlacementPolicy{}, 4096, 1024);
    EXPECT_FALSE(p.fits());
    EXPECT_THROW(convert_to_pim_aware(WeightMatrix(4096, 1024), p), Error);
    PimPlacement q(desk_map(), PlacementPolicy{}, 16, 128);
    EXPECT_THROW(convert_to_pim_aware(WeightMatrix(16, 128), q, q.image_bytes() - 1), Error);
}

TEST(Smc, TileOf16x128IssuesOneReadPerBurst) {
    Bench b(16, 128);
    std::mt19937_64 rng(1);
    const auto w = random_matrix(16, 128, rng);
    b.load(w);
    const auto r = smc_copy(b.mem, b.p, b.dst.base, b.dst.size, {0, 16}, {0, 128});
    EXPECT_EQ(r.source_reads, 128u);
    std::uint64_t src_reads = 0;
    for (const auto& t : r.trace) src_reads += (t.op == MemOp::Read && b.src.contains(t.addr)) ? 1 : 0;
    EXPECT_EQ(src_reads, 128u);
    EXPECT_EQ(r.copied_bytes, 16u * 128 * 2);
    EXPECT_EQ(b.read_back(16, 128), w);
}

TEST(Smc, EmptyRangeCopiesNothing) {
    Bench b(16, 128);
    const auto r = smc_copy(b.mem, b.p, b.dst.base, b.dst.size, {0, 0}, {0, 128});
    EXPECT_EQ(r.copied_bytes, 0u);
    EXPECT_TRUE(r.trace.empty());
}

TEST(Smc, Errors) {
    Bench cacheable(16, 128, Attribute::Cacheable);
    try {
        smc_copy(cacheable.mem, cacheable.p, cacheable.dst.base, cacheable.dst.size, {0, 16}, {0, 128});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Attribute);
    }
    Bench b(16, 128);
    try {
        smc_copy(b.mem, b.p, b.dst.base, 100, {0, 16}, {0, 128});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Overflow);
    }
}

TEST(Smc, HostGemvOverCopyMatchesOracle100) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
        Bench b(64, 128);
        WeightMatrix w(64, 128);
        for (auto& e : w.data) e = Bf16::from_float(static_cast<float>(std::uniform_int_distribution<int>(-8, 8)(rng)));
        b.load(w);
        smc_copy(b.mem, b.p, b.dst.base, b.dst.size, {0, 64}, {0, 128});
        const auto host = b.read_back(64, 128);
        std::vector<double> x(128);
        for (auto& v : x) v = std::uniform_int_distribution<int>(-8, 8)(rng);
        for (std::uint64_t m = 0; m < 64; ++m) {
            double got = 0, want = 0;
            for (std::uint64_t k = 0; k < 128; ++k) {
                got += host.at(m, k).to_float() * x[k];
                want += w.at(m, k).to_float() * x[k];
            }
            ASSERT_EQ(got, want);
        }
    }
}

TEST(Smc, SubTileLeadingDimension) {
    std::mt19937_64 rng(4);
    Bench b(100, 200);
    const auto w = random_matrix(100, 200, rng);
    b.load(w);
    smc_copy(b.mem, b.p, b.dst.base, b.dst.size, {20, 70}, {30, 90});
    const auto sub = b.read_back(50, 60);
    for (std::uint64_t m = 0; m < 50; ++m) {
        for (std::uint64_t k = 0; k < 60; ++k) ASSERT_EQ(sub.at(m, k).bits, w.at(m + 20, k + 30).bits);
    }
}

TEST(Smc, PartitionedAgentsCoverDisjointBands) {
    std::mt19937_64 rng(12);
    Bench b(200, 140);
    const auto w = random_matrix(200, 140, rng);
    b.load(w);
    const auto r = smc_copy_partitioned(b.mem, b.p, b.dst.base, b.dst.size, {0, 200}, {0, 140}, 4);
    EXPECT_EQ(b.read_back(200, 140), w);
    std::set<AgentId> agents;
    for (const auto& t : r.trace) agents.insert(t.agent);
    EXPECT_EQ(agents.size(), 4u);
    EXPECT_EQ(r.source_reads, ceil_div(200, 16) * 140);
}

TEST(Padding, AlignedMatrixHasNone) {
    PimPlacement p(desk_map(), PlacementPolicy{}, 256, 128);
    EXPECT_EQ(p.image_bytes(), p.host_bytes());
}

TEST(Padding, ToyOneLayerMatchesHandComputation) {
    ModelSpec m = presets::toy64();
    m.layers = 1;
    const auto rep = padded_size(m, desk_map(), PlacementPolicy{});
    // Desk map: 16 banks x 16 lanes -> M padded to 256; K padded to 128;
    // per-bank slab padded to 32-column rows; one row index spans 16 KiB.
    const std::uint64_t row = 16 * 32 * 32;
    auto slab_rows = [](std::uint64_t M, std::uint64_t K) {
        const std::uint64_t tiles = ((M + 255) / 256);
        const std::uint64_t kp = (K + 127) / 128 * 128;
        return (tiles * kp + 31) / 32;
    };
    const std::uint64_t want_pim = row * (slab_rows(64, 64) * 2 + slab_rows(16, 64) * 2 + slab_rows(256, 64) * 2 +
                                          slab_rows(64, 256) + slab_rows(512, 64));
    const std::uint64_t want_host = 2 * (64 * 64 * 2 + 16 * 64 * 2 + 256 * 64 * 2 + 64 * 256 + 512 * 64);
    EXPECT_EQ(rep.pim_bytes, want_pim);
    EXPECT_EQ(rep.host_bytes, want_host);
    EXPECT_EQ(rep.padding_bytes(), 655360u - 184320u);
    EXPECT_TRUE(rep.fits);
}

TEST(Padding, Llama1BUnderThreePercent) {
    PlacementPolicy pol;
    pol.active_channels = 4;
    const auto rep = padded_size(presets::llama32_1b(), s24plus_map(), pol);
    EXPECT_EQ(rep.host_bytes, host_bytes(presets::llama32_1b()));
    EXPECT_GT(rep.padding_bytes(), 0u);
    EXPECT_LE(rep.padding_fraction(), 0.03);
    // Padding comes from K/V (512 rows onto 1024-row granules) and the LM head.
    for (const auto& mp : rep.matrices) {
        const bool expected_padded = mp.shape.kind == MatrixKind::K || mp.shape.kind == MatrixKind::V ||
                                     mp.shape.kind == MatrixKind::LmHead;
        EXPECT_EQ(mp.padding() > 0, expected_padded) << mp.shape.tag();
    }
}

TEST(Converter, BlobRoundTripAndManifest) {
    const auto m = presets::toy64();
    std::mt19937_64 rng(2);
    std::vector<std::byte> blob(expected_blob_bytes(m));
    for (std::size_t i = 0; i < blob.size(); i += 2) store_bf16(blob, i, Bf16::from_float(std::uniform_real_distribution<float>(-1, 1)(rng)));
    const auto img = convert_blob(blob, m, desk_1k_map(), PlacementPolicy{});
    EXPECT_EQ(verify_conversion(blob, img, m, desk_1k_map(), PlacementPolicy{}), "");
    EXPECT_EQ(convert_blob(blob, m, desk_1k_map(), PlacementPolicy{}), img);  // idempotent

    const auto pad = padded_size(m, desk_1k_map(), PlacementPolicy{});
    const auto man = conversion_manifest(m, desk_1k_map(), PlacementPolicy{}, pad);
    EXPECT_EQ(man["matrices"].size(), 2u * 7 + 1);
    EXPECT_EQ(man["image_bytes"].get<std::uint64_t>(), img.size());
    EXPECT_EQ(man["matrices"][1]["image_offset"].get<std::uint64_t>(), man["matrices"][0]["image_bytes"].get<std::uint64_t>());

    auto bad = img;
    bad[man["matrices"][3]["image_offset"].get<std::size_t>()] ^= std::byte{1};
    EXPECT_EQ(verify_conversion(blob, bad, m, desk_1k_map(), PlacementPolicy{}), "L0.O");
}

TEST(Converter, TruncatedBlobReportsSizes) {
    const auto m = presets::toy64();
    std::vector<std::byte> blob(1000);
    try {
        convert_blob(blob, m, desk_1k_map(), PlacementPolicy{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SizeMismatch);
        EXPECT_NE(std::string(e.what()).find("1000"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find(std::to_string(expected_blob_bytes(m))), std::string::npos);
    }
}

TEST(Converter, Llama1BManifestPaddingFraction) {
    PlacementPolicy pol;
    pol.active_channels = 4;
    const auto pad = padded_size(presets::llama32_1b(), s24plus_map(), pol);
    const auto man = conversion_manifest(presets::llama32_1b(), s24plus_map(), pol, pad);
    EXPECT_LE(man["padding_fraction"].get<double>(), 0.03);
    EXPECT_TRUE(man["fits"].get<bool>());
}
