#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimsherpa/weight_layout.hpp"

namespace sherpa {

/// Host blob layout: every matrix in checkpoint order, each column-major
/// (element (m, k) at k * out_dim + m), little-endian 16-bit elements.
inline std::uint64_t expected_blob_bytes(const ModelSpec& m) { return host_bytes(m); }

inline void check_blob_size(const ModelSpec& m, std::uint64_t actual) {
    const std::uint64_t want = expected_blob_bytes(m);
    if (actual != want) {
        throw Error(ErrorCode::SizeMismatch, "weight blob has " + std::to_string(actual) + " bytes, model '" + m.name +
                                                 "' expects " + std::to_string(want));
    }
}

inline nlohmann::json conversion_manifest(const ModelSpec& model, const AddressMap& map, const PlacementPolicy& policy,
                                          const PaddingReport& pad) {
    nlohmann::json mats = nlohmann::json::array();
    std::uint64_t host_off = 0;
    for (const auto& mp : pad.matrices) {
        mats.push_back({{"tag", mp.shape.tag()},
                        {"rows", mp.shape.out_dim},
                        {"cols", mp.shape.in_dim},
                        {"padded_rows", mp.padded_rows},
                        {"padded_cols", mp.padded_cols},
                        {"host_offset", host_off},
                        {"image_offset", mp.base_row * map.geometry.row_stride()},
                        {"base_row", mp.base_row},
                        {"host_bytes", mp.host_bytes},
                        {"image_bytes", mp.pim_bytes},
                        {"padding_bytes", mp.padding()}});
        host_off += mp.host_bytes;
    }
    return {{"model", model.name},
            {"element_bytes", model.element_bytes},
            {"row_stride", map.geometry.row_stride()},
            {"active_banks", policy.active_banks},
            {"active_channels", policy.active_channels},
            {"input_tile", policy.input_tile},
            {"host_bytes", pad.host_bytes},
            {"image_bytes", pad.pim_bytes},
            {"padding_bytes", pad.padding_bytes()},
            {"padding_fraction", pad.padding_fraction()},
            {"fits", pad.fits},
            {"matrices", mats}};
}

inline WeightMatrix matrix_from_blob(std::span<const std::byte> blob, std::uint64_t offset, const MatrixShape& s) {
    WeightMatrix w(s.out_dim, s.in_dim);
    for (std::uint64_t i = 0; i < w.data.size(); ++i) w.data[i] = load_bf16(blob, offset + 2 * i);
    return w;
}

/// Converts a host blob into one PIM-aware image; matrix i lands at its manifest image_offset.
inline std::vector<std::byte> convert_blob(std::span<const std::byte> blob, const ModelSpec& model, const AddressMap& map,
                                           const PlacementPolicy& policy) {
    check_blob_size(model, blob.size());
    const auto pad = padded_size(model, map, policy);
    if (!pad.fits) throw Error(ErrorCode::Capacity, "model does not fit the DRAM rows of the address map");
    std::vector<std::byte> image(pad.pim_bytes, std::byte{0});
    std::uint64_t host_off = 0;
    for (const auto& mp : pad.matrices) {
        const PimPlacement p(map, policy, mp.shape.out_dim, mp.shape.in_dim);
        const auto img = convert_to_pim_aware(matrix_from_blob(blob, host_off, mp.shape), p);
        std::copy(img.bytes.begin(), img.bytes.end(), image.begin() + static_cast<std::ptrdiff_t>(mp.base_row * map.geometry.row_stride()));
        host_off += mp.host_bytes;
    }
    return image;
}

/// First matrix whose image does not unswizzle back to its blob bytes, or empty.
inline std::string verify_conversion(std::span<const std::byte> blob, std::span<const std::byte> image, const ModelSpec& model,
                                     const AddressMap& map, const PlacementPolicy& policy) {
    check_blob_size(model, blob.size());
    const auto pad = padded_size(model, map, policy);
    if (image.size() != pad.pim_bytes) {
        throw Error(ErrorCode::SizeMismatch, "image has " + std::to_string(image.size()) + " bytes, expected " +
                                                 std::to_string(pad.pim_bytes));
    }
    std::uint64_t host_off = 0;
    for (const auto& mp : pad.matrices) {
        const PimPlacement p(map, policy, mp.shape.out_dim, mp.shape.in_dim);
        const auto back = unswizzle(image.subspan(mp.base_row * map.geometry.row_stride(), mp.pim_bytes), p);
        if (!(back == matrix_from_blob(blob, host_off, mp.shape))) return mp.shape.tag();
        host_off += mp.host_bytes;
    }
    return {};
}

}  // namespace sherpa
