#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pimsherpa/error.hpp"

namespace sherpa {

enum class MatrixKind { Q, K, V, O, FF0, FF1, FF2, LmHead };

constexpr const char* to_string(MatrixKind k) {
    switch (k) {
        case MatrixKind::Q: return "Q";
        case MatrixKind::K: return "K";
        case MatrixKind::V: return "V";
        case MatrixKind::O: return "O";
        case MatrixKind::FF0: return "FF0";
        case MatrixKind::FF1: return "FF1";
        case MatrixKind::FF2: return "FF2";
        case MatrixKind::LmHead: return "LM";
    }
    return "?";
}

/// Decoder-stack dimensions. Matrices are stored as out_dim x in_dim.
struct ModelSpec {
    std::string name = "custom";
    std::uint64_t hidden = 64;
    std::uint64_t intermediate = 256;
    std::uint64_t layers = 1;
    std::uint64_t kv_num = 1;  ///< K/V output width is hidden * kv_num / kv_den
    std::uint64_t kv_den = 4;
    std::uint64_t vocab = 512;
    std::uint64_t element_bytes = 2;

    /// Byte figures reported for the real checkpoint, used by capacity reports when present.
    std::optional<std::uint64_t> reported_host_bytes;
    std::optional<std::uint64_t> reported_padding_bytes;

    [[nodiscard]] std::uint64_t kv_dim() const { return hidden * kv_num / kv_den; }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct MatrixShape {
    MatrixKind kind;
    std::uint64_t layer;  ///< equals `layers` for the LM head
    std::uint64_t out_dim;
    std::uint64_t in_dim;

    [[nodiscard]] std::uint64_t params() const { return out_dim * in_dim; }
    [[nodiscard]] std::string tag() const {
        return kind == MatrixKind::LmHead ? std::string("lm_head") : "L" + std::to_string(layer) + "." + to_string(kind);
    }
};

inline void validate_model(const ModelSpec& m) {
    if (m.hidden == 0 || m.intermediate == 0 || m.vocab == 0 || m.element_bytes == 0) {
        throw Error(ErrorCode::Config, "model dimensions must be >= 1");
    }
    if (m.kv_den == 0 || m.kv_num == 0 || (m.hidden * m.kv_num) % m.kv_den != 0) {
        throw Error(ErrorCode::Config, "kv ratio must divide hidden exactly");
    }
}

inline std::vector<MatrixShape> layer_matrices(const ModelSpec& m, std::uint64_t layer) {
    const auto H = m.hidden, I = m.intermediate, kv = m.kv_dim();
    return {
        {MatrixKind::Q, layer, H, H},   {MatrixKind::K, layer, kv, H},  {MatrixKind::V, layer, kv, H},
        {MatrixKind::O, layer, H, H},   {MatrixKind::FF0, layer, I, H}, {MatrixKind::FF1, layer, I, H},
        {MatrixKind::FF2, layer, H, I},
    };
}

/// Every linear weight in checkpoint order: layer 0 Q..FF2, ..., then the (tied) LM head.
inline std::vector<MatrixShape> model_matrices(const ModelSpec& m) {
    std::vector<MatrixShape> out;
    for (std::uint64_t l = 0; l < m.layers; ++l) {
        auto lm = layer_matrices(m, l);
        out.insert(out.end(), lm.begin(), lm.end());
    }
    out.push_back({MatrixKind::LmHead, m.layers, m.vocab, m.hidden});
    return out;
}

inline std::uint64_t total_params(const ModelSpec& m) {
    std::uint64_t p = 0;
    for (const auto& s : model_matrices(m)) p += s.params();
    return p;
}

inline std::uint64_t host_bytes(const ModelSpec& m) { return total_params(m) * m.element_bytes; }

namespace presets {

inline ModelSpec llama32_1b() {
    ModelSpec m;
    m.name = "llama3.2-1b";
    m.hidden = 2048;
    m.intermediate = 8192;
    m.layers = 16;
    m.kv_num = 1;
    m.kv_den = 4;
    m.vocab = 128256;
    m.reported_host_bytes = 2'470'000'000;   // 2.47 GB host-friendly BF16 weights
    m.reported_padding_bytes = 80'000'000;   // 80 MB PIM-aware alignment padding
    return m;
}

inline ModelSpec llama32_3b() {
    ModelSpec m;
    m.name = "llama3.2-3b";
    m.hidden = 3072;
    m.intermediate = 8192;
    m.layers = 28;
    m.kv_num = 1;  // 8 KV heads of 24
    m.kv_den = 3;
    m.vocab = 128256;
    m.reported_host_bytes = 6'400'000'000;  // 6.4 GB host-friendly BF16 weights
    return m;
}

inline ModelSpec toy64() {
    ModelSpec m;
    m.name = "toy-64";
    m.hidden = 64;
    m.intermediate = 256;
    m.layers = 2;
    m.vocab = 512;
    return m;
}

inline std::optional<ModelSpec> by_name(const std::string& n) {
    if (n == "llama3.2-1b") return llama32_1b();
    if (n == "llama3.2-3b") return llama32_3b();
    if (n == "toy-64") return toy64();
    return std::nullopt;
}

}  // namespace presets

}  // namespace sherpa
