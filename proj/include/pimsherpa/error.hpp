#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sherpa {

enum class ErrorCode {
    Capacity,       ///< address or image beyond the available capacity
    Geometry,       ///< coordinate outside the DRAM geometry
    InvalidMap,     ///< address map fails validation
    PoolExhausted,  ///< allocation does not fit the pool cap
    Unmapped,       ///< access outside every registered region
    Attribute,      ///< region attribute does not match the operation
    Overflow,       ///< destination or register file overflow
    SizeMismatch,   ///< blob size does not match the model
    Misaligned,     ///< staging address or length not aligned
    Config,         ///< invalid configuration value
    Schedule,       ///< scenario cannot be scheduled
};

constexpr std::string_view to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::Capacity: return "capacity";
        case ErrorCode::Geometry: return "geometry";
        case ErrorCode::InvalidMap: return "invalid-map";
        case ErrorCode::PoolExhausted: return "pool-exhausted";
        case ErrorCode::Unmapped: return "unmapped";
        case ErrorCode::Attribute: return "attribute";
        case ErrorCode::Overflow: return "overflow";
        case ErrorCode::SizeMismatch: return "size-mismatch";
        case ErrorCode::Misaligned: return "misaligned";
        case ErrorCode::Config: return "config";
        case ErrorCode::Schedule: return "schedule";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace sherpa
