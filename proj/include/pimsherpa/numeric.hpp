#pragma once

#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sherpa {

/// Brain float 16: the upper half of an IEEE binary32.
struct Bf16 {
    std::uint16_t bits = 0;

    static Bf16 from_float(float f) {
        auto u = std::bit_cast<std::uint32_t>(f);
        if (std::isnan(f)) return Bf16{static_cast<std::uint16_t>((u >> 16) | 0x40)};
        // round to nearest even
        const std::uint32_t lsb = (u >> 16) & 1u;
        u += 0x7FFFu + lsb;
        return Bf16{static_cast<std::uint16_t>(u >> 16)};
    }

    [[nodiscard]] float to_float() const {
        return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
    }

    friend bool operator==(Bf16, Bf16) = default;
};

inline float round_bf16(float f) { return Bf16::from_float(f).to_float(); }

/// Exact rational over int64, always normalized with a positive denominator.
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT: implicit from integer
    constexpr Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
        if (d == 0) throw std::domain_error("rational with zero denominator");
        normalize();
    }

    [[nodiscard]] constexpr std::int64_t num() const { return num_; }
    [[nodiscard]] constexpr std::int64_t den() const { return den_; }
    [[nodiscard]] double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    /// Round half away from zero to the nearest integer.
    [[nodiscard]] constexpr std::int64_t round() const {
        const std::int64_t twice = 2 * num_ + (num_ >= 0 ? den_ : -den_);
        return twice / (2 * den_);
    }

    friend constexpr Rational operator+(Rational a, Rational b) {
        return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_};
    }
    friend constexpr Rational operator-(Rational a, Rational b) {
        return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_};
    }
    friend constexpr Rational operator*(Rational a, Rational b) {
        return {a.num_ * b.num_, a.den_ * b.den_};
    }
    friend constexpr Rational operator/(Rational a, Rational b) {
        return {a.num_ * b.den_, a.den_ * b.num_};
    }
    friend constexpr bool operator==(Rational a, Rational b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend constexpr std::strong_ordering operator<=>(Rational a, Rational b) {
        return a.num_ * b.den_ <=> b.num_ * a.den_;
    }

    [[nodiscard]] std::string str() const {
        return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
    }
    friend std::ostream& operator<<(std::ostream& os, Rational r) { return os << r.str(); }

private:
    constexpr void normalize() {
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const std::int64_t g = std::gcd(num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

constexpr Rational max(Rational a, Rational b) { return a < b ? b : a; }

constexpr bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr unsigned log2_exact(std::uint64_t v) { return static_cast<unsigned>(std::countr_zero(v)); }

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

constexpr std::uint64_t round_up(std::uint64_t a, std::uint64_t b) { return ceil_div(a, b) * b; }

}  // namespace sherpa
