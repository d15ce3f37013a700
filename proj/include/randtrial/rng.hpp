// rng.hpp - counter-based random streams with deterministic key derivation.
//
// Every random quantity in a study is drawn from a RandomStream whose key is a
// hash of (master seed, purpose tag, coordinates). Streams never share state,
// so results do not depend on how work is scheduled across threads.
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace randtrial {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine64(std::uint64_t seed, std::uint64_t value) noexcept {
    return splitmix64(seed ^ splitmix64(value + 0x632BE59BD9B4E019ull));
}

/// Purpose tags keep streams for different roles disjoint even when their
/// coordinates coincide.
enum class Purpose : std::uint64_t {
    Population = 0x504F50,  // "POP"
    Sample = 0x534D50,      // "SMP"
    Sequence = 0x534551,    // "SEQ"
    Rerandomize = 0x524249, // "RBI"
    Generic = 0x47454E,     // "GEN"
};

/// Philox4x32-10 (Salmon et al., SC'11). Stateless block function.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// A 64-bit stream backed by Philox4x32-10 in counter mode. Satisfies
/// UniformRandomBitGenerator. Copying a stream forks it (both copies produce
/// the same values), which is how golden tests replay draws.
class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream() noexcept : RandomStream(0) {}
    explicit RandomStream(std::uint64_t key) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          stream_key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (cursor_ == 2) refill();
        return buffer_[cursor_++];
    }

    std::uint64_t key() const noexcept { return stream_key_; }

private:
    void refill() noexcept {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(counter_),
                                      static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
        const auto out = Philox4x32::block(ctr, key_);
        buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
        buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
        ++counter_;
        cursor_ = 0;
    }

    Philox4x32::Key key_;
    std::uint64_t stream_key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int cursor_ = 2;
};

/// Key for the stream identified by (master seed, purpose, coordinates).
inline std::uint64_t derive_key(std::uint64_t master_seed, Purpose purpose,
                                std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = hash_combine64(splitmix64(master_seed), static_cast<std::uint64_t>(purpose));
    for (const auto c : coords) h = hash_combine64(h, c);
    return h;
}

inline RandomStream derive_stream(std::uint64_t master_seed, Purpose purpose,
                                  std::initializer_list<std::uint64_t> coords) noexcept {
    return RandomStream(derive_key(master_seed, purpose, coords));
}

/// Uniform double in [0, 1) with 53 random bits.
template <class Rng>
double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by Lemire's multiply-shift rejection.
/// std::uniform_int_distribution is avoided because its output is
/// implementation-defined and golden values must be portable.
template <class Rng>
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(rng()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(rng()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

/// Serves fair coin flips one bit at a time from 64-bit draws.
template <class Rng>
class CoinFlipper {
public:
    explicit CoinFlipper(Rng& rng) noexcept : rng_(rng) {}

    bool flip() {
        if (remaining_ == 0) {
            bits_ = rng_();
            remaining_ = 64;
        }
        const bool bit = (bits_ & 1u) != 0;
        bits_ >>= 1;
        --remaining_;
        return bit;
    }

private:
    Rng& rng_;
    std::uint64_t bits_ = 0;
    int remaining_ = 0;
};

/// Inverse standard-normal CDF, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16.
inline double normal_quantile(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    if (r <= 0) return q < 0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -val : val;
}

/// Standard normal variate by inversion. One 64-bit draw per variate, so the
/// mapping from stream position to value is fixed.
template <class Rng>
double standard_normal(Rng& rng) {
    // (k + 0.5) / 2^53 keeps the argument strictly inside (0, 1).
    const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    return normal_quantile(u);
}

}  // namespace randtrial
