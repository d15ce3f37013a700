// schemes.hpp - two-arm 1:1 randomization schemes: generation, exact
// enumeration, and running-imbalance paths.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "randtrial/errors.hpp"
#include "randtrial/rng.hpp"

namespace randtrial {

enum class SchemeKind { Simple, Complete, FixedBlock, BigStick };

struct SchemeSpec {
    SchemeKind kind = SchemeKind::Simple;
    int block_size = 0;  // FixedBlock only
    int mti = 0;         // BigStick only

    static SchemeSpec simple() { return {SchemeKind::Simple, 0, 0}; }
    static SchemeSpec complete() { return {SchemeKind::Complete, 0, 0}; }
    static SchemeSpec fixed_block(int block_size) {
        SchemeSpec s{SchemeKind::FixedBlock, block_size, 0};
        s.validate();
        return s;
    }
    static SchemeSpec big_stick(int mti) {
        SchemeSpec s{SchemeKind::BigStick, 0, mti};
        s.validate();
        return s;
    }

    void validate() const {
        if (kind == SchemeKind::FixedBlock && (block_size < 2 || block_size % 2 != 0))
            throw InvalidConfiguration("fixed_block requires an even block_size >= 2, got " +
                                       std::to_string(block_size));
        if (kind == SchemeKind::BigStick && mti < 1)
            throw InvalidConfiguration("big_stick requires mti >= 1, got " + std::to_string(mti));
    }

    /// Checks the sample-size preconditions of generation and enumeration.
    void validate_for(std::size_t n) const {
        validate();
        if (n < 2) throw InvalidConfiguration("sample size must be >= 2, got " + std::to_string(n));
        if (kind == SchemeKind::Complete && n % 2 != 0)
            throw InvalidConfiguration("complete randomization requires an even sample size (n0 = n1 = n/2), got n = " +
                                       std::to_string(n));
        if (kind == SchemeKind::FixedBlock && (n % static_cast<std::size_t>(block_size)) % 2 != 0)
            throw InvalidConfiguration("fixed_block(" + std::to_string(block_size) +
                                       ") requires n mod block_size to be even so the final partial block can "
                                       "be balanced, got n = " + std::to_string(n));
    }

    /// Canonical text form: simple, complete, fixed_block:<b>, big_stick:<mti>.
    std::string to_string() const {
        switch (kind) {
            case SchemeKind::Simple: return "simple";
            case SchemeKind::Complete: return "complete";
            case SchemeKind::FixedBlock: return "fixed_block:" + std::to_string(block_size);
            case SchemeKind::BigStick: return "big_stick:" + std::to_string(mti);
        }
        return "?";
    }

    /// Short label used in plots (SR, CR, FB4, BS2).
    std::string label() const {
        switch (kind) {
            case SchemeKind::Simple: return "SR";
            case SchemeKind::Complete: return "CR";
            case SchemeKind::FixedBlock: return "FB" + std::to_string(block_size);
            case SchemeKind::BigStick: return "BS" + std::to_string(mti);
        }
        return "?";
    }

    std::uint64_t fingerprint() const noexcept {
        return hash_combine64(hash_combine64(static_cast<std::uint64_t>(kind) + 1,
                                             static_cast<std::uint64_t>(block_size)),
                              static_cast<std::uint64_t>(mti));
    }

    friend bool operator==(const SchemeSpec&, const SchemeSpec&) = default;
};

inline SchemeSpec parse_scheme(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view name = text.substr(0, colon);
    int param = 0;
    if (colon != std::string_view::npos) {
        const std::string digits(text.substr(colon + 1));
        try {
            std::size_t used = 0;
            param = std::stoi(digits, &used);
            if (used != digits.size()) throw std::invalid_argument(digits);
        } catch (const std::exception&) {
            throw InvalidConfiguration("bad scheme parameter in '" + std::string(text) + "'");
        }
    }
    if (name == "simple" && colon == std::string_view::npos) return SchemeSpec::simple();
    if (name == "complete" && colon == std::string_view::npos) return SchemeSpec::complete();
    if (name == "fixed_block" && colon != std::string_view::npos) return SchemeSpec::fixed_block(param);
    if (name == "big_stick" && colon != std::string_view::npos) return SchemeSpec::big_stick(param);
    throw InvalidConfiguration("unknown scheme '" + std::string(text) +
                               "' (expected simple, complete, fixed_block:<b>, big_stick:<mti>)");
}

struct TreatmentSequence {
    std::vector<std::uint8_t> assignments;
    SchemeSpec scheme;

    std::size_t size() const noexcept { return assignments.size(); }
    friend bool operator==(const TreatmentSequence&, const TreatmentSequence&) = default;
};

/// values[k] is (#ones - #zeros) among the first k assignments; values[0] = 0.
struct ImbalancePath {
    std::vector<int> values;
};

namespace detail {

template <class Rng>
void shuffle_balanced(std::span<std::uint8_t> out, Rng& rng) {
    const std::size_t half = out.size() / 2;
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(half), std::uint8_t{1});
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(half), out.end(), std::uint8_t{0});
    for (std::size_t i = out.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(out[i - 1], out[j]);
    }
}

}  // namespace detail

/// Fills `out` with one assignment sequence drawn from the scheme. Preconditions
/// are the caller's responsibility; see generate_sequence.
template <class Rng>
void generate_into(const SchemeSpec& scheme, std::span<std::uint8_t> out, Rng& rng) {
    switch (scheme.kind) {
        case SchemeKind::Simple: {
            CoinFlipper coin(rng);
            for (auto& z : out) z = coin.flip() ? 1 : 0;
            return;
        }
        case SchemeKind::Complete:
            detail::shuffle_balanced(out, rng);
            return;
        case SchemeKind::FixedBlock: {
            const auto b = static_cast<std::size_t>(scheme.block_size);
            for (std::size_t start = 0; start < out.size(); start += b)
                detail::shuffle_balanced(out.subspan(start, std::min(b, out.size() - start)), rng);
            return;
        }
        case SchemeKind::BigStick: {
            CoinFlipper coin(rng);
            int imbalance = 0;
            for (auto& z : out) {
                if (imbalance >= scheme.mti) {
                    z = 0;
                } else if (imbalance <= -scheme.mti) {
                    z = 1;
                } else {
                    z = coin.flip() ? 1 : 0;
                }
                imbalance += z ? 1 : -1;
            }
            return;
        }
    }
}

template <class Rng>
TreatmentSequence generate_sequence(const SchemeSpec& scheme, std::size_t n, Rng& rng) {
    scheme.validate_for(n);
    TreatmentSequence seq{std::vector<std::uint8_t>(n), scheme};
    generate_into(scheme, std::span<std::uint8_t>(seq.assignments), rng);
    return seq;
}

inline void imbalance_path_into(std::span<const std::uint8_t> z, std::span<int> values) {
    values[0] = 0;
    for (std::size_t k = 0; k < z.size(); ++k) values[k + 1] = values[k] + (z[k] ? 1 : -1);
}

inline ImbalancePath imbalance_path(std::span<const std::uint8_t> z) {
    ImbalancePath path{std::vector<int>(z.size() + 1)};
    imbalance_path_into(z, path.values);
    return path;
}

inline ImbalancePath imbalance_path(const TreatmentSequence& seq) { return imbalance_path(seq.assignments); }

/// True when z satisfies the structural invariant of the scheme.
inline bool satisfies_scheme(const SchemeSpec& scheme, std::span<const std::uint8_t> z) {
    const auto balanced = [](std::span<const std::uint8_t> part) {
        std::size_t ones = 0;
        for (auto v : part) ones += v;
        return 2 * ones == part.size();
    };
    for (auto v : z)
        if (v > 1) return false;
    switch (scheme.kind) {
        case SchemeKind::Simple: return true;
        case SchemeKind::Complete: return balanced(z);
        case SchemeKind::FixedBlock: {
            const auto b = static_cast<std::size_t>(scheme.block_size);
            for (std::size_t start = 0; start < z.size(); start += b)
                if (!balanced(z.subspan(start, std::min(b, z.size() - start)))) return false;
            return true;
        }
        case SchemeKind::BigStick: {
            int d = 0;
            for (auto v : z) {
                d += v ? 1 : -1;
                if (d > scheme.mti || d < -scheme.mti) return false;
            }
            return true;
        }
    }
    return false;
}

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 20;

namespace detail {

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
    return a * b;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const auto next = saturating_mul(r, n - k + i);
        if (next == std::numeric_limits<std::uint64_t>::max()) return next;
        r = next / i;
    }
    return r;
}

}  // namespace detail

/// |Omega_RS| for (scheme, n), saturating at UINT64_MAX.
inline std::uint64_t count_sequences(const SchemeSpec& scheme, std::size_t n) {
    scheme.validate_for(n);
    switch (scheme.kind) {
        case SchemeKind::Simple:
            return n >= 64 ? std::numeric_limits<std::uint64_t>::max() : (std::uint64_t{1} << n);
        case SchemeKind::Complete: return detail::binomial(n, n / 2);
        case SchemeKind::FixedBlock: {
            const auto b = static_cast<std::size_t>(scheme.block_size);
            std::uint64_t total = 1;
            for (std::size_t start = 0; start < n; start += b) {
                const std::size_t len = std::min(b, n - start);
                total = detail::saturating_mul(total, detail::binomial(len, len / 2));
            }
            return total;
        }
        case SchemeKind::BigStick: {
            // Paths of a walk confined to [-mti, mti]; forced steps do not branch.
            const int m = scheme.mti;
            std::vector<std::uint64_t> ways(static_cast<std::size_t>(2 * m + 1), 0), next(ways.size());
            ways[static_cast<std::size_t>(m)] = 1;
            for (std::size_t step = 0; step < n; ++step) {
                std::fill(next.begin(), next.end(), 0);
                for (int d = -m; d <= m; ++d) {
                    const auto w = ways[static_cast<std::size_t>(d + m)];
                    if (w == 0) continue;
                    auto add = [&](int to) {
                        auto& slot = next[static_cast<std::size_t>(to + m)];
                        slot = (slot > std::numeric_limits<std::uint64_t>::max() - w)
                                   ? std::numeric_limits<std::uint64_t>::max()
                                   : slot + w;
                    };
                    if (d < m) add(d + 1);
                    if (d > -m) add(d - 1);
                }
                ways.swap(next);
            }
            std::uint64_t total = 0;
            for (auto w : ways)
                total = (total > std::numeric_limits<std::uint64_t>::max() - w) ? std::numeric_limits<std::uint64_t>::max()
                                                                                : total + w;
            return total;
        }
    }
    return 0;
}

struct WeightedSequence {
    TreatmentSequence sequence;
    double probability = 0.0;
};

/// Every admissible sequence with its probability, in lexicographic order of
/// the assignment vectors.
inline std::vector<WeightedSequence> enumerate_sequences(const SchemeSpec& scheme, std::size_t n,
                                                         std::uint64_t cap = kDefaultEnumerationCap) {
    const std::uint64_t count = count_sequences(scheme, n);
    if (count > cap)
        throw EnumerationTooLarge(scheme.to_string() + " with n = " + std::to_string(n) + " has " +
                                  (count == std::numeric_limits<std::uint64_t>::max() ? std::string("more than 2^64")
                                                                                      : std::to_string(count)) +
                                  " sequences, above the cap of " + std::to_string(cap) +
                                  "; use Monte Carlo re-randomization instead");

    std::vector<WeightedSequence> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<std::uint8_t> z(n);

    // Depth-first, trying 0 before 1, yields lexicographic order. Each branch
    // carries the scheme's conditional probability of that assignment.
    const auto b = static_cast<std::size_t>(scheme.block_size);
    auto recurse = [&](auto&& self, std::size_t pos, int imbalance, double prob) -> void {
        if (pos == n) {
            out.push_back({TreatmentSequence{z, scheme}, prob});
            return;
        }
        bool allowed[2] = {true, true};
        double branch_prob[2] = {0.5, 0.5};
        switch (scheme.kind) {
            case SchemeKind::Simple: break;
            case SchemeKind::Complete: {
                const auto ones = static_cast<std::ptrdiff_t>((static_cast<std::ptrdiff_t>(pos) + imbalance) / 2);
                const auto zeros = static_cast<std::ptrdiff_t>(pos) - ones;
                const auto half = static_cast<std::ptrdiff_t>(n / 2);
                const auto left = static_cast<double>(n - pos);
                branch_prob[1] = static_cast<double>(half - ones) / left;
                branch_prob[0] = static_cast<double>(half - zeros) / left;
                allowed[1] = ones < half;
                allowed[0] = zeros < half;
                break;
            }
            case SchemeKind::FixedBlock: {
                const std::size_t start = pos - pos % b;
                const std::size_t len = std::min(b, n - start);
                std::ptrdiff_t ones = 0;
                for (std::size_t i = start; i < pos; ++i) ones += z[i];
                const auto zeros = static_cast<std::ptrdiff_t>(pos - start) - ones;
                const auto half = static_cast<std::ptrdiff_t>(len / 2);
                const auto left = static_cast<double>(start + len - pos);
                branch_prob[1] = static_cast<double>(half - ones) / left;
                branch_prob[0] = static_cast<double>(half - zeros) / left;
                allowed[1] = ones < half;
                allowed[0] = zeros < half;
                break;
            }
            case SchemeKind::BigStick:
                if (imbalance >= scheme.mti) {
                    allowed[1] = false;
                    branch_prob[0] = 1.0;
                } else if (imbalance <= -scheme.mti) {
                    allowed[0] = false;
                    branch_prob[1] = 1.0;
                }
                break;
        }
        for (std::uint8_t v = 0; v <= 1; ++v) {
            if (!allowed[v]) continue;
            z[pos] = v;
            self(self, pos + 1, imbalance + (v ? 1 : -1), prob * branch_prob[v]);
        }
    };
    recurse(recurse, 0, 0, 1.0);
    return out;
}

}  // namespace randtrial
