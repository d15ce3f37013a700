// population.hpp - finite populations of potential outcomes, sampling without
// replacement, and revealing observed outcomes.
#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "randtrial/errors.hpp"
#include "randtrial/rng.hpp"
#include "randtrial/schemes.hpp"

namespace randtrial {

enum class NullKind {
    Sharp,         // Y(1) = Y(0)
    NormalZero,    // Y(0) ~ N(0,1), Y(1) = 0
    NormalNormal,  // Y(0), Y(1) independent N(0,1)
};

inline std::string to_string(NullKind kind) {
    switch (kind) {
        case NullKind::Sharp: return "sharp";
        case NullKind::NormalZero: return "normal_zero";
        case NullKind::NormalNormal: return "normal_normal";
    }
    return "?";
}

inline NullKind parse_null(std::string_view text) {
    if (text == "sharp") return NullKind::Sharp;
    if (text == "normal_zero") return NullKind::NormalZero;
    if (text == "normal_normal") return NullKind::NormalNormal;
    throw InvalidConfiguration("unknown null '" + std::string(text) + "' (expected sharp, normal_zero, normal_normal)");
}

struct FinitePopulation {
    std::vector<double> y0;
    std::vector<double> y1;
    NullKind null = NullKind::Sharp;

    std::size_t size() const noexcept { return y0.size(); }
};

/// Participating individuals, in enrollment order.
struct Sample {
    std::vector<std::size_t> indices;

    std::size_t size() const noexcept { return indices.size(); }
};

struct ObservedData {
    std::vector<double> y;
    std::vector<std::uint8_t> z;

    std::size_t size() const noexcept { return y.size(); }
};

/// Y(0) is i.i.d. N(0,1) by inversion (AS 241), one stream draw per value, all
/// of Y(0) before any of Y(1).
template <class Rng>
FinitePopulation generate_population(std::size_t N, NullKind null, Rng& rng) {
    if (N < 2) throw InvalidConfiguration("population size must be >= 2, got " + std::to_string(N));
    FinitePopulation pop;
    pop.null = null;
    pop.y0.resize(N);
    for (auto& v : pop.y0) v = standard_normal(rng);
    switch (null) {
        case NullKind::Sharp: pop.y1 = pop.y0; break;
        case NullKind::NormalZero: pop.y1.assign(N, 0.0); break;
        case NullKind::NormalNormal:
            pop.y1.resize(N);
            for (auto& v : pop.y1) v = standard_normal(rng);
            break;
    }
    return pop;
}

/// Partial Fisher-Yates over the index array; the first n slots are the
/// sample in draw order. When n == N the population is taken as is, in index
/// order, and no randomness is consumed.
template <class Rng>
void draw_sample_into(std::size_t N, std::size_t n, std::vector<std::size_t>& scratch, Sample& out, Rng& rng) {
    if (n < 2 || n > N)
        throw InvalidConfiguration("sample size must satisfy 2 <= n <= N, got n = " + std::to_string(n) +
                                   ", N = " + std::to_string(N));
    scratch.resize(N);
    std::iota(scratch.begin(), scratch.end(), std::size_t{0});
    if (n < N) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_below(rng, N - i));
            std::swap(scratch[i], scratch[j]);
        }
    }
    out.indices.assign(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n));
}

template <class Rng>
Sample draw_sample(const FinitePopulation& pop, std::size_t n, Rng& rng) {
    Sample s;
    std::vector<std::size_t> scratch;
    draw_sample_into(pop.size(), n, scratch, s, rng);
    return s;
}

inline void observed_outcomes_into(const FinitePopulation& pop, std::span<const std::size_t> indices,
                                   std::span<const std::uint8_t> z, std::span<double> y) {
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = z[i] ? pop.y1[indices[i]] : pop.y0[indices[i]];
}

inline ObservedData observed_outcomes(const FinitePopulation& pop, const Sample& sample,
                                      std::span<const std::uint8_t> z) {
    if (z.size() != sample.size())
        throw InvalidInput("assignment length " + std::to_string(z.size()) + " does not match sample size " +
                           std::to_string(sample.size()));
    for (auto idx : sample.indices)
        if (idx >= pop.size()) throw InvalidInput("sample index " + std::to_string(idx) + " outside population");
    ObservedData data{std::vector<double>(z.size()), std::vector<std::uint8_t>(z.begin(), z.end())};
    observed_outcomes_into(pop, sample.indices, z, data.y);
    return data;
}

inline ObservedData observed_outcomes(const FinitePopulation& pop, const Sample& sample, const TreatmentSequence& z) {
    return observed_outcomes(pop, sample, std::span<const std::uint8_t>(z.assignments));
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& where) {
    double v = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw InvalidInput(where + ": cannot parse '" + std::string(text) + "' as a number");
    return v;
}

}  // namespace detail

/// CSV with header index,y0,y1 and shortest round-trip numbers.
inline void write_population_csv(std::ostream& os, const FinitePopulation& pop) {
    os << "index,y0,y1\n";
    for (std::size_t i = 0; i < pop.size(); ++i)
        os << i << ',' << detail::format_double(pop.y0[i]) << ',' << detail::format_double(pop.y1[i]) << '\n';
}

inline FinitePopulation read_population_csv(std::istream& is, NullKind null) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("index,y0,y1", 0) != 0)
        throw InvalidInput("population CSV must start with header index,y0,y1");
    FinitePopulation pop;
    pop.null = null;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw InvalidInput("population CSV line " + std::to_string(lineno) + ": expected 3 fields");
        const std::string where = "population CSV line " + std::to_string(lineno);
        const auto index = detail::parse_double(std::string_view(line).substr(0, c1), where);
        if (index != static_cast<double>(pop.size()))
            throw InvalidInput(where + ": indices must be 0,1,2,... in order");
        pop.y0.push_back(detail::parse_double(std::string_view(line).substr(c1 + 1, c2 - c1 - 1), where));
        pop.y1.push_back(detail::parse_double(std::string_view(line).substr(c2 + 1), where));
    }
    if (pop.size() < 2) throw InvalidInput("population CSV must hold at least 2 rows");
    return pop;
}

}  // namespace randtrial
