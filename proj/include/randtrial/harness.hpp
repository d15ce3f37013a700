// harness.hpp - the nested Monte Carlo Type I error study: populations x
// samples x randomization sequences x tests, plus convergence summaries.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "randtrial/errors.hpp"
#include "randtrial/inference.hpp"
#include "randtrial/population.hpp"
#include "randtrial/rng.hpp"
#include "randtrial/schemes.hpp"

namespace randtrial {

struct TestSpec {
    TestKind kind = TestKind::Anova;
    AdjustmentKind adjustment = AdjustmentKind::None;

    friend bool operator==(const TestSpec&, const TestSpec&) = default;
};

struct StudyConfig {
    std::size_t N = 0;  // population size
    std::size_t n = 0;  // sample size, n <= N
    NullKind null = NullKind::Sharp;
    SchemeSpec scheme;
    std::vector<TestSpec> tests;
    std::uint64_t nrand = 10000;  // sequences per sample (L)
    std::uint64_t nsamp = 1;      // samples per population; 1 when n == N
    std::uint64_t npops = 1000;
    double alpha = 0.05;
    std::uint64_t master_seed = 0;
    unsigned thread_count = 1;
    // Populations depend only on (seed, N, index) so different schemes see the
    // same populations. When false the scheme is mixed into the key.
    bool reuse_populations = true;
    // Replace the nrand random sequences by the full weighted enumeration.
    bool exact_enumeration = false;
    std::uint64_t rbi_draws = 1000;  // inner L for the RBI test kind
    RbiOptions rbi;

    void validate() const {
        if (tests.empty()) throw InvalidConfiguration("tests: at least one test is required");
        if (N < 2) throw InvalidConfiguration("N: population size must be >= 2");
        if (n > N)
            throw InvalidConfiguration("n: sample size " + std::to_string(n) + " exceeds population size " +
                                       std::to_string(N));
        scheme.validate_for(n);
        if (n == N && nsamp != 1)
            throw InvalidConfiguration("nsamp: must be 1 when n = N (the whole population is the sample), got " +
                                       std::to_string(nsamp));
        if (nsamp < 1) throw InvalidConfiguration("nsamp: must be >= 1");
        if (!exact_enumeration && nrand < 100)
            throw InvalidConfiguration("nrand: must be >= 100, got " + std::to_string(nrand));
        if (exact_enumeration && count_sequences(scheme, n) > rbi.enumeration_cap)
            throw InvalidConfiguration("exact enumeration of " + scheme.to_string() + " at n = " + std::to_string(n) +
                                       " exceeds the enumeration cap");
        if (npops < 1) throw InvalidConfiguration("npops: must be >= 1");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfiguration("alpha: must lie in (0, 1]");
        if (thread_count < 1) throw InvalidConfiguration("threads: must be >= 1");
        for (const auto& t : tests) {
            if (t.kind != TestKind::Ancova && t.adjustment != AdjustmentKind::None)
                throw InvalidConfiguration("tests: adjustment " + to_string(t.adjustment) + " only applies to ancova");
            if (!adjustment_compatible(scheme, t.adjustment))
                throw InvalidConfiguration("tests: adjustment " + to_string(t.adjustment) +
                                           " is not defined for scheme " + scheme.to_string());
            if (t.kind == TestKind::Rbi && rbi_draws < 1) throw InvalidConfiguration("rbi_draws: must be >= 1");
        }
    }

    std::uint64_t cell_key() const noexcept {
        std::uint64_t h = hash_combine64(scheme.fingerprint(), n);
        h = hash_combine64(h, N);
        return hash_combine64(h, static_cast<std::uint64_t>(null));
    }
};

struct TestTally {
    std::uint64_t rejections = 0;
    std::uint64_t trials = 0;
    std::uint64_t degenerate = 0;  // trials where the test was undefined (counted as non-rejection)
    double type1_error = 0.0;
};

struct PopulationResult {
    std::uint64_t population_index = 0;
    std::uint64_t population_key = 0;  // stream key the population was drawn from
    std::vector<TestTally> tallies;    // parallel to StudyConfig::tests
};

inline std::uint64_t population_stream_key(const StudyConfig& config, std::uint64_t population_index) {
    if (config.reuse_populations)
        return derive_key(config.master_seed, Purpose::Population, {config.N, population_index});
    return derive_key(config.master_seed, Purpose::Population,
                      {config.N, population_index, config.scheme.fingerprint()});
}

namespace detail {

template <class Rng>
TestResult evaluate_test(const TestSpec& spec, std::span<const double> y, std::span<const std::uint8_t> z,
                         const StudyConfig& config, Rng& rbi_rng) {
    switch (spec.kind) {
        case TestKind::Anova: return anova_test(y, z);
        case TestKind::Ancova: return ancova_test(y, z, config.scheme, spec.adjustment);
        case TestKind::NeymanWald: return neyman_wald_test(y, z);
        case TestKind::Rbi:
            return rbi_pvalue(y, z, config.scheme, RbiMode::monte_carlo(config.rbi_draws), rbi_rng, config.rbi);
    }
    return {};
}

/// RBI rejects at p <= alpha; the model-based tests at p < alpha.
inline bool rejects(TestKind kind, double p, double alpha) {
    return kind == TestKind::Rbi ? p <= alpha : p < alpha;
}

}  // namespace detail

/// One population: draw it, then for each sample and each randomization
/// sequence apply every configured test and tally rejections.
inline PopulationResult run_population(const StudyConfig& config, std::uint64_t population_index) {
    config.validate();
    const std::size_t n = config.n;
    const std::size_t ntests = config.tests.size();
    const std::uint64_t cell = config.cell_key();

    PopulationResult result;
    result.population_index = population_index;
    result.population_key = population_stream_key(config, population_index);
    result.tallies.assign(ntests, {});
    std::vector<double> weighted(ntests, 0.0);

    RandomStream pop_rng(result.population_key);
    const auto pop = generate_population(config.N, config.null, pop_rng);

    std::vector<WeightedSequence> enumerated;
    if (config.exact_enumeration) enumerated = enumerate_sequences(config.scheme, n, config.rbi.enumeration_cap);

    Sample sample;
    std::vector<std::size_t> scratch;
    std::vector<std::uint8_t> z(n);
    std::vector<double> y(n);

    auto run_tests = [&](double weight, std::uint64_t s, std::uint64_t l) {
        observed_outcomes_into(pop, sample.indices, z, y);
        for (std::size_t t = 0; t < ntests; ++t) {
            auto& tally = result.tallies[t];
            ++tally.trials;
            RandomStream rbi_rng = derive_stream(config.master_seed, Purpose::Rerandomize,
                                                 {cell, population_index, s, l, t});
            try {
                const auto r = detail::evaluate_test(config.tests[t], y, z, config, rbi_rng);
                if (detail::rejects(config.tests[t].kind, r.p_value, config.alpha)) {
                    ++tally.rejections;
                    weighted[t] += weight;
                }
            } catch (const DegenerateArm&) {
                ++tally.degenerate;
            } catch (const UnidentifiableModel&) {
                ++tally.degenerate;
            }
        }
    };

    for (std::uint64_t s = 0; s < config.nsamp; ++s) {
        RandomStream sample_rng = derive_stream(config.master_seed, Purpose::Sample,
                                                {config.N, n, population_index, s});
        draw_sample_into(config.N, n, scratch, sample, sample_rng);
        if (config.exact_enumeration) {
            for (std::size_t l = 0; l < enumerated.size(); ++l) {
                std::copy(enumerated[l].sequence.assignments.begin(), enumerated[l].sequence.assignments.end(),
                          z.begin());
                run_tests(enumerated[l].probability, s, l);
            }
        } else {
            for (std::uint64_t l = 0; l < config.nrand; ++l) {
                RandomStream seq_rng = derive_stream(config.master_seed, Purpose::Sequence,
                                                     {cell, population_index, s, l});
                generate_into(config.scheme, std::span<std::uint8_t>(z), seq_rng);
                run_tests(1.0, s, l);
            }
        }
    }

    for (std::size_t t = 0; t < ntests; ++t) {
        auto& tally = result.tallies[t];
        tally.type1_error = config.exact_enumeration
                                ? weighted[t] / static_cast<double>(config.nsamp)
                                : static_cast<double>(tally.rejections) / static_cast<double>(tally.trials);
    }
    return result;
}

/// All npops populations, distributed over config.thread_count workers. The
/// output depends only on the configuration, not on scheduling.
inline std::vector<PopulationResult> run_study(const StudyConfig& config) {
    config.validate();
    std::vector<PopulationResult> results(config.npops);
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const std::uint64_t idx = next.fetch_add(1);
            if (idx >= config.npops) return;
            try {
                results[idx] = run_population(config, idx);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(config.npops);
                return;
            }
        }
    };

    const auto threads = static_cast<std::size_t>(std::min<std::uint64_t>(config.thread_count, config.npops));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

// ---------------------------------------------------------------------------
// Convergence summaries

/// Half-width of the 95% binomial Monte Carlo band around `center` for an
/// error rate estimated from L sequences: 1.96 * sqrt(c (1 - c) / L).
inline double monte_carlo_half_width(double L, double center = 0.05) {
    return 1.96 * std::sqrt(center * (1.0 - center) / L);
}

/// Percentile with linear interpolation between order statistics (R type 7):
/// h = (m - 1) q, value = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
inline double percentile_type7(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InvalidInput("percentile of an empty set");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct ConvergenceSummary {
    std::size_t populations = 0;
    double mean = 0.0;
    double p2_5 = 0.0;
    double p97_5 = 0.0;
    double spread = 0.0;          // p97.5 - p2.5
    double within_bounds = 0.0;   // share within center +/- monte_carlo_half_width(L)
};

inline ConvergenceSummary summarize_values(std::span<const double> type1_errors, double L, double center = 0.05) {
    if (type1_errors.size() < 2)
        throw InvalidInput("a convergence summary needs at least 2 populations, got " +
                           std::to_string(type1_errors.size()));
    if (!(L > 0)) throw InvalidInput("L must be positive");
    std::vector<double> sorted(type1_errors.begin(), type1_errors.end());
    std::sort(sorted.begin(), sorted.end());
    ConvergenceSummary s;
    s.populations = sorted.size();
    double sum = 0.0;
    for (double v : sorted) sum += v;
    s.mean = sum / static_cast<double>(sorted.size());
    s.p2_5 = percentile_type7(sorted, 0.025);
    s.p97_5 = percentile_type7(sorted, 0.975);
    s.spread = s.p97_5 - s.p2_5;
    // The band edges are irrational; the slack only absorbs rounding of the
    // comparison itself.
    const double hw = monte_carlo_half_width(L, center) + 1e-12;
    std::size_t inside = 0;
    for (double v : sorted)
        if (std::fabs(v - center) <= hw) ++inside;
    s.within_bounds = static_cast<double>(inside) / static_cast<double>(sorted.size());
    return s;
}

/// One summary per configured test.
inline std::vector<ConvergenceSummary> summarize(std::span<const PopulationResult> results, double L,
                                                 double center = 0.05) {
    if (results.empty()) throw InvalidInput("no population results to summarize");
    const std::size_t ntests = results.front().tallies.size();
    std::vector<ConvergenceSummary> out;
    std::vector<double> values(results.size());
    for (std::size_t t = 0; t < ntests; ++t) {
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].tallies.size() != ntests) throw InvalidInput("population results disagree on test count");
            values[i] = results[i].tallies[t].type1_error;
        }
        out.push_back(summarize_values(values, L, center));
    }
    return out;
}

}  // namespace randtrial
