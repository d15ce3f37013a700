// inference.hpp - difference in means and the four tests of no treatment
// effect: randomization-based (RBI), ANOVA, ANCOVA with restriction
// adjustments, and the Neyman-variance Wald test. All tests are two-sided.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "randtrial/distributions.hpp"
#include "randtrial/errors.hpp"
#include "randtrial/ols.hpp"
#include "randtrial/population.hpp"
#include "randtrial/rng.hpp"
#include "randtrial/schemes.hpp"

namespace randtrial {

enum class TestKind { Rbi, Anova, Ancova, NeymanWald };

enum class AdjustmentKind {
    None,
    BlockIndicators,      // fixed-block membership (FixedBlock only)
    BsdAtThreshold,       // -1 at -mti, +1 at +mti, 0 otherwise
    BsdImbalanceLevel,    // categorical pre-assignment imbalance, reference level 0
    BsdImbalanceInteger,  // the same imbalance as one integer-valued covariate
    BsdPseudoBlock2Mti,   // membership in consecutive blocks of size 2*mti
    BsdPseudoBlock2,      // membership in consecutive pairs
};

inline std::string to_string(TestKind kind) {
    switch (kind) {
        case TestKind::Rbi: return "rbi";
        case TestKind::Anova: return "anova";
        case TestKind::Ancova: return "ancova";
        case TestKind::NeymanWald: return "neyman_wald";
    }
    return "?";
}

inline TestKind parse_test_kind(std::string_view text) {
    if (text == "rbi") return TestKind::Rbi;
    if (text == "anova") return TestKind::Anova;
    if (text == "ancova") return TestKind::Ancova;
    if (text == "neyman_wald") return TestKind::NeymanWald;
    throw InvalidConfiguration("unknown test '" + std::string(text) + "' (expected rbi, anova, ancova, neyman_wald)");
}

inline std::string to_string(AdjustmentKind kind) {
    switch (kind) {
        case AdjustmentKind::None: return "none";
        case AdjustmentKind::BlockIndicators: return "block_indicators";
        case AdjustmentKind::BsdAtThreshold: return "bsd_at_threshold";
        case AdjustmentKind::BsdImbalanceLevel: return "bsd_imbalance_level";
        case AdjustmentKind::BsdImbalanceInteger: return "bsd_imbalance_integer";
        case AdjustmentKind::BsdPseudoBlock2Mti: return "bsd_pseudo_block_2mti";
        case AdjustmentKind::BsdPseudoBlock2: return "bsd_pseudo_block_2";
    }
    return "?";
}

inline AdjustmentKind parse_adjustment(std::string_view text) {
    for (auto k : {AdjustmentKind::None, AdjustmentKind::BlockIndicators, AdjustmentKind::BsdAtThreshold,
                   AdjustmentKind::BsdImbalanceLevel, AdjustmentKind::BsdImbalanceInteger,
                   AdjustmentKind::BsdPseudoBlock2Mti, AdjustmentKind::BsdPseudoBlock2})
        if (text == to_string(k)) return k;
    throw InvalidConfiguration("unknown adjustment '" + std::string(text) + "'");
}

struct TestResult {
    TestKind kind = TestKind::Anova;
    double p_value = 1.0;
    double statistic = 0.0;
    std::optional<double> std_error;  // absent for RBI
    std::optional<double> df;         // absent for RBI and the Wald test
};

namespace detail {

inline void check_lengths(std::span<const double> y, std::span<const std::uint8_t> z) {
    if (y.size() != z.size())
        throw InvalidInput("outcome length " + std::to_string(y.size()) + " does not match assignment length " +
                           std::to_string(z.size()));
}

/// Per-arm counts, means and within-arm sums of squares (two-pass).
struct ArmMoments {
    std::size_t n1 = 0, n0 = 0;
    double mean1 = 0, mean0 = 0;
    double ss1 = 0, ss0 = 0;
    double scale = 0;  // max |y|, for zero-variance decisions
};

inline ArmMoments arm_moments(std::span<const double> y, std::span<const std::uint8_t> z) {
    ArmMoments m;
    double s1 = 0, s0 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (z[i]) {
            s1 += y[i];
            ++m.n1;
        } else {
            s0 += y[i];
            ++m.n0;
        }
        m.scale = std::max(m.scale, std::fabs(y[i]));
    }
    if (m.n1 == 0 || m.n0 == 0)
        throw DegenerateArm("difference in means needs both arms non-empty (n1 = " + std::to_string(m.n1) +
                            ", n0 = " + std::to_string(m.n0) + ")");
    m.mean1 = s1 / static_cast<double>(m.n1);
    m.mean0 = s0 / static_cast<double>(m.n0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - (z[i] ? m.mean1 : m.mean0);
        (z[i] ? m.ss1 : m.ss0) += d * d;
    }
    return m;
}

inline constexpr double kZeroRelTol = 1e-12;

/// Two-sided test result for estimate/stderr, with the convention that a
/// vanishing standard error gives p = 1 for a vanishing estimate, else p = 0.
template <class TwoSidedP>
TestResult ratio_test(TestKind kind, double estimate, double se, double scale, std::optional<double> df,
                      TwoSidedP&& two_sided_p) {
    TestResult r{kind, 1.0, 0.0, se, df};
    const double tol = kZeroRelTol * scale;
    if (!(se > tol)) {
        if (std::fabs(estimate) <= tol) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = std::copysign(std::numeric_limits<double>::infinity(), estimate);
            r.p_value = 0.0;
        }
        return r;
    }
    r.statistic = estimate / se;
    r.p_value = std::clamp(two_sided_p(r.statistic), 0.0, 1.0);
    return r;
}

}  // namespace detail

/// Mean of treated outcomes minus mean of control outcomes.
inline double diff_in_means(std::span<const double> y, std::span<const std::uint8_t> z) {
    detail::check_lengths(y, z);
    double s1 = 0, s0 = 0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (z[i]) {
            s1 += y[i];
            ++n1;
        } else {
            s0 += y[i];
        }
    }
    const std::size_t n0 = y.size() - n1;
    if (n1 == 0 || n0 == 0)
        throw DegenerateArm("difference in means needs both arms non-empty (n1 = " + std::to_string(n1) +
                            ", n0 = " + std::to_string(n0) + ")");
    return s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
}

inline double diff_in_means(const ObservedData& data) { return diff_in_means(data.y, data.z); }

/// Pooled-variance two-sample t test on n - 2 degrees of freedom.
inline TestResult anova_test(std::span<const double> y, std::span<const std::uint8_t> z) {
    detail::check_lengths(y, z);
    const auto m = detail::arm_moments(y, z);
    const std::size_t n = y.size();
    if (n < 3) throw UnidentifiableModel("ANOVA needs n >= 3 for a residual degree of freedom");
    const double df = static_cast<double>(n - 2);
    const double s2 = (m.ss1 + m.ss0) / df;
    const double se = std::sqrt(s2 * (1.0 / static_cast<double>(m.n1) + 1.0 / static_cast<double>(m.n0)));
    return detail::ratio_test(TestKind::Anova, m.mean1 - m.mean0, se, m.scale, df,
                              [df](double t) { return t_two_sided_p(t, df); });
}

inline TestResult anova_test(const ObservedData& data) { return anova_test(data.y, data.z); }

/// Wald test with Neyman's conservative variance s1^2/n1 + s0^2/n0, referred
/// to the standard normal.
inline TestResult neyman_wald_test(std::span<const double> y, std::span<const std::uint8_t> z) {
    detail::check_lengths(y, z);
    const auto m = detail::arm_moments(y, z);
    if (m.n1 < 2 || m.n0 < 2)
        throw DegenerateArm("Neyman variance needs at least 2 observations per arm (n1 = " + std::to_string(m.n1) +
                            ", n0 = " + std::to_string(m.n0) + ")");
    const double v1 = m.ss1 / static_cast<double>(m.n1 - 1);
    const double v0 = m.ss0 / static_cast<double>(m.n0 - 1);
    const double se = std::sqrt(v1 / static_cast<double>(m.n1) + v0 / static_cast<double>(m.n0));
    return detail::ratio_test(TestKind::NeymanWald, m.mean1 - m.mean0, se, m.scale, std::nullopt,
                              [](double s) { return normal_two_sided_p(s); });
}

inline TestResult neyman_wald_test(const ObservedData& data) { return neyman_wald_test(data.y, data.z); }

inline bool adjustment_compatible(const SchemeSpec& scheme, AdjustmentKind kind) {
    switch (kind) {
        case AdjustmentKind::None: return true;
        case AdjustmentKind::BlockIndicators: return scheme.kind == SchemeKind::FixedBlock;
        default: return scheme.kind == SchemeKind::BigStick;
    }
}

namespace detail {

inline void add_block_indicators(std::vector<Column>& out, std::size_t n, std::size_t block, std::string_view prefix) {
    const std::size_t blocks = (n + block - 1) / block;
    for (std::size_t b = 1; b < blocks; ++b) {
        std::vector<double> col(n, 0.0);
        for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) col[i] = 1.0;
        out.push_back({std::string(prefix) + std::to_string(b + 1), std::move(col)});
    }
}

}  // namespace detail

/// Adjustment covariates for ANCOVA. History-based covariates use the
/// imbalance before each participant's own assignment. Categorical covariates
/// are reference coded (first block, or imbalance level 0, omitted).
inline std::vector<Column> build_adjustment_covariates(const SchemeSpec& scheme, std::span<const std::uint8_t> z,
                                                       AdjustmentKind kind) {
    if (!adjustment_compatible(scheme, kind))
        throw InvalidConfiguration("adjustment " + to_string(kind) + " is not defined for scheme " + scheme.to_string());
    const std::size_t n = z.size();
    std::vector<Column> out;
    if (kind == AdjustmentKind::None) return out;
    if (kind == AdjustmentKind::BlockIndicators) {
        detail::add_block_indicators(out, n, static_cast<std::size_t>(scheme.block_size), "block_");
        return out;
    }
    if (kind == AdjustmentKind::BsdPseudoBlock2Mti) {
        detail::add_block_indicators(out, n, static_cast<std::size_t>(2 * scheme.mti), "pblock_");
        return out;
    }
    if (kind == AdjustmentKind::BsdPseudoBlock2) {
        detail::add_block_indicators(out, n, 2, "pblock_");
        return out;
    }

    // pre[i] = imbalance before participant i is assigned.
    const auto path = imbalance_path(z);
    const std::span<const int> pre(path.values.data(), n);
    switch (kind) {
        case AdjustmentKind::BsdAtThreshold: {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i)
                col[i] = pre[i] >= scheme.mti ? 1.0 : (pre[i] <= -scheme.mti ? -1.0 : 0.0);
            out.push_back({"at_threshold", std::move(col)});
            break;
        }
        case AdjustmentKind::BsdImbalanceLevel: {
            const std::set<int> levels(pre.begin(), pre.end());
            for (int level : levels) {
                if (level == 0) continue;
                std::vector<double> col(n);
                for (std::size_t i = 0; i < n; ++i) col[i] = pre[i] == level ? 1.0 : 0.0;
                out.push_back({"imbalance_" + std::to_string(level), std::move(col)});
            }
            break;
        }
        case AdjustmentKind::BsdImbalanceInteger: {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = pre[i];
            out.push_back({"imbalance", std::move(col)});
            break;
        }
        default: break;
    }
    return out;
}

inline std::vector<Column> build_adjustment_covariates(const SchemeSpec& scheme, const TreatmentSequence& z,
                                                       AdjustmentKind kind) {
    return build_adjustment_covariates(scheme, std::span<const std::uint8_t>(z.assignments), kind);
}

/// Intercept, treatment, then the adjustment covariates.
inline DesignMatrix ancova_design(const SchemeSpec& scheme, std::span<const std::uint8_t> z, AdjustmentKind kind) {
    const std::size_t n = z.size();
    DesignMatrix X(n);
    X.add("intercept", std::vector<double>(n, 1.0));
    X.add("treatment", std::vector<double>(z.begin(), z.end()));
    for (auto& c : build_adjustment_covariates(scheme, z, kind)) X.add(std::move(c.name), std::move(c.values));
    return X;
}

/// t test of the treatment coefficient on n - p - 2 degrees of freedom, where
/// p counts adjustment columns retained after rank checks.
inline TestResult ancova_test(std::span<const double> y, std::span<const std::uint8_t> z, const SchemeSpec& scheme,
                              AdjustmentKind kind) {
    detail::check_lengths(y, z);
    (void)detail::arm_moments(y, z);  // empty-arm check
    const auto X = ancova_design(scheme, z, kind);
    const auto fit = ols_fit(X, y);
    const auto idx = fit.index_of("treatment");
    if (!idx) throw UnidentifiableModel("treatment column is collinear with the adjustment covariates");
    double scale = 0;
    for (double v : y) scale = std::max(scale, std::fabs(v));
    const double df = fit.residual_df;
    auto r = detail::ratio_test(TestKind::Ancova, fit.coefficients[*idx], fit.stderrs[*idx], scale, df,
                                [df](double t) { return t_two_sided_p(t, df); });
    return r;
}

inline TestResult ancova_test(const ObservedData& data, const SchemeSpec& scheme, AdjustmentKind kind) {
    return ancova_test(data.y, data.z, scheme, kind);
}

// ---------------------------------------------------------------------------
// Randomization-based inference

enum class EmptyArmPolicy {
    CountAsExtreme,  // the sequence counts toward the indicator
    Resample,        // the sequence is excluded (exact) or redrawn (Monte Carlo)
};

struct RbiMode {
    enum class Kind { Exact, MonteCarlo } kind = Kind::Exact;
    std::uint64_t draws = 0;  // L, Monte Carlo only

    static RbiMode exact() { return {Kind::Exact, 0}; }
    static RbiMode monte_carlo(std::uint64_t L) { return {Kind::MonteCarlo, L}; }
};

struct RbiOptions {
    EmptyArmPolicy empty_arm = EmptyArmPolicy::CountAsExtreme;
    bool add_one = false;  // (1 + hits) / (1 + L) instead of hits / L
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;
};

namespace detail {

/// Difference in means of fixed outcomes y under assignment z; nullopt when an
/// arm is empty.
inline std::optional<double> rerandomized_statistic(std::span<const double> y, std::span<const std::uint8_t> z) {
    double s1 = 0, s0 = 0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (z[i]) {
            s1 += y[i];
            ++n1;
        } else {
            s0 += y[i];
        }
    }
    const std::size_t n0 = y.size() - n1;
    if (n1 == 0 || n0 == 0) return std::nullopt;
    return s1 / static_cast<double>(n1) - s0 / static_cast<double>(n0);
}

}  // namespace detail

/// Exact or Monte Carlo randomization p-value for the difference in means,
/// re-randomizing the observed outcome vector under the sharp null.
template <class Rng>
TestResult rbi_pvalue(std::span<const double> y, std::span<const std::uint8_t> z_obs, const SchemeSpec& scheme,
                      RbiMode mode, Rng& rng, const RbiOptions& options = {}) {
    detail::check_lengths(y, z_obs);
    const double observed = diff_in_means(y, z_obs);
    const double threshold = std::fabs(observed);
    TestResult r{TestKind::Rbi, 1.0, observed, std::nullopt, std::nullopt};

    if (mode.kind == RbiMode::Kind::Exact) {
        const auto all = enumerate_sequences(scheme, y.size(), options.enumeration_cap);
        double hit = 0.0, mass = 0.0;
        for (const auto& ws : all) {
            const auto s = detail::rerandomized_statistic(y, ws.sequence.assignments);
            if (!s) {
                if (options.empty_arm == EmptyArmPolicy::CountAsExtreme) {
                    hit += ws.probability;
                    mass += ws.probability;
                }
                continue;
            }
            mass += ws.probability;
            if (std::fabs(*s) >= threshold) hit += ws.probability;
        }
        r.p_value = std::clamp(hit / mass, 0.0, 1.0);
        return r;
    }

    if (mode.draws == 0) throw InvalidConfiguration("Monte Carlo RBI needs L >= 1 draws");
    scheme.validate_for(y.size());
    std::vector<std::uint8_t> z(y.size());
    std::uint64_t hits = 0;
    for (std::uint64_t l = 0; l < mode.draws; ++l) {
        std::optional<double> s;
        for (int attempt = 0;; ++attempt) {
            generate_into(scheme, std::span<std::uint8_t>(z), rng);
            s = detail::rerandomized_statistic(y, z);
            if (s || options.empty_arm == EmptyArmPolicy::CountAsExtreme) break;
            if (attempt > 1000000) throw DegenerateArm("could not draw a sequence with both arms non-empty");
        }
        if (!s || std::fabs(*s) >= threshold) ++hits;
    }
    const double L = static_cast<double>(mode.draws);
    r.p_value = options.add_one ? (1.0 + static_cast<double>(hits)) / (1.0 + L) : static_cast<double>(hits) / L;
    return r;
}

template <class Rng>
TestResult rbi_pvalue(const ObservedData& data, const SchemeSpec& scheme, RbiMode mode, Rng& rng,
                      const RbiOptions& options = {}) {
    return rbi_pvalue(std::span<const double>(data.y), std::span<const std::uint8_t>(data.z), scheme, mode, rng,
                      options);
}

/// The exact RBI p-value each admissible sequence would receive as the
/// observed one, for fixed outcomes y. Entry i belongs to sequences[i];
/// sequences with an empty arm get NaN.
struct ExactRbiTable {
    std::vector<WeightedSequence> sequences;
    std::vector<double> p_values;
};

inline ExactRbiTable exact_rbi_pvalues(std::span<const double> y, const SchemeSpec& scheme,
                                       const RbiOptions& options = {}) {
    ExactRbiTable table;
    table.sequences = enumerate_sequences(scheme, y.size(), options.enumeration_cap);
    const std::size_t m = table.sequences.size();
    std::vector<double> magnitude(m);
    double mass = 0.0;
    std::vector<std::size_t> order;
    order.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto s = detail::rerandomized_statistic(y, table.sequences[i].sequence.assignments);
        if (s) {
            magnitude[i] = std::fabs(*s);
            mass += table.sequences[i].probability;
            order.push_back(i);
        } else if (options.empty_arm == EmptyArmPolicy::CountAsExtreme) {
            magnitude[i] = std::numeric_limits<double>::infinity();
            mass += table.sequences[i].probability;
        } else {
            magnitude[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    // Descending |S|; the p-value of a sequence is the mass of all sequences
    // whose |S| is at least its own, including every tie.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return magnitude[a] > magnitude[b]; });
    double extreme_mass = 0.0;
    if (options.empty_arm == EmptyArmPolicy::CountAsExtreme)
        for (std::size_t i = 0; i < m; ++i)
            if (std::isinf(magnitude[i])) extreme_mass += table.sequences[i].probability;
    table.p_values.assign(m, std::numeric_limits<double>::quiet_NaN());
    double cumulative = extreme_mass;
    for (std::size_t k = 0; k < order.size();) {
        std::size_t end = k;
        double tie_mass = 0.0;
        while (end < order.size() && magnitude[order[end]] == magnitude[order[k]]) {
            tie_mass += table.sequences[order[end]].probability;
            ++end;
        }
        cumulative += tie_mass;
        for (std::size_t j = k; j < end; ++j) table.p_values[order[j]] = std::min(1.0, cumulative / mass);
        k = end;
    }
    return table;
}

}  // namespace randtrial
