// config.hpp - JSON study configuration and its expansion into sweep cells.
//
// {
//   "population":  {"null": "sharp", "N_over_n": [1.0, 1.1]}   or  {"N": [50, 55]},
//   "sample":      {"n": [16, 24, 32]},
//   "scheme":      [{"kind": "fixed_block", "block_size": [2, 4]}, {"kind": "complete"}],
//   "tests":       [{"test": "anova"}, {"test": "ancova", "adjustment": "block_indicators"}],
//   "monte_carlo": {"nrand": 2000, "nsamp": 1, "npops": 2000, "alpha": 0.05},
//   "seed": 42,
//   "threads": 4
// }
//
// Scalars may stand in for one-element arrays. Cells are the product
// n x N (or N/n ratio) x scheme, in that nesting order. An ancova entry is
// applied to every scheme its adjustment is defined for.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "randtrial/errors.hpp"
#include "randtrial/harness.hpp"

namespace randtrial::cli {

using json = nlohmann::json;

/// Configuration problem located at a JSON field path.
class ConfigError : public InvalidConfiguration {
public:
    ConfigError(const std::string& field, const std::string& message)
        : InvalidConfiguration("config field '" + field + "': " + message) {}
};

struct SweepConfig {
    std::vector<StudyConfig> cells;
    json echo;  // the parsed document after overrides
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
    }
}

inline const json& require(const json& obj, const std::string& path, const char* key) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

inline std::vector<json> as_list(const json& v) {
    if (v.is_array()) return std::vector<json>(v.begin(), v.end());
    return {v};
}

inline std::uint64_t as_count(const json& v, const std::string& path) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

inline double as_real(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
}

inline std::string as_text(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

inline std::vector<SchemeSpec> parse_schemes(const json& node) {
    std::vector<SchemeSpec> out;
    const auto items = as_list(node);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const std::string path = node.is_array() ? "scheme[" + std::to_string(i) + "]" : "scheme";
        const json& item = items[i];
        try {
            if (item.is_string()) {
                out.push_back(parse_scheme(item.get<std::string>()));
                continue;
            }
            reject_unknown(item, path, {"kind", "block_size", "mti"});
            const auto kind = as_text(require(item, path, "kind"), path + ".kind");
            if (kind == "simple") {
                out.push_back(SchemeSpec::simple());
            } else if (kind == "complete") {
                out.push_back(SchemeSpec::complete());
            } else if (kind == "fixed_block") {
                const auto& b = require(item, path, "block_size");
                for (const auto& v : as_list(b))
                    out.push_back(SchemeSpec::fixed_block(static_cast<int>(as_count(v, path + ".block_size"))));
            } else if (kind == "big_stick") {
                const auto& m = require(item, path, "mti");
                for (const auto& v : as_list(m))
                    out.push_back(SchemeSpec::big_stick(static_cast<int>(as_count(v, path + ".mti"))));
            } else {
                throw ConfigError(path + ".kind", "unknown scheme kind '" + kind + "'");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidConfiguration& e) {
            throw ConfigError(path, e.what());
        }
    }
    if (out.empty()) throw ConfigError("scheme", "at least one scheme is required");
    return out;
}

inline std::vector<TestSpec> parse_tests(const json& node) {
    if (!node.is_array() || node.empty()) throw ConfigError("tests", "expected a non-empty array");
    std::vector<TestSpec> out;
    for (std::size_t i = 0; i < node.size(); ++i) {
        const std::string path = "tests[" + std::to_string(i) + "]";
        const json& item = node[i];
        try {
            if (item.is_string()) {
                out.push_back({parse_test_kind(item.get<std::string>()), AdjustmentKind::None});
                continue;
            }
            reject_unknown(item, path, {"test", "adjustment"});
            TestSpec spec{parse_test_kind(as_text(require(item, path, "test"), path + ".test")), AdjustmentKind::None};
            if (item.contains("adjustment"))
                spec.adjustment = parse_adjustment(as_text(item["adjustment"], path + ".adjustment"));
            if (spec.kind != TestKind::Ancova && spec.adjustment != AdjustmentKind::None)
                throw ConfigError(path + ".adjustment", "adjustments only apply to ancova");
            out.push_back(spec);
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidConfiguration& e) {
            throw ConfigError(path, e.what());
        }
    }
    return out;
}

}  // namespace detail

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

/// Thread count: --threads, then RANDTRIAL_THREADS, then the config, then the
/// available hardware parallelism.
inline unsigned resolve_threads(const Overrides& overrides, const json& doc) {
    if (overrides.threads) return std::max(1u, *overrides.threads);
    if (const char* env = std::getenv("RANDTRIAL_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw InvalidConfiguration("RANDTRIAL_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    if (doc.contains("threads")) {
        const auto v = detail::as_count(doc["threads"], "threads");
        if (v < 1) throw ConfigError("threads", "must be >= 1");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline SweepConfig parse_config(const json& doc_in, const Overrides& overrides = {}) {
    using namespace detail;
    if (!doc_in.is_object()) throw ConfigError("<root>", "expected a JSON object");
    json doc = doc_in;
    reject_unknown(doc, "", {"population", "sample", "scheme", "tests", "monte_carlo", "seed", "threads"});

    // population
    NullKind null = NullKind::Sharp;
    std::vector<double> ratios{1.0};
    std::vector<std::uint64_t> absolute_N;
    if (doc.contains("population")) {
        const json& pop = doc["population"];
        if (!pop.is_object()) throw ConfigError("population", "expected an object");
        reject_unknown(pop, "population", {"null", "N", "N_over_n"});
        if (pop.contains("null")) {
            try {
                null = parse_null(as_text(pop["null"], "population.null"));
            } catch (const ConfigError&) {
                throw;
            } catch (const InvalidConfiguration& e) {
                throw ConfigError("population.null", e.what());
            }
        }
        if (pop.contains("N") && pop.contains("N_over_n"))
            throw ConfigError("population", "give either N or N_over_n, not both");
        if (pop.contains("N")) {
            ratios.clear();
            for (const auto& v : as_list(pop["N"])) absolute_N.push_back(as_count(v, "population.N"));
        }
        if (pop.contains("N_over_n")) {
            ratios.clear();
            for (const auto& v : as_list(pop["N_over_n"])) {
                const double r = as_real(v, "population.N_over_n");
                if (!(r >= 1.0)) throw ConfigError("population.N_over_n", "ratios must be >= 1");
                ratios.push_back(r);
            }
        }
    }

    // sample
    std::vector<std::uint64_t> sizes;
    {
        const json& sample = require(doc, "", "sample");
        if (!sample.is_object()) throw ConfigError("sample", "expected an object");
        reject_unknown(sample, "sample", {"n"});
        for (const auto& v : as_list(require(sample, "sample", "n"))) sizes.push_back(as_count(v, "sample.n"));
        if (sizes.empty()) throw ConfigError("sample.n", "at least one sample size is required");
    }

    const auto schemes = parse_schemes(require(doc, "", "scheme"));
    const auto tests = parse_tests(require(doc, "", "tests"));

    StudyConfig base;
    base.null = null;
    base.nsamp = 1;
    if (doc.contains("monte_carlo")) {
        const json& mc = doc["monte_carlo"];
        if (!mc.is_object()) throw ConfigError("monte_carlo", "expected an object");
        reject_unknown(mc, "monte_carlo",
                       {"nrand", "nsamp", "npops", "alpha", "exact", "rbi_draws", "rbi_empty_arm", "rbi_add_one",
                        "reuse_populations", "enumeration_cap"});
        if (mc.contains("nrand")) base.nrand = as_count(mc["nrand"], "monte_carlo.nrand");
        if (mc.contains("nsamp")) base.nsamp = as_count(mc["nsamp"], "monte_carlo.nsamp");
        if (mc.contains("npops")) base.npops = as_count(mc["npops"], "monte_carlo.npops");
        if (mc.contains("alpha")) base.alpha = as_real(mc["alpha"], "monte_carlo.alpha");
        if (mc.contains("exact")) {
            if (!mc["exact"].is_boolean()) throw ConfigError("monte_carlo.exact", "expected true or false");
            base.exact_enumeration = mc["exact"].get<bool>();
        }
        if (mc.contains("reuse_populations")) {
            if (!mc["reuse_populations"].is_boolean())
                throw ConfigError("monte_carlo.reuse_populations", "expected true or false");
            base.reuse_populations = mc["reuse_populations"].get<bool>();
        }
        if (mc.contains("rbi_draws")) base.rbi_draws = as_count(mc["rbi_draws"], "monte_carlo.rbi_draws");
        if (mc.contains("rbi_add_one")) {
            if (!mc["rbi_add_one"].is_boolean()) throw ConfigError("monte_carlo.rbi_add_one", "expected true or false");
            base.rbi.add_one = mc["rbi_add_one"].get<bool>();
        }
        if (mc.contains("rbi_empty_arm")) {
            const auto policy = as_text(mc["rbi_empty_arm"], "monte_carlo.rbi_empty_arm");
            if (policy == "count_as_extreme") base.rbi.empty_arm = EmptyArmPolicy::CountAsExtreme;
            else if (policy == "resample") base.rbi.empty_arm = EmptyArmPolicy::Resample;
            else throw ConfigError("monte_carlo.rbi_empty_arm", "expected count_as_extreme or resample");
        }
        if (mc.contains("enumeration_cap"))
            base.rbi.enumeration_cap = as_count(mc["enumeration_cap"], "monte_carlo.enumeration_cap");
    }
    if (doc.contains("seed")) base.master_seed = as_count(doc["seed"], "seed");
    if (overrides.seed) {
        base.master_seed = *overrides.seed;
        doc["seed"] = *overrides.seed;
    }
    base.thread_count = resolve_threads(overrides, doc);
    doc["threads"] = base.thread_count;

    SweepConfig sweep;
    for (const auto n : sizes) {
        std::vector<std::uint64_t> populations = absolute_N;
        for (double r : ratios) populations.push_back(static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * r)));
        for (const auto N : populations) {
            for (const auto& scheme : schemes) {
                StudyConfig cell = base;
                cell.n = n;
                cell.N = N;
                cell.scheme = scheme;
                for (const auto& t : tests)
                    if (adjustment_compatible(scheme, t.adjustment)) cell.tests.push_back(t);
                const std::string where = "cell (scheme " + scheme.to_string() + ", n = " + std::to_string(n) +
                                          ", N = " + std::to_string(N) + ")";
                if (cell.tests.empty()) throw ConfigError("tests", "no test applies to " + where);
                try {
                    cell.validate();
                } catch (const InvalidConfiguration& e) {
                    throw InvalidConfiguration(where + ": " + e.what());
                }
                sweep.cells.push_back(std::move(cell));
            }
        }
    }
    for (std::size_t i = 0; i < tests.size(); ++i) {
        bool used = false;
        for (const auto& s : schemes) used = used || adjustment_compatible(s, tests[i].adjustment);
        if (!used)
            throw ConfigError("tests[" + std::to_string(i) + "].adjustment",
                              to_string(tests[i].adjustment) + " is not defined for any configured scheme");
    }
    sweep.echo = std::move(doc);
    return sweep;
}

/// Parses JSON text; syntax errors report line and column.
inline SweepConfig parse_config_text(const std::string& text, const Overrides& overrides = {}) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw InvalidConfiguration("config is not valid JSON at line " + std::to_string(line) + ", column " +
                                   std::to_string(col) + ": " + e.what());
    }
    return parse_config(doc, overrides);
}

}  // namespace randtrial::cli
