// commands.hpp - the simulate, summarize, plot and enumerate subcommands.
// Each returns a process exit status and reports through the given streams.
#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "randtrial/cli/config.hpp"
#include "randtrial/cli/csv.hpp"
#include "randtrial/cli/svg.hpp"
#include "randtrial/harness.hpp"
#include "randtrial/inference.hpp"
#include "randtrial/population.hpp"
#include "randtrial/schemes.hpp"

namespace randtrial::cli {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string> kPopulationColumns = {
    "scheme", "null", "n", "N", "population_index", "test", "adjustment",
    "type1_error", "rejections", "trials", "degenerate_count"};

inline const std::vector<std::string> kSummaryColumns = {
    "scheme", "null", "test", "adjustment", "n", "N", "populations", "L",
    "mean", "p2_5", "p97_5", "spread", "within_bounds_proportion"};

namespace detail {

inline std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Writes the per-population rows of one cell.
inline void write_population_rows(std::ostream& os, const StudyConfig& cell,
                                  const std::vector<PopulationResult>& results) {
    for (const auto& r : results)
        for (std::size_t t = 0; t < cell.tests.size(); ++t) {
            const auto& tally = r.tallies[t];
            csv::write_row(os, {cell.scheme.to_string(), to_string(cell.null), std::to_string(cell.n),
                                std::to_string(cell.N), std::to_string(r.population_index),
                                to_string(cell.tests[t].kind), to_string(cell.tests[t].adjustment),
                                csv::format(tally.type1_error), csv::format(tally.rejections),
                                csv::format(tally.trials), csv::format(tally.degenerate)});
        }
}

struct SimulateOptions {
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    Overrides overrides;
    bool log_progress = false;
};

/// Runs every sweep cell and writes populations.csv and manifest.json into
/// out_dir. On failure nothing is left behind.
inline int cmd_simulate(const SimulateOptions& opt, std::ostream& log, std::ostream& err) {
    namespace fs = std::filesystem;
    const fs::path csv_path = opt.out_dir / "populations.csv";
    const fs::path manifest_path = opt.out_dir / "manifest.json";
    const fs::path csv_tmp = opt.out_dir / "populations.csv.partial";
    auto cleanup = [&] {
        std::error_code ec;
        fs::remove(csv_tmp, ec);
        fs::remove(csv_path, ec);
        fs::remove(manifest_path, ec);
    };
    try {
        const auto sweep = parse_config_text(detail::read_file(opt.config_path), opt.overrides);
        std::error_code ec;
        fs::create_directories(opt.out_dir, ec);
        if (ec) throw InvalidInput("cannot create output directory " + opt.out_dir.string() + ": " + ec.message());

        const std::string started = detail::timestamp();
        nlohmann::json diagnostics = nlohmann::json::array();
        {
            std::ofstream out(csv_tmp, std::ios::binary);
            if (!out) throw InvalidInput("cannot write " + csv_tmp.string());
            csv::write_row(out, kPopulationColumns);
            for (const auto& cell : sweep.cells) {
                if (opt.log_progress)
                    log << "cell " << cell.scheme.to_string() << " n=" << cell.n << " N=" << cell.N << " ("
                        << cell.npops << " populations)\n";
                const auto results = run_study(cell);
                write_population_rows(out, cell, results);
                for (std::size_t t = 0; t < cell.tests.size(); ++t) {
                    std::uint64_t degenerate = 0, trials = 0;
                    for (const auto& r : results) {
                        degenerate += r.tallies[t].degenerate;
                        trials += r.tallies[t].trials;
                    }
                    diagnostics.push_back({{"scheme", cell.scheme.to_string()},
                                           {"null", to_string(cell.null)},
                                           {"n", cell.n},
                                           {"N", cell.N},
                                           {"test", to_string(cell.tests[t].kind)},
                                           {"adjustment", to_string(cell.tests[t].adjustment)},
                                           {"trials", trials},
                                           {"degenerate_count", degenerate}});
                }
            }
            out.flush();
            if (!out) throw InvalidInput("error while writing " + csv_tmp.string());
        }
        fs::rename(csv_tmp, csv_path);

        nlohmann::json manifest = {
            {"status", "success"},
            {"version", kVersion},
            {"started_at", started},
            {"finished_at", detail::timestamp()},
            {"config", sweep.echo},
            {"cells", sweep.cells.size()},
            {"diagnostics", diagnostics},
            {"outputs", {{"populations_csv", csv_path.string()}, {"manifest", manifest_path.string()}}},
        };
        std::ofstream mout(manifest_path, std::ios::binary);
        if (!mout) throw InvalidInput("cannot write " + manifest_path.string());
        mout << manifest.dump(2) << '\n';
        mout.flush();
        if (!mout) throw InvalidInput("error while writing " + manifest_path.string());
        log << "wrote " << csv_path.string() << " and " << manifest_path.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        cleanup();
        err << "simulate: " << e.what() << '\n';
        return 1;
    }
}

struct SummaryRow {
    std::string scheme, null, test, adjustment;
    std::uint64_t n = 0, N = 0;
    double L = 0;
    ConvergenceSummary summary;
};

/// Groups populations.csv rows by (scheme, null, test, adjustment, n, N) in
/// first-appearance order. L defaults to each group's trials per population.
inline std::vector<SummaryRow> summarize_table(const csv::Table& table, std::optional<double> L, double center) {
    const auto c_scheme = table.require("scheme");
    const auto c_null = table.require("null");
    const auto c_n = table.require("n");
    const auto c_N = table.require("N");
    (void)table.require("population_index");
    const auto c_test = table.require("test");
    const auto c_adj = table.require("adjustment");
    const auto c_err = table.require("type1_error");
    const auto c_trials = table.require("trials");

    using Key = std::tuple<std::string, std::string, std::string, std::string, std::string, std::string>;
    std::map<Key, std::size_t> index;
    std::vector<SummaryRow> rows;
    std::vector<std::vector<double>> values;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        Key key{f[c_scheme], f[c_null], f[c_test], f[c_adj], f[c_n], f[c_N]};
        auto [it, inserted] = index.emplace(key, rows.size());
        if (inserted) {
            SummaryRow row{f[c_scheme], f[c_null], f[c_test], f[c_adj],
                           static_cast<std::uint64_t>(table.number(r, c_n)),
                           static_cast<std::uint64_t>(table.number(r, c_N)),
                           L ? *L : table.number(r, c_trials), {}};
            rows.push_back(std::move(row));
            values.emplace_back();
        }
        values[it->second].push_back(table.number(r, c_err));
    }
    if (rows.empty()) throw InvalidInput("results CSV has no data rows");
    for (std::size_t g = 0; g < rows.size(); ++g) {
        try {
            rows[g].summary = summarize_values(values[g], rows[g].L, center);
        } catch (const InvalidInput& e) {
            throw InvalidInput("group (" + rows[g].scheme + ", " + rows[g].test + ", " + rows[g].adjustment +
                               ", n = " + std::to_string(rows[g].n) + ", N = " + std::to_string(rows[g].N) +
                               "): " + e.what());
        }
    }
    return rows;
}

inline void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows) {
    csv::write_row(os, kSummaryColumns);
    for (const auto& r : rows)
        csv::write_row(os, {r.scheme, r.null, r.test, r.adjustment, std::to_string(r.n), std::to_string(r.N),
                            std::to_string(r.summary.populations), csv::format(r.L), csv::format(r.summary.mean),
                            csv::format(r.summary.p2_5), csv::format(r.summary.p97_5), csv::format(r.summary.spread),
                            csv::format(r.summary.within_bounds)});
}

struct SummarizeOptions {
    std::filesystem::path results_csv;
    std::optional<std::filesystem::path> out;  // stdout when absent
    std::optional<double> L;
    double center = 0.05;
};

inline int cmd_summarize(const SummarizeOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        std::ifstream in(opt.results_csv, std::ios::binary);
        if (!in) throw InvalidInput("cannot read " + opt.results_csv.string());
        const auto table = csv::read(in);
        const auto rows = summarize_table(table, opt.L, opt.center);
        if (opt.out) {
            std::ofstream f(*opt.out, std::ios::binary);
            if (!f) throw InvalidInput("cannot write " + opt.out->string());
            write_summary(f, rows);
        } else {
            write_summary(out, rows);
        }
        return 0;
    } catch (const std::exception& e) {
        err << "summarize: " << e.what() << '\n';
        return 1;
    }
}

/// Series keyed by (scheme, null, test, adjustment, N/n); points are n.
inline std::vector<svg::Series> series_from_summary(const csv::Table& table) {
    const auto c_scheme = table.require("scheme");
    const auto c_null = table.require("null");
    const auto c_test = table.require("test");
    const auto c_adj = table.require("adjustment");
    const auto c_n = table.require("n");
    const auto c_N = table.require("N");
    const auto c_mean = table.require("mean");
    const auto c_lo = table.require("p2_5");
    const auto c_hi = table.require("p97_5");

    std::map<std::string, std::size_t> index;
    std::vector<svg::Series> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        const double n = table.number(r, c_n);
        const double N = table.number(r, c_N);
        std::string label = parse_scheme(f[c_scheme]).label() + " " + f[c_test];
        if (f[c_adj] != "none") label += " adj " + f[c_adj];
        if (f[c_null] != "sharp") label += " [" + f[c_null] + "]";
        if (N != n) {
            std::ostringstream ratio;
            ratio << std::setprecision(3) << N / n;
            label += " N/n=" + ratio.str();
        }
        auto [it, inserted] = index.emplace(label, out.size());
        if (inserted) out.push_back({label, {}});
        out[it->second].points.push_back({n, table.number(r, c_mean), table.number(r, c_lo), table.number(r, c_hi)});
    }
    return out;
}

struct PlotOptions {
    std::filesystem::path summary_csv;
    std::filesystem::path out_svg;
    std::optional<double> L;  // defaults to the summary's L column (first row)
    double reference = 0.05;
};

inline int cmd_plot(const PlotOptions& opt, std::ostream& log, std::ostream& err) {
    try {
        std::ifstream in(opt.summary_csv, std::ios::binary);
        if (!in) throw InvalidInput("cannot read " + opt.summary_csv.string());
        const auto table = csv::read(in);
        if (table.rows.empty()) throw InvalidInput("summary CSV has no data rows");
        const double L = opt.L ? *opt.L : table.number(0, table.require("L"));
        const auto series = series_from_summary(table);
        std::ostringstream buffer;
        svg::write_chart(buffer, series, L, opt.reference);
        std::ofstream out(opt.out_svg, std::ios::binary);
        if (!out) throw InvalidInput("cannot write " + opt.out_svg.string());
        out << buffer.str();
        log << "wrote " << opt.out_svg.string() << " (" << series.size() << " series)\n";
        return 0;
    } catch (const std::exception& e) {
        err << "plot: " << e.what() << '\n';
        return 1;
    }
}

struct EnumerateOptions {
    std::string scheme;
    std::optional<std::size_t> n;  // defaults to the number of outcomes
    std::filesystem::path y_csv;
    double alpha = 0.05;
    std::uint64_t cap = kDefaultEnumerationCap;
};

/// One outcome per line; a non-numeric first line is taken as a header.
inline std::vector<double> read_outcomes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read " + path.string());
    std::vector<double> y;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto field = line.substr(0, line.find(','));
        double v = 0;
        const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
        if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
            if (lineno == 1) continue;
            throw InvalidInput(path.string() + " line " + std::to_string(lineno) + ": not a number: '" + field + "'");
        }
        y.push_back(v);
    }
    return y;
}

inline int cmd_enumerate(const EnumerateOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const auto scheme = parse_scheme(opt.scheme);
        const auto y = read_outcomes(opt.y_csv);
        const std::size_t n = opt.n ? *opt.n : y.size();
        if (y.size() != n)
            throw InvalidInput("expected " + std::to_string(n) + " outcomes, found " + std::to_string(y.size()));
        if (!(opt.alpha > 0 && opt.alpha <= 1)) throw InvalidInput("alpha must lie in (0, 1]");
        RbiOptions rbi;
        rbi.enumeration_cap = opt.cap;
        const auto table = exact_rbi_pvalues(y, scheme, rbi);

        std::map<double, double> distribution;
        double rbi_reject = 0, anova_reject = 0, undefined = 0;
        for (std::size_t i = 0; i < table.sequences.size(); ++i) {
            const double w = table.sequences[i].probability;
            const double p = table.p_values[i];
            if (std::isnan(p)) {
                undefined += w;
                continue;
            }
            distribution[p] += w;
            if (p <= opt.alpha) rbi_reject += w;
            try {
                if (anova_test(y, table.sequences[i].sequence.assignments).p_value < opt.alpha) anova_reject += w;
            } catch (const DegenerateArm&) {
            } catch (const UnidentifiableModel&) {
            }
        }
        out << "scheme: " << scheme.to_string() << '\n';
        out << "n: " << n << '\n';
        out << "sequences: " << table.sequences.size() << '\n';
        if (undefined > 0) out << "probability of an empty arm: " << csv::format(undefined) << '\n';
        out << "rbi p-value distribution (p_value probability):\n";
        for (const auto& [p, w] : distribution) out << "  " << csv::format(p) << ' ' << csv::format(w) << '\n';
        out << "rejection proportion at alpha = " << csv::format(opt.alpha) << ":\n";
        out << "  rbi: " << csv::format(rbi_reject) << '\n';
        out << "  anova: " << csv::format(anova_reject) << '\n';
        return 0;
    } catch (const EnumerationTooLarge& e) {
        err << "enumerate: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "enumerate: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace randtrial::cli
