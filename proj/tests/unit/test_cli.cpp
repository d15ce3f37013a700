#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "randtrial/cli/commands.hpp"

using namespace randtrial;
using namespace randtrial::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("randtrial_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name, std::ios::binary) << text;
        return path / name;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(RANDTRIAL_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string text;
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) text += buf;
    const int status = ::pclose(pipe);
    if (output) *output = text;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Minimal XML well-formedness check: balanced tags, quoted attributes, no raw
// '<' or stray '&' in text. Returns the element names encountered.
std::vector<std::string> check_xml(const std::string& doc) {
    std::vector<std::string> stack, seen;
    std::size_t i = 0;
    bool root_closed = false;
    auto fail = [&](const std::string& why) { FAIL("malformed XML at offset " << i << ": " << why); };
    while (i < doc.size()) {
        if (doc[i] != '<') {
            if (doc[i] == '&') {
                const auto semi = doc.find(';', i);
                const auto ent = doc.substr(i, semi == std::string::npos ? 0 : semi - i + 1);
                if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;")
                    fail("bad entity");
            }
            if (root_closed && !std::isspace(static_cast<unsigned char>(doc[i]))) fail("content after root");
            ++i;
            continue;
        }
        if (doc.compare(i, 5, "<?xml") == 0) {
            const auto end = doc.find("?>", i);
            if (end == std::string::npos) fail("unterminated declaration");
            i = end + 2;
            continue;
        }
        const auto end = doc.find('>', i);
        if (end == std::string::npos) fail("unterminated tag");
        std::string tag = doc.substr(i + 1, end - i - 1);
        i = end + 1;
        if (!tag.empty() && tag[0] == '/') {
            const auto name = tag.substr(1);
            if (stack.empty() || stack.back() != name) fail("mismatched close tag " + name);
            stack.pop_back();
            if (stack.empty()) root_closed = true;
            continue;
        }
        const bool self_closing = !tag.empty() && tag.back() == '/';
        if (self_closing) tag.pop_back();
        static const std::regex name_re(R"(^([A-Za-z_][\w.-]*))");
        std::smatch m;
        if (!std::regex_search(tag, m, name_re)) fail("bad tag name");
        const std::string name = m[1];
        std::string rest = tag.substr(name.size());
        static const std::regex attr_re(R"(^\s+[A-Za-z_:][\w:.-]*="[^"<]*")");
        while (std::regex_search(rest, m, attr_re)) rest = m.suffix();
        if (rest.find_first_not_of(" \t\n") != std::string::npos) fail("bad attributes in <" + name + ">");
        if (root_closed) fail("second root element");
        seen.push_back(name);
        if (!self_closing) stack.push_back(name);
        else if (stack.empty()) root_closed = true;
    }
    if (!stack.empty()) FAIL("unclosed element " << stack.back());
    return seen;
}

std::vector<std::pair<double, double>> parse_points(const std::string& pts) {
    std::vector<std::pair<double, double>> out;
    std::istringstream in(pts);
    std::string pair;
    while (in >> pair) {
        const auto comma = pair.find(',');
        out.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    return out;
}

const std::string kMinimal = R"({
  "population": {"null": "sharp"},
  "sample": {"n": 16},
  "scheme": "complete",
  "tests": ["anova"],
  "monte_carlo": {"nrand": 100, "npops": 4},
  "seed": 7,
  "threads": 1
})";

}  // namespace

TEST_CASE("config parsing", "[cli][config]") {
    SECTION("minimal") {
        const auto sweep = parse_config_text(kMinimal);
        REQUIRE(sweep.cells.size() == 1);
        const auto& c = sweep.cells[0];
        CHECK(c.n == 16);
        CHECK(c.N == 16);
        CHECK(c.nrand == 100);
        CHECK(c.npops == 4);
        CHECK(c.master_seed == 7);
        CHECK(c.scheme == SchemeSpec::complete());
    }
    SECTION("sweeps multiply out and ancova follows compatible schemes") {
        const auto sweep = parse_config_text(R"({
          "population": {"null": "normal_zero", "N_over_n": [1.1, 2]},
          "sample": {"n": [16, 32]},
          "scheme": ["complete", {"kind": "fixed_block", "block_size": [2, 4]}, "big_stick:2"],
          "tests": ["anova", {"test": "ancova", "adjustment": "block_indicators"},
                    {"test": "ancova", "adjustment": "bsd_at_threshold"}],
          "monte_carlo": {"nrand": 100, "npops": 2, "nsamp": 2},
          "threads": 1
        })");
        CHECK(sweep.cells.size() == 2 * 2 * 4);
        for (const auto& c : sweep.cells) {
            CHECK(c.null == NullKind::NormalZero);
            if (c.scheme.kind == SchemeKind::Complete) CHECK(c.tests.size() == 1);
            else CHECK(c.tests.size() == 2);
        }
        CHECK(sweep.cells[0].N == 18);  // n = 16, N/n = 1.1 -> 17.6 rounds to 18
        CHECK(sweep.cells[4].N == 32);
    }
    SECTION("overrides") {
        Overrides o;
        o.seed = 99;
        o.threads = 3;
        const auto sweep = parse_config_text(kMinimal, o);
        CHECK(sweep.cells[0].master_seed == 99);
        CHECK(sweep.cells[0].thread_count == 3);
        CHECK(sweep.echo["seed"] == 99);
        ::setenv("RANDTRIAL_THREADS", "5", 1);
        CHECK(parse_config_text(kMinimal).cells[0].thread_count == 5);
        ::setenv("RANDTRIAL_THREADS", "zero", 1);
        CHECK_THROWS_AS(parse_config_text(kMinimal), InvalidConfiguration);
        ::unsetenv("RANDTRIAL_THREADS");
    }
    SECTION("errors name the field") {
        auto expect_error = [](const std::string& text, const std::string& fragment) {
            try {
                parse_config_text(text);
                FAIL("expected an error mentioning " << fragment);
            } catch (const InvalidConfiguration& e) {
                CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(fragment));
            }
        };
        expect_error(R"({"sample": {"n": 16}, "scheme": "complete", "tests": ["anova"], "colour": 1})", "colour");
        expect_error(R"({"sample": {"n": 16}, "scheme": "complete", "tests": ["anovas"]})", "tests[0]");
        expect_error(R"({"sample": {"n": 15}, "scheme": "complete", "tests": ["anova"]})", "even sample size");
        expect_error(R"({"sample": {"n": 16}, "scheme": "complete",
                         "tests": [{"test": "ancova", "adjustment": "block_indicators"}]})", "no test applies");
        expect_error(R"({"sample": {"n": 16}, "scheme": "complete", "tests": ["anova"],
                         "monte_carlo": {"nsamp": 3}})", "nsamp");
        expect_error("{\n  \"sample\": {\"n\": 16},\n  \"scheme\": complete\n}", "line 3");
        expect_error(R"({"scheme": "complete", "tests": ["anova"]})", "sample");
    }
}

TEST_CASE("simulate writes populations.csv and manifest.json", "[cli][simulate]") {
    TempDir dir;
    const auto config = dir.write("config.json", kMinimal);
    std::ostringstream log, err;
    const int rc = cmd_simulate({config, dir.path / "out", {}, false}, log, err);
    REQUIRE(rc == 0);
    CHECK(err.str().empty());
    const auto manifest = nlohmann::json::parse(slurp(dir.path / "out" / "manifest.json"));
    CHECK(manifest["status"] == "success");
    CHECK(manifest["version"] == kVersion);
    for (const auto& [k, v] : manifest["outputs"].items()) CHECK(fs::exists(v.get<std::string>()));
    std::ifstream in(dir.path / "out" / "populations.csv");
    const auto table = csv::read(in);
    CHECK(table.header == kPopulationColumns);
    CHECK(table.rows.size() == 4);
    CHECK_FALSE(fs::exists(dir.path / "out" / "populations.csv.partial"));
}

TEST_CASE("simulate failure leaves nothing behind", "[cli][simulate]") {
    TempDir dir;
    const auto config = dir.write("bad.json", R"({"sample": {"n": 15}, "scheme": "complete", "tests": ["anova"]})");
    std::ostringstream log, err;
    const int rc = cmd_simulate({config, dir.path / "out", {}, false}, log, err);
    CHECK(rc != 0);
    CHECK_THAT(err.str(), Catch::Matchers::ContainsSubstring("even sample size"));
    CHECK_FALSE(fs::exists(dir.path / "out" / "populations.csv"));
    CHECK_FALSE(fs::exists(dir.path / "out" / "manifest.json"));
}

TEST_CASE("sweep over n puts every block in one CSV and summarizes cleanly", "[cli][simulate][summarize]") {
    TempDir dir;
    const auto config = dir.write("sweep.json", R"({
      "sample": {"n": [16, 24, 32]},
      "scheme": "complete",
      "tests": ["anova", "neyman_wald"],
      "monte_carlo": {"nrand": 100, "npops": 5},
      "seed": 3, "threads": 2
    })");
    std::ostringstream log, err;
    REQUIRE(cmd_simulate({config, dir.path, {}, false}, log, err) == 0);
    std::ifstream in(dir.path / "populations.csv");
    const auto table = csv::read(in);
    CHECK(table.rows.size() == 3 * 5 * 2);
    std::set<std::string> ns;
    for (const auto& r : table.rows) ns.insert(r[table.require("n")]);
    CHECK(ns == std::set<std::string>{"16", "24", "32"});

    std::ostringstream out;
    REQUIRE(cmd_summarize({dir.path / "populations.csv", std::nullopt, std::nullopt, 0.05}, out, err) == 0);
    std::istringstream sin(out.str());
    const auto summary = csv::read(sin);
    CHECK(summary.header == kSummaryColumns);
    CHECK(summary.rows.size() == 6);
    CHECK(summary.number(0, summary.require("L")) == 100);
}

TEST_CASE("summarize errors and synthetic input", "[cli][summarize]") {
    TempDir dir;
    std::ostringstream out, err;
    const std::string header = "scheme,null,n,N,population_index,test,adjustment,type1_error,rejections,trials,degenerate_count\n";
    SECTION("one population is not enough") {
        const auto p = dir.write("one.csv", header + "complete,sharp,16,16,0,anova,none,0.05,5,100,0\n");
        CHECK(cmd_summarize({p, std::nullopt, std::nullopt, 0.05}, out, err) != 0);
        CHECK_THAT(err.str(), Catch::Matchers::ContainsSubstring("at least 2"));
    }
    SECTION("missing column is named") {
        const auto p = dir.write("cols.csv", "scheme,null,n,N,population_index,test,adjustment,rejections,trials\n");
        CHECK(cmd_summarize({p, std::nullopt, std::nullopt, 0.05}, out, err) != 0);
        CHECK_THAT(err.str(), Catch::Matchers::ContainsSubstring("'type1_error'"));
    }
    SECTION("all at nominal gives zero spread") {
        std::string body = header;
        for (int i = 0; i < 5; ++i)
            body += "complete,sharp,16,16," + std::to_string(i) + ",anova,none,0.05,50,1000,0\n";
        const auto p = dir.write("flat.csv", body);
        REQUIRE(cmd_summarize({p, dir.path / "s.csv", std::nullopt, 0.05}, out, err) == 0);
        std::ifstream in(dir.path / "s.csv");
        const auto s = csv::read(in);
        CHECK(s.number(0, s.require("spread")) == 0.0);
        CHECK(s.number(0, s.require("within_bounds_proportion")) == 1.0);
        CHECK(s.number(0, s.require("populations")) == 5);
    }
}

TEST_CASE("desk-scale simple n = 32 stays mostly within bounds", "[cli][summarize][slow]") {
    TempDir dir;
    const auto config = dir.write("sr32.json", R"({
      "sample": {"n": 32}, "scheme": "simple", "tests": ["anova"],
      "monte_carlo": {"nrand": 2000, "npops": 200}, "seed": 11
    })");
    std::ostringstream log, err, out;
    REQUIRE(cmd_simulate({config, dir.path, {}, false}, log, err) == 0);
    REQUIRE(cmd_summarize({dir.path / "populations.csv", std::nullopt, std::nullopt, 0.05}, out, err) == 0);
    std::istringstream sin(out.str());
    const auto s = csv::read(sin);
    CHECK(s.number(0, s.require("within_bounds_proportion")) >= 0.90);
}

TEST_CASE("plot draws one series per scheme with a dashed reference", "[cli][plot]") {
    TempDir dir;
    std::string body;
    for (const auto& h : kSummaryColumns) body += (body.empty() ? "" : ",") + h;
    body += "\n";
    struct Row {
        std::string scheme;
        int n;
        double mean, lo, hi;
    };
    std::vector<Row> rows;
    for (int k = 0; k < 5; ++k) {
        const int n = 16 << k;
        rows.push_back({"complete", n, 0.05, 0.04 + 0.001 * k, 0.06 - 0.001 * k});
        rows.push_back({"fixed_block:2", n, 0.049, 0.02 - 0.003 * k, 0.08 + 0.004 * k});
    }
    for (const auto& r : rows) {
        std::ostringstream line;
        line << r.scheme << ",sharp,anova,none," << r.n << ',' << r.n << ",100,2000," << r.mean << ',' << r.lo << ','
             << r.hi << ',' << r.hi - r.lo << ",0.5\n";
        body += line.str();
    }
    const auto summary = dir.write("summary.csv", body);
    std::ostringstream log, err;
    REQUIRE(cmd_plot({summary, dir.path / "chart.svg", std::nullopt, 0.05}, log, err) == 0);
    const std::string svgtext = slurp(dir.path / "chart.svg");
    const auto elements = check_xml(svgtext);
    CHECK(elements.front() == "svg");

    const std::regex poly_re(R"re(<polyline class="mean-line"[^>]*points="([^"]*)")re");
    const std::regex band_re(R"re(<polygon class="pi-band"[^>]*points="([^"]*)")re");
    const std::regex dash_re(R"re(<line class="reference"[^>]*stroke-dasharray)re");
    const auto count = [&](const std::regex& re) {
        return std::distance(std::sregex_iterator(svgtext.begin(), svgtext.end(), re), std::sregex_iterator());
    };
    CHECK(count(poly_re) == 2);
    CHECK(count(band_re) == 2);
    CHECK(count(dash_re) == 1);
    CHECK(count(std::regex(R"(class="mc-band")")) == 1);

    // Map band vertices back through the axis transform and compare with the CSV.
    std::vector<svg::Series> series = {{"CR anova", {}}, {"FB2 anova", {}}};
    for (const auto& r : rows) series[r.scheme == "complete" ? 0 : 1].points.push_back({double(r.n), r.mean, r.lo, r.hi});
    const auto axes = svg::fit_axes(series, 0.05, monte_carlo_half_width(2000));
    std::size_t s = 0;
    for (auto it = std::sregex_iterator(svgtext.begin(), svgtext.end(), band_re); it != std::sregex_iterator(); ++it, ++s) {
        const auto pts = parse_points((*it)[1]);
        REQUIRE(pts.size() == 10);
        for (std::size_t k = 0; k < 5; ++k) {
            const auto& expect = series[s].points[k];
            const auto& upper = pts[k];
            const auto& lower = pts[9 - k];
            CHECK(std::fabs(upper.first - axes.px(expect.n)) < 1e-3);
            CHECK(std::fabs(axes.value_at(upper.second) - expect.p97_5) < 1e-6);
            CHECK(std::fabs(axes.value_at(lower.second) - expect.p2_5) < 1e-6);
        }
    }
}

TEST_CASE("plot rejects an empty summary", "[cli][plot]") {
    TempDir dir;
    std::string header;
    for (const auto& h : kSummaryColumns) header += (header.empty() ? "" : ",") + h;
    const auto p = dir.write("empty.csv", header + "\n");
    std::ostringstream log, err;
    CHECK(cmd_plot({p, dir.path / "x.svg", std::nullopt, 0.05}, log, err) != 0);
    CHECK_FALSE(fs::exists(dir.path / "x.svg"));
}

TEST_CASE("enumerate reports the size of the reference set", "[cli][enumerate]") {
    TempDir dir;
    const auto y4 = dir.write("y4.csv", "y\n4\n3\n2\n1\n");
    const auto y3 = dir.write("y3.csv", "1.5\n-0.5\n2\n");
    std::ostringstream out, err;
    auto run = [&](const std::string& scheme, const fs::path& y) {
        out.str("");
        return cmd_enumerate({scheme, std::nullopt, y, 0.05, kDefaultEnumerationCap}, out, err);
    };
    REQUIRE(run("complete", y4) == 0);
    CHECK_THAT(out.str(), Catch::Matchers::ContainsSubstring("sequences: 6\n"));
    // p-values 1/3, 2/3, 1, each carried by two sequences
        CHECK(std::regex_search(out.str(), std::regex(R"(\n  0\.333333333333333\d* 0\.333333333333333\d*\n)")));
        CHECK_THAT(out.str(), Catch::Matchers::ContainsSubstring("\n  1 0.3333333333333333\n"));
    REQUIRE(run("big_stick:1", y4) == 0);
    CHECK_THAT(out.str(), Catch::Matchers::ContainsSubstring("sequences: 4\n"));
    REQUIRE(run("simple", y3) == 0);
    CHECK_THAT(out.str(), Catch::Matchers::ContainsSubstring("sequences: 8\n"));

    std::string many;
    for (int i = 0; i < 22; ++i) many += std::to_string(i) + "\n";
    const auto y22 = dir.write("y22.csv", many);
    CHECK(run("simple", y22) == 2);
    CHECK_THAT(err.str(), Catch::Matchers::ContainsSubstring("Monte Carlo"));
    CHECK(run("complete", y3) != 0);
}

TEST_CASE("the binary runs end to end", "[cli][binary]") {
    TempDir dir;
    std::string output;
    CHECK(run_cli("--version", &output) == 0);
    CHECK_THAT(output, Catch::Matchers::ContainsSubstring(kVersion));

    const auto config = dir.write("config.json", kMinimal);
    const auto out = dir.path / "run";
    REQUIRE(run_cli("simulate --config " + config.string() + " --out " + out.string() + " --seed 5", &output) == 0);
    CHECK(fs::exists(out / "populations.csv"));
    CHECK(nlohmann::json::parse(slurp(out / "manifest.json"))["config"]["seed"] == 5);
    REQUIRE(run_cli("summarize --in " + (out / "populations.csv").string() + " --L 100 --out " +
                        (out / "summary.csv").string(),
                    &output) == 0);
    CHECK(run_cli("plot --in " + (out / "summary.csv").string() + " --out " + (out / "chart.svg").string(), &output) ==
          0);
    check_xml(slurp(out / "chart.svg"));

    const auto bad = dir.write("bad.json", R"({"sample": {"n": 15}, "scheme": "complete", "tests": ["anova"]})");
    CHECK(run_cli("simulate --config " + bad.string() + " --out " + (dir.path / "bad").string(), &output) != 0);
    CHECK_THAT(output, Catch::Matchers::ContainsSubstring("even sample size"));

    const auto y = dir.write("y.csv", "4\n3\n2\n1\n");
    REQUIRE(run_cli("enumerate --scheme complete --y " + y.string(), &output) == 0);
    CHECK_THAT(output, Catch::Matchers::ContainsSubstring("sequences: 6"));
    CHECK(run_cli("frobnicate", &output) != 0);
}

TEST_CASE("thread count does not change the CSV", "[cli][determinism]") {
    TempDir dir;
    const auto config = dir.write("det.json", R"({
      "population": {"N_over_n": 1.5},
      "sample": {"n": [16, 20]},
      "scheme": ["complete", "big_stick:2"],
      "tests": ["anova", "rbi", {"test": "ancova", "adjustment": "bsd_imbalance_level"}],
      "monte_carlo": {"nrand": 100, "npops": 9, "nsamp": 2, "rbi_draws": 30},
      "seed": 2026
    })");
    std::ostringstream log, err;
    Overrides one, many;
    one.threads = 1;
    many.threads = 4;
    REQUIRE(cmd_simulate({config, dir.path / "a", one, false}, log, err) == 0);
    REQUIRE(cmd_simulate({config, dir.path / "b", many, false}, log, err) == 0);
    CHECK(slurp(dir.path / "a" / "populations.csv") == slurp(dir.path / "b" / "populations.csv"));
}
