// randtrial - restricted randomization Type I error studies.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "randtrial/cli/commands.hpp"

int main(int argc, char** argv) {
    using namespace randtrial::cli;
    CLI::App app{"Restricted randomization, randomization-based inference and Type I error convergence studies"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    SimulateOptions sim;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    auto* simulate = app.add_subcommand("simulate", "Run the study described by a JSON config");
    simulate->add_option("--config", sim.config_path, "Study configuration (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", sim.out_dir, "Output directory for populations.csv and manifest.json")->required();
    simulate->add_option("--seed", seed, "Master seed (overrides the config)");
    simulate->add_option("--threads", threads, "Worker threads (overrides RANDTRIAL_THREADS and the config)")
        ->check(CLI::PositiveNumber);
    simulate->add_flag("--progress", sim.log_progress, "Log one line per sweep cell");

    SummarizeOptions sum;
    std::optional<std::string> sum_out;
    auto* summarize = app.add_subcommand("summarize", "Convergence summary of a populations.csv");
    summarize->add_option("--in", sum.results_csv, "populations.csv from simulate")->required();
    summarize->add_option("--L", sum.L, "Sequences per population for the Monte Carlo bounds (default: trials column)");
    summarize->add_option("--center", sum.center, "Nominal Type I error the bounds are centred on")->capture_default_str();
    summarize->add_option("--out", sum_out, "Output CSV (default: stdout)");

    PlotOptions plot;
    auto* plotcmd = app.add_subcommand("plot", "SVG chart of a summary CSV");
    plotcmd->add_option("--in", plot.summary_csv, "summary.csv from summarize")->required();
    plotcmd->add_option("--out", plot.out_svg, "Output SVG")->required();
    plotcmd->add_option("--L", plot.L, "L for the grey Monte Carlo band (default: summary L column)");

    EnumerateOptions en;
    auto* enumerate = app.add_subcommand("enumerate", "Exact randomization distribution for small n");
    enumerate->add_option("--scheme", en.scheme, "simple | complete | fixed_block:<b> | big_stick:<mti>")->required();
    enumerate->add_option("--n", en.n, "Sample size (default: number of outcomes)");
    enumerate->add_option("--y", en.y_csv, "Outcomes, one per line")->required();
    enumerate->add_option("--alpha", en.alpha, "Significance level")->capture_default_str();
    enumerate->add_option("--cap", en.cap, "Maximum number of sequences to enumerate")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (*simulate) {
        sim.overrides.seed = seed;
        sim.overrides.threads = threads;
        return cmd_simulate(sim, std::cout, std::cerr);
    }
    if (*summarize) {
        if (sum_out) sum.out = *sum_out;
        return cmd_summarize(sum, std::cout, std::cerr);
    }
    if (*plotcmd) return cmd_plot(plot, std::cout, std::cerr);
    if (*enumerate) return cmd_enumerate(en, std::cout, std::cerr);
    return 1;
}
