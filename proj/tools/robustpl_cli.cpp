// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
//   robustpl sweep --config cfg.json --out records.csv [--threads N] [--mc-certify S] [--timing]
//   robustpl aggregate --in records.csv --out summary.csv [--common-subset]

#include "robustpl/bench.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

namespace
{

int default_threads()
{
    if (const char *env = std::getenv("ROBUSTPL_THREADS"))
    {
        try
        {
            const int n = std::stoi(env);
            if (n > 0)
                return n;
        }
        catch (const std::exception &)
        {
        }
        std::cerr << "warning: ignoring invalid ROBUSTPL_THREADS='" << env << "'\n";
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Outage-constrained robust power loading: experiment sweeps and aggregation"};
    app.require_subcommand(1);

    std::string config_path, out_path, format = "csv";
    int threads = default_threads();
    long mc_samples = -1;
    bool timing = false;
    auto *sweep = app.add_subcommand("sweep", "Run every (error level, trial, gamma, method) combination of a config");
    sweep->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out_path, "Per-trial record CSV")->required();
    sweep->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv"}));
    sweep->add_option("--threads", threads, "Worker threads (default: $ROBUSTPL_THREADS or hardware concurrency)")
        ->check(CLI::PositiveNumber);
    sweep->add_option("--mc-certify", mc_samples, "Monte Carlo samples per user for certification (overrides config)")
        ->check(CLI::NonNegativeNumber);
    sweep->add_flag("--timing", timing, "Record wall-clock runtime_ms (output is then not reproducible byte for byte)");

    std::string in_path, summary_path;
    bool common_subset = false;
    auto *agg = app.add_subcommand("aggregate", "Summarise a record CSV per (method, gamma, sigma_e2)");
    agg->add_option("--in", in_path, "Record CSV from 'sweep'")->required()->check(CLI::ExistingFile);
    agg->add_option("--out", summary_path, "Summary CSV")->required();
    agg->add_flag("--common-subset", common_subset, "Average power over trials where all methods succeeded at all gamma");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*sweep)
        {
            const auto cfg = robustpl::load_config(config_path);
            robustpl::SweepOptions opts;
            opts.threads = threads;
            opts.mc_certify_samples = mc_samples;
            opts.timing = timing;
            const auto records = robustpl::run_sweep(cfg, opts);
            robustpl::export_records(out_path, records);
            long successes = 0;
            for (const auto &r : records)
                successes += r.success ? 1 : 0;
            std::cerr << "wrote " << records.size() << " records (" << successes << " successful) to " << out_path << '\n';
        }
        else if (*agg)
        {
            const auto records = robustpl::import_records(in_path);
            const auto rows = robustpl::aggregate(records, common_subset);
            robustpl::export_summary(summary_path, rows);
            std::cerr << "wrote " << rows.size() << " summary rows to " << summary_path << '\n';
        }
    }
    catch (const robustpl::Error &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
