#include <iostream>

#include "CLI11.hpp"
#include "windtl/cli.hpp"

using namespace windtl;

int main(int argc, char** argv) {
    CLI::App app{"Transfer-learning wind power forecasting over a farm's lifecycle"};
    app.require_subcommand(1);

    cli::GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic farm pool as CSV files plus a manifest");
    gen_cmd->add_option("--pool", gen.pool, "Pool as terrain:count,... (e.g. offshore:3,forest:2)")->required();
    gen_cmd->add_option("--months", gen.months, "Months of hourly data (720 h each)")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    gen_cmd->add_option("--nwp-models", gen.nwp_models, "Comma-separated NWP model ids")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    cli::RunOptions run;
    std::uint64_t run_seed = 0;
    std::size_t run_months = 0;
    auto* run_cmd = app.add_subcommand("run", "Run a lifecycle scenario; writes report.json and metrics.csv");
    run_cmd->add_option("--scenario", run.scenario, "Scenario JSON (default: the bundled default scenario)");
    auto* seed_opt = run_cmd->add_option("--seed", run_seed, "Override the scenario seed");
    auto* months_opt = run_cmd->add_option("--months", run_months, "Override the number of months");
    run_cmd->add_option("--methods", run.methods, "Comma-separated methods to evaluate");
    run_cmd->add_option("--out", run.out, "Output directory")->required();

    cli::EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Summarize a report: per-method median and IQR of RMSE and skill");
    eval_cmd->add_option("report", eval.report, "Path to report.json")->required();
    eval_cmd->add_option("--format", eval.format, "json, csv or table")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitUsage;
    }

    if (*gen_cmd) return cli::cmd_gen(gen, std::cout, std::cerr);
    if (*run_cmd) {
        if (*seed_opt) run.seed = run_seed;
        if (*months_opt) run.months = run_months;
        return cli::cmd_run(run, std::cout, std::cerr);
    }
    return cli::cmd_eval(eval, std::cout, std::cerr);
}
