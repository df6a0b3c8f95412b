// Command-line front end for the MGD training simulator.
//
// Subcommands:
//   run            config-driven seed ensemble; per-seed traces + summary.csv
//   sweep          repeat the ensemble along one axis; sweep.csv
//   angle          gradient-angle protocol (accumulate-only, log-spaced checkpoints)
//   estimate-time  hardware wall-clock projection
//
// Exit codes: 0 success, 2 config error, 3 numerical abort.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgd/experiment.hpp"

namespace {

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string cell =
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!cell.empty()) values.push_back(mgd::parse_number(cell));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (values.empty()) throw mgd::ConfigError("--values: expected a comma-separated list");
    return values;
}

std::vector<std::int64_t> parse_checkpoints(const std::string& csv) {
    std::vector<std::int64_t> steps;
    for (double v : parse_values(csv)) steps.push_back(static_cast<std::int64_t>(v));
    return steps;
}

void apply_overrides(mgd::ExperimentConfig& config, const std::string& out, std::int64_t seed,
                     bool seed_set, std::int64_t stride) {
    if (!out.empty()) config.output_dir = out;
    if (seed_set) config.seeds = {static_cast<std::uint64_t>(seed)};
    if (stride > 0) config.record_stride = stride;
}

void print_summary(const mgd::EnsembleSummary& summary) {
    std::printf("seeds:              %zu\n", summary.per_seed.size());
    std::printf("converged fraction: %s\n", mgd::format_number(summary.converged_fraction).c_str());
    std::printf("time to threshold:  median %s  (q1 %s, q3 %s)\n",
                mgd::format_number(summary.median_time).c_str(),
                mgd::format_number(summary.q1_time).c_str(),
                mgd::format_number(summary.q3_time).c_str());
    std::printf("final accuracy:     median %s\n",
                mgd::format_number(summary.median_final_accuracy).c_str());
    std::printf("final cost:         median %s\n",
                mgd::format_number(summary.median_final_cost).c_str());
}

bool all_seeds_aborted(const mgd::EnsembleSummary& summary) {
    for (const auto& r : summary.per_seed) {
        if (std::isfinite(r.final_cost)) return false;
    }
    return !summary.per_seed.empty();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mgd: multiplexed-gradient-descent training simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, values_csv, axis_name = "eta";
    std::string checkpoints_csv = "100,1000,10000";
    std::int64_t seed = 0, stride = 0;
    bool seed_set = false;
    double steps = 0.0, tau_p = 0.0, overhead = 2.0;

    auto* run = app.add_subcommand("run", "run the configured seed ensemble");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory override");
    run->add_option("--seed", seed, "run a single seed instead of the configured list")
        ->each([&](const std::string&) { seed_set = true; });
    run->add_option("--stride", stride, "trace recording stride override");

    auto* sweep = app.add_subcommand("sweep", "repeat the ensemble along one axis");
    sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
    sweep->add_option("--axis", axis_name, "eta|tau_theta|sigma_c|sigma_theta|sigma_a");
    sweep->add_option("--values", values_csv, "comma-separated axis values")->required();
    sweep->add_option("--out", out_dir, "output directory override");

    auto* angle = app.add_subcommand("angle", "gradient-angle convergence protocol");
    angle->add_option("--config", config_path, "experiment config (JSON)")->required();
    angle->add_option("--checkpoints", checkpoints_csv, "comma-separated step checkpoints");
    angle->add_option("--out", out_dir, "output directory override");

    auto* estimate = app.add_subcommand("estimate-time", "hardware training-time projection");
    estimate->add_option("--steps", steps, "training steps")->required();
    estimate->add_option("--tau-p", tau_p, "perturbation time in seconds")->required();
    estimate->add_option("--overhead", overhead, "inferences per step (default 2)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (estimate->parsed()) {
            std::printf("%s s\n", mgd::format_number(mgd::estimate_time(steps, tau_p, overhead)).c_str());
            return 0;
        }
        auto config = mgd::ExperimentConfig::from_json_file(config_path);
        apply_overrides(config, out_dir, seed, seed_set, stride);
        if (run->parsed()) {
            const auto summary = mgd::run_experiment(config, true);
            print_summary(summary);
            std::printf("wrote %s/summary.csv\n", config.output_dir.c_str());
            if (all_seeds_aborted(summary)) {
                std::fprintf(stderr, "error: every seed aborted with non-finite values\n");
                return 3;
            }
        } else if (sweep->parsed()) {
            const auto result = mgd::run_sweep(config, mgd::sweep_axis_from_name(axis_name),
                                               parse_values(values_csv), true);
            for (const auto& point : result.points) {
                std::printf("%s=%s  converged %s  median time %s\n", axis_name.c_str(),
                            mgd::format_number(point.value).c_str(),
                            mgd::format_number(point.summary.converged_fraction).c_str(),
                            mgd::format_number(point.summary.median_time).c_str());
            }
            if (result.axis == mgd::SweepAxis::Eta) {
                std::printf("max eta (>=50%% convergence): %s\n",
                            mgd::format_number(result.max_eta).c_str());
            }
            std::printf("wrote %s/sweep.csv\n", config.output_dir.c_str());
        } else if (angle->parsed()) {
            const auto result =
                mgd::run_angle_protocol(config, parse_checkpoints(checkpoints_csv), true);
            std::printf("step,q1,median,q3\n");
            for (std::size_t c = 0; c < result.checkpoints.size(); ++c) {
                std::printf("%lld,%s,%s,%s\n",
                            static_cast<long long>(result.checkpoints[c]),
                            mgd::format_number(result.q1[c]).c_str(),
                            mgd::format_number(result.median[c]).c_str(),
                            mgd::format_number(result.q3[c]).c_str());
            }
            std::printf("wrote %s/angle_summary.csv\n", config.output_dir.c_str());
        }
        return 0;
    } catch (const mgd::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const mgd::TrainingDiverged& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
