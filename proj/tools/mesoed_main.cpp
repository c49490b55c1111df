#include "mesoed/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"mesoed: stochastic device networks with retarded coupling"};
    app.require_subcommand(1);

    std::string scenario, out_dir = "out";
    std::uint64_t reps = 0, seed = 0;
    int threads = 0;
    bool reps_set = false, seed_set = false;

    auto* run = app.add_subcommand("run", "run a scenario file");
    run->add_option("scenario", scenario, "scenario JSON file")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--reps", reps, "override replication count")
        ->each([&](const std::string&) { reps_set = true; });
    run->add_option("--seed", seed, "override RNG seed")
        ->each([&](const std::string&) { seed_set = true; });
    run->add_option("--threads", threads, "worker threads (default: all cores)");

    auto* validate = app.add_subcommand("validate", "validate a scenario file");
    validate->add_option("scenario", scenario, "scenario JSON file")->required();

    app.add_subcommand("list-experiments", "print the supported experiment kinds");

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand("list-experiments")) {
        for (const auto& name : mesoed::list_experiments()) std::cout << name << "\n";
        return 0;
    }
    if (app.got_subcommand("validate"))
        return mesoed::validate_scenario(scenario, std::cout);

    mesoed::RunOptions options;
    if (reps_set) options.reps_override = reps;
    if (seed_set) options.seed_override = seed;
    if (threads > 0) {
        options.threads = threads;
    } else if (const char* env = std::getenv("MESOED_THREADS")) {
        options.threads = std::atoi(env);
    }
    return mesoed::run_scenario(scenario, out_dir, options, std::cout);
}
