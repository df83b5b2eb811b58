// gjekit <command> --config <path> [--out <dir>] [--seed N] [--threads N]
// Exit codes: 0 all checks pass, 2 a check failed, 1 configuration or runtime error.

#include "gjekit/cli.hpp"
#include "gjekit/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"gjekit: generated Jacobian equation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config, out;
    std::uint64_t seed = 0;
    int threads = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Seed for sampling commands (overrides the config)");
    app.add_option("--out", out, "Output directory (overrides output.directory)");
    app.add_option("--threads", threads, "Worker threads (fallback: GJEKIT_THREADS)")->check(CLI::NonNegativeNumber);

    std::string command;
    for (const auto& name : gjekit::command_names()) {
        auto* sub = app.add_subcommand(name, "Run the " + name + " command");
        sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->callback([&command, name] { command = name; });
    }
    std::size_t list_samples = 2000;
    auto* list = app.add_subcommand("list", "List built-in generators and their certification at default boxes");
    list->add_option("--samples", list_samples, "Certification samples per generator");
    list->callback([&command] { command = "list"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (threads > 0) gjekit::set_thread_count(threads);
    if (command == "list") {
        std::cout << gjekit::list_builtins(list_samples, *seed_opt ? seed : 1).dump(2) << '\n';
        return 0;
    }

    gjekit::RunOptions opt;
    opt.out_dir = out;
    opt.threads = threads;
    if (*seed_opt) opt.seed = seed;
    const gjekit::RunOutcome o = gjekit::run_file(command, config, opt);
    if (o.exit_code == 1) {
        std::cerr << o.report.dump(2) << '\n';
    } else {
        std::cout << command << ": " << (o.pass ? "pass" : "FAIL") << '\n';
        for (const auto& f : o.files) std::cout << "  " << f << '\n';
    }
    return o.exit_code;
}
