// bosonlab run | validate | report
// Exit codes: 0 success, 2 invalid config or input, 3 numeric guard or failed gate.

#include <iostream>

#include <CLI11.hpp>

#include "bosonlab/harness.hpp"
#include "bosonlab/io.hpp"

namespace {

bl::ExperimentConfig load(const std::string& path) {
    return bl::parse_config(bl::io::read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bosonic mean-field and pair-excitation lab"};
    app.set_version_flag("--version", BOSONLAB_VERSION);
    app.require_subcommand(1);

    std::string config, out, dir;
    int threads = 1;
    long long seed = -1;

    auto* run = app.add_subcommand("run", "validate a config, run it and write a run directory");
    run->add_option("--config", config, "experiment JSON")->required();
    run->add_option("--out", out, "run directory (must be new or empty); overrides \"output\"");
    run->add_option("--threads", threads, "worker threads over (N, beta) points")->check(CLI::Range(1, 256));
    run->add_option("--seed", seed, "override the config seed")->check(CLI::NonNegativeNumber);

    auto* val = app.add_subcommand("validate", "check a config against every guard without running");
    val->add_option("--config", config, "experiment JSON")->required();

    auto* rep = app.add_subcommand("report", "verify checksums and print the report of a run directory");
    rep->add_option("dir", dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*val) {
            bl::validate(load(config));
            std::cout << "config ok\n";
            return 0;
        }
        if (*rep) {
            std::cout << bl::render_report(dir);
            return 0;
        }
        bl::RunOptions opt;
        opt.threads = threads;
        if (seed >= 0) {
            opt.seed_override = true;
            opt.seed = static_cast<unsigned>(seed);
        }
        const bl::RunResult r = bl::run_experiment(load(config), out, opt);
        for (const auto& g : r.gates)
            std::cout << "gate " << g.name << ": " << (g.passed ? "pass" : "FAIL") << " (" << g.value << " vs " << g.tol
                      << ")\n";
        std::cout << "run directory: " << r.dir.string() << "\n";
        return r.gates_passed ? 0 : 3;
    } catch (const bl::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bl::NumericGuard& e) {
        std::cerr << "numeric guard: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
