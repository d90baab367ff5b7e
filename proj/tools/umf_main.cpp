#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "umf/errors.hpp"
#include "umf/experiment.hpp"
#include "umf/remote.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::optional<std::uint64_t> seed_from_env() {
    const char* v = std::getenv("UMF_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long seed = std::stoull(v, &used);
        if (used != std::string(v).size()) throw std::invalid_argument(v);
        return seed;
    } catch (const std::exception&) {
        throw umf::ConfigError(std::string("UMF_SEED: '") + v + "' is not a non-negative integer");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-action search over masked diffusion decoding trajectories"};
    app.require_subcommand(1);

    std::string config_path, out_dir, result_dir, url;
    int workers = 1;

    auto* run = app.add_subcommand("run", "Run every (problem, seed, method, budget) cell of a config");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Result directory")->required();
    run->add_option("--workers", workers, "Cells run concurrently")->check(CLI::PositiveNumber);

    auto* rep = app.add_subcommand("report", "Render trees and best-so-far tables of a result directory");
    rep->add_option("dir", result_dir, "Result directory")->required();

    auto* ver = app.add_subcommand("verify", "Re-check trace and tree invariants of a result directory");
    ver->add_option("dir", result_dir, "Result directory")->required();

    auto* conf = app.add_subcommand("conformance", "Check a remote denoiser server against the wire protocol");
    conf->add_option("url", url, "Server base URL, e.g. http://127.0.0.1:8000")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            const auto summary = umf::run_experiment(config_path, out_dir, workers, seed_from_env());
            std::cout << summary.cells << " cells, " << summary.failed << " failed; results in " << out_dir << '\n';
            for (const auto& c : summary.results)
                if (c.status != "ok")
                    std::cerr << "cell " << c.problem << "/" << c.method << "/s" << c.seed << "/b" << c.budget
                              << " failed: " << c.error << '\n';
            return summary.failed ? kRuntimeError : kOk;
        }
        if (*rep) {
            std::cout << umf::report(result_dir);
            return kOk;
        }
        if (*ver) {
            const auto problems = umf::verify_results(result_dir);
            for (const auto& p : problems) std::cout << "VIOLATION " << p << '\n';
            std::cout << (problems.empty() ? "verify: all invariants hold\n" : "verify: invariants violated\n");
            return problems.empty() ? kOk : kRuntimeError;
        }
        if (*conf) {
            bool ok = true;
            for (const auto& c : umf::run_conformance(umf::HttpEndpoint::parse(url))) {
                std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << '\n';
                ok = ok && c.passed;
            }
            return ok ? kOk : kRuntimeError;
        }
    } catch (const umf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const umf::MissingResults& e) {
        std::cerr << "missing results: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}
