// uqnav: dataset generation, training, evaluation and the gates-traversed table.
//
// Exit codes: 0 success, 1 usage/config error, 2 missing artifact,
// 3 trend verdict failure (reproduce-table only), 4 other runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "uqnav/checkpoint.hpp"
#include "uqnav/errors.hpp"
#include "uqnav/harness.hpp"

namespace {

using namespace uqnav;

enum ExitCode { kOk = 0, kUsage = 1, kMissing = 2, kVerdict = 3, kRuntime = 4 };

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); }
};

void print_table(const harness::ResultsTable& table, const harness::Artifacts& artifacts) {
    std::cout << "\nAverage number of gates traversed (max 32)\n" << harness::results_console(table);
    std::cout << "results: " << artifacts.results().string() << '\n';
}

int run_stage(const std::string& stage, const harness::RunConfig& config, const harness::Artifacts& artifacts,
              bool full) {
    Timer t;
    if (stage == "gen-data") {
        harness::stage_generate_data(config, artifacts);
        std::cout << "wrote " << artifacts.cmvae_data().string() << " and " << artifacts.policy_data().string() << '\n';
    } else if (stage == "train-cmvae") {
        const auto r = harness::stage_train_cmvae(config, artifacts);
        std::printf("cmvae held-out total %.5f -> %.5f (pose_mse %.5f, image_mse %.5f, kl %.3f)\n",
                    r.initial_held_out.total, r.final_held_out.total, r.final_held_out.pose_mse,
                    r.final_held_out.image_mse, r.final_held_out.kl);
    } else if (stage == "train-policy") {
        const auto r = harness::stage_train_policy(config, artifacts);
        for (std::size_t i = 0; i < r.reports.size(); ++i) {
            std::printf("member %zu held-out nll %.5f -> %.5f\n", i, r.reports[i].initial_held_out,
                        r.reports[i].final_held_out);
        }
    } else if (stage == "train-baseline") {
        const auto r = harness::stage_train_baseline(config, artifacts);
        std::printf("baseline held-out mse %.5f -> %.5f\n", r.report.initial_held_out, r.report.final_held_out);
    } else if (stage == "evaluate") {
        const auto table = harness::stage_evaluate(config, artifacts);
        print_table(table, artifacts);
    } else if (stage == "reproduce-table") {
        harness::ResultsTable table;
        if (full) {
            const auto report = harness::run_full_pipeline(config, artifacts);
            table = report.table;
        } else {
            table = harness::stage_evaluate(config, artifacts);
        }
        print_table(table, artifacts);
        const auto verdict = harness::trend_verdict(table);
        std::cout << "trend verdict: " << verdict.message << '\n';
        std::printf("elapsed %.1f s\n", t.seconds());
        return verdict.pass ? kOk : kVerdict;
    }
    std::printf("elapsed %.1f s\n", t.seconds());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-propagating gate-racing policies: data, training, evaluation"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "run";
    std::optional<std::size_t> episodes;
    std::optional<std::size_t> threads;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Run seed (overrides config)");
    app.add_option("--out", out_dir, "Artifact directory")->capture_default_str();
    app.add_option("--episodes", episodes, "Episodes per (model, noise) cell (overrides config)");
    app.add_option("--threads", threads, "Worker threads, 0 = all cores (overrides config)");

    bool full = false;
    bool dump_config = false;
    app.add_subcommand("gen-data", "Render the perception and policy datasets");
    app.add_subcommand("train-cmvae", "Train the perception CM-VAE");
    app.add_subcommand("train-policy", "Train the heteroscedastic policy ensemble (encoder frozen)");
    app.add_subcommand("train-baseline", "Train the deterministic behaviour-cloning baseline");
    auto* eval = app.add_subcommand("evaluate", "Closed-loop evaluation of every model at every noise level");
    eval->add_flag("--dump-config", dump_config, "Print the effective configuration and exit");
    auto* repro = app.add_subcommand("reproduce-table", "Evaluate and emit the results table with a trend verdict");
    repro->add_flag("--full", full, "Run the whole pipeline first (data, training, evaluation)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    harness::RunConfig config;
    try {
        config = config_path.empty() ? harness::default_config() : harness::load_config(config_path);
        if (seed) config.seed = *seed;
        if (episodes) config.episodes_per_cell = *episodes;
        if (threads) {
            config.threads = *threads;
            config.policy.threads = *threads;
            config.baseline.threads = *threads;
        }
        config.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    }
    if (dump_config) {
        std::cout << harness::to_json(config).dump(2) << '\n';
        return kOk;
    }

    const harness::Artifacts artifacts{out_dir};
    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        std::filesystem::create_directories(artifacts.dir);
        return run_stage(stage, config, artifacts, full);
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << " (run the earlier pipeline stages first)\n";
        return kMissing;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
