#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "cau/errors.hpp"
#include "cau/parallel.hpp"
#include "cau/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"cau: curriculum approximate unlearning for session recommenders"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    auto* config_opt =
        app.add_option("--config", config_path, "experiment config JSON (defaults when omitted)");
    auto* seed_opt = app.add_option("--seed", seed, "override the global seed");
    auto* threads_opt =
        app.add_option("--threads", threads, "worker threads; 0 = single-threaded");
    auto* out_opt = app.add_option("--out", out_dir, "override the output directory");
    // fallthrough lets the global options above appear after the subcommand
    app.add_subcommand("synth", "generate the synthetic corpus")->fallthrough();
    app.add_subcommand("prep", "filter, split, and select the forget set")->fallthrough();
    app.add_subcommand("train", "train the recommender (theta_rec)")->fallthrough();
    app.add_subcommand("unlearn", "run the configured unlearning mode (theta_app)")->fallthrough();
    app.add_subcommand("eval", "score a checkpoint on the test split and forget set")
        ->fallthrough();
    app.add_subcommand("ablate", "run all modes/settings and emit a comparison table")
        ->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        cau::ExperimentConfig cfg =
            config_opt->count() > 0 ? cau::load_config(config_path) : cau::ExperimentConfig{};
        if (seed_opt->count() > 0) cau::apply_seed(cfg, seed);
        if (threads_opt->count() > 0) {
            if (threads < 0) throw cau::UsageError("--threads must be >= 0");
            cfg.threads = threads;
        }
        if (out_opt->count() > 0) {
            if (out_dir.empty()) throw cau::UsageError("--out must not be empty");
            cfg.out_dir = out_dir;
        }
        cau::set_thread_count(cfg.threads);
        const std::string stage = app.get_subcommands().front()->get_name();
        if (stage == "synth")
            cau::cmd_synth(cfg);
        else if (stage == "prep")
            cau::cmd_prep(cfg);
        else if (stage == "train")
            cau::cmd_train(cfg);
        else if (stage == "unlearn")
            cau::cmd_unlearn(cfg);
        else if (stage == "eval")
            cau::cmd_eval(cfg);
        else
            cau::cmd_ablate(cfg);
        return 0;
    } catch (const cau::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cau::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const cau::DependencyError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const cau::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
