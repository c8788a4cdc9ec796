#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nscr/commands.hpp"
#include "nscr/error.hpp"

namespace {

nscr::RunConfig build_config(const std::string& config_path, std::uint64_t seed, bool seed_set,
                             const std::string& out_dir,
                             const std::vector<std::string>& overrides) {
    nscr::RunConfig cfg;
    if (!config_path.empty()) cfg = nscr::RunConfig::load(config_path);
    if (seed_set) {
        cfg.seed = seed;
        // A seed given on the command line also drives generation unless the
        // config pinned one explicitly.
        if (config_path.empty()) cfg.world.seed = seed;
    }
    if (!out_dir.empty()) cfg.paths.out_dir = out_dir;
    for (const std::string& o : overrides) cfg.apply_override(o);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-graph concept recognition engine"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "Run configuration (JSON)");
    app.add_option("-o,--out", out_dir, "Output directory");
    app.add_option("-s,--seed", seed, "Run seed")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--set", overrides, "Override a config field, key=value");

    auto* synth = app.add_subcommand("synth-gen", "Generate a synthetic world");
    auto* train = app.add_subcommand("train", "Train the base system");
    bool resume = false;
    train->add_flag("--resume", resume, "Continue from the checkpoint");
    auto* infer = app.add_subcommand("infer", "Run inference on one bundle");
    int bundle_id = -1;
    infer->add_option("--bundle", bundle_id, "Bundle id")->required();
    auto* addc = app.add_subcommand("add-concept", "Add a novel concept from a submission");
    std::string submission_path;
    addc->add_option("--submission", submission_path, "Submission file")->required();
    auto* mdes = app.add_subcommand("mdes", "Select the curated anti-forgetting subset");
    auto* eval = app.add_subcommand("eval", "Evaluate a split");
    std::string split = "test";
    eval->add_option("--split", split, "train|val|test");
    auto* ablate = app.add_subcommand("ablate", "Run an experiment battery");
    std::string which;
    ablate->add_option("which", which, "T|strategy|robustness|restoration|components")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const nscr::RunConfig cfg =
            build_config(config_path, seed, seed_set, out_dir, overrides);
        if (synth->parsed()) nscr::cmd_synth_gen(cfg);
        if (train->parsed()) nscr::cmd_train(cfg, resume);
        if (infer->parsed()) nscr::cmd_infer(cfg, bundle_id);
        if (addc->parsed()) nscr::cmd_add_concept(cfg, submission_path);
        if (mdes->parsed()) nscr::cmd_mdes(cfg);
        if (eval->parsed()) nscr::cmd_eval(cfg, split);
        if (ablate->parsed()) nscr::cmd_ablate(cfg, which);
        return 0;
    } catch (const nscr::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const nscr::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const nscr::NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
