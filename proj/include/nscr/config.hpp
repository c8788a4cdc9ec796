#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nscr/fewshot.hpp"
#include "nscr/gsnn.hpp"
#include "nscr/relate.hpp"
#include "nscr/trainer.hpp"
#include "nscr/world.hpp"

namespace nscr {

struct PathsConfig {
    std::string out_dir = "out";
    // Derived from out_dir unless set explicitly.
    std::string graph;
    std::string bundles_train;
    std::string bundles_val;
    std::string bundles_test;
    std::string embeddings;
    std::string system_dir;

    std::string graph_path() const;
    std::string bundles_path(const std::string& split) const;
    std::string embeddings_path() const;
    std::string system_path() const;
};

// One structured document drives every command; flags override fields.
struct RunConfig {
    std::uint64_t seed = 1;
    GsnnConfig gsnn;
    RelateConfig relate;
    FinetuneSchedule schedule;
    SyntheticWorldSpec world;
    TrainConfig train;
    PathsConfig paths;
    std::vector<int> k_list = {1, 5};
    std::vector<std::string> heldout;
    int sme_bundle_count = 5;
    std::vector<int> ablate_steps = {1, 2, 3, 4};
    int robustness_trials = 100;

    void validate() const;
    std::uint64_t config_hash() const;

    std::string to_json_text() const;
    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::string& path);
    // key=value with dotted keys, e.g. "gsnn.steps=4" or "seed=7".
    void apply_override(const std::string& assignment);
};

} // namespace nscr
