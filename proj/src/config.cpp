#include "nscr/config.hpp"

#include <filesystem>

#include <json.hpp>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"
#include "nscr/textio.hpp"

namespace nscr {

namespace {

using nlohmann::json;

template <typename T>
void pull(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json gsnn_to_json(const GsnnConfig& c) {
    return json{{"hidden_width", c.hidden_width},
                {"image_width", c.image_width},
                {"steps", c.steps},
                {"importance_threshold", c.importance_threshold},
                {"context_width", c.context_width},
                {"importance_hidden", c.importance_hidden},
                {"context_hidden", c.context_hidden}};
}

void gsnn_from_json(const json& j, GsnnConfig& c) {
    pull(j, "hidden_width", c.hidden_width);
    pull(j, "image_width", c.image_width);
    pull(j, "steps", c.steps);
    pull(j, "importance_threshold", c.importance_threshold);
    pull(j, "context_width", c.context_width);
    pull(j, "importance_hidden", c.importance_hidden);
    pull(j, "context_hidden", c.context_hidden);
}

json relate_to_json(const RelateConfig& c) {
    return json{{"layers", c.layers},
                {"heads", c.heads},
                {"patch_count", c.patch_count},
                {"patch_width", c.patch_width},
                {"latent_width", c.latent_width},
                {"head_divisor", c.head_divisor},
                {"word_width", c.word_width},
                {"edge_threshold", c.edge_threshold},
                {"max_edges_object", c.max_edges_object},
                {"max_edges_leaf", c.max_edges_leaf}};
}

void relate_from_json(const json& j, RelateConfig& c) {
    pull(j, "layers", c.layers);
    pull(j, "heads", c.heads);
    pull(j, "patch_count", c.patch_count);
    pull(j, "patch_width", c.patch_width);
    pull(j, "latent_width", c.latent_width);
    pull(j, "head_divisor", c.head_divisor);
    pull(j, "word_width", c.word_width);
    pull(j, "edge_threshold", c.edge_threshold);
    pull(j, "max_edges_object", c.max_edges_object);
    pull(j, "max_edges_leaf", c.max_edges_leaf);
}

json schedule_to_json(const FinetuneSchedule& c) {
    return json{{"stage1_epochs", c.stage1_epochs},
                {"stage2_epochs", c.stage2_epochs},
                {"base_learning_rate", c.base_learning_rate},
                {"stage2_propagation_lr_factor", c.stage2_propagation_lr_factor},
                {"augment_per_bundle", c.augment_per_bundle},
                {"noise_scale", c.noise_scale},
                {"momentum", c.momentum},
                {"importance_loss_weight", c.importance_loss_weight},
                {"curated_fraction", c.curated_fraction}};
}

void schedule_from_json(const json& j, FinetuneSchedule& c) {
    pull(j, "stage1_epochs", c.stage1_epochs);
    pull(j, "stage2_epochs", c.stage2_epochs);
    pull(j, "base_learning_rate", c.base_learning_rate);
    pull(j, "stage2_propagation_lr_factor", c.stage2_propagation_lr_factor);
    pull(j, "augment_per_bundle", c.augment_per_bundle);
    pull(j, "noise_scale", c.noise_scale);
    pull(j, "momentum", c.momentum);
    pull(j, "importance_loss_weight", c.importance_loss_weight);
    pull(j, "curated_fraction", c.curated_fraction);
}

json world_to_json(const SyntheticWorldSpec& c) {
    return json{{"objects", c.objects},
                {"attributes", c.attributes},
                {"affordances", c.affordances},
                {"edge_density", c.edge_density},
                {"latent_width", c.latent_width},
                {"noise_scale", c.noise_scale},
                {"train_bundles", c.train_bundles},
                {"val_bundles", c.val_bundles},
                {"test_bundles", c.test_bundles},
                {"detector_recall", c.detector_recall},
                {"patch_count", c.patch_count},
                {"seed", c.seed}};
}

void world_from_json(const json& j, SyntheticWorldSpec& c, std::uint64_t run_seed) {
    pull(j, "objects", c.objects);
    pull(j, "attributes", c.attributes);
    pull(j, "affordances", c.affordances);
    pull(j, "edge_density", c.edge_density);
    pull(j, "latent_width", c.latent_width);
    pull(j, "noise_scale", c.noise_scale);
    pull(j, "train_bundles", c.train_bundles);
    pull(j, "val_bundles", c.val_bundles);
    pull(j, "test_bundles", c.test_bundles);
    pull(j, "detector_recall", c.detector_recall);
    pull(j, "patch_count", c.patch_count);
    if (j.contains("seed"))
        c.seed = j.at("seed").get<std::uint64_t>();
    else
        c.seed = run_seed;
}

json train_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"learning_rate", c.learning_rate},
                {"momentum", c.momentum},
                {"importance_loss_weight", c.importance_loss_weight},
                {"relate_epochs", c.relate_epochs},
                {"relate_learning_rate", c.relate_learning_rate},
                {"relate_pairs_per_bundle", c.relate_pairs_per_bundle},
                {"relate_max_bundles", c.relate_max_bundles}};
}

void train_from_json(const json& j, TrainConfig& c) {
    pull(j, "epochs", c.epochs);
    pull(j, "learning_rate", c.learning_rate);
    pull(j, "momentum", c.momentum);
    pull(j, "importance_loss_weight", c.importance_loss_weight);
    pull(j, "relate_epochs", c.relate_epochs);
    pull(j, "relate_learning_rate", c.relate_learning_rate);
    pull(j, "relate_pairs_per_bundle", c.relate_pairs_per_bundle);
    pull(j, "relate_max_bundles", c.relate_max_bundles);
}

json to_json_impl(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["gsnn"] = gsnn_to_json(cfg.gsnn);
    j["relate"] = relate_to_json(cfg.relate);
    j["schedule"] = schedule_to_json(cfg.schedule);
    j["world"] = world_to_json(cfg.world);
    j["train"] = train_to_json(cfg.train);
    j["paths"] = json{{"out_dir", cfg.paths.out_dir},
                      {"graph", cfg.paths.graph},
                      {"bundles_train", cfg.paths.bundles_train},
                      {"bundles_val", cfg.paths.bundles_val},
                      {"bundles_test", cfg.paths.bundles_test},
                      {"embeddings", cfg.paths.embeddings},
                      {"system_dir", cfg.paths.system_dir}};
    j["k_list"] = cfg.k_list;
    j["heldout"] = cfg.heldout;
    j["sme_bundle_count"] = cfg.sme_bundle_count;
    j["ablate_steps"] = cfg.ablate_steps;
    j["robustness_trials"] = cfg.robustness_trials;
    return j;
}

RunConfig from_json_impl(const json& j) {
    RunConfig cfg;
    pull(j, "seed", cfg.seed);
    if (j.contains("gsnn")) gsnn_from_json(j.at("gsnn"), cfg.gsnn);
    if (j.contains("relate")) relate_from_json(j.at("relate"), cfg.relate);
    if (j.contains("schedule")) schedule_from_json(j.at("schedule"), cfg.schedule);
    if (j.contains("world"))
        world_from_json(j.at("world"), cfg.world, cfg.seed);
    else
        cfg.world.seed = cfg.seed;
    if (j.contains("train")) train_from_json(j.at("train"), cfg.train);
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        pull(p, "out_dir", cfg.paths.out_dir);
        pull(p, "graph", cfg.paths.graph);
        pull(p, "bundles_train", cfg.paths.bundles_train);
        pull(p, "bundles_val", cfg.paths.bundles_val);
        pull(p, "bundles_test", cfg.paths.bundles_test);
        pull(p, "embeddings", cfg.paths.embeddings);
        pull(p, "system_dir", cfg.paths.system_dir);
    }
    pull(j, "k_list", cfg.k_list);
    pull(j, "heldout", cfg.heldout);
    pull(j, "sme_bundle_count", cfg.sme_bundle_count);
    pull(j, "ablate_steps", cfg.ablate_steps);
    pull(j, "robustness_trials", cfg.robustness_trials);
    return cfg;
}

} // namespace

std::string PathsConfig::graph_path() const {
    return graph.empty() ? (std::filesystem::path(out_dir) / "graph.kg").string() : graph;
}

std::string PathsConfig::bundles_path(const std::string& split) const {
    if (split == "train" && !bundles_train.empty()) return bundles_train;
    if (split == "val" && !bundles_val.empty()) return bundles_val;
    if (split == "test" && !bundles_test.empty()) return bundles_test;
    if (split != "train" && split != "val" && split != "test")
        throw DataError("unknown split: '" + split + "'");
    return (std::filesystem::path(out_dir) / ("bundles_" + split + ".fb")).string();
}

std::string PathsConfig::embeddings_path() const {
    return embeddings.empty() ? (std::filesystem::path(out_dir) / "embeddings.tsv").string()
                              : embeddings;
}

std::string PathsConfig::system_path() const {
    return system_dir.empty() ? (std::filesystem::path(out_dir) / "system").string() : system_dir;
}

void RunConfig::validate() const {
    gsnn.validate();
    relate.validate();
    schedule.validate();
    world.validate();
    // Widths must agree across modules: the image embedding, word embeddings
    // and patches all live in the world's latent space.
    if (gsnn.image_width != world.latent_width)
        throw ConfigError("gsnn.image_width must equal world.latent_width");
    if (relate.word_width != world.latent_width)
        throw ConfigError("relate.word_width must equal world.latent_width");
    if (relate.patch_width != world.latent_width)
        throw ConfigError("relate.patch_width must equal world.latent_width");
    if (relate.patch_count != world.patch_count)
        throw ConfigError("relate.patch_count must equal world.patch_count");
    for (int k : k_list)
        if (k < 1) throw ConfigError("k_list entries must be >= 1");
    if (sme_bundle_count < 1) throw ConfigError("sme_bundle_count must be >= 1");
    if (robustness_trials < 1) throw ConfigError("robustness_trials must be >= 1");
}

std::uint64_t RunConfig::config_hash() const { return fnv1a(to_json_text()); }

std::string RunConfig::to_json_text() const { return to_json_impl(*this).dump(2); }

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("config parse error: ") + e.what());
    }
    try {
        return from_json_impl(j);
    } catch (const json::exception& e) {
        throw DataError(std::string("config field error: ") + e.what());
    }
}

RunConfig RunConfig::load(const std::string& path) {
    return from_json_text(read_text_file(path));
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("override must look like key=value: '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json j = to_json_impl(*this);
    std::string pointer = "/" + key;
    for (auto& c : pointer)
        if (c == '.') c = '/';
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value; // plain string
    }
    try {
        j[json::json_pointer(pointer)] = parsed;
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad override key '") + key + "': " + e.what());
    }
    *this = from_json_impl(j);
}

} // namespace nscr
