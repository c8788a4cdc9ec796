#include "nscr/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

void SyntheticWorldSpec::validate() const {
    if (objects < 1 || attributes < 1 || affordances < 1)
        throw ConfigError("world needs at least one node of each type");
    if (!(edge_density > 0.0 && edge_density <= 1.0))
        throw ConfigError("edge density must lie in (0,1]");
    if (latent_width < 1 || patch_count < 1) throw ConfigError("world widths must be >= 1");
    if (train_bundles < 1 || val_bundles < 1 || test_bundles < 1)
        throw ConfigError("bundle counts must be >= 1");
    if (!(detector_recall > 0.0 && detector_recall <= 1.0))
        throw ConfigError("detector recall must lie in (0,1]");
    if (noise_scale < 0.0) throw ConfigError("noise scale must be >= 0");
}

const std::vector<FeatureBundle>& World::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw DataError("unknown split: '" + name + "'");
}

namespace {

std::string pad2(int i) { return (i < 10 ? "0" : "") + std::to_string(i); }

std::vector<double> unit_gaussian(int width, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(width));
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.gaussian();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        v[0] = 1.0;
        norm = 1.0;
    }
    for (auto& x : v) x /= norm;
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct ScoredPair {
    double sim;
    int src;
    int dst;
};

// Keeps the top round(density * pairs) most similar pairs of a family.
void keep_top_pairs(std::vector<ScoredPair>& pairs, double density,
                    std::vector<std::pair<int, int>>& out) {
    std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.src != b.src) return a.src < b.src;
        return a.dst < b.dst;
    });
    const auto keep = static_cast<std::size_t>(
        std::llround(density * static_cast<double>(pairs.size())));
    for (std::size_t i = 0; i < std::min(keep, pairs.size()); ++i)
        out.emplace_back(pairs[i].src, pairs[i].dst);
}

FeatureBundle make_bundle(int id, const SyntheticWorldSpec& spec, const KnowledgeGraph& g,
                          const std::vector<std::vector<double>>& latents, Rng& rng,
                          std::vector<int>* seeds_out) {
    FeatureBundle b;
    b.id = id;

    const int seed_count = 2 + static_cast<int>(rng.below(2)); // 2 or 3 seed objects
    std::set<int> seeds;
    while (static_cast<int>(seeds.size()) < std::min(seed_count, spec.objects))
        seeds.insert(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.objects))));

    std::set<int> active(seeds.begin(), seeds.end());
    for (int s : seeds)
        for (int nb : g.neighbors(s, AdjMode::Out)) active.insert(nb);

    std::vector<double> sum(static_cast<std::size_t>(spec.latent_width), 0.0);
    for (int a : active)
        for (int j = 0; j < spec.latent_width; ++j) sum[static_cast<std::size_t>(j)] += latents[a][j];
    double norm = std::sqrt(dot(sum, sum));
    if (norm < 1e-12) norm = 1.0;
    b.e_image.resize(sum.size());
    for (std::size_t j = 0; j < sum.size(); ++j)
        b.e_image[j] = sum[j] / norm + spec.noise_scale * rng.gaussian();

    std::vector<int> active_objects;
    for (int a : active)
        if (g.node(a).type == NodeType::Object) active_objects.push_back(a);

    Tensor2 patches(spec.patch_count, spec.latent_width);
    for (int p = 0; p < spec.patch_count; ++p) {
        if (p < static_cast<int>(active_objects.size())) {
            const auto& lat = latents[active_objects[static_cast<std::size_t>(p)]];
            for (int j = 0; j < spec.latent_width; ++j)
                patches.at(p, j) = lat[static_cast<std::size_t>(j)] + spec.noise_scale * rng.gaussian();
        } else {
            for (int j = 0; j < spec.latent_width; ++j)
                patches.at(p, j) = spec.noise_scale * rng.gaussian();
        }
    }
    b.patches = std::move(patches);

    for (int o : active_objects)
        if (rng.bernoulli(spec.detector_recall)) b.detections.push_back(g.node(o).name);
    for (int a : active) b.labels.push_back(g.node(a).name);
    b.canonicalize();
    if (seeds_out) seeds_out->assign(seeds.begin(), seeds.end());
    return b;
}

} // namespace

World generate_world(const SyntheticWorldSpec& spec) {
    spec.validate();
    World world;
    Rng root(spec.seed);

    Rng lat_rng = root.fork("latents");
    std::vector<std::vector<double>> latents;
    latents.reserve(static_cast<std::size_t>(spec.concept_count()));
    for (int i = 0; i < spec.concept_count(); ++i)
        latents.push_back(unit_gaussian(spec.latent_width, lat_rng));

    Rng emb_rng = root.fork("embeddings");
    for (int i = 0; i < spec.concept_count(); ++i) {
        std::string name;
        NodeType type;
        if (i < spec.objects) {
            name = "obj_" + pad2(i);
            type = NodeType::Object;
        } else if (i < spec.objects + spec.attributes) {
            name = "attr_" + pad2(i - spec.objects);
            type = NodeType::Attribute;
        } else {
            name = "aff_" + pad2(i - spec.objects - spec.attributes);
            type = NodeType::Affordance;
        }
        std::vector<double> word = latents[static_cast<std::size_t>(i)];
        for (auto& v : word) v += spec.noise_scale * emb_rng.gaussian();
        world.graph.add_node(name, type, word);
        world.embeddings.emplace_back(name, world.graph.node(i).embedding);
    }

    // Object-object edges (canonical direction low id -> high id) and
    // object-leaf edges, each family cut at its own similarity quantile.
    std::vector<ScoredPair> oo;
    for (int u = 0; u < spec.objects; ++u)
        for (int v = u + 1; v < spec.objects; ++v)
            oo.push_back({dot(latents[u], latents[v]), u, v});
    std::vector<ScoredPair> ol;
    for (int u = 0; u < spec.objects; ++u)
        for (int v = spec.objects; v < spec.concept_count(); ++v)
            ol.push_back({dot(latents[u], latents[v]), u, v});
    std::vector<std::pair<int, int>> edges;
    keep_top_pairs(oo, spec.edge_density, edges);
    keep_top_pairs(ol, spec.edge_density, edges);
    for (const auto& [s, d] : edges) world.graph.add_edge(s, d);

    // Every leaf must be reachable, otherwise it can never be a label.
    for (int v = spec.objects; v < spec.concept_count(); ++v) {
        if (!world.graph.neighbors(v, AdjMode::In).empty()) continue;
        int best_obj = 0;
        double best_sim = -2.0;
        for (int u = 0; u < spec.objects; ++u) {
            const double s = dot(latents[u], latents[v]);
            if (s > best_sim) {
                best_sim = s;
                best_obj = u;
            }
        }
        world.graph.add_edge(best_obj, v);
    }

    int next_id = 0;
    auto fill_split = [&](std::vector<FeatureBundle>& split, int count, const char* label) {
        Rng split_rng = root.fork(label);
        for (int i = 0; i < count; ++i) {
            Rng bundle_rng = split_rng.fork("bundle", static_cast<std::uint64_t>(i));
            std::vector<int> seeds;
            split.push_back(make_bundle(next_id, spec, world.graph, latents, bundle_rng, &seeds));
            world.bundle_seeds[next_id] = std::move(seeds);
            ++next_id;
        }
    };
    fill_split(world.train, spec.train_bundles, "train");
    fill_split(world.val, spec.val_bundles, "val");
    fill_split(world.test, spec.test_bundles, "test");
    return world;
}

} // namespace nscr
