#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nscr/bundle.hpp"
#include "nscr/kgraph.hpp"

namespace nscr {

// Desk-scale stand-in for a vision dataset: a latent-geometry concept space
// from which the graph, image bundles and word embeddings are all derived.
struct SyntheticWorldSpec {
    int objects = 24;
    int attributes = 10;
    int affordances = 6;
    double edge_density = 0.12;  // fraction of allowed pairs kept as edges
    int latent_width = 10;
    double noise_scale = 0.05;
    int train_bundles = 500;
    int val_bundles = 100;
    int test_bundles = 150;
    double detector_recall = 0.9;
    int patch_count = 6;
    std::uint64_t seed = 1;

    void validate() const;
    int concept_count() const { return objects + attributes + affordances; }
};

struct World {
    KnowledgeGraph graph;
    std::vector<FeatureBundle> train;
    std::vector<FeatureBundle> val;
    std::vector<FeatureBundle> test;
    std::vector<std::pair<std::string, std::vector<double>>> embeddings;
    // Generation debris kept for tests: seed objects per bundle id.
    std::map<int, std::vector<int>> bundle_seeds;

    const std::vector<FeatureBundle>& split(const std::string& name) const;
};

// Edges connect latent-similar concepts (top-density similarity cut per edge
// family), so edge existence is a stationary, learnable rule. Each bundle
// draws seed objects; labels are the seeds plus their one-hop implications;
// e_image is the normalized sum of active latents plus noise; patch rows are
// individual active-object latents plus noise; detections subsample active
// objects at the detector recall. Word embeddings are noisy latents.
World generate_world(const SyntheticWorldSpec& spec);

} // namespace nscr
