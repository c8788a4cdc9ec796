#pragma once

#include <string>
#include <vector>

#include "nscr/bundle.hpp"
#include "nscr/classifier.hpp"
#include "nscr/gsnn.hpp"
#include "nscr/kgraph.hpp"
#include "nscr/relate.hpp"

namespace nscr {

// A deployable model: graph, every trainable tensor, and the configs that
// shape them. The detector vocabulary is pinned at base-training time; novel
// concepts are classified through the graph, never detected directly.
struct System {
    KnowledgeGraph graph;
    ParameterStore store;
    GsnnConfig gsnn_cfg;
    RelateConfig relate_cfg;
    SlotLayout layout;
    std::vector<std::string> detector_vocab; // sorted

    static System create(KnowledgeGraph graph, const GsnnConfig& gsnn_cfg,
                         const RelateConfig& relate_cfg, std::uint64_t seed);

    // Drops detections outside the detector vocabulary.
    FeatureBundle sanitize(const FeatureBundle& bundle) const;

    struct InferOutput {
        Tensor2 probabilities; // 1 x layout.node_count
        PartialGraph trace;
        std::vector<int> active;
    };
    InferOutput infer(const FeatureBundle& bundle, const ExpandOptions& options = {});

    // Adds a graph node plus its bias slot; the classifier is extended
    // separately (fine-tuning stage two).
    int add_node(const std::string& name, NodeType type, std::vector<double> embedding,
                 double bias);

    // Removes a node everywhere: graph, bias column, classifier row/slots.
    // Returns the old->new id map.
    std::vector<int> remove_node_everywhere(const std::string& name);

    // Multi-hot truth row over classifier outputs for a bundle's labels.
    Tensor2 truth_row(const FeatureBundle& bundle) const;

    void save(const std::string& dir, std::uint64_t config_hash, std::uint64_t seed) const;
    static System load(const std::string& dir, const GsnnConfig& gsnn_cfg,
                       const RelateConfig& relate_cfg);
};

struct SplitEval {
    Tensor2 scores;
    Tensor2 truths;
};

// Scores every bundle of a split; row order follows the split.
SplitEval score_split(System& system, const std::vector<FeatureBundle>& bundles);

} // namespace nscr
