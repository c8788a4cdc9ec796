#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nscr/system.hpp"
#include "nscr/trainer.hpp"

namespace nscr {

// A subject-matter expert's definition of a novel concept: name, type, word
// embedding, and a handful of example bundles carrying patch data.
struct SmeSubmission {
    std::string name;
    NodeType type = NodeType::Object;
    std::vector<double> embedding;
    std::vector<FeatureBundle> bundles;

    void validate() const;
};

struct FinetuneSchedule {
    int stage1_epochs = 20;
    int stage2_epochs = 20;
    double base_learning_rate = 0.01;
    double stage2_propagation_lr_factor = 0.1;
    int augment_per_bundle = 4;
    double noise_scale = 0.1;
    double momentum = 0.9;
    double importance_loss_weight = 1.0;
    double curated_fraction = 0.02;

    void validate() const;
};

struct CuratedDataset {
    std::vector<int> bundle_ids; // into the base training split, selection order
    double target_fraction = 0.02;
};

// Per-dimension noise scales for feature-space augmentation, estimated from
// the submission's own bundles.
struct NoiseStats {
    std::vector<double> e_image_sd;
    std::vector<double> patch_sd;
};
NoiseStats noise_stats_for(const std::vector<FeatureBundle>& bundles);

// Feature-space stand-in for image transformations: Gaussian jitter on the
// embedding and patches (scale x per-dimension std) and a 0.3-probability
// drop of one detection when at least two exist. Labels are untouched.
std::vector<FeatureBundle> augment(const FeatureBundle& bundle, int n, double noise_scale,
                                   Rng& rng, const NoiseStats* stats = nullptr);

// Maximally diverse expansion sampling over node-id bins. Pure core: takes
// (bundle id, expanded node ids) in dataset order.
struct MdesResult {
    std::vector<int> selected;
    std::vector<std::pair<int, int>> bins; // final [lo, hi) partition
};
MdesResult mdes_core(const std::vector<std::pair<int, std::vector<int>>>& expansions,
                     int node_count);

// Runs the system's expansion over the base split and applies the binning
// procedure; single pass, deterministic given split order and parameters.
CuratedDataset mdes_select(System& system, const std::vector<FeatureBundle>& base,
                           double target_fraction);

struct AddConceptOptions {
    bool use_relate = true;
    bool tune_gsnn = true; // stage-one fine-tuning of propagation + bias
    enum class Curation { Mdes, Random, None } curation = Curation::Mdes;
    bool forced_activation = true;
    int curated_size = -1; // Random curation size; -1 derives from the fraction
    bool evaluate = true;  // before/after metrics on the eval split
    std::uint64_t seed = 0;
};

struct AddConceptReport {
    std::string concept;
    int node_id = -1;
    std::vector<EdgeProposal> committed_edges;
    double initial_bias = 0.0;
    std::vector<double> stage1_losses;
    std::vector<double> stage2_losses;
    std::vector<int> curated_ids;
    double before_existing_map = -1.0;
    double after_existing_map = -1.0;
    double novel_ap = -1.0;
    std::vector<std::string> warnings;
    // Stage-separation audit: stage one must leave the classifier untouched,
    // stage two must leave the novel bias at its stage-one value.
    bool classifier_untouched_by_stage1 = true;
    double bias_after_stage1 = 0.0;
};

// Mean bias of the node's graph neighbors; falls back to the global mean of
// all other biases when the node is isolated.
double initial_node_bias(const System& system, int node_id, bool* used_fallback = nullptr);

// The full concept-addition transaction: node insertion, relation proposal,
// bias initialization, and the two-stage fine-tuning over the interleaved
// few-shot + curated stream.
AddConceptReport add_concept(System& system, const SmeSubmission& submission,
                             const FinetuneSchedule& schedule,
                             const std::vector<FeatureBundle>& base_train,
                             const std::vector<FeatureBundle>& eval_split,
                             const AddConceptOptions& options);

enum class AdditionStrategy { OneByOne, AllAtOnce };

struct AddConceptsReport {
    std::vector<AddConceptReport> per_concept;
    double aggregate_novel_ap = -1.0;
};

AddConceptsReport add_concepts(System& system, const std::vector<SmeSubmission>& submissions,
                               AdditionStrategy strategy, const FinetuneSchedule& schedule,
                               const std::vector<FeatureBundle>& base_train,
                               const std::vector<FeatureBundle>& eval_split,
                               const AddConceptOptions& options);

} // namespace nscr
