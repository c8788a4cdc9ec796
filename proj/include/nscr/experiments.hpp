#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nscr/fewshot.hpp"
#include "nscr/metrics.hpp"
#include "nscr/system.hpp"
#include "nscr/trainer.hpp"
#include "nscr/world.hpp"

namespace nscr {

// A world with some concepts held out of the base system, mirroring the
// test-class protocol: held-out nodes are removed from the graph, their
// bundles leave the training split, and per-concept pools provide few-shot
// submissions and evaluation data.
struct BasePrep {
    World world;
    System system; // untrained at construction
    std::vector<std::string> heldout;
    std::vector<FeatureBundle> train; // no held-out labels
    std::map<std::string, std::vector<FeatureBundle>> sme_pools; // from the excluded bundles
};

std::vector<std::string> pick_heldout(const World& world, int count, int min_test_support,
                                      std::uint64_t seed);

BasePrep prepare_base(World world, const std::vector<std::string>& heldout,
                      const GsnnConfig& gsnn_cfg, const RelateConfig& relate_cfg,
                      std::uint64_t seed);

SmeSubmission make_submission(const World& world, const std::string& concept,
                              const std::vector<FeatureBundle>& pool, int bundle_count);

// Ground-truth edges incident to a concept in the pristine world graph,
// mapped into the system's id space (endpoints missing there are skipped).
std::vector<std::pair<int, int>> world_truth_edges(const World& world, const System& system,
                                                   const std::string& concept);

struct RestorationResult {
    std::string concept;
    double restored_fraction = 0.0;
    double baseline_fraction = 0.0; // expected under uniform proposals of equal count
    int proposed = 0;
    int truth_edges = 0;
};

// Re-adds a removed concept through the few-shot pipeline and measures how
// many of its ground-truth edges come back.
RestorationResult edge_restoration_experiment(System system, const World& world,
                                              const std::string& concept,
                                              const std::vector<FeatureBundle>& sme_pool,
                                              const FinetuneSchedule& schedule, int sme_count,
                                              std::uint64_t seed);

enum class ProbeVariant { Node, Edge };

struct RobustnessResult {
    double ignored_fraction = 0.0;
    double removed_fraction = 0.0;
    int trials = 0;
};

// Injects one unrelated detection (or one wrong edge) per trial and measures
// how often the expansion refuses to build on it, plus how often the
// classifier scores the injected node below 0.5.
RobustnessResult robustness_probe(System& system, const std::vector<FeatureBundle>& bundles,
                                  int trials, ProbeVariant variant, std::uint64_t seed);

struct TAblationRow {
    int steps = 0;
    double full_expansion_fraction = 0.0;
    double mean_ap = 0.0;
};

// Re-runs inference at each step budget; full expansion means the run covered
// the gate's quiet-round fixpoint set.
std::vector<TAblationRow> t_ablation(System& system, const std::vector<FeatureBundle>& bundles,
                                     const std::vector<int>& steps_list);

struct ComponentsRow {
    std::string label;
    bool tune_gsnn = false;
    bool use_relate = false;
    bool mdes = false;
    double all_top1 = 0.0;
    double all_top5 = 0.0;
    double all_map = 0.0;
    double novel_top1 = 0.0;
    double novel_top5 = 0.0;
    double novel_map = 0.0;
};

// Component ledger over the held-out concepts: classifier-only, +relations,
// +propagation tuning, +curation.
std::vector<ComponentsRow> components_ablation(const System& base, const BasePrep& prep,
                                               const std::vector<FeatureBundle>& eval_split,
                                               const FinetuneSchedule& schedule, int sme_count,
                                               std::uint64_t seed);

} // namespace nscr
