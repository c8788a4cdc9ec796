#include "nscr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

std::vector<std::string> pick_heldout(const World& world, int count, int min_test_support,
                                      std::uint64_t seed) {
    std::vector<std::string> eligible;
    for (const ConceptNode& n : world.graph.nodes()) {
        if (n.type != NodeType::Object) continue;
        if (world.graph.neighbors(n.id, AdjMode::Both).empty()) continue;
        int train_support = 0;
        int test_support = 0;
        for (const FeatureBundle& b : world.train) train_support += b.has_label(n.name);
        for (const FeatureBundle& b : world.test) test_support += b.has_label(n.name);
        if (train_support >= 5 && test_support >= min_test_support) eligible.push_back(n.name);
    }
    if (static_cast<int>(eligible.size()) < count)
        throw DataError("world has too few eligible held-out candidates");
    Rng rng(seed);
    Rng pick = rng.fork("heldout");
    pick.shuffle(eligible);
    eligible.resize(static_cast<std::size_t>(count));
    std::sort(eligible.begin(), eligible.end());
    return eligible;
}

BasePrep prepare_base(World world, const std::vector<std::string>& heldout,
                      const GsnnConfig& gsnn_cfg, const RelateConfig& relate_cfg,
                      std::uint64_t seed) {
    BasePrep prep;
    prep.heldout = heldout;

    KnowledgeGraph reduced = world.graph;
    for (const std::string& name : heldout) reduced.remove_node(reduced.id_of(name));

    for (const FeatureBundle& b : world.train) {
        bool excluded = false;
        for (const std::string& name : heldout)
            if (b.has_label(name)) {
                excluded = true;
                break;
            }
        if (!excluded) prep.train.push_back(b);
    }
    for (const std::string& name : heldout) {
        auto& pool = prep.sme_pools[name];
        for (const FeatureBundle& b : world.train)
            if (b.has_label(name)) pool.push_back(b);
    }

    prep.system = System::create(std::move(reduced), gsnn_cfg, relate_cfg, seed);
    prep.world = std::move(world);
    return prep;
}

SmeSubmission make_submission(const World& world, const std::string& concept,
                              const std::vector<FeatureBundle>& pool, int bundle_count) {
    if (static_cast<int>(pool.size()) < bundle_count)
        throw DataError("not enough pool bundles for '" + concept + "'");
    SmeSubmission sub;
    sub.name = concept;
    sub.type = world.graph.node(world.graph.id_of(concept)).type;
    for (const auto& [name, emb] : world.embeddings)
        if (name == concept) sub.embedding = emb;
    if (sub.embedding.empty()) throw DataError("no embedding for '" + concept + "'");
    sub.bundles.assign(pool.begin(), pool.begin() + bundle_count);
    return sub;
}

std::vector<std::pair<int, int>> world_truth_edges(const World& world, const System& system,
                                                   const std::string& concept) {
    std::vector<std::pair<int, int>> out;
    const int wid = world.graph.id_of(concept);
    for (const auto& [s, d] : world.graph.edges()) {
        if (s != wid && d != wid) continue;
        const std::string& other = world.graph.node(s == wid ? d : s).name;
        if (!system.graph.has_name(other)) continue;
        // Mapped into system ids, with the concept itself marked -1 until added.
        const int other_id = system.graph.id_of(other);
        if (s == wid)
            out.emplace_back(-1, other_id);
        else
            out.emplace_back(other_id, -1);
    }
    return out;
}

RestorationResult edge_restoration_experiment(System system, const World& world,
                                              const std::string& concept,
                                              const std::vector<FeatureBundle>& sme_pool,
                                              const FinetuneSchedule& schedule, int sme_count,
                                              std::uint64_t seed) {
    RestorationResult result;
    result.concept = concept;
    if (system.graph.has_name(concept)) system.remove_node_everywhere(concept);

    const auto truth_rel = world_truth_edges(world, system, concept);
    result.truth_edges = static_cast<int>(truth_rel.size());
    if (result.truth_edges == 0)
        throw DataError("concept '" + concept + "' has no ground-truth edges to restore");

    SmeSubmission sub = make_submission(world, concept, sme_pool, sme_count);
    AddConceptOptions options;
    options.seed = seed;
    options.evaluate = false;
    AddConceptReport report = add_concept(system, sub, schedule, {}, {}, options);

    const int novel_id = report.node_id;
    std::set<std::pair<int, int>> truth;
    for (auto [s, d] : truth_rel)
        truth.emplace(s < 0 ? novel_id : s, d < 0 ? novel_id : d);

    int restored = 0;
    for (const EdgeProposal& e : report.committed_edges)
        restored += truth.count({e.source, e.target}) != 0;
    result.proposed = static_cast<int>(report.committed_edges.size());
    result.restored_fraction = static_cast<double>(restored) / result.truth_edges;

    // Uniform baseline: the candidate pair universe is every direction-valid
    // pair between the novel node and any other node; drawing |proposed|
    // pairs uniformly restores j * |truth ∩ U| / (|U| * |truth|) in
    // expectation.
    int universe = 0;
    int truth_in_universe = 0;
    for (const ConceptNode& n : system.graph.nodes()) {
        if (n.id == novel_id) continue;
        if (!is_leaf_type(n.type)) {
            ++universe;
            truth_in_universe += truth.count({n.id, novel_id}) != 0;
        }
        if (!is_leaf_type(system.graph.node(novel_id).type)) {
            ++universe;
            truth_in_universe += truth.count({novel_id, n.id}) != 0;
        }
    }
    result.baseline_fraction =
        universe == 0 ? 0.0
                      : static_cast<double>(result.proposed) * truth_in_universe /
                            (static_cast<double>(universe) * result.truth_edges);
    return result;
}

RobustnessResult robustness_probe(System& system, const std::vector<FeatureBundle>& bundles,
                                  int trials, ProbeVariant variant, std::uint64_t seed) {
    if (bundles.empty()) throw DataError("no bundles for the robustness probe");
    RobustnessResult result;
    Rng rng(seed);
    Rng trial_rng = rng.fork(variant == ProbeVariant::Node ? "probe_node" : "probe_edge");
    int done = 0;
    std::size_t cursor = 0;
    int guard = 0;
    while (done < trials && guard < trials * 50) {
        ++guard;
        const FeatureBundle& bundle = bundles[cursor % bundles.size()];
        ++cursor;
        const FeatureBundle clean = system.sanitize(bundle);

        // An unrelated existing object: not among the bundle's labels.
        std::vector<int> unrelated;
        for (const ConceptNode& n : system.graph.nodes())
            if (n.type == NodeType::Object && !clean.has_label(n.name)) unrelated.push_back(n.id);
        if (unrelated.empty()) continue;
        const int injected = unrelated[trial_rng.below(unrelated.size())];

        if (variant == ProbeVariant::Node) {
            FeatureBundle probe = clean;
            probe.detections.push_back(system.graph.node(injected).name);
            probe.canonicalize();
            const auto out = system.infer(probe);
            bool expanded_from = false;
            for (const PartialGraph::Edge& e : out.trace.edges)
                if (e.parent == injected) expanded_from = true;
            result.ignored_fraction += expanded_from ? 0.0 : 1.0;
            result.removed_fraction +=
                out.probabilities.data[static_cast<std::size_t>(injected)] < 0.5 ? 1.0 : 0.0;
        } else {
            if (clean.detections.empty()) continue;
            const int detected = system.graph.id_of(
                clean.detections[trial_rng.below(clean.detections.size())]);
            if (detected == injected || system.graph.has_edge(detected, injected)) continue;
            system.graph.add_edge(detected, injected);
            const auto out = system.infer(clean);
            system.graph.remove_edge(detected, injected);
            bool used = false;
            for (const PartialGraph::Edge& e : out.trace.edges)
                if ((e.parent == detected && e.child == injected) ||
                    (e.parent == injected && e.child == detected))
                    used = true;
            result.ignored_fraction += used ? 0.0 : 1.0;
            result.removed_fraction +=
                out.probabilities.data[static_cast<std::size_t>(injected)] < 0.5 ? 1.0 : 0.0;
        }
        ++done;
    }
    if (done == 0) throw DataError("robustness probe could not form any trial");
    result.trials = done;
    result.ignored_fraction /= done;
    result.removed_fraction /= done;
    return result;
}

std::vector<TAblationRow> t_ablation(System& system, const std::vector<FeatureBundle>& bundles,
                                     const std::vector<int>& steps_list) {
    std::vector<TAblationRow> rows;
    // Quiet-round fixpoint set per bundle, independent of the step budget.
    std::vector<std::set<int>> fixpoints;
    fixpoints.reserve(bundles.size());
    for (const FeatureBundle& b : bundles) {
        ExpandOptions opts;
        opts.run_to_quiet = true;
        const auto out = system.infer(b, opts);
        fixpoints.emplace_back(out.active.begin(), out.active.end());
    }

    const GsnnConfig original = system.gsnn_cfg;
    for (int steps : steps_list) {
        TAblationRow row;
        row.steps = steps;
        system.gsnn_cfg.steps = steps;
        Tensor2 scores(static_cast<int>(bundles.size()), system.layout.node_count);
        Tensor2 truths(static_cast<int>(bundles.size()), system.layout.node_count);
        int full = 0;
        for (std::size_t i = 0; i < bundles.size(); ++i) {
            const auto out = system.infer(bundles[i]);
            scores.set_row(static_cast<int>(i), out.probabilities.data);
            truths.set_row(static_cast<int>(i), system.truth_row(bundles[i]).data);
            const std::set<int> active(out.active.begin(), out.active.end());
            full += std::includes(active.begin(), active.end(), fixpoints[i].begin(),
                                  fixpoints[i].end());
        }
        row.full_expansion_fraction = bundles.empty() ? 0.0 : static_cast<double>(full) / bundles.size();
        row.mean_ap = mean_ap(scores, truths);
        rows.push_back(row);
    }
    system.gsnn_cfg = original;
    return rows;
}

std::vector<ComponentsRow> components_ablation(const System& base, const BasePrep& prep,
                                               const std::vector<FeatureBundle>& eval_split,
                                               const FinetuneSchedule& schedule, int sme_count,
                                               std::uint64_t seed) {
    struct RowSpec {
        std::string label;
        bool tune_gsnn;
        bool use_relate;
        bool mdes;
    };
    const RowSpec specs[4] = {
        {"classifier-only", false, false, false},
        {"relate", false, true, false},
        {"relate+gsnn", true, true, false},
        {"relate+gsnn+mdes", true, true, true},
    };

    std::vector<ComponentsRow> rows;
    for (const RowSpec& spec : specs) {
        System sys = base;
        AddConceptOptions options;
        options.use_relate = spec.use_relate;
        options.tune_gsnn = spec.tune_gsnn;
        options.forced_activation = spec.tune_gsnn;
        options.curation = spec.mdes ? AddConceptOptions::Curation::Mdes
                                     : AddConceptOptions::Curation::Random;
        options.evaluate = false;
        options.seed = seed;
        std::vector<int> novel_ids;
        for (const std::string& concept : prep.heldout) {
            SmeSubmission sub =
                make_submission(prep.world, concept, prep.sme_pools.at(concept), sme_count);
            const auto report =
                add_concept(sys, sub, schedule, prep.train, eval_split, options);
            novel_ids.push_back(report.node_id);
        }
        const SplitEval eval = score_split(sys, eval_split);
        ComponentsRow row;
        row.label = spec.label;
        row.tune_gsnn = spec.tune_gsnn;
        row.use_relate = spec.use_relate;
        row.mdes = spec.mdes;
        row.all_top1 = top_k(eval.scores, eval.truths, 1);
        row.all_top5 = top_k(eval.scores, eval.truths, 5);
        row.all_map = mean_ap(eval.scores, eval.truths);
        Tensor2 novel_scores(eval.scores.rows, static_cast<int>(novel_ids.size()));
        Tensor2 novel_truths(eval.scores.rows, static_cast<int>(novel_ids.size()));
        for (int i = 0; i < eval.scores.rows; ++i)
            for (std::size_t j = 0; j < novel_ids.size(); ++j) {
                novel_scores.at(i, static_cast<int>(j)) = eval.scores.at(i, novel_ids[j]);
                novel_truths.at(i, static_cast<int>(j)) = eval.truths.at(i, novel_ids[j]);
            }
        row.novel_top1 = top_k(novel_scores, novel_truths, 1);
        row.novel_top5 = top_k(novel_scores, novel_truths, 5);
        row.novel_map = mean_ap(novel_scores, novel_truths);
        rows.push_back(row);
    }
    return rows;
}

} // namespace nscr
