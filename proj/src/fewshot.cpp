#include "nscr/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "nscr/error.hpp"
#include "nscr/metrics.hpp"
#include "nscr/rng.hpp"

namespace nscr {

void SmeSubmission::validate() const {
    if (name.empty()) throw DataError("submission needs a concept name");
    if (bundles.empty()) throw DataError("empty submission: at least one bundle required");
    if (embedding.empty()) throw DataError("submission needs a word embedding");
    for (const FeatureBundle& b : bundles)
        if (!b.patches)
            throw DataError("submission bundle " + std::to_string(b.id) + " carries no patches");
}

void FinetuneSchedule::validate() const {
    if (stage1_epochs < 1 || stage2_epochs < 1) throw ConfigError("stage epochs must be >= 1");
    if (base_learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (!(stage2_propagation_lr_factor > 0.0 && stage2_propagation_lr_factor <= 1.0))
        throw ConfigError("stage-two propagation factor must lie in (0,1]");
    if (augment_per_bundle < 0) throw ConfigError("augment count must be >= 0");
    if (noise_scale < 0.0) throw ConfigError("noise scale must be >= 0");
    if (!(curated_fraction > 0.0 && curated_fraction <= 1.0))
        throw ConfigError("curated fraction must lie in (0,1]");
}

NoiseStats noise_stats_for(const std::vector<FeatureBundle>& bundles) {
    NoiseStats stats;
    if (bundles.empty()) return stats;
    const std::size_t ew = bundles[0].e_image.size();
    stats.e_image_sd.assign(ew, 0.0);
    std::vector<double> mean(ew, 0.0);
    for (const auto& b : bundles)
        for (std::size_t j = 0; j < ew; ++j) mean[j] += b.e_image[j];
    for (auto& m : mean) m /= static_cast<double>(bundles.size());
    for (const auto& b : bundles)
        for (std::size_t j = 0; j < ew; ++j) {
            const double d = b.e_image[j] - mean[j];
            stats.e_image_sd[j] += d * d;
        }
    for (auto& s : stats.e_image_sd) s = std::sqrt(s / static_cast<double>(bundles.size()));

    int pw = 0;
    for (const auto& b : bundles)
        if (b.patches) pw = b.patches->cols;
    if (pw > 0) {
        stats.patch_sd.assign(static_cast<std::size_t>(pw), 0.0);
        std::vector<double> pmean(static_cast<std::size_t>(pw), 0.0);
        int rows = 0;
        for (const auto& b : bundles) {
            if (!b.patches) continue;
            for (int i = 0; i < b.patches->rows; ++i)
                for (int j = 0; j < pw; ++j) pmean[static_cast<std::size_t>(j)] += b.patches->at(i, j);
            rows += b.patches->rows;
        }
        if (rows > 0) {
            for (auto& m : pmean) m /= rows;
            for (const auto& b : bundles) {
                if (!b.patches) continue;
                for (int i = 0; i < b.patches->rows; ++i)
                    for (int j = 0; j < pw; ++j) {
                        const double d = b.patches->at(i, j) - pmean[static_cast<std::size_t>(j)];
                        stats.patch_sd[static_cast<std::size_t>(j)] += d * d;
                    }
            }
            for (auto& s : stats.patch_sd) s = std::sqrt(s / rows);
        }
    }
    return stats;
}

std::vector<FeatureBundle> augment(const FeatureBundle& bundle, int n, double noise_scale,
                                   Rng& rng, const NoiseStats* stats) {
    if (n < 0) throw ConfigError("augment count must be >= 0");
    std::vector<FeatureBundle> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        FeatureBundle copy = bundle;
        for (std::size_t j = 0; j < copy.e_image.size(); ++j) {
            const double sd =
                stats && j < stats->e_image_sd.size() ? stats->e_image_sd[j] : 1.0;
            copy.e_image[j] += noise_scale * sd * rng.gaussian();
        }
        if (copy.patches) {
            for (int i = 0; i < copy.patches->rows; ++i)
                for (int j = 0; j < copy.patches->cols; ++j) {
                    const double sd = stats && static_cast<std::size_t>(j) < stats->patch_sd.size()
                                          ? stats->patch_sd[static_cast<std::size_t>(j)]
                                          : 1.0;
                    copy.patches->at(i, j) += noise_scale * sd * rng.gaussian();
                }
        }
        if (copy.detections.size() >= 2 && rng.bernoulli(0.3)) {
            const auto drop = rng.below(copy.detections.size());
            copy.detections.erase(copy.detections.begin() + static_cast<std::ptrdiff_t>(drop));
        }
        out.push_back(std::move(copy));
    }
    return out;
}

MdesResult mdes_core(const std::vector<std::pair<int, std::vector<int>>>& expansions,
                     int node_count) {
    MdesResult result;
    result.bins.emplace_back(0, node_count);
    auto all_singletons = [&]() {
        for (const auto& [lo, hi] : result.bins)
            if (hi - lo > 1) return false;
        return true;
    };
    for (const auto& [bundle_id, nodes] : expansions) {
        if (all_singletons()) break;
        // Largest bin; ties break toward the lowest start.
        std::size_t largest = 0;
        for (std::size_t i = 1; i < result.bins.size(); ++i)
            if (result.bins[i].second - result.bins[i].first >
                result.bins[largest].second - result.bins[largest].first)
                largest = i;
        const auto [lo, hi] = result.bins[largest];
        std::vector<int> cuts;
        for (int x : nodes)
            if (x > lo && x < hi) cuts.push_back(x);
        if (cuts.empty()) continue;
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        result.selected.push_back(bundle_id);
        std::vector<std::pair<int, int>> pieces;
        int start = lo;
        for (int c : cuts) {
            pieces.emplace_back(start, c);
            start = c;
        }
        pieces.emplace_back(start, hi);
        result.bins.erase(result.bins.begin() + static_cast<std::ptrdiff_t>(largest));
        result.bins.insert(result.bins.end(), pieces.begin(), pieces.end());
        std::sort(result.bins.begin(), result.bins.end());
    }
    return result;
}

CuratedDataset mdes_select(System& system, const std::vector<FeatureBundle>& base,
                           double target_fraction) {
    std::vector<std::pair<int, std::vector<int>>> expansions;
    expansions.reserve(base.size());
    for (const FeatureBundle& b : base) {
        auto out = system.infer(b);
        std::sort(out.active.begin(), out.active.end());
        expansions.emplace_back(b.id, std::move(out.active));
    }
    const MdesResult result = mdes_core(expansions, system.graph.node_count());
    CuratedDataset curated;
    curated.bundle_ids = result.selected;
    curated.target_fraction = target_fraction;
    return curated;
}

namespace {

struct StreamSample {
    FeatureBundle bundle;
    int novel_id = -1; // owning submission's node id; -1 for curated samples
    bool sme = false;
};

std::vector<StreamSample> build_stream(System& system,
                                       const std::vector<std::pair<int, const SmeSubmission*>>& subs,
                                       const FinetuneSchedule& schedule,
                                       const std::vector<FeatureBundle>& base_train,
                                       const std::vector<int>& curated_ids, Rng& rng) {
    std::vector<StreamSample> stream;
    for (const auto& [novel_id, submission] : subs) {
        const NoiseStats stats = noise_stats_for(submission->bundles);
        Rng arng = rng.fork("augment", static_cast<std::uint64_t>(novel_id));
        for (const FeatureBundle& original : submission->bundles) {
            FeatureBundle labeled = original;
            if (!labeled.has_label(submission->name)) {
                labeled.labels.push_back(submission->name);
                labeled.canonicalize();
            }
            stream.push_back({labeled, novel_id, true});
            for (FeatureBundle& jittered :
                 augment(labeled, schedule.augment_per_bundle, schedule.noise_scale, arng, &stats))
                stream.push_back({std::move(jittered), novel_id, true});
        }
    }
    std::set<int> wanted(curated_ids.begin(), curated_ids.end());
    for (const FeatureBundle& b : base_train)
        if (wanted.count(b.id)) stream.push_back({b, -1, false});
    (void)system;
    Rng srng = rng.fork("interleave");
    srng.shuffle(stream);
    return stream;
}

std::vector<double> run_stage(System& system, std::vector<StreamSample>& stream,
                              const FinetuneSchedule& schedule, int epochs,
                              SgdOptimizer& optimizer,
                              const std::vector<SgdOptimizer::ParamSel>& selection, bool stage_two,
                              const std::vector<int>& novel_ids, bool forced_activation,
                              Rng& rng) {
    std::vector<double> losses;
    std::vector<int> order(stream.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng erng = rng.fork(stage_two ? "stage2" : "stage1", static_cast<std::uint64_t>(epoch));
        erng.shuffle(order);
        double total = 0.0;
        for (int idx : order) {
            StreamSample& sample = stream[static_cast<std::size_t>(idx)];
            Tape tape(&system.store);
            SampleLossOptions opts;
            if (stage_two) {
                opts.restrict_outputs = novel_ids;
                opts.importance_weight = 0.0;
            } else {
                opts.importance_weight = schedule.importance_loss_weight;
            }
            if (sample.sme && forced_activation) {
                opts.forced_active = {sample.novel_id};
                if (!stage_two) opts.probe_positive = {sample.novel_id};
            }
            const Value loss = sample_loss(tape, system, sample.bundle, opts);
            const double value = loss.scalar();
            if (!std::isfinite(value)) throw NumericError("non-finite fine-tuning loss");
            total += value;
            tape.backward(loss);
            optimizer.step(system.store, selection);
            system.store.zero_grads();
        }
        losses.push_back(stream.empty() ? 0.0 : total / static_cast<double>(stream.size()));
    }
    return losses;
}

std::vector<int> existing_columns(int count) {
    std::vector<int> ids(static_cast<std::size_t>(count));
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

double initial_bias_for(System& system, int novel_id, std::vector<std::string>& warnings,
                        bool expect_edges) {
    bool used_fallback = false;
    const double bias = initial_node_bias(system, novel_id, &used_fallback);
    if (used_fallback && expect_edges)
        warnings.push_back("no edges proposed for '" + system.graph.node(novel_id).name +
                           "'; bias falls back to the global mean");
    return bias;
}

void set_node_bias(System& system, int id, double bias) {
    system.store.value("gsnn.node_bias").at(id, 0) = bias;
    system.graph.node_mut(id).bias = bias;
}

std::vector<EdgeProposal> propose_for(System& system, const SmeSubmission& submission,
                                      int novel_id) {
    std::vector<const FeatureBundle*> bundles;
    std::vector<FeatureBundle> sanitized;
    std::vector<std::vector<int>> candidates;
    sanitized.reserve(submission.bundles.size());
    for (const FeatureBundle& b : submission.bundles) sanitized.push_back(system.sanitize(b));
    for (const FeatureBundle& b : sanitized) {
        auto out = system.infer(b);
        bundles.push_back(&b);
        candidates.push_back(out.active);
    }
    return relate::propose_edges(system.store, system.graph, novel_id, bundles, candidates,
                                 system.relate_cfg);
}

std::vector<int> pick_curated(System& system, const FinetuneSchedule& schedule,
                              const std::vector<FeatureBundle>& base_train,
                              const AddConceptOptions& options, Rng& rng) {
    switch (options.curation) {
    case AddConceptOptions::Curation::None: return {};
    case AddConceptOptions::Curation::Mdes:
        return mdes_select(system, base_train, schedule.curated_fraction).bundle_ids;
    case AddConceptOptions::Curation::Random: {
        const int size = options.curated_size >= 0
                             ? options.curated_size
                             : static_cast<int>(std::llround(schedule.curated_fraction *
                                                             static_cast<double>(base_train.size())));
        std::vector<int> ids;
        ids.reserve(base_train.size());
        for (const FeatureBundle& b : base_train) ids.push_back(b.id);
        Rng crng = rng.fork("curated_random");
        crng.shuffle(ids);
        ids.resize(std::min<std::size_t>(static_cast<std::size_t>(std::max(size, 0)), ids.size()));
        std::sort(ids.begin(), ids.end());
        return ids;
    }
    }
    return {};
}

} // namespace

AddConceptReport add_concept(System& system, const SmeSubmission& submission,
                             const FinetuneSchedule& schedule,
                             const std::vector<FeatureBundle>& base_train,
                             const std::vector<FeatureBundle>& eval_split,
                             const AddConceptOptions& options) {
    std::vector<SmeSubmission> one{submission};
    auto report = add_concepts(system, one, AdditionStrategy::OneByOne, schedule, base_train,
                               eval_split, options);
    return std::move(report.per_concept.front());
}

namespace {

AddConceptReport add_one(System& system, const SmeSubmission& submission,
                         const FinetuneSchedule& schedule,
                         const std::vector<FeatureBundle>& base_train,
                         const std::vector<FeatureBundle>& eval_split,
                         const AddConceptOptions& options) {
    submission.validate();
    schedule.validate();
    if (system.graph.has_name(submission.name))
        throw DataError("concept '" + submission.name + "' already present");
    if (static_cast<int>(submission.embedding.size()) != system.relate_cfg.word_width)
        throw DataError("submission embedding width does not match the relate config");

    AddConceptReport report;
    report.concept = submission.name;
    Rng rng(options.seed ^ fnv1a(submission.name));

    const int existing_count = system.layout.node_count;
    if (options.evaluate) {
        const SplitEval before = score_split(system, eval_split);
        report.before_existing_map =
            mean_ap_over(before.scores, before.truths, existing_columns(existing_count));
    }

    // (1) node insertion
    const int novel_id = system.add_node(submission.name, submission.type, submission.embedding,
                                         0.0);
    report.node_id = novel_id;

    // (2) relation proposal and commit
    if (options.use_relate) {
        report.committed_edges = propose_for(system, submission, novel_id);
        for (const EdgeProposal& e : report.committed_edges)
            system.graph.add_edge(e.source, e.target);
    }

    // (3) bias initialization: mean of adjacent biases, global mean fallback
    const double bias = initial_bias_for(system, novel_id, report.warnings, options.use_relate);
    set_node_bias(system, novel_id, bias);
    report.initial_bias = bias;

    // (4) few-shot stream: augmented submission bundles + curated base data
    report.curated_ids = pick_curated(system, schedule, base_train, options, rng);
    std::vector<std::pair<int, const SmeSubmission*>> subs{{novel_id, &submission}};
    auto stream = build_stream(system, subs, schedule, base_train, report.curated_ids, rng);

    // (5) stage one: propagation weights + the novel bias; classifier frozen
    if (options.tune_gsnn) {
        SgdOptimizer opt(schedule.base_learning_rate, schedule.momentum);
        auto selection = select_prefix(system.store, "gsnn.prop");
        selection.push_back({"gsnn.node_bias", 1.0, novel_id, novel_id + 1});
        report.stage1_losses =
            run_stage(system, stream, schedule, schedule.stage1_epochs, opt, selection, false,
                      {novel_id}, options.forced_activation, rng);
    }

    // (6) stage two: extend the classifier, train the new neuron only;
    // propagation continues at a reduced rate, the bias freezes
    Rng ext_rng = rng.fork("extend");
    const int neuron_id = classifier::extend_with_neuron(system.store, system.layout, ext_rng);
    if (neuron_id != novel_id) throw NumericError("classifier extension out of sync with graph");
    {
        SgdOptimizer opt(schedule.base_learning_rate, schedule.momentum);
        std::vector<SgdOptimizer::ParamSel> selection;
        selection.push_back({"cls.W", 1.0, novel_id, novel_id + 1, -1, -1});
        selection.push_back({"cls.b", 1.0, -1, -1, novel_id, novel_id + 1});
        if (options.tune_gsnn) {
            for (auto sel :
                 select_prefix(system.store, "gsnn.prop", schedule.stage2_propagation_lr_factor))
                selection.push_back(sel);
        }
        report.stage2_losses =
            run_stage(system, stream, schedule, schedule.stage2_epochs, opt, selection, true,
                      {novel_id}, options.forced_activation, rng);
    }
    gsnn::write_biases_to_graph(system.store, system.graph);

    // (7) report metrics
    if (options.evaluate) {
        const SplitEval after = score_split(system, eval_split);
        report.after_existing_map =
            mean_ap_over(after.scores, after.truths, existing_columns(existing_count));
        report.novel_ap = mean_ap_over(after.scores, after.truths, {novel_id});
    }
    return report;
}

AddConceptsReport add_all_at_once(System& system, const std::vector<SmeSubmission>& submissions,
                                  const FinetuneSchedule& schedule,
                                  const std::vector<FeatureBundle>& base_train,
                                  const std::vector<FeatureBundle>& eval_split,
                                  const AddConceptOptions& options) {
    AddConceptsReport out;
    Rng rng(options.seed ^ fnv1a("all_at_once"));
    const int existing_count = system.layout.node_count;

    double before_map = -1.0;
    if (options.evaluate) {
        const SplitEval before = score_split(system, eval_split);
        before_map = mean_ap_over(before.scores, before.truths, existing_columns(existing_count));
    }

    // Commit all nodes first; candidate pools are computed on the pristine
    // post-insertion system so submission order cannot matter.
    std::vector<int> novel_ids;
    for (const SmeSubmission& s : submissions) {
        s.validate();
        if (system.graph.has_name(s.name)) throw DataError("concept '" + s.name + "' already present");
        novel_ids.push_back(system.add_node(s.name, s.type, s.embedding, 0.0));
        out.per_concept.push_back({});
        out.per_concept.back().concept = s.name;
        out.per_concept.back().node_id = novel_ids.back();
        out.per_concept.back().before_existing_map = before_map;
    }
    if (options.use_relate) {
        std::vector<std::vector<EdgeProposal>> proposals;
        for (std::size_t i = 0; i < submissions.size(); ++i)
            proposals.push_back(propose_for(system, submissions[i], novel_ids[i]));
        for (std::size_t i = 0; i < submissions.size(); ++i) {
            for (const EdgeProposal& e : proposals[i]) system.graph.add_edge(e.source, e.target);
            out.per_concept[i].committed_edges = std::move(proposals[i]);
        }
    }
    for (std::size_t i = 0; i < submissions.size(); ++i) {
        const double bias = initial_bias_for(system, novel_ids[i], out.per_concept[i].warnings,
                                             options.use_relate);
        set_node_bias(system, novel_ids[i], bias);
        out.per_concept[i].initial_bias = bias;
    }

    const std::vector<int> curated = pick_curated(system, schedule, base_train, options, rng);
    std::vector<std::pair<int, const SmeSubmission*>> subs;
    for (std::size_t i = 0; i < submissions.size(); ++i)
        subs.emplace_back(novel_ids[i], &submissions[i]);
    auto stream = build_stream(system, subs, schedule, base_train, curated, rng);
    for (auto& r : out.per_concept) r.curated_ids = curated;

    if (options.tune_gsnn) {
        SgdOptimizer opt(schedule.base_learning_rate, schedule.momentum);
        auto selection = select_prefix(system.store, "gsnn.prop");
        for (int id : novel_ids) selection.push_back({"gsnn.node_bias", 1.0, id, id + 1});
        const auto losses = run_stage(system, stream, schedule, schedule.stage1_epochs, opt,
                                      selection, false, novel_ids, options.forced_activation, rng);
        for (auto& r : out.per_concept) r.stage1_losses = losses;
    }

    Rng ext_rng = rng.fork("extend");
    for (std::size_t i = 0; i < novel_ids.size(); ++i) {
        const int neuron = classifier::extend_with_neuron(system.store, system.layout, ext_rng);
        if (neuron != novel_ids[i]) throw NumericError("classifier extension out of sync");
    }
    {
        SgdOptimizer opt(schedule.base_learning_rate, schedule.momentum);
        std::vector<SgdOptimizer::ParamSel> selection;
        for (int id : novel_ids) {
            selection.push_back({"cls.W", 1.0, id, id + 1, -1, -1});
            selection.push_back({"cls.b", 1.0, -1, -1, id, id + 1});
        }
        if (options.tune_gsnn) {
            for (auto sel :
                 select_prefix(system.store, "gsnn.prop", schedule.stage2_propagation_lr_factor))
                selection.push_back(sel);
        }
        const auto losses = run_stage(system, stream, schedule, schedule.stage2_epochs, opt,
                                      selection, true, novel_ids, options.forced_activation, rng);
        for (auto& r : out.per_concept) r.stage2_losses = losses;
    }
    gsnn::write_biases_to_graph(system.store, system.graph);

    if (options.evaluate) {
        const SplitEval after = score_split(system, eval_split);
        const double after_map =
            mean_ap_over(after.scores, after.truths, existing_columns(existing_count));
        for (std::size_t i = 0; i < novel_ids.size(); ++i) {
            out.per_concept[i].after_existing_map = after_map;
            out.per_concept[i].novel_ap =
                mean_ap_over(after.scores, after.truths, {novel_ids[i]});
        }
        out.aggregate_novel_ap = mean_ap_over(after.scores, after.truths, novel_ids);
    }
    return out;
}

} // namespace

AddConceptsReport add_concepts(System& system, const std::vector<SmeSubmission>& submissions,
                               AdditionStrategy strategy, const FinetuneSchedule& schedule,
                               const std::vector<FeatureBundle>& base_train,
                               const std::vector<FeatureBundle>& eval_split,
                               const AddConceptOptions& options) {
    if (submissions.empty()) throw DataError("no submissions given");
    std::set<std::string> names;
    for (const SmeSubmission& s : submissions)
        if (!names.insert(s.name).second)
            throw DataError("duplicate concept name in submissions: '" + s.name + "'");

    // A single submission degenerates to the same transaction either way.
    if (strategy == AdditionStrategy::AllAtOnce && submissions.size() > 1)
        return add_all_at_once(system, submissions, schedule, base_train, eval_split, options);

    AddConceptsReport out;
    for (const SmeSubmission& s : submissions)
        out.per_concept.push_back(add_one(system, s, schedule, base_train, eval_split, options));
    if (options.evaluate) {
        std::vector<int> novel_ids;
        for (const AddConceptReport& r : out.per_concept) novel_ids.push_back(r.node_id);
        const SplitEval after = score_split(system, eval_split);
        out.aggregate_novel_ap = mean_ap_over(after.scores, after.truths, novel_ids);
    }
    return out;
}

} // namespace nscr
