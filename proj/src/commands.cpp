#include "nscr/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "nscr/error.hpp"
#include "nscr/experiments.hpp"
#include "nscr/rng.hpp"
#include "nscr/textio.hpp"

namespace nscr {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::string file_header(const RunConfig& cfg, const std::string& command) {
    return "# nscr " + command + " v1\n# config_hash " + hex64(cfg.config_hash()) + " seed " +
           fmt_int(static_cast<long long>(cfg.seed)) + "\n";
}

// One mutating command per output directory.
class DirLock {
public:
    explicit DirLock(const std::string& dir) : path_(fs::path(dir) / ".nscr.lock") {
        fs::create_directories(dir);
        if (fs::exists(path_))
            throw DataError("output directory is locked by another run: " + path_.string());
        write_text_file(path_.string(), "lock\n");
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

System load_system(const RunConfig& cfg) {
    System sys = System::load(cfg.paths.system_path(), cfg.gsnn, cfg.relate);
    sys.gsnn_cfg.validate();
    return sys;
}

struct LoadedWorld {
    World world;
};

World load_world_files(const RunConfig& cfg) {
    World world;
    world.graph = KnowledgeGraph::load(cfg.paths.graph_path());
    world.train = load_bundles(cfg.paths.bundles_path("train"));
    world.val = load_bundles(cfg.paths.bundles_path("val"));
    world.test = load_bundles(cfg.paths.bundles_path("test"));
    world.embeddings = deserialize_embeddings(read_text_file(cfg.paths.embeddings_path()));
    validate_bundles(world.train, world.graph);
    validate_bundles(world.val, world.graph);
    validate_bundles(world.test, world.graph);
    return world;
}

BasePrep load_prep(const RunConfig& cfg) {
    World world = load_world_files(cfg);
    if (cfg.heldout.empty()) throw ConfigError("this command needs a heldout list");
    return prepare_base(std::move(world), cfg.heldout, cfg.gsnn, cfg.relate, cfg.seed);
}

const FeatureBundle& find_bundle(const World& world, int id) {
    for (const auto* split : {&world.train, &world.val, &world.test})
        for (const FeatureBundle& b : *split)
            if (b.id == id) return b;
    throw DataError("unknown bundle id " + std::to_string(id));
}

std::string fmt_pct(double v) { return fmt_double(v * 100.0); }

} // namespace

void cmd_synth_gen(const RunConfig& cfg) {
    cfg.validate();
    DirLock lock(cfg.paths.out_dir);
    const World world = generate_world(cfg.world);
    world.graph.save(cfg.paths.graph_path());
    save_bundles(cfg.paths.bundles_path("train"), world.train);
    save_bundles(cfg.paths.bundles_path("val"), world.val);
    save_bundles(cfg.paths.bundles_path("test"), world.test);
    write_text_file(cfg.paths.embeddings_path(),
                    file_header(cfg, "synth-gen") + serialize_embeddings(world.embeddings));
    // Re-read everything: the generator must produce files that pass the
    // same validation applied to hand-written inputs.
    const World reread = load_world_files(cfg);
    if (!(reread.graph == world.graph)) throw NumericError("graph round-trip mismatch");
}

void cmd_train(const RunConfig& cfg, bool resume) {
    cfg.validate();
    DirLock lock(cfg.paths.out_dir);
    World world = load_world_files(cfg);

    System sys = [&] {
        if (cfg.heldout.empty())
            return System::create(world.graph, cfg.gsnn, cfg.relate, cfg.seed);
        KnowledgeGraph reduced = world.graph;
        for (const std::string& name : cfg.heldout) reduced.remove_node(reduced.id_of(name));
        return System::create(std::move(reduced), cfg.gsnn, cfg.relate, cfg.seed);
    }();

    std::vector<FeatureBundle> train;
    for (const FeatureBundle& b : world.train) {
        bool excluded = false;
        for (const std::string& name : cfg.heldout)
            if (b.has_label(name)) excluded = true;
        if (!excluded) train.push_back(b);
    }

    const std::string checkpoint_path =
        (fs::path(cfg.paths.out_dir) / "checkpoint.bin").string();
    SgdOptimizer optimizer(cfg.train.learning_rate, cfg.train.momentum);
    int start_epoch = 0;
    if (resume) {
        start_epoch = load_checkpoint(checkpoint_path, sys.store, optimizer);
        gsnn::write_biases_to_graph(sys.store, sys.graph);
    }

    const TrainReport base_report =
        train_base(sys, train, cfg.train, cfg.seed, start_epoch, &optimizer);
    save_checkpoint(checkpoint_path, cfg.train.epochs, sys.store, optimizer, cfg.config_hash(),
                    cfg.seed);
    const TrainReport relate_report = train_relate(sys, train, cfg.train, cfg.seed);

    sys.save(cfg.paths.system_path(), cfg.config_hash(), cfg.seed);

    std::ostringstream report;
    report << file_header(cfg, "train");
    report << "train_report v1\n";
    report << "bundles " << train.size() << "\n";
    report << "epoch_loss";
    for (double l : base_report.epoch_losses) report << " " << fmt_double(l);
    report << "\nrelate_epoch_loss";
    for (double l : relate_report.relate_epoch_losses) report << " " << fmt_double(l);
    report << "\n";
    write_text_file((fs::path(cfg.paths.out_dir) / "train_report.txt").string(), report.str());
}

void cmd_infer(const RunConfig& cfg, int bundle_id) {
    cfg.validate();
    World world = load_world_files(cfg);
    System sys = load_system(cfg);
    const FeatureBundle& bundle = find_bundle(world, bundle_id);
    const auto out = sys.infer(bundle);

    std::vector<std::pair<std::string, double>> predictions;
    for (int i = 0; i < sys.layout.node_count; ++i)
        predictions.emplace_back(sys.graph.node(i).name,
                                 out.probabilities.data[static_cast<std::size_t>(i)]);
    std::sort(predictions.begin(), predictions.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::ostringstream pred;
    pred << file_header(cfg, "infer") << "predictions v1\nbundle " << bundle_id << "\n";
    for (const auto& [name, p] : predictions)
        pred << quote_name(name) << " " << fmt_double(p) << "\n";
    const std::string tag = "infer_" + std::to_string(bundle_id);
    write_text_file((fs::path(cfg.paths.out_dir) / (tag + "_predictions.txt")).string(),
                    pred.str());

    std::ostringstream trace;
    trace << file_header(cfg, "infer") << "trace v1\nbundle " << bundle_id << "\n";
    for (int id : out.trace.active) {
        trace << "node " << quote_name(sys.graph.node(id).name) << " step "
              << out.trace.step_of.at(id);
        std::vector<int> parents;
        for (const PartialGraph::Edge& e : out.trace.edges)
            if (e.child == id) parents.push_back(e.parent);
        std::sort(parents.begin(), parents.end());
        parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
        if (!parents.empty()) {
            trace << " parents";
            for (int p : parents) trace << " " << quote_name(sys.graph.node(p).name);
        }
        trace << "\n";
    }
    write_text_file((fs::path(cfg.paths.out_dir) / (tag + "_trace.txt")).string(), trace.str());
}

SmeSubmission load_submission(const std::string& path) {
    SmeSubmission sub;
    std::string bundles_path;
    std::vector<int> ids;
    std::istringstream in(read_text_file(path));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize_line(line);
        if (tok.empty()) continue;
        if (tok[0] == "submission") continue;
        if (tok[0] == "concept") {
            if (tok.size() != 4 || tok[2] != "type")
                throw DataError("bad concept record in " + path);
            sub.name = tok[1];
            sub.type = node_type_from_name(tok[3]);
        } else if (tok[0] == "embedding") {
            for (std::size_t i = 1; i < tok.size(); ++i)
                sub.embedding.push_back(parse_double(tok[i]));
        } else if (tok[0] == "bundles") {
            if (tok.size() < 4 || tok[2] != "ids")
                throw DataError("bad bundles record in " + path);
            bundles_path = tok[1];
            for (std::size_t i = 3; i < tok.size(); ++i)
                ids.push_back(static_cast<int>(parse_int(tok[i])));
        } else {
            throw DataError("submission parse error at line " + std::to_string(line_no));
        }
    }
    if (bundles_path.empty() || ids.empty())
        throw DataError("submission missing bundle references: " + path);
    const auto all = load_bundles(bundles_path);
    for (int id : ids) {
        bool found = false;
        for (const FeatureBundle& b : all)
            if (b.id == id) {
                sub.bundles.push_back(b);
                found = true;
            }
        if (!found)
            throw DataError("submission references missing bundle id " + std::to_string(id));
    }
    sub.validate();
    return sub;
}

void save_submission(const std::string& path, const SmeSubmission& submission,
                     const std::string& bundles_path, const std::vector<int>& bundle_ids) {
    std::ostringstream out;
    out << "submission v1\n";
    out << "concept " << quote_name(submission.name) << " type "
        << node_type_name(submission.type) << "\n";
    out << "embedding";
    for (double v : submission.embedding) out << " " << fmt_double(v);
    out << "\nbundles " << quote_name(bundles_path) << " ids";
    for (int id : bundle_ids) out << " " << id;
    out << "\n";
    write_text_file(path, out.str());
}

void cmd_add_concept(const RunConfig& cfg, const std::string& submission_path) {
    cfg.validate();
    DirLock lock(cfg.paths.out_dir);
    World world = load_world_files(cfg);
    System sys = load_system(cfg);
    SmeSubmission sub = load_submission(submission_path);

    AddConceptOptions options;
    options.seed = cfg.seed;
    const auto report = add_concept(sys, sub, cfg.schedule, world.train, world.val, options);

    sys.save((fs::path(cfg.paths.out_dir) / "system_updated").string(), cfg.config_hash(),
             cfg.seed);

    std::ostringstream out;
    out << file_header(cfg, "add-concept") << "addconcept v1\n";
    out << "concept " << quote_name(report.concept) << " node " << report.node_id << "\n";
    for (const EdgeProposal& e : report.committed_edges)
        out << "edge " << quote_name(sys.graph.node(e.source).name) << " -> "
            << quote_name(sys.graph.node(e.target).name) << " p " << fmt_double(e.likelihood)
            << "\n";
    out << "initial_bias " << fmt_double(report.initial_bias) << "\n";
    out << "curated";
    for (int id : report.curated_ids) out << " " << id;
    out << "\nstage1_loss";
    for (double l : report.stage1_losses) out << " " << fmt_double(l);
    out << "\nstage2_loss";
    for (double l : report.stage2_losses) out << " " << fmt_double(l);
    out << "\nbefore_existing_map " << fmt_double(report.before_existing_map)
        << "\nafter_existing_map " << fmt_double(report.after_existing_map) << "\nnovel_ap "
        << fmt_double(report.novel_ap) << "\n";
    for (const std::string& w : report.warnings) out << "warning " << quote_name(w) << "\n";
    write_text_file((fs::path(cfg.paths.out_dir) / "addconcept_report.txt").string(), out.str());
}

void cmd_mdes(const RunConfig& cfg) {
    cfg.validate();
    World world = load_world_files(cfg);
    System sys = load_system(cfg);
    const CuratedDataset curated =
        mdes_select(sys, world.train, cfg.schedule.curated_fraction);
    std::ostringstream out;
    out << file_header(cfg, "mdes") << "mdes v1\n";
    out << "base_size " << world.train.size() << " selected " << curated.bundle_ids.size()
        << " target_fraction " << fmt_double(curated.target_fraction) << "\n";
    out << "ids";
    for (int id : curated.bundle_ids) out << " " << id;
    out << "\n";
    write_text_file((fs::path(cfg.paths.out_dir) / "mdes_selection.txt").string(), out.str());
}

void cmd_eval(const RunConfig& cfg, const std::string& split) {
    cfg.validate();
    World world = load_world_files(cfg);
    System sys = load_system(cfg);
    const auto& bundles = world.split(split);
    const SplitEval eval = score_split(sys, bundles);
    const EvalReport report = evaluate(eval.scores, eval.truths, sys.graph, cfg.k_list);

    std::ostringstream out;
    out << file_header(cfg, "eval") << "eval v1\nsplit " << split << "\n";
    out << "mean_ap " << fmt_double(report.mean_ap) << "\nmacro_ap "
        << fmt_double(report.macro_ap) << "\n";
    for (const auto& [k, v] : report.top_k) out << "top_" << k << " " << fmt_double(v) << "\n";
    for (const auto& [name, ap] : report.per_class_ap)
        out << "ap " << quote_name(name) << " " << fmt_double(ap) << "\n";
    for (const auto& name : report.undefined_classes)
        out << "ap_undefined " << quote_name(name) << "\n";
    write_text_file((fs::path(cfg.paths.out_dir) / ("eval_" + split + ".txt")).string(),
                    out.str());
}

namespace {

void ablate_t(const RunConfig& cfg, std::ostringstream& out) {
    World world = load_world_files(cfg);
    System sys = load_system(cfg);
    const auto rows = t_ablation(sys, world.test, cfg.ablate_steps);
    out << "columns T expansion_pct mean_ap\n";
    for (const auto& r : rows)
        out << "row " << r.steps << " " << fmt_pct(r.full_expansion_fraction) << " "
            << fmt_double(r.mean_ap) << "\n";
}

void ablate_components(const RunConfig& cfg, std::ostringstream& out) {
    BasePrep prep = load_prep(cfg);
    System sys = load_system(cfg);
    const auto rows = components_ablation(sys, prep, prep.world.test, cfg.schedule,
                                          cfg.sme_bundle_count, cfg.seed);
    out << "columns GSNN CLF RelaTe MDES all_T1 all_T5 all_mAP novel_T1 novel_T5 novel_mAP\n";
    for (const auto& r : rows) {
        out << "row " << (r.tune_gsnn ? "x" : "-") << " x " << (r.use_relate ? "x" : "-") << " "
            << (r.mdes ? "x" : "-") << " " << fmt_pct(r.all_top1) << " " << fmt_pct(r.all_top5)
            << " " << fmt_pct(r.all_map) << " " << fmt_pct(r.novel_top1) << " "
            << fmt_pct(r.novel_top5) << " " << fmt_pct(r.novel_map) << " # " << r.label << "\n";
    }
}

void ablate_strategy(const RunConfig& cfg, std::ostringstream& out) {
    BasePrep prep = load_prep(cfg);
    System trained = load_system(cfg);
    std::vector<SmeSubmission> subs;
    for (const std::string& concept : prep.heldout)
        subs.push_back(make_submission(prep.world, concept, prep.sme_pools.at(concept),
                                       cfg.sme_bundle_count));
    AddConceptOptions options;
    options.seed = cfg.seed;
    System one_sys = trained;
    const auto one = add_concepts(one_sys, subs, AdditionStrategy::OneByOne, cfg.schedule,
                                  prep.train, prep.world.test, options);
    System all_sys = trained;
    const auto all = add_concepts(all_sys, subs, AdditionStrategy::AllAtOnce, cfg.schedule,
                                  prep.train, prep.world.test, options);
    out << "columns strategy novel_macro_ap\n";
    out << "row one_by_one " << fmt_double(one.aggregate_novel_ap) << "\n";
    out << "row all_at_once " << fmt_double(all.aggregate_novel_ap) << "\n";
}

void ablate_robustness(const RunConfig& cfg, std::ostringstream& out) {
    World world = load_world_files(cfg);
    System sys = load_system(cfg);
    const auto node_probe = robustness_probe(sys, world.test, cfg.robustness_trials,
                                             ProbeVariant::Node, cfg.seed);
    const auto edge_probe = robustness_probe(sys, world.test, cfg.robustness_trials,
                                             ProbeVariant::Edge, cfg.seed);
    out << "columns variant trials ignored_pct removed_pct\n";
    out << "row node " << node_probe.trials << " " << fmt_pct(node_probe.ignored_fraction) << " "
        << fmt_pct(node_probe.removed_fraction) << "\n";
    out << "row edge " << edge_probe.trials << " " << fmt_pct(edge_probe.ignored_fraction) << " "
        << fmt_pct(edge_probe.removed_fraction) << "\n";
}

void ablate_restoration(const RunConfig& cfg, std::ostringstream& out) {
    BasePrep prep = load_prep(cfg);
    System trained = load_system(cfg);
    out << "columns concept truth_edges proposed restored_frac baseline_frac\n";
    for (const std::string& concept : prep.heldout) {
        const auto result =
            edge_restoration_experiment(trained, prep.world, concept, prep.sme_pools.at(concept),
                                        cfg.schedule, cfg.sme_bundle_count, cfg.seed);
        out << "row " << quote_name(concept) << " " << result.truth_edges << " "
            << result.proposed << " " << fmt_double(result.restored_fraction) << " "
            << fmt_double(result.baseline_fraction) << "\n";
    }
}

} // namespace

void cmd_ablate(const RunConfig& cfg, const std::string& which) {
    cfg.validate();
    std::ostringstream out;
    out << file_header(cfg, "ablate") << "ablate " << which << " v1\n";
    if (which == "T")
        ablate_t(cfg, out);
    else if (which == "components")
        ablate_components(cfg, out);
    else if (which == "strategy")
        ablate_strategy(cfg, out);
    else if (which == "robustness")
        ablate_robustness(cfg, out);
    else if (which == "restoration")
        ablate_restoration(cfg, out);
    else
        throw UsageError("unknown ablation: '" + which + "'");
    write_text_file((fs::path(cfg.paths.out_dir) / ("ablate_" + which + ".txt")).string(),
                    out.str());
}

} // namespace nscr
