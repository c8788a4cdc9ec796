#include "nscr/system.hpp"

#include <algorithm>
#include <filesystem>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"
#include "nscr/textio.hpp"

namespace nscr {

System System::create(KnowledgeGraph graph, const GsnnConfig& gsnn_cfg,
                      const RelateConfig& relate_cfg, std::uint64_t seed) {
    System sys;
    sys.graph = std::move(graph);
    sys.gsnn_cfg = gsnn_cfg;
    sys.relate_cfg = relate_cfg;
    sys.layout = SlotLayout{sys.graph.node_count(), gsnn_cfg.context_width, gsnn_cfg.image_width};
    Rng rng(seed);
    gsnn::register_params(sys.store, gsnn_cfg, sys.graph, rng);
    classifier::register_params(sys.store, sys.layout, rng);
    relate::register_params(sys.store, relate_cfg, rng);
    for (const ConceptNode& n : sys.graph.nodes())
        if (n.type == NodeType::Object) sys.detector_vocab.push_back(n.name);
    std::sort(sys.detector_vocab.begin(), sys.detector_vocab.end());
    return sys;
}

FeatureBundle System::sanitize(const FeatureBundle& bundle) const {
    FeatureBundle out = bundle;
    std::vector<std::string> kept;
    for (const std::string& d : out.detections)
        if (std::binary_search(detector_vocab.begin(), detector_vocab.end(), d) &&
            graph.has_name(d))
            kept.push_back(d);
    out.detections = std::move(kept);
    return out;
}

System::InferOutput System::infer(const FeatureBundle& bundle, const ExpandOptions& options) {
    const FeatureBundle clean = sanitize(bundle);
    Tape tape(&store);
    const Tensor2 e_image(1, gsnn_cfg.image_width, clean.e_image);
    auto expansion = gsnn::expand(tape, graph, gsnn_cfg, e_image, clean.detections, options);
    const Value input = classifier::assemble_input(tape, expansion.state, expansion.output,
                                                   e_image, clean.detections, graph, layout);
    const Value probs = classifier::classify(tape, input, layout);
    InferOutput out;
    out.probabilities = probs.val();
    out.trace = expansion.state.trace;
    out.active = expansion.state.active;
    return out;
}

int System::add_node(const std::string& name, NodeType type, std::vector<double> embedding,
                     double bias) {
    const int id = graph.add_node(name, type, std::move(embedding), bias);
    gsnn::append_node_bias(store, bias);
    return id;
}

std::vector<int> System::remove_node_everywhere(const std::string& name) {
    const int id = graph.id_of(name);
    const auto remap = graph.remove_node(id);
    gsnn::remap_node_bias(store, remap);
    classifier::remove_neurons(store, layout, remap);
    detector_vocab.erase(std::remove(detector_vocab.begin(), detector_vocab.end(), name),
                         detector_vocab.end());
    return remap;
}

Tensor2 System::truth_row(const FeatureBundle& bundle) const {
    Tensor2 row(1, layout.node_count);
    for (const std::string& l : bundle.labels) {
        if (!graph.has_name(l)) continue;
        const int id = graph.id_of(l);
        if (id < layout.node_count) row.data[static_cast<std::size_t>(id)] = 1.0;
    }
    return row;
}

void System::save(const std::string& dir, std::uint64_t config_hash, std::uint64_t seed) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    // Keep the graph's bias column in sync with the trained values.
    System copy = *this;
    gsnn::write_biases_to_graph(copy.store, copy.graph);
    copy.graph.save((fs::path(dir) / "graph.kg").string());
    store.save((fs::path(dir) / "params.bin").string(), config_hash, seed);
    std::string meta = "system v1\nvocab";
    for (const std::string& v : detector_vocab) meta += " " + quote_name(v);
    meta += "\n";
    write_text_file((fs::path(dir) / "system.meta").string(), meta);
}

System System::load(const std::string& dir, const GsnnConfig& gsnn_cfg,
                    const RelateConfig& relate_cfg) {
    namespace fs = std::filesystem;
    System sys;
    sys.graph = KnowledgeGraph::load((fs::path(dir) / "graph.kg").string());
    sys.store = ParameterStore::load((fs::path(dir) / "params.bin").string());
    sys.gsnn_cfg = gsnn_cfg;
    sys.relate_cfg = relate_cfg;
    const Tensor2& w = sys.store.value("cls.W");
    sys.layout = SlotLayout{w.rows, gsnn_cfg.context_width, gsnn_cfg.image_width};
    if (sys.layout.input_width() != w.cols)
        throw DataError("classifier shape does not match configured widths");
    const std::string meta = read_text_file((fs::path(dir) / "system.meta").string());
    const auto vocab_at = meta.find("\nvocab");
    if (vocab_at == std::string::npos) throw DataError("system.meta missing vocab record");
    std::string vocab_line = meta.substr(vocab_at + 1);
    if (const auto nl = vocab_line.find('\n'); nl != std::string::npos) vocab_line.resize(nl);
    for (const auto& tok : tokenize_line(vocab_line)) {
        if (tok == "vocab") continue;
        sys.detector_vocab.push_back(tok);
    }
    std::sort(sys.detector_vocab.begin(), sys.detector_vocab.end());
    return sys;
}

SplitEval score_split(System& system, const std::vector<FeatureBundle>& bundles) {
    SplitEval eval;
    eval.scores = Tensor2(static_cast<int>(bundles.size()), system.layout.node_count);
    eval.truths = Tensor2(static_cast<int>(bundles.size()), system.layout.node_count);
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const auto out = system.infer(bundles[i]);
        eval.scores.set_row(static_cast<int>(i), out.probabilities.data);
        eval.truths.set_row(static_cast<int>(i), system.truth_row(bundles[i]).data);
    }
    return eval;
}

} // namespace nscr
