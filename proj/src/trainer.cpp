#include "nscr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

void SgdOptimizer::step(ParameterStore& store, const std::vector<ParamSel>& selection) {
    for (const ParamSel& sel : selection) {
        Tensor2& value = store.value(sel.name);
        const Tensor2& grad = store.grad(sel.name);
        auto [it, inserted] = velocity_.try_emplace(sel.name, Tensor2(value.rows, value.cols));
        Tensor2& vel = it->second;
        if (!vel.same_shape(value)) vel = Tensor2(value.rows, value.cols);
        const int r0 = sel.r0 < 0 ? 0 : sel.r0;
        const int r1 = sel.r1 < 0 ? value.rows : sel.r1;
        const int c0 = sel.c0 < 0 ? 0 : sel.c0;
        const int c1 = sel.c1 < 0 ? value.cols : sel.c1;
        const double lr = lr_ * sel.lr_scale;
        for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) {
                double& v = vel.at(r, c);
                v = momentum_ * v + grad.at(r, c);
                value.at(r, c) -= lr * v;
            }
    }
}

std::vector<std::uint8_t> SgdOptimizer::serialize_state() const {
    ParameterStore pack;
    for (const auto& [name, vel] : velocity_) pack.create(name, vel);
    return pack.serialize();
}

void SgdOptimizer::restore_state(const std::vector<std::uint8_t>& bytes) {
    ParameterStore pack = ParameterStore::deserialize(bytes);
    velocity_.clear();
    for (const std::string& name : pack.names()) velocity_[name] = pack.value(name);
}

std::vector<SgdOptimizer::ParamSel> select_all(const ParameterStore& store) {
    std::vector<SgdOptimizer::ParamSel> out;
    for (const std::string& name : store.names()) out.push_back({name});
    return out;
}

std::vector<SgdOptimizer::ParamSel> select_prefix(const ParameterStore& store,
                                                  const std::string& prefix, double lr_scale) {
    std::vector<SgdOptimizer::ParamSel> out;
    for (const std::string& name : store.names_with_prefix(prefix))
        out.push_back({name, lr_scale});
    return out;
}

Value sample_loss(Tape& tape, System& system, const FeatureBundle& bundle,
                  const SampleLossOptions& options) {
    const FeatureBundle clean = system.sanitize(bundle);
    const Tensor2 e_image(1, system.gsnn_cfg.image_width, clean.e_image);
    ExpandOptions expand_opts;
    expand_opts.forced_active = options.forced_active;
    expand_opts.schedule = options.schedule;
    expand_opts.probe_nodes = options.probe_positive;
    auto expansion = gsnn::expand(tape, system.graph, system.gsnn_cfg, e_image, clean.detections,
                                  expand_opts);

    const Value input = classifier::assemble_input(tape, expansion.state, expansion.output,
                                                   e_image, clean.detections, system.graph,
                                                   system.layout);
    const Value logits = classifier::classify_logits(tape, input, system.layout);
    const Tensor2 truths = system.truth_row(bundle);

    Value cls_loss;
    if (options.restrict_outputs.empty()) {
        cls_loss = bce_with_logits(logits, truths);
    } else {
        std::vector<Value> picked;
        Tensor2 picked_truth(1, static_cast<int>(options.restrict_outputs.size()));
        for (std::size_t i = 0; i < options.restrict_outputs.size(); ++i) {
            const int id = options.restrict_outputs[i];
            picked.push_back(slice_cols(logits, id, id + 1));
            picked_truth.data[i] = truths.data[static_cast<std::size_t>(id)];
        }
        cls_loss = bce_with_logits(concat_cols(picked), picked_truth);
    }

    if (options.importance_weight <= 0.0 || expansion.importance_records.empty())
        return cls_loss;

    std::set<int> positive_probes(options.probe_positive.begin(), options.probe_positive.end());
    std::vector<Value> logit_cells;
    std::vector<double> targets;
    for (const CandidateRecord& rec : expansion.importance_records) {
        logit_cells.push_back(rec.logit);
        const bool positive = rec.probe ? positive_probes.count(rec.node) != 0
                                        : bundle.has_label(system.graph.node(rec.node).name);
        targets.push_back(positive ? 1.0 : 0.0);
    }
    const Value imp_logits = concat_cols(logit_cells);
    const Value imp_loss =
        bce_with_logits(imp_logits, Tensor2(1, static_cast<int>(targets.size()), targets));
    return add(cls_loss, scale(imp_loss, options.importance_weight));
}

TrainReport train_base(System& system, const std::vector<FeatureBundle>& train,
                       const TrainConfig& cfg, std::uint64_t seed, int start_epoch,
                       SgdOptimizer* optimizer) {
    if (train.empty()) throw DataError("empty training split");
    TrainReport report;
    SgdOptimizer local(cfg.learning_rate, cfg.momentum);
    SgdOptimizer& opt = optimizer ? *optimizer : local;
    // The relate module trains separately; everything else updates here.
    std::vector<SgdOptimizer::ParamSel> selection;
    for (const std::string& name : system.store.names())
        if (name.rfind("relate.", 0) != 0) selection.push_back({name});

    Rng root(seed);
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng erng = root.fork("epoch", static_cast<std::uint64_t>(epoch));
        erng.shuffle(order);
        double total = 0.0;
        for (int idx : order) {
            Tape tape(&system.store);
            SampleLossOptions opts;
            opts.importance_weight = cfg.importance_loss_weight;
            const Value loss = sample_loss(tape, system, train[static_cast<std::size_t>(idx)], opts);
            const double value = loss.scalar();
            if (!std::isfinite(value))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                                   ", bundle " + std::to_string(train[static_cast<std::size_t>(idx)].id));
            total += value;
            tape.backward(loss);
            opt.step(system.store, selection);
            system.store.zero_grads();
        }
        report.epoch_losses.push_back(total / static_cast<double>(train.size()));
    }
    gsnn::write_biases_to_graph(system.store, system.graph);
    return report;
}

namespace {

struct RelatePair {
    int src;
    int dst;
    double target;
};

} // namespace

TrainReport train_relate(System& system, const std::vector<FeatureBundle>& train,
                         const TrainConfig& cfg, std::uint64_t seed) {
    TrainReport report;
    SgdOptimizer opt(cfg.relate_learning_rate, cfg.momentum);
    const auto selection = select_prefix(system.store, "relate.");

    // Expansion sets are fixed while relate trains (the base model is frozen),
    // so compute each bundle's partial graph once.
    std::vector<int> usable;
    std::vector<std::vector<int>> partials;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (!train[i].patches) continue;
        const auto out = system.infer(train[i]);
        if (out.active.size() < 2) continue;
        usable.push_back(static_cast<int>(i));
        partials.push_back(out.active);
    }
    if (usable.empty()) throw DataError("no bundles usable for relate training");

    Rng root(seed);
    for (int epoch = 0; epoch < cfg.relate_epochs; ++epoch) {
        Rng erng = root.fork("relate_epoch", static_cast<std::uint64_t>(epoch));
        std::vector<int> order(usable.size());
        std::iota(order.begin(), order.end(), 0);
        erng.shuffle(order);
        if (cfg.relate_max_bundles > 0 &&
            static_cast<int>(order.size()) > cfg.relate_max_bundles)
            order.resize(static_cast<std::size_t>(cfg.relate_max_bundles));
        double total = 0.0;
        int counted = 0;
        for (int oi : order) {
            const FeatureBundle& bundle = train[static_cast<std::size_t>(usable[static_cast<std::size_t>(oi)])];
            const std::vector<int>& active = partials[static_cast<std::size_t>(oi)];

            std::vector<RelatePair> pairs;
            for (int s : active)
                for (int d : active) {
                    if (s == d || !system.graph.has_edge(s, d)) continue;
                    pairs.push_back({s, d, 1.0});
                }
            if (pairs.empty()) continue;
            Rng prng = erng.fork("pairs", static_cast<std::uint64_t>(bundle.id));
            prng.shuffle(pairs);
            if (static_cast<int>(pairs.size()) > cfg.relate_pairs_per_bundle)
                pairs.resize(static_cast<std::size_t>(cfg.relate_pairs_per_bundle));
            const std::size_t positives = pairs.size();
            int guard = 0;
            while (pairs.size() < 2 * positives && guard < 200) {
                ++guard;
                const int s = active[prng.below(active.size())];
                const int d = active[prng.below(active.size())];
                if (s == d || is_leaf_type(system.graph.node(s).type)) continue;
                if (system.graph.has_edge(s, d)) continue;
                pairs.push_back({s, d, 0.0});
            }

            Tape tape(&system.store);
            std::map<int, Value> embeddings;
            auto embed = [&](int id) {
                auto it = embeddings.find(id);
                if (it != embeddings.end()) return it->second;
                const Tensor2 word(1, system.relate_cfg.word_width,
                                   system.graph.node(id).embedding);
                const Value e =
                    relate::concept_embedding(tape, *bundle.patches, word, system.relate_cfg);
                embeddings.emplace(id, e);
                return e;
            };
            std::vector<Value> logits;
            Tensor2 targets(1, static_cast<int>(pairs.size()));
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                logits.push_back(relate::edge_likelihood_logit(tape, embed(pairs[i].src),
                                                               embed(pairs[i].dst),
                                                               system.relate_cfg));
                targets.data[i] = pairs[i].target;
            }
            const Value loss = bce_with_logits(concat_cols(logits), targets);
            const double value = loss.scalar();
            if (!std::isfinite(value)) throw NumericError("non-finite relate loss");
            total += value;
            ++counted;
            tape.backward(loss);
            opt.step(system.store, selection);
            system.store.zero_grads();
        }
        report.relate_epoch_losses.push_back(counted ? total / counted : 0.0);
    }
    return report;
}

void save_checkpoint(const std::string& path, int next_epoch, const ParameterStore& store,
                     const SgdOptimizer& optimizer, std::uint64_t config_hash,
                     std::uint64_t seed) {
    const auto params = store.serialize(config_hash, seed);
    const auto opt_state = optimizer.serialize_state();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    auto put_u64 = [&](std::uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        f.write(buf, 8);
    };
    put_u64(0x4e534352434b5031ULL); // "NSCRCKP1"
    put_u64(static_cast<std::uint64_t>(next_epoch));
    put_u64(params.size());
    f.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size()));
    put_u64(opt_state.size());
    f.write(reinterpret_cast<const char*>(opt_state.data()),
            static_cast<std::streamsize>(opt_state.size()));
    if (!f) throw DataError("write failed: " + path);
}

int load_checkpoint(const std::string& path, ParameterStore& store, SgdOptimizer& optimizer) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    auto get_u64 = [&]() {
        unsigned char buf[8];
        f.read(reinterpret_cast<char*>(buf), 8);
        if (!f) throw DataError("checkpoint truncated: " + path);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    };
    if (get_u64() != 0x4e534352434b5031ULL) throw DataError("not a checkpoint file: " + path);
    const int next_epoch = static_cast<int>(get_u64());
    const auto params_len = get_u64();
    std::vector<std::uint8_t> params(params_len);
    f.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(params_len));
    const auto opt_len = get_u64();
    std::vector<std::uint8_t> opt_state(opt_len);
    f.read(reinterpret_cast<char*>(opt_state.data()), static_cast<std::streamsize>(opt_len));
    if (!f) throw DataError("checkpoint truncated: " + path);
    store = ParameterStore::deserialize(params);
    optimizer.restore_state(opt_state);
    return next_epoch;
}

} // namespace nscr
