#include "nscr/gsnn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

void GsnnConfig::validate() const {
    if (steps < 1) throw ConfigError("gsnn steps must be >= 1");
    if (hidden_width < 1 || image_width < 1 || context_width < 1 || importance_hidden < 1 ||
        context_hidden < 1)
        throw ConfigError("gsnn widths must be >= 1");
    if (!(importance_threshold > 0.0 && importance_threshold < 1.0))
        throw ConfigError("importance threshold must lie in (0,1)");
}

MlpSpec GsnnConfig::importance_spec() const {
    return MlpSpec{{node_feature_width(), importance_hidden, 1}, Act::Tanh, Act::Sigmoid};
}

MlpSpec GsnnConfig::context_spec() const {
    return MlpSpec{{node_feature_width(), context_hidden, context_width}, Act::Tanh, Act::Tanh};
}

int ExpansionState::index_of(int node_id) const {
    for (std::size_t i = 0; i < active.size(); ++i)
        if (active[i] == node_id) return static_cast<int>(i);
    return -1;
}

namespace gsnn {

namespace {

constexpr const char* kBiasName = "gsnn.node_bias";

// Gate/update weight names follow their role: z (keep/overwrite blend),
// r (reset), u (candidate update); *_a consumes the neighborhood vector,
// *_h the previous hidden state.
const char* kPropNames[6] = {"gsnn.prop.W_za", "gsnn.prop.W_zh", "gsnn.prop.W_ra",
                             "gsnn.prop.W_rh", "gsnn.prop.W_ua", "gsnn.prop.W_uh"};

Tensor2 init_hidden_row(int node_id, int node_count, int width) {
    Tensor2 row(1, width);
    row.data[0] = static_cast<double>(node_id) / static_cast<double>(node_count);
    return row;
}

// Feature row [h, x_v, b_n, d_n] for one node; h may be a hidden row or a
// fresh init row for not-yet-active candidates' parents.
Value node_feature_row(Tape& tape, Value h_row, int node_id, const KnowledgeGraph& g) {
    const ConceptNode& node = g.node(node_id);
    const double x_v = static_cast<double>(node_id) / static_cast<double>(g.node_count());
    const Value xv = tape.constant(Tensor2(1, 1, std::vector<double>{x_v}));
    const Value bias = slice_rows(tape.param(kBiasName), node_id, node_id + 1);
    const auto oh = node_type_one_hot(node.type);
    const Value type_v = tape.constant(Tensor2(1, 3, std::vector<double>(oh.begin(), oh.end())));
    const Value parts[4] = {h_row, xv, bias, type_v};
    return concat_cols(parts);
}

} // namespace

void register_params(ParameterStore& store, const GsnnConfig& cfg, const KnowledgeGraph& g,
                     Rng& rng) {
    cfg.validate();
    const int f = cfg.hidden_width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(f));
    Rng prop = rng.fork("gsnn.prop");
    for (const char* name : kPropNames)
        store.create(name, Tensor2::uniform(f, f, -bound, bound, prop));
    const double ebound = 1.0 / std::sqrt(static_cast<double>(cfg.image_width));
    store.create("gsnn.prop.W_e", Tensor2::uniform(cfg.image_width, f, -ebound, ebound, prop));
    store.create("gsnn.prop.b_agg", Tensor2(1, f));
    Rng imp = rng.fork("gsnn.imp");
    register_mlp(store, "gsnn.imp", cfg.importance_spec(), imp);
    Rng ctx = rng.fork("gsnn.ctx");
    register_mlp(store, "gsnn.ctx", cfg.context_spec(), ctx);
    Tensor2 biases(g.node_count(), 1);
    for (int i = 0; i < g.node_count(); ++i) biases.at(i, 0) = g.node(i).bias;
    store.create(kBiasName, std::move(biases));
}

void append_node_bias(ParameterStore& store, double bias) {
    Tensor2 biases = store.value(kBiasName);
    biases.rows += 1;
    biases.data.push_back(bias);
    store.reshape(kBiasName, std::move(biases));
}

void remap_node_bias(ParameterStore& store, const std::vector<int>& old_to_new) {
    const Tensor2& old = store.value(kBiasName);
    int kept = 0;
    for (int m : old_to_new)
        if (m >= 0) ++kept;
    Tensor2 next(kept, 1);
    for (std::size_t i = 0; i < old_to_new.size(); ++i)
        if (old_to_new[i] >= 0) next.at(old_to_new[i], 0) = old.at(static_cast<int>(i), 0);
    store.reshape(kBiasName, std::move(next));
}

void write_biases_to_graph(const ParameterStore& store, KnowledgeGraph& g) {
    const Tensor2& biases = store.value(kBiasName);
    if (biases.rows != g.node_count())
        throw DimensionError("node bias column does not match graph size");
    for (int i = 0; i < g.node_count(); ++i) g.node_mut(i).bias = biases.at(i, 0);
}

ExpansionState init_state(Tape& tape, const KnowledgeGraph& g, const GsnnConfig& cfg,
                          const std::vector<std::string>& detections,
                          const std::vector<int>& forced_active) {
    ExpansionState state;
    std::set<int> initial;
    for (const std::string& name : detections) initial.insert(g.id_of(name));
    for (int id : forced_active) {
        if (id < 0 || id >= g.node_count())
            throw DataError("forced activation of unknown node id " + std::to_string(id));
        initial.insert(id);
    }
    for (int id : initial) {
        state.active.push_back(id);
        state.trace.activate(id, 0);
    }
    if (!state.active.empty()) {
        std::vector<Value> rows;
        rows.reserve(state.active.size());
        for (int id : state.active)
            rows.push_back(tape.constant(init_hidden_row(id, g.node_count(), cfg.hidden_width)));
        state.hidden = concat_rows(rows);
    }
    return state;
}

Value neighborhood_vector(Tape& tape, const ExpansionState& state, const KnowledgeGraph& g) {
    const Value adj = tape.constant(g.adjacency_rows(state.active));
    const Value bias = tape.param("gsnn.prop.b_agg");
    return add_rowwise(matmul(adj, state.hidden), bias);
}

void propagate_step(Tape& tape, ExpansionState& state, const KnowledgeGraph& g,
                    const GsnnConfig& cfg, Value e_image) {
    if (state.active.empty()) return;
    if (e_image.rows() != 1 || e_image.cols() != cfg.image_width)
        throw DimensionError("e_image must be 1 x image_width");
    const Value agg = neighborhood_vector(tape, state, g);
    const Value h = state.hidden;
    const Value z =
        sigmoid(add(matmul(agg, tape.param("gsnn.prop.W_za")), matmul(h, tape.param("gsnn.prop.W_zh"))));
    const Value r =
        sigmoid(add(matmul(agg, tape.param("gsnn.prop.W_ra")), matmul(h, tape.param("gsnn.prop.W_rh"))));
    const Value image_proj = matmul(e_image, tape.param("gsnn.prop.W_e"));
    const Value u = tanh_v(add_rowwise(
        add(matmul(agg, tape.param("gsnn.prop.W_ua")),
            matmul(hadamard(r, h), tape.param("gsnn.prop.W_uh"))),
        image_proj));
    state.hidden = add(hadamard(sub_from_one(z), h), hadamard(z, u));
    for (const Value* gate : {&z, &r}) {
        for (double v : gate->val().data) {
            state.gate_min = std::min(state.gate_min, v);
            state.gate_max = std::max(state.gate_max, v);
        }
    }
    state.step += 1;
}

namespace {

// Max-over-parents importance logit for one node, given the current active
// set. Returns an invalid Value when the node has no active neighbor.
Value score_one(Tape& tape, const ExpansionState& state, const KnowledgeGraph& g,
                const GsnnConfig& cfg, int node_id) {
    std::vector<int> parents;
    for (int nb : g.neighbors(node_id, AdjMode::Both))
        if (state.trace.is_active(nb) && nb != node_id) parents.push_back(nb);
    if (parents.empty()) return {};
    Value folded;
    for (int p : parents) {
        const int row_idx = state.index_of(p);
        const Value h_row = slice_rows(state.hidden, row_idx, row_idx + 1);
        const Value features = node_feature_row(tape, h_row, node_id, g);
        const Value logit = mlp_forward_logits(tape, cfg.importance_spec(), "gsnn.imp", features);
        folded = folded.valid() ? cmax(folded, logit) : logit;
    }
    return folded;
}

} // namespace

std::vector<CandidateRecord> importance_scores(Tape& tape, const ExpansionState& state,
                                               const KnowledgeGraph& g, const GsnnConfig& cfg) {
    std::vector<CandidateRecord> records;
    if (state.active.empty()) return records;
    std::set<int> candidates;
    for (int id : state.active)
        for (int nb : g.neighbors(id, AdjMode::Both))
            if (!state.trace.is_active(nb)) candidates.insert(nb);
    for (int c : candidates) {
        const Value logit = score_one(tape, state, g, cfg, c);
        CandidateRecord rec;
        rec.step = state.step;
        rec.node = c;
        rec.logit = logit;
        rec.prob = 1.0 / (1.0 + std::exp(-logit.scalar()));
        records.push_back(rec);
    }
    return records;
}

ExpandResult expand(Tape& tape, const KnowledgeGraph& g, const GsnnConfig& cfg,
                    const Tensor2& e_image, const std::vector<std::string>& detections,
                    const ExpandOptions& options) {
    cfg.validate();
    if (!e_image.all_finite()) throw DataError("non-finite image embedding");
    ExpandResult result;
    result.state = init_state(tape, g, cfg, detections, options.forced_active);
    const Value e_image_v =
        tape.constant(Tensor2(1, cfg.image_width, e_image.data));
    const int rounds = options.run_to_quiet ? g.node_count() + 1 : cfg.steps;
    result.schedule.steps.resize(static_cast<std::size_t>(rounds));

    for (int t = 1; t <= rounds; ++t) {
        if (result.state.active.empty()) break;
        propagate_step(tape, result.state, g, cfg, e_image_v);
        auto records = importance_scores(tape, result.state, g, cfg);

        // Probe nodes are scored with the same machinery but never gate.
        for (int probe : options.probe_nodes) {
            const Value logit = score_one(tape, result.state, g, cfg, probe);
            if (!logit.valid()) continue;
            CandidateRecord rec;
            rec.step = result.state.step;
            rec.node = probe;
            rec.logit = logit;
            rec.prob = 1.0 / (1.0 + std::exp(-logit.scalar()));
            rec.probe = true;
            records.push_back(rec);
        }

        std::vector<int> chosen;
        if (options.schedule) {
            chosen = options.schedule->steps.at(static_cast<std::size_t>(t - 1));
        } else {
            for (const CandidateRecord& rec : records)
                if (!rec.probe && rec.prob > cfg.importance_threshold) chosen.push_back(rec.node);
        }
        std::sort(chosen.begin(), chosen.end());

        for (int c : chosen) {
            if (result.state.trace.is_active(c)) continue;
            for (int nb : g.neighbors(c, AdjMode::Both))
                if (result.state.trace.is_active(nb))
                    result.state.trace.edges.push_back({nb, c, t});
            result.state.trace.activate(c, t);
            result.state.active.push_back(c);
            const Value init_row =
                tape.constant(init_hidden_row(c, g.node_count(), cfg.hidden_width));
            const Value parts[2] = {result.state.hidden, init_row};
            result.state.hidden = concat_rows(parts);
            result.schedule.steps[static_cast<std::size_t>(t - 1)].push_back(c);
        }
        const bool quiet = result.schedule.steps[static_cast<std::size_t>(t - 1)].empty();
        for (auto& rec : records) result.importance_records.push_back(std::move(rec));
        if (options.run_to_quiet && quiet) break;
    }

    if (result.state.active.empty()) {
        result.output = tape.constant(Tensor2(0, cfg.context_width));
        return result;
    }

    std::vector<Value> feature_rows;
    feature_rows.reserve(result.state.active.size());
    for (std::size_t i = 0; i < result.state.active.size(); ++i) {
        const Value h_row =
            slice_rows(result.state.hidden, static_cast<int>(i), static_cast<int>(i) + 1);
        feature_rows.push_back(node_feature_row(tape, h_row, result.state.active[i], g));
    }
    const Value features = concat_rows(feature_rows);
    result.output = mlp_forward(tape, cfg.context_spec(), "gsnn.ctx", features);
    return result;
}

} // namespace gsnn

} // namespace nscr
