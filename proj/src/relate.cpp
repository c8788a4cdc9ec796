#include "nscr/relate.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

void RelateConfig::validate() const {
    if (layers < 1) throw ConfigError("relate needs at least one layer");
    if (heads < 1 || patch_count < 1 || patch_width < 1 || latent_width < 1 || word_width < 1)
        throw ConfigError("relate widths/counts must be >= 1");
    if (head_divisor < 1 || latent_width % head_divisor != 0)
        throw ConfigError("latent width must be divisible by the head divisor");
    if (!(edge_threshold > 0.0 && edge_threshold < 1.0))
        throw ConfigError("edge threshold must lie in (0,1)");
    if (max_edges_object < 0 || max_edges_leaf < 0)
        throw ConfigError("edge budgets must be >= 0");
}

MlpSpec RelateConfig::fusion_spec() const {
    return MlpSpec{{2 * latent_width, latent_width, 1}, Act::Tanh, Act::Sigmoid};
}

MlpSpec RelateConfig::block_mlp_spec() const {
    return MlpSpec{{latent_width, latent_width, latent_width}, Act::Tanh, Act::Identity};
}

namespace relate {

namespace {

std::string layer_prefix(int l) { return "relate.layer" + std::to_string(l); }

} // namespace

void register_params(ParameterStore& store, const RelateConfig& cfg, Rng& rng) {
    cfg.validate();
    Rng r = rng.fork("relate");
    const double pbound = 1.0 / std::sqrt(static_cast<double>(cfg.patch_width));
    // One projection block per patch position, stacked row-wise.
    store.create("relate.patch_proj",
                 Tensor2::uniform(cfg.patch_count * cfg.patch_width, cfg.latent_width, -pbound,
                                  pbound, r));
    store.create("relate.pos_embed",
                 Tensor2::uniform(cfg.patch_count + 1, cfg.latent_width, -0.1, 0.1, r));
    const int da = cfg.attention_width();
    const double lbound = 1.0 / std::sqrt(static_cast<double>(cfg.latent_width));
    const double wbound = 1.0 / std::sqrt(static_cast<double>(cfg.word_width));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = layer_prefix(l);
        store.create(p + ".ln1.gain", Tensor2(1, cfg.latent_width, 1.0));
        store.create(p + ".ln1.bias", Tensor2(1, cfg.latent_width));
        store.create(p + ".W_kv",
                     Tensor2::uniform(cfg.latent_width, 2 * da * cfg.heads, -lbound, lbound, r));
        store.create(p + ".W_q", Tensor2::uniform(cfg.word_width, da * cfg.heads, -wbound, wbound, r));
        store.create(p + ".W_proj",
                     Tensor2::uniform(da * cfg.heads, cfg.latent_width, -lbound, lbound, r));
        store.create(p + ".ln2.gain", Tensor2(1, cfg.latent_width, 1.0));
        store.create(p + ".ln2.bias", Tensor2(1, cfg.latent_width));
        Rng mlp_rng = r.fork("mlp", static_cast<std::uint64_t>(l));
        register_mlp(store, p + ".mlp", cfg.block_mlp_spec(), mlp_rng);
    }
    store.create("relate.ln_final.gain", Tensor2(1, cfg.latent_width, 1.0));
    store.create("relate.ln_final.bias", Tensor2(1, cfg.latent_width));
    Rng rel_rng = r.fork("fusion");
    register_mlp(store, "relate.fusion", cfg.fusion_spec(), rel_rng);
}

Value embed_patches(Tape& tape, const Tensor2& patches, const RelateConfig& cfg) {
    if (patches.rows != cfg.patch_count || patches.cols != cfg.patch_width)
        throw DimensionError("patch matrix must be patch_count x patch_width");
    const Value proj = tape.param("relate.patch_proj");
    const Value pos = tape.param("relate.pos_embed");
    std::vector<Value> rows;
    rows.reserve(static_cast<std::size_t>(cfg.patch_count) + 1);
    rows.push_back(row(pos, 0)); // CLS position
    for (int i = 0; i < cfg.patch_count; ++i) {
        const Value patch = tape.constant(Tensor2(1, cfg.patch_width, patches.row(i)));
        const Value block = slice_rows(proj, i * cfg.patch_width, (i + 1) * cfg.patch_width);
        rows.push_back(add(matmul(patch, block), row(pos, i + 1)));
    }
    return concat_rows(rows);
}

Value cross_attention_block(Tape& tape, Value z, Value word, const RelateConfig& cfg,
                            int layer_index) {
    if (word.rows() != 1 || word.cols() != cfg.word_width)
        throw DimensionError("word embedding must be 1 x word_width");
    const std::string p = layer_prefix(layer_index);
    const int da = cfg.attention_width();
    const Value zn = layernorm(z, tape.param(p + ".ln1.gain"), tape.param(p + ".ln1.bias"));
    const Value kv = matmul(zn, tape.param(p + ".W_kv"));
    const Value q_all = matmul(word, tape.param(p + ".W_q"));
    std::vector<Value> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const Value k = slice_cols(kv, 2 * da * h, 2 * da * h + da);
        const Value v = slice_cols(kv, 2 * da * h + da, 2 * da * (h + 1));
        const Value q = slice_cols(q_all, da * h, da * (h + 1));
        const Value att =
            softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(da))));
        head_outputs.push_back(matmul(att, v)); // 1 x da
    }
    const Value merged = cfg.heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
    const Value attended = matmul(merged, tape.param(p + ".W_proj")); // 1 x latent
    // The single query vector attends over the whole sequence; its output is
    // added to every sequence row through the residual.
    const Value z_attn = add_rowwise(z, attended);
    const Value zn2 =
        layernorm(z_attn, tape.param(p + ".ln2.gain"), tape.param(p + ".ln2.bias"));
    const Value mlp_out = mlp_forward(tape, cfg.block_mlp_spec(), p + ".mlp", zn2);
    return add(z_attn, mlp_out);
}

Value concept_embedding(Tape& tape, const Tensor2& patches, const Tensor2& word,
                        const RelateConfig& cfg) {
    cfg.validate();
    if (word.rows != 1 || word.cols != cfg.word_width)
        throw DimensionError("word embedding must be 1 x word_width");
    Value z = embed_patches(tape, patches, cfg);
    const Value word_v = tape.constant(word);
    for (int l = 0; l < cfg.layers; ++l) z = cross_attention_block(tape, z, word_v, cfg, l);
    const Value cls = row(z, 0);
    return layernorm(cls, tape.param("relate.ln_final.gain"), tape.param("relate.ln_final.bias"));
}

Value edge_likelihood_logit(Tape& tape, Value e_source, Value e_target, const RelateConfig& cfg) {
    const Value parts[2] = {e_source, e_target};
    return mlp_forward_logits(tape, cfg.fusion_spec(), "relate.fusion", concat_cols(parts));
}

double edge_likelihood(const ParameterStore& store, const Tensor2& e_source,
                       const Tensor2& e_target, const RelateConfig& cfg) {
    Tape tape(const_cast<ParameterStore*>(&store));
    const Value logit = edge_likelihood_logit(tape, tape.constant(e_source),
                                              tape.constant(e_target), cfg);
    return 1.0 / (1.0 + std::exp(-logit.scalar()));
}

std::vector<EdgeProposal> propose_edges(ParameterStore& store, const KnowledgeGraph& g,
                                        int novel_id,
                                        const std::vector<const FeatureBundle*>& bundles,
                                        const std::vector<std::vector<int>>& candidates_per_bundle,
                                        const RelateConfig& cfg) {
    cfg.validate();
    if (bundles.size() != candidates_per_bundle.size())
        throw DimensionError("bundle and candidate lists differ in length");
    const ConceptNode& novel = g.node(novel_id);
    const bool novel_is_object = novel.type == NodeType::Object;
    const Tensor2 novel_word = Tensor2(1, cfg.word_width, novel.embedding);

    std::map<std::pair<int, int>, double> best;
    for (std::size_t bi = 0; bi < bundles.size(); ++bi) {
        const FeatureBundle& bundle = *bundles[bi];
        if (!bundle.patches)
            throw DataError("bundle " + std::to_string(bundle.id) + " carries no patch data");
        Tape tape(&store);
        const Value e_novel = concept_embedding(tape, *bundle.patches, novel_word, cfg);
        for (int cand : candidates_per_bundle[bi]) {
            if (cand == novel_id) continue;
            const ConceptNode& other = g.node(cand);
            const Tensor2 other_word = Tensor2(1, cfg.word_width, other.embedding);
            const Value e_other = concept_embedding(tape, *bundle.patches, other_word, cfg);
            // existing -> novel is always a candidate direction unless the
            // existing node is a leaf; novel -> existing only for objects.
            std::vector<std::pair<int, int>> directions;
            if (!is_leaf_type(other.type)) directions.emplace_back(cand, novel_id);
            if (novel_is_object) directions.emplace_back(novel_id, cand);
            for (const auto& dir : directions) {
                const Value src = dir.first == novel_id ? e_novel : e_other;
                const Value dst = dir.first == novel_id ? e_other : e_novel;
                const Value logit = edge_likelihood_logit(tape, src, dst, cfg);
                const double p = 1.0 / (1.0 + std::exp(-logit.scalar()));
                auto it = best.find(dir);
                if (it == best.end() || p > it->second) best[dir] = p;
            }
        }
    }

    std::vector<EdgeProposal> proposals;
    for (const auto& [dir, p] : best)
        if (p > cfg.edge_threshold) proposals.push_back({dir.first, dir.second, p});
    std::sort(proposals.begin(), proposals.end(), [](const EdgeProposal& a, const EdgeProposal& b) {
        if (a.likelihood != b.likelihood) return a.likelihood > b.likelihood;
        if (a.source != b.source) return a.source < b.source;
        return a.target < b.target;
    });
    const int cap = novel_is_object ? cfg.max_edges_object : cfg.max_edges_leaf;
    if (cap > 0 && static_cast<int>(proposals.size()) > cap)
        proposals.resize(static_cast<std::size_t>(cap));
    return proposals;
}

} // namespace relate

} // namespace nscr
