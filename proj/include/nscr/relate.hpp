#pragma once

#include <string>
#include <vector>

#include "nscr/bundle.hpp"
#include "nscr/kgraph.hpp"
#include "nscr/mlp.hpp"
#include "nscr/tape.hpp"

namespace nscr {

class Rng;

struct RelateConfig {
    int layers = 2;
    int heads = 2;
    int patch_count = 6;
    int patch_width = 10;
    int latent_width = 16;   // sequence element width
    int head_divisor = 2;    // attention width = latent_width / head_divisor
    int word_width = 10;
    double edge_threshold = 0.5;
    int max_edges_object = 0; // 0 = unlimited
    int max_edges_leaf = 3;

    void validate() const;
    int attention_width() const { return latent_width / head_divisor; }
    MlpSpec fusion_spec() const; // pairwise edge-likelihood head
    MlpSpec block_mlp_spec() const;
};

// Directed candidate edge with its predicted likelihood.
struct EdgeProposal {
    int source = -1;
    int target = -1;
    double likelihood = 0.0;
    bool operator==(const EdgeProposal&) const = default;
};

namespace relate {

void register_params(ParameterStore& store, const RelateConfig& cfg, Rng& rng);

// Projects each patch row through its own learned block, adds the positional
// embedding, and prepends the CLS position: (P+1) x latent_width.
Value embed_patches(Tape& tape, const Tensor2& patches, const RelateConfig& cfg);

// One pre-layernorm cross-attention block: the word embedding forms the
// query, the sequence forms keys/values; heads concatenate and project; an
// MLP sublayer follows. Both sublayers carry residual connections.
Value cross_attention_block(Tape& tape, Value z, Value word, const RelateConfig& cfg,
                            int layer_index);

// Stacks all layers and returns the layer-normed CLS row (1 x latent_width).
Value concept_embedding(Tape& tape, const Tensor2& patches, const Tensor2& word,
                        const RelateConfig& cfg);

// Directed likelihood that an edge source->target exists, from the fused
// concept embeddings.
Value edge_likelihood_logit(Tape& tape, Value e_source, Value e_target, const RelateConfig& cfg);
double edge_likelihood(const ParameterStore& store, const Tensor2& e_source,
                       const Tensor2& e_target, const RelateConfig& cfg);

// Scores every valid (novel, candidate) pair per bundle against the nodes of
// that bundle's expanded partial graph, deduplicates across bundles keeping
// the max likelihood, and returns proposals above the threshold, capped at
// the type-dependent edge budget. Objects score both directions; attribute
// and affordance novelties only receive incoming edges.
std::vector<EdgeProposal> propose_edges(ParameterStore& store, const KnowledgeGraph& g,
                                        int novel_id,
                                        const std::vector<const FeatureBundle*>& bundles,
                                        const std::vector<std::vector<int>>& candidates_per_bundle,
                                        const RelateConfig& cfg);

} // namespace relate

} // namespace nscr
