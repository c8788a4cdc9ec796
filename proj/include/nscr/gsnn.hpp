#pragma once

#include <map>
#include <string>
#include <vector>

#include "nscr/kgraph.hpp"
#include "nscr/mlp.hpp"
#include "nscr/tape.hpp"

namespace nscr {

class Rng;

struct GsnnConfig {
    int hidden_width = 12;              // per-node state width
    int image_width = 10;               // global image embedding width
    int steps = 3;                      // expansion rounds
    double importance_threshold = 0.5;  // strict > gate
    int context_width = 8;              // context network output width
    int importance_hidden = 12;
    int context_hidden = 12;

    void validate() const;
    // Importance/context input: [hidden, node-id feature, node bias, type one-hot].
    int node_feature_width() const { return hidden_width + 1 + 1 + 3; }
    MlpSpec importance_spec() const;
    MlpSpec context_spec() const;
};

// Per-inference state: active nodes in activation order, their hidden rows,
// and the activation trace.
struct ExpansionState {
    std::vector<int> active;
    Value hidden; // |active| x hidden_width
    PartialGraph trace;
    int step = 0;
    double gate_min = 1.0; // diagnostics over every gate value seen
    double gate_max = 0.0;

    int index_of(int node_id) const;
};

// One importance evaluation: the candidate's max-over-parents logit.
struct CandidateRecord {
    int step = 0;
    int node = -1;
    Value logit;
    double prob = 0.0;
    bool probe = false;
};

// Nodes activated per round; captured by expand() and replayable to freeze
// the discrete decisions (finite-difference checks perturb parameters, which
// must not flip activations mid-check).
struct ActivationSchedule {
    std::vector<std::vector<int>> steps;
};

struct ExpandOptions {
    std::vector<int> forced_active;            // activated at step 0 alongside detections
    const ActivationSchedule* schedule = nullptr;
    std::vector<int> probe_nodes;              // scored every round regardless of gating
    // Ignore cfg.steps and run until a round activates nothing (the gate's
    // fixpoint set), capped at node_count rounds.
    bool run_to_quiet = false;
};

struct ExpandResult {
    ExpansionState state;
    Value output; // |active| x context_width, row order = activation order
    std::vector<CandidateRecord> importance_records;
    ActivationSchedule schedule;
};

namespace gsnn {

// Propagation weights, importance and context networks, and the per-node
// bias column (initialized from the graph's stored biases).
void register_params(ParameterStore& store, const GsnnConfig& cfg, const KnowledgeGraph& g,
                     Rng& rng);

void append_node_bias(ParameterStore& store, double bias);
void remap_node_bias(ParameterStore& store, const std::vector<int>& old_to_new);
void write_biases_to_graph(const ParameterStore& store, KnowledgeGraph& g);

// Activates the named detections at step 0. Hidden rows start as zeros except
// the leading element, which carries the normalized node id.
ExpansionState init_state(Tape& tape, const KnowledgeGraph& g, const GsnnConfig& cfg,
                          const std::vector<std::string>& detections,
                          const std::vector<int>& forced_active = {});

// Neighborhood aggregation: adjacency over the active subgraph times the
// hidden matrix, plus the shared aggregation bias.
Value neighborhood_vector(Tape& tape, const ExpansionState& state, const KnowledgeGraph& g);

// One gated update of every active hidden row, conditioned on the projected
// image embedding. Does not change the active set.
void propagate_step(Tape& tape, ExpansionState& state, const KnowledgeGraph& g,
                    const GsnnConfig& cfg, Value e_image);

// Scores every inactive node adjacent to the active set; multiple active
// parents aggregate by max. Returned in ascending node-id order.
std::vector<CandidateRecord> importance_scores(Tape& tape, const ExpansionState& state,
                                               const KnowledgeGraph& g, const GsnnConfig& cfg);

// Alternates propagation and importance gating for cfg.steps rounds, then
// applies the context network to all active nodes.
ExpandResult expand(Tape& tape, const KnowledgeGraph& g, const GsnnConfig& cfg,
                    const Tensor2& e_image, const std::vector<std::string>& detections,
                    const ExpandOptions& options = {});

} // namespace gsnn

} // namespace nscr
