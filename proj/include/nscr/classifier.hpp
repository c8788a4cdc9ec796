#pragma once

#include <string>
#include <vector>

#include "nscr/gsnn.hpp"
#include "nscr/kgraph.hpp"
#include "nscr/tape.hpp"

namespace nscr {

class Rng;

// Input layout of the final concept classifier: one per-node slot block,
// then the image embedding, then the detection multi-hot.
struct SlotLayout {
    int node_count = 0;
    int per_node_width = 0;
    int image_width = 0;

    int input_width() const { return node_count * per_node_width + image_width + node_count; }
    int slot_offset(int node_id) const { return node_id * per_node_width; }
    int image_offset() const { return node_count * per_node_width; }
    int multihot_offset() const { return image_offset() + image_width; }
};

namespace classifier {

// Weight is stored output-major (node_count x input_width) so a concept's
// neuron is one row; bias is 1 x node_count.
void register_params(ParameterStore& store, const SlotLayout& layout, Rng& rng);

// Node-indexed slots carry that node's context row when active and zeros
// otherwise, followed by the image embedding and the detection multi-hot.
Value assemble_input(Tape& tape, const ExpansionState& state, Value context_rows,
                     const Tensor2& e_image, const std::vector<std::string>& detections,
                     const KnowledgeGraph& g, const SlotLayout& layout);

Value classify_logits(Tape& tape, Value input, const SlotLayout& layout);
// Independent per-concept probabilities (multi-label sigmoids).
Value classify(Tape& tape, Value input, const SlotLayout& layout);

// Grows the layout by one concept: a slot block and multi-hot bit are
// inserted, one output neuron is appended. Pre-existing weights keep their
// exact values; the new neuron's weights over pre-existing inputs start at
// zero so prior outputs are bit-identical. Returns the new node's id.
int extend_with_neuron(ParameterStore& store, SlotLayout& layout, Rng& rng);

// Shrinks the classifier after node removal, following the old->new id map.
void remove_neurons(ParameterStore& store, SlotLayout& layout,
                    const std::vector<int>& old_to_new);

} // namespace classifier

} // namespace nscr
