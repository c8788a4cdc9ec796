#include "nscr/classifier.hpp"

#include <cmath>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

namespace classifier {

namespace {
constexpr const char* kWeight = "cls.W";
constexpr const char* kBias = "cls.b";
} // namespace

void register_params(ParameterStore& store, const SlotLayout& layout, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layout.input_width()));
    Rng r = rng.fork("cls");
    store.create(kWeight,
                 Tensor2::uniform(layout.node_count, layout.input_width(), -bound, bound, r));
    store.create(kBias, Tensor2(1, layout.node_count));
}

Value assemble_input(Tape& tape, const ExpansionState& state, Value context_rows,
                     const Tensor2& e_image, const std::vector<std::string>& detections,
                     const KnowledgeGraph& g, const SlotLayout& layout) {
    // During stage-one fine-tuning the graph already holds the novel node
    // while the classifier does not; nodes beyond the layout have no slot.
    if (layout.node_count > g.node_count())
        throw DimensionError("slot layout exceeds graph size");
    if (static_cast<int>(e_image.data.size()) != layout.image_width)
        throw DimensionError("image embedding width does not match layout");
    std::vector<Value> parts;
    parts.reserve(static_cast<std::size_t>(layout.node_count) + 2);
    for (int id = 0; id < layout.node_count; ++id) {
        const int idx = state.index_of(id);
        if (idx >= 0 && context_rows.valid())
            parts.push_back(slice_rows(context_rows, idx, idx + 1));
        else
            parts.push_back(tape.constant(Tensor2(1, layout.per_node_width)));
    }
    parts.push_back(tape.constant(Tensor2(1, layout.image_width, e_image.data)));
    Tensor2 multihot(1, layout.node_count);
    for (const std::string& name : detections) multihot.data[g.id_of(name)] = 1.0;
    parts.push_back(tape.constant(std::move(multihot)));
    return concat_cols(parts);
}

Value classify_logits(Tape& tape, Value input, const SlotLayout& layout) {
    if (input.cols() != layout.input_width())
        throw DimensionError("classifier input width mismatch");
    const Value w = tape.param(kWeight);
    const Value b = tape.param(kBias);
    return add_rowwise(matmul(input, transpose(w)), b);
}

Value classify(Tape& tape, Value input, const SlotLayout& layout) {
    return sigmoid(classify_logits(tape, input, layout));
}

int extend_with_neuron(ParameterStore& store, SlotLayout& layout, Rng& rng) {
    const SlotLayout old = layout;
    SlotLayout next = layout;
    next.node_count += 1;
    const int new_id = old.node_count;

    const Tensor2& old_w = store.value(kWeight);
    Tensor2 new_w(next.node_count, next.input_width());

    // Old input column -> new input column. Slot blocks keep their offsets;
    // the image block and multi-hot both shift by one slot block. The new
    // slot block and multi-hot bit have no old counterpart.
    auto remap_col = [&](int col) {
        return col < old.image_offset() ? col : col + next.per_node_width;
    };
    for (int r = 0; r < old.node_count; ++r)
        for (int c = 0; c < old.input_width(); ++c)
            new_w.at(r, remap_col(c)) = old_w.at(r, c);

    // New neuron: zeros over pre-existing input regions, seeded init over its
    // own slot block and multi-hot bit.
    Rng r = rng.fork("cls.extend", static_cast<std::uint64_t>(new_id));
    const double bound = 1.0 / std::sqrt(static_cast<double>(next.per_node_width + 1));
    for (int c = 0; c < next.per_node_width; ++c)
        new_w.at(new_id, next.slot_offset(new_id) + c) = r.uniform(-bound, bound);
    new_w.at(new_id, next.input_width() - 1) = r.uniform(-bound, bound);

    const Tensor2& old_b = store.value(kBias);
    Tensor2 new_b(1, next.node_count);
    for (int c = 0; c < old.node_count; ++c) new_b.data[c] = old_b.data[c];

    store.reshape(kWeight, std::move(new_w));
    store.reshape(kBias, std::move(new_b));
    layout = next;
    return new_id;
}

void remove_neurons(ParameterStore& store, SlotLayout& layout,
                    const std::vector<int>& old_to_new) {
    const SlotLayout old = layout;
    if (static_cast<int>(old_to_new.size()) != old.node_count)
        throw DimensionError("remap size does not match layout");
    SlotLayout next = layout;
    int kept = 0;
    for (int m : old_to_new)
        if (m >= 0) ++kept;
    next.node_count = kept;

    const Tensor2& old_w = store.value(kWeight);
    const Tensor2& old_b = store.value(kBias);
    Tensor2 new_w(next.node_count, next.input_width());
    Tensor2 new_b(1, next.node_count);
    for (int r_old = 0; r_old < old.node_count; ++r_old) {
        const int r_new = old_to_new[r_old];
        if (r_new < 0) continue;
        new_b.data[r_new] = old_b.data[r_old];
        for (int id_old = 0; id_old < old.node_count; ++id_old) {
            const int id_new = old_to_new[id_old];
            if (id_new < 0) continue;
            for (int k = 0; k < old.per_node_width; ++k)
                new_w.at(r_new, next.slot_offset(id_new) + k) =
                    old_w.at(r_old, old.slot_offset(id_old) + k);
            new_w.at(r_new, next.multihot_offset() + id_new) =
                old_w.at(r_old, old.multihot_offset() + id_old);
        }
        for (int k = 0; k < old.image_width; ++k)
            new_w.at(r_new, next.image_offset() + k) = old_w.at(r_old, old.image_offset() + k);
    }
    store.reshape(kWeight, std::move(new_w));
    store.reshape(kBias, std::move(new_b));
    layout = next;
}

} // namespace classifier

} // namespace nscr
