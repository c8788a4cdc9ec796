#pragma once

#include <string>
#include <vector>

#include "nscr/tape.hpp"

namespace nscr {

class Rng;

enum class Act { Tanh, Sigmoid, Relu, Identity };

// Layer widths include the input width: {in, h1, ..., out}.
struct MlpSpec {
    std::vector<int> widths;
    Act hidden = Act::Tanh;
    Act final_act = Act::Identity;

    void validate() const;
    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
};

// Creates <prefix>.W<i> / <prefix>.b<i>. Weights draw from
// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero.
void register_mlp(ParameterStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);

Value mlp_forward(Tape& tape, const MlpSpec& spec, const std::string& prefix, Value x);

// Forward stopping before the final activation.
Value mlp_forward_logits(Tape& tape, const MlpSpec& spec, const std::string& prefix, Value x);

Value apply_activation(Value x, Act act);

} // namespace nscr
