#include "nscr/mlp.hpp"

#include <cmath>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ConfigError("mlp needs at least one layer (two widths)");
    for (int w : widths)
        if (w <= 0) throw ConfigError("mlp widths must be positive");
}

void register_mlp(ParameterStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
    spec.validate();
    for (int l = 0; l < spec.layer_count(); ++l) {
        const int fan_in = spec.widths[l];
        const int fan_out = spec.widths[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        store.create(prefix + ".W" + std::to_string(l),
                     Tensor2::uniform(fan_in, fan_out, -bound, bound, rng));
        store.create(prefix + ".b" + std::to_string(l), Tensor2(1, fan_out));
    }
}

Value apply_activation(Value x, Act act) {
    switch (act) {
    case Act::Tanh: return tanh_v(x);
    case Act::Sigmoid: return sigmoid(x);
    case Act::Relu: return relu(x);
    case Act::Identity: return x;
    }
    throw ConfigError("unknown activation");
}

Value mlp_forward_logits(Tape& tape, const MlpSpec& spec, const std::string& prefix, Value x) {
    spec.validate();
    if (x.cols() != spec.input_width())
        throw DimensionError("mlp input width " + std::to_string(x.cols()) + " != spec width " +
                             std::to_string(spec.input_width()));
    Value h = x;
    for (int l = 0; l < spec.layer_count(); ++l) {
        const Value w = tape.param(prefix + ".W" + std::to_string(l));
        const Value b = tape.param(prefix + ".b" + std::to_string(l));
        h = add_rowwise(matmul(h, w), b);
        if (l + 1 < spec.layer_count()) h = apply_activation(h, spec.hidden);
    }
    return h;
}

Value mlp_forward(Tape& tape, const MlpSpec& spec, const std::string& prefix, Value x) {
    return apply_activation(mlp_forward_logits(tape, spec, prefix, x), spec.final_act);
}

} // namespace nscr
