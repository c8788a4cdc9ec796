#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nscr/params.hpp"
#include "nscr/tensor.hpp"

namespace nscr {

class Tape;

// Handle to a recorded tensor. Cheap to copy; valid while its tape lives.
struct Value {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor2& val() const;
    const Tensor2& grad() const;
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
    double scalar() const;
};

// Reverse-mode tape over a fixed op set. One forward episode per tape;
// backward() may be called once, after which the tape is consumed.
class Tape {
public:
    explicit Tape(ParameterStore* store = nullptr) : store_(store) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf without gradient tracking.
    Value constant(Tensor2 v);
    // Leaf with gradient tracking (e.g. an input whose sensitivity is probed).
    Value input(Tensor2 v);
    // Leaf bound to a parameter store entry; backward() accumulates into the
    // entry's grad slot.
    Value param(const std::string& name);

    // Propagates d(loss)/d(node) for every recorded node; loss must be 1x1.
    // A second call without a fresh forward is rejected (stale tape).
    void backward(Value loss);

    bool consumed() const { return consumed_; }
    ParameterStore* store() const { return store_; }

    std::size_t node_count() const { return nodes_.size(); }

private:
    friend struct Value;
    friend Value matmul(Value, Value);
    friend Value add(Value, Value);
    friend Value add_rowwise(Value, Value);
    friend Value hadamard(Value, Value);
    friend Value sub_from_one(Value);
    friend Value scale(Value, double);
    friend Value sigmoid(Value);
    friend Value tanh_v(Value);
    friend Value relu(Value);
    friend Value softmax_rows(Value);
    friend Value layernorm(Value, Value, Value, double);
    friend Value concat_cols(std::span<const Value>);
    friend Value concat_rows(std::span<const Value>);
    friend Value slice_cols(Value, int, int);
    friend Value slice_rows(Value, int, int);
    friend Value transpose(Value);
    friend Value sum_all(Value);
    friend Value mean_all(Value);
    friend Value cmax(Value, Value);
    friend Value bce_with_logits(Value, const Tensor2&);

    enum class Op : std::uint8_t {
        Const,
        Leaf,
        MatMul,
        Add,
        AddRowwise,
        Hadamard,
        SubFromOne,
        Scale,
        Sigmoid,
        Tanh,
        Relu,
        SoftmaxRows,
        LayerNorm,
        ConcatCols,
        ConcatRows,
        SliceCols,
        SliceRows,
        Transpose,
        SumAll,
        MeanAll,
        Max,
        BceWithLogits,
    };

    struct Node {
        Op op = Op::Const;
        Tensor2 val;
        Tensor2 grad;
        std::array<int, 3> parent = {-1, -1, -1};
        std::vector<int> parents_many;
        double aux = 0.0;
        int iaux0 = 0;
        int iaux1 = 0;
        Tensor2 saved;  // op-specific (layernorm x-hat, bce targets, ...)
        Tensor2 saved2; // op-specific (layernorm inv-std, ...)
        std::string bind;
    };

    int push(Node n);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    void backward_node(int id);

    std::vector<Node> nodes_;
    ParameterStore* store_ = nullptr;
    bool consumed_ = false;
};

// Recorded operations. Binary ops require operands from the same tape.
Value matmul(Value a, Value b);
Value add(Value a, Value b);
// Adds a 1xC row to every row of an RxC matrix.
Value add_rowwise(Value m, Value row);
Value hadamard(Value a, Value b);
Value sub_from_one(Value a);
Value scale(Value a, double k);
Value sigmoid(Value a);
Value tanh_v(Value a);
Value relu(Value a);
// Row-wise softmax, stabilized by row-max subtraction.
Value softmax_rows(Value a);
// Row-wise standardization followed by a per-column affine (gain, bias are 1xC).
Value layernorm(Value x, Value gain, Value bias, double eps = 1e-5);
Value concat_cols(std::span<const Value> parts);
Value concat_rows(std::span<const Value> parts);
Value slice_cols(Value a, int c0, int c1);
Value slice_rows(Value a, int r0, int r1);
inline Value row(Value a, int r) { return slice_rows(a, r, r + 1); }
Value transpose(Value a);
Value sum_all(Value a);
Value mean_all(Value a);
// Elementwise max; gradient follows the larger operand (ties go to the first).
Value cmax(Value a, Value b);
// Mean binary cross-entropy against fixed targets, computed stably from
// logits: mean(max(x,0) - x*t + log(1+exp(-|x|))).
Value bce_with_logits(Value logits, const Tensor2& targets);

} // namespace nscr
