#include "nscr/tape.hpp"

#include <cmath>

#include "nscr/error.hpp"

namespace nscr {

namespace {

void check_same_tape(Value a, Value b) {
    if (a.tape != b.tape) throw ConfigError("operands recorded on different tapes");
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

const Tensor2& Value::val() const { return tape->node(id).val; }
const Tensor2& Value::grad() const { return tape->node(id).grad; }

double Value::scalar() const {
    const Tensor2& v = val();
    if (v.rows != 1 || v.cols != 1) throw DimensionError("scalar() on non-1x1 value");
    return v.data[0];
}

int Tape::push(Node n) {
    if (consumed_) throw NumericError("stale tape: forward after backward");
    n.grad = Tensor2(n.val.rows, n.val.cols);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::constant(Tensor2 v) {
    Node n;
    n.op = Op::Const;
    n.val = std::move(v);
    return {this, push(std::move(n))};
}

Value Tape::input(Tensor2 v) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(v);
    return {this, push(std::move(n))};
}

Value Tape::param(const std::string& name) {
    if (!store_) throw ConfigError("tape has no parameter store");
    Node n;
    n.op = Op::Leaf;
    n.val = store_->value(name);
    n.bind = name;
    return {this, push(std::move(n))};
}

Value matmul(Value a, Value b) {
    check_same_tape(a, b);
    Tape::Node n;
    n.op = Tape::Op::MatMul;
    n.val = matmul_plain(a.val(), b.val());
    n.parent = {a.id, b.id, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value add(Value a, Value b) {
    check_same_tape(a, b);
    if (!a.val().same_shape(b.val())) throw DimensionError("add shape mismatch");
    Tape::Node n;
    n.op = Tape::Op::Add;
    n.val = a.val();
    for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += b.val().data[i];
    n.parent = {a.id, b.id, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value add_rowwise(Value m, Value row) {
    check_same_tape(m, row);
    if (row.rows() != 1 || row.cols() != m.cols())
        throw DimensionError("add_rowwise expects a 1xC row matching the matrix width");
    Tape::Node n;
    n.op = Tape::Op::AddRowwise;
    n.val = m.val();
    for (int i = 0; i < n.val.rows; ++i)
        for (int j = 0; j < n.val.cols; ++j) n.val.at(i, j) += row.val().data[j];
    n.parent = {m.id, row.id, -1};
    return {m.tape, m.tape->push(std::move(n))};
}

Value hadamard(Value a, Value b) {
    check_same_tape(a, b);
    if (!a.val().same_shape(b.val())) throw DimensionError("hadamard shape mismatch");
    Tape::Node n;
    n.op = Tape::Op::Hadamard;
    n.val = a.val();
    for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= b.val().data[i];
    n.parent = {a.id, b.id, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value sub_from_one(Value a) {
    Tape::Node n;
    n.op = Tape::Op::SubFromOne;
    n.val = a.val();
    for (auto& v : n.val.data) v = 1.0 - v;
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value scale(Value a, double k) {
    Tape::Node n;
    n.op = Tape::Op::Scale;
    n.val = a.val();
    for (auto& v : n.val.data) v *= k;
    n.parent = {a.id, -1, -1};
    n.aux = k;
    return {a.tape, a.tape->push(std::move(n))};
}

Value sigmoid(Value a) {
    Tape::Node n;
    n.op = Tape::Op::Sigmoid;
    n.val = a.val();
    for (auto& v : n.val.data) v = stable_sigmoid(v);
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value tanh_v(Value a) {
    Tape::Node n;
    n.op = Tape::Op::Tanh;
    n.val = a.val();
    for (auto& v : n.val.data) v = std::tanh(v);
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value relu(Value a) {
    Tape::Node n;
    n.op = Tape::Op::Relu;
    n.val = a.val();
    for (auto& v : n.val.data) v = v > 0.0 ? v : 0.0;
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value softmax_rows(Value a) {
    Tape::Node n;
    n.op = Tape::Op::SoftmaxRows;
    n.val = a.val();
    for (int i = 0; i < n.val.rows; ++i) {
        double mx = -INFINITY;
        for (int j = 0; j < n.val.cols; ++j) mx = std::max(mx, n.val.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < n.val.cols; ++j) {
            const double e = std::exp(n.val.at(i, j) - mx);
            n.val.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < n.val.cols; ++j) n.val.at(i, j) /= sum;
    }
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value layernorm(Value x, Value gain, Value bias, double eps) {
    check_same_tape(x, gain);
    check_same_tape(x, bias);
    const int c = x.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
        throw DimensionError("layernorm gain/bias must be 1xC");
    Tape::Node n;
    n.op = Tape::Op::LayerNorm;
    n.val = Tensor2(x.rows(), c);
    n.saved = Tensor2(x.rows(), c);  // x-hat
    n.saved2 = Tensor2(x.rows(), 1); // inverse std
    const Tensor2& xv = x.val();
    for (int i = 0; i < xv.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += xv.at(i, j);
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = xv.at(i, j) - mean;
            var += d * d;
        }
        var /= c;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        n.saved2.at(i, 0) = inv_std;
        for (int j = 0; j < c; ++j) {
            const double xh = (xv.at(i, j) - mean) * inv_std;
            n.saved.at(i, j) = xh;
            n.val.at(i, j) = gain.val().data[j] * xh + bias.val().data[j];
        }
    }
    n.parent = {x.id, gain.id, bias.id};
    n.aux = eps;
    return {x.tape, x.tape->push(std::move(n))};
}

Value concat_cols(std::span<const Value> parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    Tape* tape = parts[0].tape;
    const int rows = parts[0].rows();
    int cols = 0;
    for (const Value& p : parts) {
        check_same_tape(parts[0], p);
        if (p.rows() != rows) throw DimensionError("concat_cols row mismatch");
        cols += p.cols();
    }
    Tape::Node n;
    n.op = Tape::Op::ConcatCols;
    n.val = Tensor2(rows, cols);
    int off = 0;
    for (const Value& p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p.cols(); ++j) n.val.at(i, off + j) = p.val().at(i, j);
        off += p.cols();
        n.parents_many.push_back(p.id);
    }
    return {tape, tape->push(std::move(n))};
}

Value concat_rows(std::span<const Value> parts) {
    if (parts.empty()) throw DimensionError("concat_rows of nothing");
    Tape* tape = parts[0].tape;
    const int cols = parts[0].cols();
    int rows = 0;
    for (const Value& p : parts) {
        check_same_tape(parts[0], p);
        if (p.cols() != cols) throw DimensionError("concat_rows column mismatch");
        rows += p.rows();
    }
    Tape::Node n;
    n.op = Tape::Op::ConcatRows;
    n.val = Tensor2(rows, cols);
    int off = 0;
    for (const Value& p : parts) {
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < cols; ++j) n.val.at(off + i, j) = p.val().at(i, j);
        off += p.rows();
        n.parents_many.push_back(p.id);
    }
    return {tape, tape->push(std::move(n))};
}

Value slice_cols(Value a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw DimensionError("slice_cols out of range");
    Tape::Node n;
    n.op = Tape::Op::SliceCols;
    n.val = Tensor2(a.rows(), c1 - c0);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = c0; j < c1; ++j) n.val.at(i, j - c0) = a.val().at(i, j);
    n.parent = {a.id, -1, -1};
    n.iaux0 = c0;
    n.iaux1 = c1;
    return {a.tape, a.tape->push(std::move(n))};
}

Value slice_rows(Value a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw DimensionError("slice_rows out of range");
    Tape::Node n;
    n.op = Tape::Op::SliceRows;
    n.val = Tensor2(r1 - r0, a.cols());
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < a.cols(); ++j) n.val.at(i - r0, j) = a.val().at(i, j);
    n.parent = {a.id, -1, -1};
    n.iaux0 = r0;
    n.iaux1 = r1;
    return {a.tape, a.tape->push(std::move(n))};
}

Value transpose(Value a) {
    Tape::Node n;
    n.op = Tape::Op::Transpose;
    n.val = transpose_plain(a.val());
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value sum_all(Value a) {
    Tape::Node n;
    n.op = Tape::Op::SumAll;
    double s = 0.0;
    for (double v : a.val().data) s += v;
    n.val = Tensor2(1, 1, std::vector<double>{s});
    n.parent = {a.id, -1, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value mean_all(Value a) {
    Tape::Node n;
    n.op = Tape::Op::MeanAll;
    double s = 0.0;
    for (double v : a.val().data) s += v;
    const double count = static_cast<double>(a.val().size());
    n.val = Tensor2(1, 1, std::vector<double>{s / count});
    n.parent = {a.id, -1, -1};
    n.aux = count;
    return {a.tape, a.tape->push(std::move(n))};
}

Value cmax(Value a, Value b) {
    check_same_tape(a, b);
    if (!a.val().same_shape(b.val())) throw DimensionError("cmax shape mismatch");
    Tape::Node n;
    n.op = Tape::Op::Max;
    n.val = a.val();
    for (std::size_t i = 0; i < n.val.data.size(); ++i)
        n.val.data[i] = n.val.data[i] >= b.val().data[i] ? n.val.data[i] : b.val().data[i];
    n.parent = {a.id, b.id, -1};
    return {a.tape, a.tape->push(std::move(n))};
}

Value bce_with_logits(Value logits, const Tensor2& targets) {
    if (!logits.val().same_shape(targets)) throw DimensionError("bce target shape mismatch");
    Tape::Node n;
    n.op = Tape::Op::BceWithLogits;
    double total = 0.0;
    for (std::size_t i = 0; i < targets.data.size(); ++i) {
        const double x = logits.val().data[i];
        const double t = targets.data[i];
        total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    const double count = static_cast<double>(targets.size());
    n.val = Tensor2(1, 1, std::vector<double>{total / count});
    n.saved = targets;
    n.parent = {logits.id, -1, -1};
    n.aux = count;
    return {logits.tape, logits.tape->push(std::move(n))};
}

void Tape::backward(Value loss) {
    if (consumed_) throw NumericError("stale tape: backward called twice");
    if (loss.tape != this) throw ConfigError("loss recorded on a different tape");
    const Tensor2& lv = node(loss.id).val;
    if (lv.rows != 1 || lv.cols != 1) throw DimensionError("backward expects a 1x1 loss");
    if (!lv.all_finite()) throw NumericError("non-finite loss");
    node(loss.id).grad.data[0] = 1.0;
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) backward_node(id);
    if (store_) {
        for (const Node& n : nodes_) {
            if (n.op == Op::Leaf && !n.bind.empty()) {
                Tensor2& g = store_->grad(n.bind);
                if (!g.same_shape(n.grad))
                    throw DimensionError("parameter reshaped during episode: " + n.bind);
                for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += n.grad.data[i];
            }
        }
    }
    consumed_ = true;
}

void Tape::backward_node(int id) {
    Node& n = node(id);
    const Tensor2& g = n.grad;
    auto pgrad = [&](int slot) -> Tensor2& { return node(n.parent[slot]).grad; };
    auto pval = [&](int slot) -> const Tensor2& { return node(n.parent[slot]).val; };
    switch (n.op) {
    case Op::Const:
    case Op::Leaf:
        break;
    case Op::MatMul: {
        // dA += dC * B^T ; dB += A^T * dC
        const Tensor2& a = pval(0);
        const Tensor2& b = pval(1);
        Tensor2& da = pgrad(0);
        Tensor2& db = pgrad(1);
        for (int i = 0; i < a.rows; ++i)
            for (int j = 0; j < b.cols; ++j) {
                const double gij = g.at(i, j);
                if (gij == 0.0) continue;
                for (int k = 0; k < a.cols; ++k) {
                    da.at(i, k) += gij * b.at(k, j);
                    db.at(k, j) += a.at(i, k) * gij;
                }
            }
        break;
    }
    case Op::Add:
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            pgrad(0).data[i] += g.data[i];
            pgrad(1).data[i] += g.data[i];
        }
        break;
    case Op::AddRowwise: {
        Tensor2& dm = pgrad(0);
        Tensor2& dr = pgrad(1);
        for (int i = 0; i < n.val.rows; ++i)
            for (int j = 0; j < n.val.cols; ++j) {
                dm.at(i, j) += g.at(i, j);
                dr.data[j] += g.at(i, j);
            }
        break;
    }
    case Op::Hadamard:
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            pgrad(0).data[i] += g.data[i] * pval(1).data[i];
            pgrad(1).data[i] += g.data[i] * pval(0).data[i];
        }
        break;
    case Op::SubFromOne:
        for (std::size_t i = 0; i < g.data.size(); ++i) pgrad(0).data[i] -= g.data[i];
        break;
    case Op::Scale:
        for (std::size_t i = 0; i < g.data.size(); ++i) pgrad(0).data[i] += n.aux * g.data[i];
        break;
    case Op::Sigmoid:
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double s = n.val.data[i];
            pgrad(0).data[i] += g.data[i] * s * (1.0 - s);
        }
        break;
    case Op::Tanh:
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double t = n.val.data[i];
            pgrad(0).data[i] += g.data[i] * (1.0 - t * t);
        }
        break;
    case Op::Relu:
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (pval(0).data[i] > 0.0) pgrad(0).data[i] += g.data[i];
        break;
    case Op::SoftmaxRows: {
        Tensor2& da = pgrad(0);
        for (int i = 0; i < n.val.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.val.cols; ++j) dot += g.at(i, j) * n.val.at(i, j);
            for (int j = 0; j < n.val.cols; ++j)
                da.at(i, j) += n.val.at(i, j) * (g.at(i, j) - dot);
        }
        break;
    }
    case Op::LayerNorm: {
        Tensor2& dx = pgrad(0);
        Tensor2& dgain = pgrad(1);
        Tensor2& dbias = pgrad(2);
        const Tensor2& gain = pval(1);
        const int c = n.val.cols;
        for (int i = 0; i < n.val.rows; ++i) {
            double mean_dy = 0.0;
            double mean_dy_xh = 0.0;
            for (int j = 0; j < c; ++j) {
                const double dy = g.at(i, j) * gain.data[j];
                mean_dy += dy;
                mean_dy_xh += dy * n.saved.at(i, j);
                dgain.data[j] += g.at(i, j) * n.saved.at(i, j);
                dbias.data[j] += g.at(i, j);
            }
            mean_dy /= c;
            mean_dy_xh /= c;
            const double inv_std = n.saved2.at(i, 0);
            for (int j = 0; j < c; ++j) {
                const double dy = g.at(i, j) * gain.data[j];
                dx.at(i, j) += inv_std * (dy - mean_dy - n.saved.at(i, j) * mean_dy_xh);
            }
        }
        break;
    }
    case Op::ConcatCols: {
        int off = 0;
        for (int pid : n.parents_many) {
            Tensor2& dp = node(pid).grad;
            for (int i = 0; i < dp.rows; ++i)
                for (int j = 0; j < dp.cols; ++j) dp.at(i, j) += g.at(i, off + j);
            off += dp.cols;
        }
        break;
    }
    case Op::ConcatRows: {
        int off = 0;
        for (int pid : n.parents_many) {
            Tensor2& dp = node(pid).grad;
            for (int i = 0; i < dp.rows; ++i)
                for (int j = 0; j < dp.cols; ++j) dp.at(i, j) += g.at(off + i, j);
            off += dp.rows;
        }
        break;
    }
    case Op::SliceCols: {
        Tensor2& da = pgrad(0);
        for (int i = 0; i < n.val.rows; ++i)
            for (int j = 0; j < n.val.cols; ++j) da.at(i, n.iaux0 + j) += g.at(i, j);
        break;
    }
    case Op::SliceRows: {
        Tensor2& da = pgrad(0);
        for (int i = 0; i < n.val.rows; ++i)
            for (int j = 0; j < n.val.cols; ++j) da.at(n.iaux0 + i, j) += g.at(i, j);
        break;
    }
    case Op::Transpose: {
        Tensor2& da = pgrad(0);
        for (int i = 0; i < n.val.rows; ++i)
            for (int j = 0; j < n.val.cols; ++j) da.at(j, i) += g.at(i, j);
        break;
    }
    case Op::SumAll: {
        const double go = g.data[0];
        for (auto& d : pgrad(0).data) d += go;
        break;
    }
    case Op::MeanAll: {
        const double go = g.data[0] / n.aux;
        for (auto& d : pgrad(0).data) d += go;
        break;
    }
    case Op::Max:
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (pval(0).data[i] >= pval(1).data[i])
                pgrad(0).data[i] += g.data[i];
            else
                pgrad(1).data[i] += g.data[i];
        }
        break;
    case Op::BceWithLogits: {
        const double go = g.data[0] / n.aux;
        Tensor2& dx = pgrad(0);
        for (std::size_t i = 0; i < dx.data.size(); ++i) {
            const double s = stable_sigmoid(pval(0).data[i]);
            dx.data[i] += go * (s - n.saved.data[i]);
        }
        break;
    }
    }
}

} // namespace nscr
