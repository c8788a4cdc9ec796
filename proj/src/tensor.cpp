#include "nscr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nscr/error.hpp"
#include "nscr/rng.hpp"

namespace nscr {

Tensor2::Tensor2(int r, int c, double fill_value)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill_value) {
    if (r < 0 || c < 0) throw DimensionError("tensor dimensions must be non-negative");
}

Tensor2::Tensor2(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(r) * c)
        throw DimensionError("tensor data length does not match rows*cols");
}

Tensor2 Tensor2::row_vector(const std::vector<double>& v) {
    return Tensor2(1, static_cast<int>(v.size()), v);
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows_in) {
    const int r = static_cast<int>(rows_in.size());
    const int c = r == 0 ? 0 : static_cast<int>(rows_in.begin()->size());
    Tensor2 out(r, c);
    int i = 0;
    for (const auto& row : rows_in) {
        if (static_cast<int>(row.size()) != c) throw DimensionError("ragged initializer rows");
        int j = 0;
        for (double v : row) out.at(i, j++) = v;
        ++i;
    }
    return out;
}

Tensor2 Tensor2::identity(int n) {
    Tensor2 out(n, n);
    for (int i = 0; i < n; ++i) out.at(i, i) = 1.0;
    return out;
}

Tensor2 Tensor2::uniform(int r, int c, double lo, double hi, Rng& rng) {
    Tensor2 out(r, c);
    for (auto& v : out.data) v = rng.uniform(lo, hi);
    return out;
}

bool Tensor2::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::vector<double> Tensor2::row(int r) const {
    return {data.begin() + static_cast<std::ptrdiff_t>(r) * cols,
            data.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols};
}

void Tensor2::set_row(int r, const std::vector<double>& v) {
    if (static_cast<int>(v.size()) != cols) throw DimensionError("set_row width mismatch");
    std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(r) * cols);
}

double Tensor2::max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
}

double Tensor2::max_abs_diff(const Tensor2& o) const {
    double m = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) m = std::max(m, std::abs(data[i] - o.data[i]));
    return m;
}

Tensor2 matmul_plain(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows)
        throw DimensionError("matmul shape mismatch: " + std::to_string(a.rows) + "x" +
                             std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                             std::to_string(b.cols));
    Tensor2 out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            double* orow = out.data.data() + static_cast<std::size_t>(i) * out.cols;
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor2 transpose_plain(const Tensor2& a) {
    Tensor2 out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

} // namespace nscr
