#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace nscr {

class Rng;

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 tensors.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(int r, int c, double fill = 0.0);
    Tensor2(int r, int c, std::vector<double> d);
    static Tensor2 row_vector(const std::vector<double>& v);
    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor2 identity(int n);
    static Tensor2 uniform(int r, int c, double lo, double hi, Rng& rng);

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;

    void fill(double v);
    std::vector<double> row(int r) const;
    void set_row(int r, const std::vector<double>& v);

    double max_abs() const;
    double max_abs_diff(const Tensor2& o) const;

    bool operator==(const Tensor2& o) const = default;
};

// Plain (non-recorded) numeric helpers used by generators, metrics and tests.
Tensor2 matmul_plain(const Tensor2& a, const Tensor2& b);
Tensor2 transpose_plain(const Tensor2& a);

} // namespace nscr
