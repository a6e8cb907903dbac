#pragma once

#include <initializer_list>
#include <vector>

#include "frt/errors.hpp"

namespace frt {

/// Dense row-major matrix of doubles. Vectors are 1 x n tensors.
/// All arithmetic in this project is 64-bit; every kernel below is a plain
/// fixed-order loop, so identical inputs give bitwise-identical outputs.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols) : rows_(rows), cols_(cols), v_(check_dims(rows, cols), 0.0) {}
    Tensor(int rows, int cols, std::vector<double> values)
        : rows_(rows), cols_(cols), v_(std::move(values)) {
        if (static_cast<std::size_t>(check_dims(rows, cols)) != v_.size())
            throw ShapeError("value count does not match shape");
    }

    static Tensor row(std::vector<double> values) {
        int n = static_cast<int>(values.size());
        return Tensor(1, n, std::move(values));
    }
    static Tensor row(std::initializer_list<double> values) {
        return row(std::vector<double>(values));
    }
    static Tensor identity(int n) {
        Tensor t(n, n);
        for (int i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }
    static Tensor filled(int rows, int cols, double value) {
        Tensor t(rows, cols);
        for (double& x : t.v_) x = value;
        return t;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int numel() const { return rows_ * cols_; }
    bool empty() const { return v_.empty(); }
    std::vector<int> shape() const { return {rows_, cols_}; }

    double& operator()(int r, int c) { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return v_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    const std::vector<double>& values() const { return v_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    /// Bitwise equality (shape and every element).
    bool operator==(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

private:
    static int check_dims(int rows, int cols) {
        if (rows < 0 || cols < 0) throw ShapeError("negative dimension");
        return rows * cols;
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> v_;
};

// ---------------------------------------------------------------------------
// Forward kernels. The autodiff tape calls these same functions, so the plain
// and taped evaluation routes agree bitwise.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a 1 x c row vector to every row of a.
Tensor add_rowvec(const Tensor& a, const Tensor& bias);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor select_row(const Tensor& a, int r);
/// Elementwise max(0, x). The subgradient at 0 is taken as 0.
Tensor relu(const Tensor& a);
/// Row-wise softmax, stabilized by per-row max subtraction.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

double sum(const Tensor& a);
double mean(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
/// cos(a, b) over the flattened elements, clamped to [-1, 1].
/// Returns 0 if either operand has norm below 1e-12, so zeroed (fully
/// occluded) features never poison a similarity.
double cosine(const Tensor& a, const Tensor& b);
double euclidean(const Tensor& a, const Tensor& b);

}  // namespace frt
