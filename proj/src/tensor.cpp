#include "frt/tensor.hpp"

#include <cmath>
#include <string>

namespace frt {

namespace {

std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul " + shape_str(a) + " by " + shape_str(b));
    Tensor out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add " + shape_str(a) + " vs " + shape_str(b));
    Tensor out = a;
    for (int i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_rowvec " + shape_str(a) + " vs " + shape_str(bias));
    Tensor out = a;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(i, j) += bias(0, j);
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("sub " + shape_str(a) + " vs " + shape_str(b));
    Tensor out = a;
    for (int i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (int i = 0; i < out.numel(); ++i) out[i] *= s;
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = a;
    for (int i = 0; i < out.numel(); ++i) out[i] += s;
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols " + shape_str(a) + " vs " + shape_str(b));
    Tensor out(a.rows(), a.cols() + b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
        for (int j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
    }
    return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                         shape_str(a));
    Tensor out(a.rows(), c1 - c0);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
    return out;
}

Tensor select_row(const Tensor& a, int r) {
    if (r < 0 || r >= a.rows()) throw ShapeError("select_row " + std::to_string(r));
    Tensor out(1, a.cols());
    for (int j = 0; j < a.cols(); ++j) out(0, j) = a(r, j);
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (int i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    Tensor out(a.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i) {
        double mx = a(i, 0);
        for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        double denom = 0.0;
        for (int j = 0; j < a.cols(); ++j) {
            double e = std::exp(a(i, j) - mx);
            out(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < a.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

Tensor log_softmax_rows(const Tensor& a) {
    Tensor out(a.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i) {
        double mx = a(i, 0);
        for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        double denom = 0.0;
        for (int j = 0; j < a.cols(); ++j) denom += std::exp(a(i, j) - mx);
        double lse = mx + std::log(denom);
        for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) - lse;
    }
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (int i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

double mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return sum(a) / a.numel();
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw ShapeError("dot " + shape_str(a) + " vs " + shape_str(b));
    double s = 0.0;
    for (int i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

double cosine(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw ShapeError("cosine " + shape_str(a) + " vs " + shape_str(b));
    double na = std::sqrt(dot(a, a));
    double nb = std::sqrt(dot(b, b));
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    double c = dot(a, b) / (na * nb);
    return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

double euclidean(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw ShapeError("euclidean " + shape_str(a) + " vs " + shape_str(b));
    double s = 0.0;
    for (int i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace frt
