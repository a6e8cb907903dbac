#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "frt/rng.hpp"
#include "frt/tensor.hpp"

using frt::Tensor;

namespace {

Tensor random_tensor(frt::Rng& rng, int r, int c, double scale = 1.0) {
    Tensor t(r, c);
    for (int i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Independent triple-loop product used as the matmul oracle.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul identity") {
    Tensor b(2, 2, {3, 4, 5, 6});
    Tensor out = frt::matmul(Tensor::identity(2), b);
    CHECK(out == b);
}

TEST_CASE("matmul forced arithmetic") {
    Tensor a(1, 2, {1, 2});
    Tensor b(2, 1, {3, 4});
    Tensor out = frt::matmul(a, b);
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 1);
    CHECK(out(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    frt::Rng rng(11);
    Tensor a = random_tensor(rng, 5, 4);
    Tensor b = random_tensor(rng, 4, 3);
    Tensor got = frt::matmul(a, b);
    Tensor want = matmul_oracle(a, b);
    for (int i = 0; i < got.numel(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("matmul shape mismatch throws") {
    CHECK_THROWS_AS(frt::matmul(Tensor(2, 3), Tensor(2, 3)), frt::ShapeError);
}

TEST_CASE("softmax of constant row is uniform") {
    Tensor out = frt::softmax_rows(Tensor::row({0, 0, 0}));
    for (int j = 0; j < 3; ++j) CHECK(out(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax stabilized against large inputs") {
    Tensor out = frt::softmax_rows(Tensor::row({1000, 1000}));
    CHECK(out.all_finite());
    CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax matches exp-normalize oracle") {
    Tensor out = frt::softmax_rows(Tensor::row({1, 2, 3}));
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(out(0, j) - std::exp(1.0 + j) / z) < 1e-12);
}

TEST_CASE("softmax rows sum to one, including magnitude 1e3 entries") {
    frt::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor(rng, 4, 6, trial % 2 == 0 ? 1.0 : 1e3);
        Tensor y = frt::softmax_rows(x);
        for (int i = 0; i < y.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < y.cols(); ++j) {
                s += y(i, j);
                CHECK(y(i, j) >= 0.0);
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("cosine of identical vectors is 1") {
    Tensor a = Tensor::row({1, 2, 3});
    CHECK(frt::cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cosine of orthogonal unit vectors is 0") {
    CHECK(frt::cosine(Tensor::row({1, 0}), Tensor::row({0, 1})) == 0.0);
}

TEST_CASE("cosine with a zero vector is 0") {
    CHECK(frt::cosine(Tensor::row({0, 0, 0}), Tensor::row({1, 2, 3})) == 0.0);
    CHECK(frt::cosine(Tensor::row({1, 2, 3}), Tensor::row({0, 0, 0})) == 0.0);
}

TEST_CASE("cosine length mismatch throws") {
    CHECK_THROWS_AS(frt::cosine(Tensor::row({1, 2}), Tensor::row({1, 2, 3})), frt::ShapeError);
}

TEST_CASE("forward kernels are deterministic") {
    frt::Rng rng(3);
    Tensor a = random_tensor(rng, 6, 5);
    Tensor b = random_tensor(rng, 5, 7);
    CHECK(frt::matmul(a, b) == frt::matmul(a, b));
    CHECK(frt::softmax_rows(a) == frt::softmax_rows(a));
}

TEST_CASE("concat and slice round trip") {
    frt::Rng rng(5);
    Tensor a = random_tensor(rng, 3, 4);
    Tensor b = random_tensor(rng, 3, 2);
    Tensor c = frt::concat_cols(a, b);
    CHECK(frt::slice_cols(c, 0, 4) == a);
    CHECK(frt::slice_cols(c, 4, 6) == b);
}

TEST_CASE("euclidean distance basics") {
    CHECK(frt::euclidean(Tensor::row({0, 0}), Tensor::row({3, 4})) == doctest::Approx(5.0));
    Tensor a = Tensor::row({1, 2});
    CHECK(frt::euclidean(a, a) == 0.0);
}

TEST_CASE("mean and sum") {
    Tensor a(2, 2, {1, 2, 3, 4});
    CHECK(frt::sum(a) == 10.0);
    CHECK(frt::mean(a) == 2.5);
}
