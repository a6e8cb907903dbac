#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "frt/rng.hpp"
#include "frt/visgraph.hpp"

using frt::GraphConfig;
using frt::kNumParts;
using frt::ModelParams;
using frt::PersonDescriptor;
using frt::Tensor;

namespace {

PersonDescriptor make_descriptor(frt::Rng& rng, int c, int id = 0, int cam = 0) {
    PersonDescriptor d;
    d.id = id;
    d.camera = cam;
    for (auto& x : d.kp_conf) x = rng.uniform();
    for (int p = 0; p < kNumParts; ++p) {
        d.parts[p].resize(c);
        for (int j = 0; j < c; ++j) d.parts[p][j] = rng.normal();
    }
    for (auto& v : d.vis) v = rng.uniform();
    return d;
}

ModelParams make_gcn(frt::Rng& rng, int c, int layers = 1, bool random_wr = false) {
    ModelParams params;
    frt::add_gcn_params(params, c, layers, rng);
    if (random_wr) {
        for (int l = 0; l < layers; ++l) {
            Tensor& wr = params.tensor(frt::gcn_wr_name(l));
            for (int i = 0; i < wr.numel(); ++i) wr[i] = 0.3 * rng.normal();
        }
    }
    return params;
}

}  // namespace

TEST_CASE("shared visibility is the elementwise min") {
    std::array<double, 4> vq = {0.3, 1.0, 0.5, 0.0};
    std::array<double, 4> vg = {0.9, 1.0, 0.2, 0.7};
    auto phi = frt::shared_visibility(vq, vg);
    CHECK(phi[0] == 0.3);
    CHECK(phi[1] == 1.0);
    CHECK(phi[2] == 0.2);
    CHECK(phi[3] == 0.0);

    auto same = frt::shared_visibility(vq, vq);
    CHECK(same == vq);
}

TEST_CASE("adjacency diagonal is one and rows are constant off-diagonal") {
    frt::Rng rng(2);
    for (int trial = 0; trial < 25; ++trial) {
        auto a = make_descriptor(rng, 6);
        auto b = make_descriptor(rng, 6);
        auto g = frt::adjacency(a, b, rng.uniform());
        for (int i = 0; i < kNumParts; ++i) {
            CHECK(g.adjacency(i, i) == 1.0);
            double off = g.adjacency(i, (i + 1) % kNumParts);
            for (int j = 0; j < kNumParts; ++j) {
                if (j != i) CHECK(g.adjacency(i, j) == off);
                CHECK(g.adjacency(i, j) >= 0.0);
            }
        }
    }
}

TEST_CASE("adjacency direct substitution cases") {
    frt::Rng rng(3);
    auto a = make_descriptor(rng, 4);
    auto b = make_descriptor(rng, 4);

    SUBCASE("indicator on") {
        // force phi = 0.5 and cosine = 0.2 on part 1
        a.vis = {0.5, 0.5, 0.5, 0.5};
        b.vis = {0.9, 0.9, 0.9, 0.9};
        a.parts[1] = {1, 0, 0, 0};
        b.parts[1] = {0.2, std::sqrt(1 - 0.04), 0, 0};
        auto g = frt::adjacency(a, b, 0.4);
        CHECK(g.adjacency(1, 0) == doctest::Approx(0.5 + 0.8).epsilon(1e-12));
    }
    SUBCASE("indicator off") {
        a.vis = {0.1, 0.1, 0.1, 0.1};
        b.vis = {0.9, 0.9, 0.9, 0.9};
        auto g = frt::adjacency(a, b, 0.4);
        for (int j = 1; j < kNumParts; ++j) CHECK(g.adjacency(0, j) == doctest::Approx(0.1));
    }
    SUBCASE("indicator strict at equality") {
        a.vis = {0.4, 0.4, 0.4, 0.4};
        b.vis = {0.4, 0.4, 0.4, 0.4};
        auto g = frt::adjacency(a, b, 0.4);
        for (int j = 1; j < kNumParts; ++j) CHECK(g.adjacency(0, j) == 0.4);
    }
}

TEST_CASE("adjacency equals direct formula on 1000 random instances") {
    frt::Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        auto a = make_descriptor(rng, 5);
        auto b = make_descriptor(rng, 5);
        double gamma = rng.uniform();
        auto g = frt::adjacency(a, b, gamma);
        for (int i = 0; i < kNumParts; ++i) {
            double phi = std::min(a.vis[i], b.vis[i]);
            double want = phi;
            if (phi > gamma)
                want += 1.0 - frt::cosine(Tensor::row(a.parts[i]), Tensor::row(b.parts[i]));
            for (int j = 0; j < kNumParts; ++j) {
                double expect = i == j ? 1.0 : want;
                CHECK(std::abs(g.adjacency(i, j) - expect) <= 1e-12);
            }
        }
    }
}

TEST_CASE("increasing phi never decreases the row weight") {
    frt::Rng rng(41);
    auto a = make_descriptor(rng, 5);
    auto b = make_descriptor(rng, 5);
    // keep the indicator on in both cases: gamma below both phi values
    a.vis = {0.6, 0.6, 0.6, 0.6};
    b.vis = {0.9, 0.9, 0.9, 0.9};
    auto low = frt::adjacency(a, b, 0.5);
    a.vis = {0.8, 0.8, 0.8, 0.8};
    auto high = frt::adjacency(a, b, 0.5);
    for (int i = 0; i < kNumParts; ++i)
        CHECK(high.adjacency(i, (i + 1) % 4) >= low.adjacency(i, (i + 1) % 4));
}

TEST_CASE("row normalization") {
    CHECK(frt::normalize_rows(Tensor::identity(4)) == Tensor::identity(4));

    Tensor a(1, 4, {1, 2, 1, 0});
    Tensor n = frt::normalize_rows(a);
    CHECK(n(0, 0) == 0.25);
    CHECK(n(0, 1) == 0.5);
    CHECK(n(0, 2) == 0.25);
    CHECK(n(0, 3) == 0.0);

    frt::Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        auto a1 = make_descriptor(rng, 4);
        auto b1 = make_descriptor(rng, 4);
        Tensor nn = frt::normalize_rows(frt::adjacency(a1, b1, 0.5).adjacency);
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 4; ++j) s += nn(i, j);
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("gcn with zero residual weight is the identity") {
    frt::Rng rng(7);
    ModelParams params = make_gcn(rng, 8);  // W_r starts zero
    Tensor fq(4, 8), fg(4, 8);
    for (int i = 0; i < fq.numel(); ++i) fq[i] = rng.normal();
    for (int i = 0; i < fg.numel(); ++i) fg[i] = rng.normal();
    Tensor a_hat = frt::normalize_rows(Tensor::identity(4));
    auto [uq, ug] = frt::gcn_forward(fq, fg, a_hat, params, 1);
    CHECK(uq == fq);
    CHECK(ug == fg);
}

TEST_CASE("identity adjacency keeps messages local") {
    frt::Rng rng(8);
    ModelParams params = make_gcn(rng, 6, 1, /*random_wr=*/true);
    Tensor x(4, 6);
    for (int j = 0; j < 6; ++j) x(2, j) = rng.normal();  // only node 2 nonzero
    auto [u, u2] = frt::gcn_forward(x, x, Tensor::identity(4), params, 1);
    (void)u2;
    // all other nodes receive no message: their rows stay zero
    for (int i = 0; i < 4; ++i) {
        if (i == 2) continue;
        for (int j = 0; j < 6; ++j) CHECK(u(i, j) == 0.0);
    }
}

TEST_CASE("gcn matches a hand-rolled oracle") {
    frt::Rng rng(9);
    const int c = 8;
    ModelParams params = make_gcn(rng, c, 1, /*random_wr=*/true);
    auto a = make_descriptor(rng, c);
    auto b = make_descriptor(rng, c);
    Tensor a_hat = frt::normalize_rows(frt::adjacency(a, b, 0.5).adjacency);
    auto [uq, ug] = frt::gcn_forward(a.parts_matrix(), b.parts_matrix(), a_hat, params, 1);

    // independent re-implementation with explicit loops
    const Tensor& wm = params.tensor(frt::gcn_wm_name(0));
    const Tensor& wr = params.tensor(frt::gcn_wr_name(0));
    auto oracle = [&](const Tensor& x) {
        Tensor mixed(4, c);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < c; ++j) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += a_hat(i, k) * x(k, j);
                mixed(i, j) = s;
            }
        Tensor msg(4, c);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < c; ++j) {
                double s = 0.0;
                for (int k = 0; k < c; ++k) s += mixed(i, k) * wm(k, j);
                msg(i, j) = s > 0 ? s : 0;
            }
        Tensor out(4, c);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < c; ++j) {
                double s = 0.0;
                for (int k = 0; k < c; ++k) s += x(i, k) * wr(k, j);
                for (int k = 0; k < c; ++k) s += msg(i, k) * wr(c + k, j);
                out(i, j) = x(i, j) + s;
            }
        return out;
    };
    Tensor want_q = oracle(a.parts_matrix());
    Tensor want_g = oracle(b.parts_matrix());
    for (int i = 0; i < want_q.numel(); ++i) {
        CHECK(std::abs(uq[i] - want_q[i]) <= 1e-12);
        CHECK(std::abs(ug[i] - want_g[i]) <= 1e-12);
    }
}

TEST_CASE("pair similarity of a descriptor with itself is 1") {
    frt::Rng rng(10);
    ModelParams params = make_gcn(rng, 8, 1, true);
    auto d = make_descriptor(rng, 8);
    GraphConfig cfg;
    CHECK(frt::pair_similarity(d, d, params, cfg) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pair similarity is symmetric") {
    frt::Rng rng(11);
    ModelParams params = make_gcn(rng, 8, 1, true);
    GraphConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        auto a = make_descriptor(rng, 8);
        auto b = make_descriptor(rng, 8);
        double sab = frt::pair_similarity(a, b, params, cfg);
        double sba = frt::pair_similarity(b, a, params, cfg);
        CHECK(std::abs(sab - sba) <= 1e-12);
    }
}

TEST_CASE("fully occluded pair scores zero") {
    frt::Rng rng(12);
    ModelParams params = make_gcn(rng, 8, 1, true);
    auto a = make_descriptor(rng, 8);
    auto b = make_descriptor(rng, 8);
    a.vis = {0, 0, 0, 0};
    b.vis = {0, 0, 0, 0};
    a = frt::apply_occlusion_threshold(a, 0.2);
    b = frt::apply_occlusion_threshold(b, 0.2);
    GraphConfig cfg;
    CHECK(frt::pair_similarity(a, b, params, cfg) == 0.0);
}

TEST_CASE("with zero residual weights the graph reduces to concat cosine") {
    frt::Rng rng(13);
    ModelParams params = make_gcn(rng, 8);  // W_r zero
    GraphConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        auto a = make_descriptor(rng, 8);
        auto b = make_descriptor(rng, 8);
        CHECK(frt::pair_similarity(a, b, params, cfg) == frt::cosine_similarity(a, b));
    }
}

TEST_CASE("score matrix equals the pairwise loop") {
    frt::Rng rng(14);
    ModelParams params = make_gcn(rng, 6, 1, true);
    GraphConfig cfg;
    std::vector<PersonDescriptor> queries, gallery;
    for (int i = 0; i < 5; ++i) queries.push_back(make_descriptor(rng, 6));
    for (int i = 0; i < 20; ++i) gallery.push_back(make_descriptor(rng, 6));

    Tensor s = frt::score_matrix(queries, gallery, params, cfg);
    REQUIRE(s.rows() == 5);
    REQUIRE(s.cols() == 20);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 20; ++j)
            CHECK(s(i, j) == frt::pair_similarity(queries[i], gallery[j], params, cfg));
}

TEST_CASE("score matrix trivial cases") {
    frt::Rng rng(15);
    ModelParams params = make_gcn(rng, 4, 1, true);
    GraphConfig cfg;
    auto d = make_descriptor(rng, 4);

    std::vector<PersonDescriptor> q = {d}, g = {d};
    Tensor s = frt::score_matrix(q, g, params, cfg);
    CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    // 2x2 with an exact duplicate: that cell is the row maximum
    auto other = make_descriptor(rng, 4);
    std::vector<PersonDescriptor> q2 = {d, other}, g2 = {other, d};
    Tensor s2 = frt::score_matrix(q2, g2, params, cfg);
    CHECK(s2(0, 1) > s2(0, 0));
    CHECK(s2(1, 0) > s2(1, 1));
}

TEST_CASE("taped pair similarity matches the plain path bitwise") {
    frt::Rng rng(16);
    ModelParams params = make_gcn(rng, 8, 1, true);
    GraphConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        auto a = make_descriptor(rng, 8);
        auto b = make_descriptor(rng, 8);
        frt::ad::Tape tape(params);
        frt::ad::Val s = frt::pair_similarity_node(tape, a, b, cfg);
        CHECK(tape.scalar(s) == frt::pair_similarity(a, b, params, cfg));
    }
}

TEST_CASE("taped self-pair update matches the plain path bitwise") {
    frt::Rng rng(17);
    ModelParams params = make_gcn(rng, 8, 1, true);
    GraphConfig cfg;
    auto d = make_descriptor(rng, 8);
    frt::ad::Tape tape(params);
    frt::ad::Val u = frt::graph_update_node(tape, d, cfg);
    CHECK(tape.value(u) == frt::graph_update(d, params, cfg));
}

TEST_CASE("graph similarity gradients match finite differences") {
    frt::Rng rng(18);
    ModelParams params = make_gcn(rng, 8, 1, true);
    GraphConfig cfg;
    auto a = make_descriptor(rng, 8);
    auto b = make_descriptor(rng, 8);
    auto graph = [&](frt::ad::Tape& t) { return pair_similarity_node(t, a, b, cfg); };
    CHECK(frt::ad::finite_diff_check(graph, params, 1e-4) < 1e-4);
}
