#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "frt/recovery.hpp"
#include "frt/rng.hpp"

using frt::kNumParts;
using frt::ModelParams;
using frt::PersonDescriptor;
using frt::RecoveryConfig;
using frt::RecoveryContext;
using frt::Tensor;

namespace {

PersonDescriptor make_descriptor(frt::Rng& rng, int c, int id = 0) {
    PersonDescriptor d;
    d.id = id;
    for (auto& x : d.kp_conf) x = rng.uniform();
    for (int p = 0; p < kNumParts; ++p) {
        d.parts[p].resize(c);
        for (int j = 0; j < c; ++j) d.parts[p][j] = rng.normal();
    }
    for (auto& v : d.vis) v = rng.uniform();
    return d;
}

RecoveryContext make_context(frt::Rng& rng, int c, int k) {
    RecoveryContext ctx;
    ctx.query = make_descriptor(rng, c);
    for (int n = 0; n < k; ++n) {
        ctx.neighbors.push_back(make_descriptor(rng, c, n + 1));
        ctx.neighbor_cos.push_back(rng.uniform());
    }
    return ctx;
}

ModelParams make_params(frt::Rng& rng, int c, int steps, int layers, int eh = 8, int uh = 16) {
    ModelParams params;
    frt::add_recovery_params(params, c, steps, layers, eh, uh, rng);
    return params;
}

/// Fills the zero-initialized output layers with random values so the model
/// is no longer the identity.
void randomize(ModelParams& params, frt::Rng& rng, double s = 0.3) {
    for (auto& [name, p] : params) {
        bool zeroish = name.ends_with("w2") || name.ends_with("b2") || name.ends_with("uw2") ||
                       name.ends_with("ub2") || name.ends_with("bf");
        if (zeroish)
            for (int i = 0; i < p.tensor.numel(); ++i) p.tensor[i] = s * rng.normal();
    }
}

}  // namespace

TEST_CASE("embedding is the identity while the output layer is zero") {
    frt::Rng rng(1);
    ModelParams params = make_params(rng, 8, 1, 1);
    frt::ad::Tape tape(params);
    Tensor f(1, 8);
    for (int i = 0; i < 8; ++i) f[i] = rng.normal();
    auto out = frt::embed_local_info_node(tape, tape.constant(f), 2, 0.7, 0.4);
    CHECK(tape.value(out) == f);
}

TEST_CASE("tokens differing only in position embed differently once trained") {
    frt::Rng rng(2);
    ModelParams params = make_params(rng, 8, 1, 1);
    randomize(params, rng);
    frt::ad::Tape tape(params);
    Tensor f(1, 8);
    for (int i = 0; i < 8; ++i) f[i] = rng.normal();
    auto a = frt::embed_local_info_node(tape, tape.constant(f), 0, 0.7, 0.4);
    auto b = frt::embed_local_info_node(tape, tape.constant(f), 3, 0.7, 0.4);
    CHECK(!(tape.value(a) == tape.value(b)));
}

TEST_CASE("embedding of a zero feature is the side-information image alone") {
    frt::Rng rng(3);
    ModelParams params = make_params(rng, 8, 1, 1);
    randomize(params, rng);

    frt::ad::Tape tape(params);
    auto from_zero = frt::embed_local_info_node(tape, tape.constant(Tensor(1, 8)), 1, 0.5, 0.2);

    // independent evaluation of MLP(side) with plain kernels
    Tensor side(1, 6, {0, 1, 0, 0, 0.5, 0.2});
    Tensor h = frt::relu(frt::add_rowvec(frt::matmul(side, params.tensor("rec.embed.w1")),
                                         params.tensor("rec.embed.b1")));
    Tensor e = frt::add_rowvec(frt::matmul(h, params.tensor("rec.embed.w2")),
                               params.tensor("rec.embed.b2"));
    CHECK(tape.value(from_zero) == e);
}

TEST_CASE("attention layer is the identity while the update MLP output is zero") {
    frt::Rng rng(4);
    const int c = 8;
    ModelParams params = make_params(rng, c, 1, 1);
    frt::ad::Tape tape(params);
    Tensor xq(4, c), xk(8, c);
    for (int i = 0; i < xq.numel(); ++i) xq[i] = rng.normal();
    for (int i = 0; i < xk.numel(); ++i) xk[i] = rng.normal();
    RecoveryConfig cfg;
    auto out = frt::transformer_layer_node(tape, tape.constant(xq), tape.constant(xk), 0, 0, cfg,
                                           nullptr);
    CHECK(tape.value(out) == xq);
}

TEST_CASE("identical neighbor tokens collapse the message to their value") {
    frt::Rng rng(5);
    const int c = 6;
    ModelParams params = make_params(rng, c, 1, 1);
    randomize(params, rng);

    // k = 1 with all four tokens equal
    Tensor token(1, c);
    for (int j = 0; j < c; ++j) token(0, j) = rng.normal();
    Tensor xk(4, c);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < c; ++j) xk(i, j) = token(0, j);
    Tensor xq(4, c);
    for (int i = 0; i < xq.numel(); ++i) xq[i] = rng.normal();

    std::vector<Tensor> attn;
    frt::ad::Tape tape(params);
    RecoveryConfig cfg;
    auto out = frt::transformer_layer_node(tape, tape.constant(xq), tape.constant(xk), 0, 0, cfg,
                                           &attn);

    // message = value of the shared token, whatever the attention weights are
    Tensor value = frt::add_rowvec(frt::matmul(token, params.tensor("rec.s0.l0.wv")),
                                   params.tensor("rec.s0.l0.bv"));
    // reconstruct the expected update from the collapsed message
    Tensor msg(4, c);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < c; ++j) msg(i, j) = value(0, j);
    Tensor cat = frt::concat_cols(xq, msg);
    Tensor h = frt::relu(frt::add_rowvec(frt::matmul(cat, params.tensor("rec.s0.l0.uw1")),
                                         params.tensor("rec.s0.l0.ub1")));
    Tensor upd = frt::add_rowvec(frt::matmul(h, params.tensor("rec.s0.l0.uw2")),
                                 params.tensor("rec.s0.l0.ub2"));
    Tensor want = frt::add(xq, upd);
    for (int i = 0; i < want.numel(); ++i)
        CHECK(tape.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("attention layer matches an explicit double-loop oracle") {
    frt::Rng rng(6);
    const int c = 8, k = 2;
    ModelParams params = make_params(rng, c, 1, 1);
    randomize(params, rng);

    Tensor xq(4, c), xk(4 * k, c);
    for (int i = 0; i < xq.numel(); ++i) xq[i] = rng.normal();
    for (int i = 0; i < xk.numel(); ++i) xk[i] = rng.normal();

    frt::ad::Tape tape(params);
    RecoveryConfig cfg;
    auto out = frt::transformer_layer_node(tape, tape.constant(xq), tape.constant(xk), 0, 0, cfg,
                                           nullptr);

    const Tensor& wq = params.tensor("rec.s0.l0.wq");
    const Tensor& bq = params.tensor("rec.s0.l0.bq");
    const Tensor& wk = params.tensor("rec.s0.l0.wk");
    const Tensor& bk = params.tensor("rec.s0.l0.bk");
    const Tensor& wv = params.tensor("rec.s0.l0.wv");
    const Tensor& bv = params.tensor("rec.s0.l0.bv");
    const Tensor& uw1 = params.tensor("rec.s0.l0.uw1");
    const Tensor& ub1 = params.tensor("rec.s0.l0.ub1");
    const Tensor& uw2 = params.tensor("rec.s0.l0.uw2");
    const Tensor& ub2 = params.tensor("rec.s0.l0.ub2");

    auto project = [&](const std::vector<double>& rowv, const Tensor& w, const Tensor& b) {
        std::vector<double> out_row(c, 0.0);
        for (int j = 0; j < c; ++j) {
            double s = b(0, j);
            for (int i = 0; i < c; ++i) s += rowv[i] * w(i, j);
            out_row[j] = s;
        }
        return out_row;
    };

    for (int t = 0; t < 4; ++t) {
        std::vector<double> q = project(frt::select_row(xq, t).values(), wq, bq);
        // scores over all 4k neighbor tokens
        std::vector<double> scores(4 * k);
        for (int n = 0; n < 4 * k; ++n) {
            std::vector<double> key = project(frt::select_row(xk, n).values(), wk, bk);
            double s = 0.0;
            for (int j = 0; j < c; ++j) s += q[j] * key[j];
            scores[n] = s;
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double z = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            z += s;
        }
        for (double& s : scores) s /= z;
        std::vector<double> message(c, 0.0);
        for (int n = 0; n < 4 * k; ++n) {
            std::vector<double> value = project(frt::select_row(xk, n).values(), wv, bv);
            for (int j = 0; j < c; ++j) message[j] += scores[n] * value[j];
        }
        // residual update through the two-layer MLP
        std::vector<double> cat(2 * c);
        for (int j = 0; j < c; ++j) cat[j] = xq(t, j);
        for (int j = 0; j < c; ++j) cat[c + j] = message[j];
        std::vector<double> hidden(uw1.cols(), 0.0);
        for (int j = 0; j < uw1.cols(); ++j) {
            double s = ub1(0, j);
            for (int i = 0; i < 2 * c; ++i) s += cat[i] * uw1(i, j);
            hidden[j] = s > 0 ? s : 0;
        }
        for (int j = 0; j < c; ++j) {
            double s = ub2(0, j);
            for (int i = 0; i < uw1.cols(); ++i) s += hidden[i] * uw2(i, j);
            double want = xq(t, j) + s;
            CHECK(std::abs(tape.value(out)(t, j) - want) <= 1e-12);
        }
    }
}

TEST_CASE("recover is the identity at identity initialization") {
    frt::Rng rng(7);
    const int c = 8;
    ModelParams params = make_params(rng, c, 3, 1);
    RecoveryContext ctx = make_context(rng, c, 3);
    RecoveryConfig cfg;
    cfg.steps = 3;
    auto res = frt::recover(ctx, params, cfg);
    CHECK(res.recovered == ctx.query.parts_matrix());
}

TEST_CASE("neighbors are bitwise unchanged by recovery") {
    frt::Rng rng(8);
    ModelParams params = make_params(rng, 8, 2, 1);
    randomize(params, rng);
    RecoveryContext ctx = make_context(rng, 8, 4);
    RecoveryContext before = ctx;
    RecoveryConfig cfg;
    cfg.steps = 2;
    (void)frt::recover(ctx, params, cfg);
    for (int n = 0; n < ctx.k(); ++n) {
        CHECK(ctx.neighbors[n].parts == before.neighbors[n].parts);
        CHECK(ctx.neighbors[n].vis == before.neighbors[n].vis);
        CHECK(ctx.neighbor_cos[n] == before.neighbor_cos[n]);
    }
}

TEST_CASE("one and three steps give different outputs with trained weights") {
    frt::Rng rng(9);
    ModelParams params = make_params(rng, 8, 3, 1);
    randomize(params, rng);
    RecoveryContext ctx = make_context(rng, 8, 3);
    RecoveryConfig one;
    one.steps = 1;
    RecoveryConfig three;
    three.steps = 3;
    auto r1 = frt::recover(ctx, params, one);
    auto r3 = frt::recover(ctx, params, three);
    CHECK(!(r1.recovered == r3.recovered));
}

TEST_CASE("empty neighbor list is a contract error") {
    frt::Rng rng(10);
    ModelParams params = make_params(rng, 8, 1, 1);
    RecoveryContext ctx;
    ctx.query = make_descriptor(rng, 8);
    RecoveryConfig cfg;
    CHECK_THROWS_AS(frt::recover(ctx, params, cfg), frt::ContractError);
}

TEST_CASE("missing step parameters are refused") {
    frt::Rng rng(11);
    ModelParams params = make_params(rng, 8, 1, 1);  // only step 0 exists
    RecoveryContext ctx = make_context(rng, 8, 2);
    RecoveryConfig cfg;
    cfg.steps = 2;
    CHECK_THROWS_AS(frt::recover(ctx, params, cfg), frt::ContractError);
}

TEST_CASE("attention rows are probability distributions") {
    frt::Rng rng(12);
    ModelParams params = make_params(rng, 8, 2, 1);
    randomize(params, rng);
    RecoveryContext ctx = make_context(rng, 8, 3);
    RecoveryConfig cfg;
    cfg.steps = 2;

    frt::ad::Tape tape(params);
    std::vector<Tensor> attn;
    (void)frt::recover_node(tape, ctx, cfg, &attn);
    REQUIRE(attn.size() == 2);  // one layer per step
    for (const Tensor& w : attn) {
        REQUIRE(w.rows() == 4);
        REQUIRE(w.cols() == 4 * ctx.k());
        for (int i = 0; i < w.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < w.cols(); ++j) {
                CHECK(w(i, j) >= 0.0);
                s += w(i, j);
            }
            CHECK(std::abs(s - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("attention report sums to one and handles degenerate cases") {
    frt::Rng rng(13);
    ModelParams params = make_params(rng, 8, 2, 1);
    randomize(params, rng);
    RecoveryConfig cfg;
    cfg.steps = 2;

    SUBCASE("k = 1 gives contribution [1]") {
        RecoveryContext ctx = make_context(rng, 8, 1);
        auto rep = frt::attention_report(ctx, params, cfg);
        REQUIRE(rep.neighbor_contribution.size() == 1);
        CHECK(rep.neighbor_contribution[0] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("two identical neighbors split evenly") {
        RecoveryContext ctx = make_context(rng, 8, 1);
        ctx.neighbors.push_back(ctx.neighbors[0]);
        ctx.neighbor_cos.push_back(ctx.neighbor_cos[0]);
        auto rep = frt::attention_report(ctx, params, cfg);
        REQUIRE(rep.neighbor_contribution.size() == 2);
        CHECK(rep.neighbor_contribution[0] == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(rep.neighbor_contribution[1] == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("random instance sums to one") {
        RecoveryContext ctx = make_context(rng, 8, 5);
        auto rep = frt::attention_report(ctx, params, cfg);
        double s = 0.0;
        for (double x : rep.neighbor_contribution) s += x;
        CHECK(std::abs(s - 1.0) <= 1e-9);
        // part rows also sum to one
        for (int i = 0; i < 4; ++i) {
            double rs = 0.0;
            for (int j = 0; j < 4; ++j) rs += rep.part_attention(i, j);
            CHECK(std::abs(rs - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("permuting neighbors permutes the report") {
    frt::Rng rng(14);
    ModelParams params = make_params(rng, 8, 1, 1);
    randomize(params, rng);
    RecoveryConfig cfg;
    cfg.steps = 1;
    RecoveryContext ctx = make_context(rng, 8, 4);

    RecoveryContext perm = ctx;
    std::vector<int> order = {2, 0, 3, 1};
    for (int n = 0; n < 4; ++n) {
        perm.neighbors[n] = ctx.neighbors[order[n]];
        perm.neighbor_cos[n] = ctx.neighbor_cos[order[n]];
    }
    auto rep = frt::attention_report(ctx, params, cfg);
    auto repp = frt::attention_report(perm, params, cfg);
    for (int n = 0; n < 4; ++n)
        CHECK(repp.neighbor_contribution[n] ==
              doctest::Approx(rep.neighbor_contribution[order[n]]).epsilon(1e-12));
}

TEST_CASE("recovery output gradients match finite differences") {
    frt::Rng rng(15);
    const int c = 8;
    ModelParams params = make_params(rng, c, 2, 1);
    randomize(params, rng, 0.2);
    RecoveryContext ctx = make_context(rng, c, 3);
    RecoveryConfig cfg;
    cfg.steps = 2;
    Tensor target(4, c);
    for (int i = 0; i < target.numel(); ++i) target[i] = rng.normal();

    auto graph = [&](frt::ad::Tape& t) {
        auto out = frt::recover_node(t, ctx, cfg, nullptr);
        return t.euclidean(out, t.constant(target));
    };
    CHECK(frt::ad::finite_diff_check(graph, params, 1e-4) < 1e-4);
}

TEST_CASE("scaled attention flag changes the weights") {
    frt::Rng rng(16);
    ModelParams params = make_params(rng, 8, 1, 1);
    randomize(params, rng);
    RecoveryContext ctx = make_context(rng, 8, 2);
    RecoveryConfig plain;
    plain.steps = 1;
    RecoveryConfig scaled = plain;
    scaled.scaled_attention = true;

    frt::ad::Tape t1(params), t2(params);
    std::vector<Tensor> a1, a2;
    (void)frt::recover_node(t1, ctx, plain, &a1);
    (void)frt::recover_node(t2, ctx, scaled, &a2);
    CHECK(!(a1[0] == a2[0]));
}
