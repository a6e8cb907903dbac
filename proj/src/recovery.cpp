#include "frt/recovery.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace frt {

void RecoveryContext::validate() const {
    if (neighbors.empty()) throw ContractError("recovery requires at least one neighbor");
    if (neighbor_cos.size() != neighbors.size())
        throw ContractError("one similarity score per neighbor expected");
    for (const auto& n : neighbors)
        if (n.channels() != query.channels())
            throw ShapeError("neighbor channel count differs from query");
}

std::string rec_embed_name(const std::string& leaf) { return "rec.embed." + leaf; }

std::string rec_step_name(int step, const std::string& leaf) {
    return "rec.s" + std::to_string(step) + "." + leaf;
}

std::string rec_layer_name(int step, int layer, const std::string& leaf) {
    return "rec.s" + std::to_string(step) + ".l" + std::to_string(layer) + "." + leaf;
}

void add_recovery_params(ModelParams& params, int c, int steps, int layers, int embed_hidden,
                         int update_hidden, Rng& rng) {
    auto randn = [&](int r, int cc, double s) {
        Tensor t(r, cc);
        for (int i = 0; i < t.numel(); ++i) t[i] = s * rng.normal();
        return t;
    };

    params.add(rec_embed_name("w1"), randn(6, embed_hidden, 1.0 / std::sqrt(6.0)));
    params.add(rec_embed_name("b1"), Tensor(1, embed_hidden));
    params.add(rec_embed_name("w2"), Tensor(embed_hidden, c));  // zero: embeds vanish at init
    params.add(rec_embed_name("b2"), Tensor(1, c));

    double ps = 1.0 / std::sqrt(static_cast<double>(c));
    double us = 1.0 / std::sqrt(static_cast<double>(2 * c));
    for (int t = 0; t < steps; ++t) {
        for (int l = 0; l < layers; ++l) {
            params.add(rec_layer_name(t, l, "wq"), randn(c, c, ps));
            params.add(rec_layer_name(t, l, "bq"), Tensor(1, c));
            params.add(rec_layer_name(t, l, "wk"), randn(c, c, ps));
            params.add(rec_layer_name(t, l, "bk"), Tensor(1, c));
            params.add(rec_layer_name(t, l, "wv"), randn(c, c, ps));
            params.add(rec_layer_name(t, l, "bv"), Tensor(1, c));
            params.add(rec_layer_name(t, l, "uw1"), randn(2 * c, update_hidden, us));
            params.add(rec_layer_name(t, l, "ub1"), Tensor(1, update_hidden));
            params.add(rec_layer_name(t, l, "uw2"), Tensor(update_hidden, c));  // zero
            params.add(rec_layer_name(t, l, "ub2"), Tensor(1, c));
        }
        params.add(rec_step_name(t, "wf"), Tensor::identity(c));
        params.add(rec_step_name(t, "bf"), Tensor(1, c));
    }
}

namespace {

/// One side-information row: onehot4(position) ++ cos ++ visibility.
void fill_side_row(Tensor& s, int row, int p, double cos_score, double visibility) {
    for (int j = 0; j < 4; ++j) s(row, j) = (j == p) ? 1.0 : 0.0;
    s(row, 4) = cos_score;
    s(row, 5) = visibility;
}

ad::Val embed_tokens(ad::Tape& tape, ad::Val features, const Tensor& side) {
    ad::Val s = tape.constant(side);
    ad::Val h = tape.relu(
        tape.add_rowvec(tape.matmul(s, tape.param(rec_embed_name("w1"))),
                        tape.param(rec_embed_name("b1"))));
    ad::Val e = tape.add_rowvec(tape.matmul(h, tape.param(rec_embed_name("w2"))),
                                tape.param(rec_embed_name("b2")));
    return tape.add(features, e);
}

}  // namespace

ad::Val embed_local_info_node(ad::Tape& tape, ad::Val f, int p, double cos_score,
                              double visibility) {
    if (p < 0 || p >= kNumParts) throw ContractError("part index out of range");
    Tensor side(1, 6);
    fill_side_row(side, 0, p, cos_score, visibility);
    return embed_tokens(tape, f, side);
}

ad::Val transformer_layer_node(ad::Tape& tape, ad::Val query_tokens, ad::Val neighbor_tokens,
                               int step, int layer, const RecoveryConfig& cfg,
                               std::vector<Tensor>* attn_out) {
    const Tensor& xq = tape.value(query_tokens);
    const Tensor& xk = tape.value(neighbor_tokens);
    if (xq.cols() != xk.cols()) throw ShapeError("token width mismatch");

    auto proj = [&](ad::Val tokens, const char* w, const char* b) {
        return tape.add_rowvec(tape.matmul(tokens, tape.param(rec_layer_name(step, layer, w))),
                               tape.param(rec_layer_name(step, layer, b)));
    };
    ad::Val q = proj(query_tokens, "wq", "bq");
    // The key bias shifts every score of a query token by the same amount
    // (q . bk), which cancels in the row softmax, so the keys are projected
    // without it. bk stays in the parameter set with an identically zero
    // gradient.
    ad::Val k = tape.matmul(neighbor_tokens, tape.param(rec_layer_name(step, layer, "wk")));
    ad::Val v = proj(neighbor_tokens, "wv", "bv");

    ad::Val logits = tape.matmul(q, tape.transpose(k));
    if (cfg.scaled_attention) logits = tape.scale(logits, 1.0 / std::sqrt(double(xq.cols())));
    ad::Val weights = tape.softmax_rows(logits);
    if (attn_out) attn_out->push_back(tape.value(weights));
    ad::Val message = tape.matmul(weights, v);

    ad::Val cat = tape.concat_cols(query_tokens, message);
    ad::Val h = tape.relu(
        tape.add_rowvec(tape.matmul(cat, tape.param(rec_layer_name(step, layer, "uw1"))),
                        tape.param(rec_layer_name(step, layer, "ub1"))));
    ad::Val update = tape.add_rowvec(tape.matmul(h, tape.param(rec_layer_name(step, layer, "uw2"))),
                                     tape.param(rec_layer_name(step, layer, "ub2")));
    return tape.add(query_tokens, update);
}

ad::Val recover_node(ad::Tape& tape, const RecoveryContext& ctx, const RecoveryConfig& cfg,
                     std::vector<Tensor>* attn_out) {
    ctx.validate();
    if (cfg.steps < 1 || cfg.layers < 1) throw ContractError("steps and layers must be >= 1");

    const int c = ctx.query.channels();
    const int k = ctx.k();

    Tensor side_q(kNumParts, 6);
    for (int p = 0; p < kNumParts; ++p)
        fill_side_row(side_q, p, p, ctx.query_cos, ctx.query.vis[p]);

    Tensor fk(kNumParts * k, c);
    Tensor side_k(kNumParts * k, 6);
    for (int n = 0; n < k; ++n) {
        const PersonDescriptor& nb = ctx.neighbors[n];
        for (int p = 0; p < kNumParts; ++p) {
            int row = n * kNumParts + p;
            for (int j = 0; j < c; ++j) fk(row, j) = nb.parts[p][j];
            fill_side_row(side_k, row, p, ctx.neighbor_cos[n], nb.vis[p]);
        }
    }

    // Side information is embedded once; the neighbor tokens stay fixed for
    // the whole multi-step run.
    ad::Val x = embed_tokens(tape, tape.constant(ctx.query.parts_matrix()), side_q);
    ad::Val ek = embed_tokens(tape, tape.constant(fk), side_k);

    for (int t = 0; t < cfg.steps; ++t) {
        for (int l = 0; l < cfg.layers; ++l)
            x = transformer_layer_node(tape, x, ek, t, l, cfg, attn_out);
        x = tape.add_rowvec(tape.matmul(x, tape.param(rec_step_name(t, "wf"))),
                            tape.param(rec_step_name(t, "bf")));
    }
    return x;
}

AttentionReport build_attention_report(const std::vector<Tensor>& attn, int k) {
    AttentionReport rep;
    rep.neighbor_contribution.assign(k, 0.0);
    rep.part_attention = Tensor(kNumParts, kNumParts);
    if (attn.empty()) return rep;

    for (const Tensor& w : attn) {
        for (int qp = 0; qp < kNumParts; ++qp) {
            for (int n = 0; n < k; ++n) {
                for (int np = 0; np < kNumParts; ++np) {
                    double a = w(qp, n * kNumParts + np);
                    rep.neighbor_contribution[n] += a;
                    rep.part_attention(qp, np) += a;
                }
            }
        }
    }
    double denom = static_cast<double>(attn.size()) * kNumParts;
    for (double& x : rep.neighbor_contribution) x /= denom;
    for (int i = 0; i < rep.part_attention.numel(); ++i)
        rep.part_attention[i] /= static_cast<double>(attn.size());
    return rep;
}

RecoveryResult recover(const RecoveryContext& ctx, const ModelParams& params,
                       const RecoveryConfig& cfg) {
    ad::Tape tape(params);
    std::vector<Tensor> attn;
    ad::Val out = recover_node(tape, ctx, cfg, &attn);
    RecoveryResult res;
    res.recovered = tape.value(out);
    res.report = build_attention_report(attn, ctx.k());
    return res;
}

AttentionReport attention_report(const RecoveryContext& ctx, const ModelParams& params,
                                 const RecoveryConfig& cfg) {
    return recover(ctx, params, cfg).report;
}

std::vector<RecoveryResult> recover_all(std::span<const RecoveryContext> contexts,
                                        const ModelParams& params, const RecoveryConfig& cfg) {
    std::vector<RecoveryResult> out(contexts.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < static_cast<long>(contexts.size()); ++i)
        out[i] = recover(contexts[i], params, cfg);
    return out;
}

std::vector<RecoveryResult> recover_all_serial(std::span<const RecoveryContext> contexts,
                                               const ModelParams& params,
                                               const RecoveryConfig& cfg) {
    std::vector<RecoveryResult> out(contexts.size());
    for (long i = 0; i < static_cast<long>(contexts.size()); ++i)
        out[i] = recover(contexts[i], params, cfg);
    return out;
}

}  // namespace frt
