#include "frt/visgraph.hpp"

#include "frt/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace frt {

std::string gcn_wm_name(int layer) { return "gcn.l" + std::to_string(layer) + ".w_m"; }
std::string gcn_wr_name(int layer) { return "gcn.l" + std::to_string(layer) + ".w_r"; }

void add_gcn_params(ModelParams& params, int c, int layers, Rng& rng) {
    for (int l = 0; l < layers; ++l) {
        Tensor wm(c, c);
        double s = 1.0 / std::sqrt(static_cast<double>(c));
        for (int i = 0; i < wm.numel(); ++i) wm[i] = s * rng.normal();
        params.add(gcn_wm_name(l), std::move(wm));
        params.add(gcn_wr_name(l), Tensor(2 * c, c));  // zero: update starts as identity
    }
}

std::array<double, kNumParts> shared_visibility(const std::array<double, kNumParts>& vq,
                                               const std::array<double, kNumParts>& vg) {
    std::array<double, kNumParts> phi{};
    for (int i = 0; i < kNumParts; ++i) phi[i] = std::min(vq[i], vg[i]);
    return phi;
}

VisibilityGraph adjacency(const PersonDescriptor& a, const PersonDescriptor& b, double gamma) {
    if (a.channels() != b.channels()) throw ShapeError("adjacency: channel mismatch");
    VisibilityGraph g;
    g.gamma = gamma;
    g.phi = shared_visibility(a.vis, b.vis);
    g.adjacency = Tensor(kNumParts, kNumParts);
    for (int i = 0; i < kNumParts; ++i) {
        double w = g.phi[i];
        if (g.phi[i] > gamma) w += 1.0 - cosine(a.part_row(i), b.part_row(i));
        for (int j = 0; j < kNumParts; ++j) g.adjacency(i, j) = (i == j) ? 1.0 : w;
    }
    return g;
}

Tensor normalize_rows(const Tensor& a) {
    Tensor out = a;
    for (int i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols(); ++j) s += a(i, j);
        for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / s;
    }
    return out;
}

namespace {

Tensor gcn_stream(const Tensor& x0, const Tensor& a_hat, const ModelParams& params, int layers) {
    Tensor x = x0;
    for (int l = 0; l < layers; ++l) {
        const Tensor& wm = params.tensor(gcn_wm_name(l));
        const Tensor& wr = params.tensor(gcn_wr_name(l));
        Tensor m = relu(matmul(matmul(a_hat, x), wm));
        x = add(x, matmul(concat_cols(x, m), wr));
    }
    return x;
}

Tensor flatten_row(const Tensor& x) {
    Tensor out(1, x.numel());
    for (int i = 0; i < x.numel(); ++i) out(0, i) = x[i];
    return out;
}

}  // namespace

std::pair<Tensor, Tensor> gcn_forward(const Tensor& fq, const Tensor& fg, const Tensor& a_hat,
                                      const ModelParams& params, int layers) {
    if (!fq.same_shape(fg)) throw ShapeError("gcn_forward: stream shapes differ");
    return {gcn_stream(fq, a_hat, params, layers), gcn_stream(fg, a_hat, params, layers)};
}

double pair_similarity(const PersonDescriptor& dq, const PersonDescriptor& dg,
                       const ModelParams& params, const GraphConfig& cfg) {
    VisibilityGraph g = adjacency(dq, dg, cfg.gamma);
    Tensor a_hat = normalize_rows(g.adjacency);
    auto [uq, ug] = gcn_forward(dq.parts_matrix(), dg.parts_matrix(), a_hat, params, cfg.layers);
    return cosine(uq, ug);
}

double cosine_similarity(const PersonDescriptor& dq, const PersonDescriptor& dg) {
    return cosine(dq.concat_parts(), dg.concat_parts());
}

namespace {

template <typename ScoreFn>
Tensor fill_scores(std::span<const PersonDescriptor> queries,
                   std::span<const PersonDescriptor> gallery, bool parallel, ScoreFn score) {
    if (queries.empty() || gallery.empty()) throw ContractError("empty query or gallery set");
    int c = queries[0].channels();
    for (const auto& d : queries)
        if (d.channels() != c) throw ShapeError("score_matrix: channel mismatch");
    for (const auto& d : gallery)
        if (d.channels() != c) throw ShapeError("score_matrix: channel mismatch");

    const int q = static_cast<int>(queries.size());
    const int g = static_cast<int>(gallery.size());
    Tensor out(q, g);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
#endif
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < g; ++j) out(i, j) = score(queries[i], gallery[j]);
    (void)parallel;
    return out;
}

}  // namespace

Tensor score_matrix(std::span<const PersonDescriptor> queries,
                    std::span<const PersonDescriptor> gallery, const ModelParams& params,
                    const GraphConfig& cfg) {
    return fill_scores(queries, gallery, true, [&](const auto& a, const auto& b) {
        return pair_similarity(a, b, params, cfg);
    });
}

Tensor score_matrix_serial(std::span<const PersonDescriptor> queries,
                           std::span<const PersonDescriptor> gallery, const ModelParams& params,
                           const GraphConfig& cfg) {
    return fill_scores(queries, gallery, false, [&](const auto& a, const auto& b) {
        return pair_similarity(a, b, params, cfg);
    });
}

Tensor cosine_score_matrix(std::span<const PersonDescriptor> queries,
                           std::span<const PersonDescriptor> gallery) {
    return fill_scores(queries, gallery, true, [&](const auto& a, const auto& b) {
        return cosine_similarity(a, b);
    });
}

Tensor cosine_score_matrix_serial(std::span<const PersonDescriptor> queries,
                                  std::span<const PersonDescriptor> gallery) {
    return fill_scores(queries, gallery, false, [&](const auto& a, const auto& b) {
        return cosine_similarity(a, b);
    });
}

std::pair<ad::Val, ad::Val> gcn_forward_node(ad::Tape& tape, ad::Val fq, ad::Val fg,
                                             const Tensor& a_hat, int layers) {
    ad::Val a = tape.constant(a_hat);
    auto stream = [&](ad::Val x) {
        for (int l = 0; l < layers; ++l) {
            ad::Val wm = tape.param(gcn_wm_name(l));
            ad::Val wr = tape.param(gcn_wr_name(l));
            ad::Val m = tape.relu(tape.matmul(tape.matmul(a, x), wm));
            x = tape.add(x, tape.matmul(tape.concat_cols(x, m), wr));
        }
        return x;
    };
    return {stream(fq), stream(fg)};
}

ad::Val pair_similarity_node(ad::Tape& tape, const PersonDescriptor& dq,
                             const PersonDescriptor& dg, const GraphConfig& cfg) {
    VisibilityGraph g = adjacency(dq, dg, cfg.gamma);
    Tensor a_hat = normalize_rows(g.adjacency);
    ad::Val fq = tape.constant(dq.parts_matrix());
    ad::Val fg = tape.constant(dg.parts_matrix());
    auto [uq, ug] = gcn_forward_node(tape, fq, fg, a_hat, cfg.layers);
    return tape.cosine(uq, ug);
}

ad::Val graph_update_node(ad::Tape& tape, const PersonDescriptor& d, const GraphConfig& cfg) {
    VisibilityGraph g = adjacency(d, d, cfg.gamma);
    ad::Val a = tape.constant(normalize_rows(g.adjacency));
    ad::Val x = tape.constant(d.parts_matrix());
    for (int l = 0; l < cfg.layers; ++l) {
        ad::Val m = tape.relu(tape.matmul(tape.matmul(a, x), tape.param(gcn_wm_name(l))));
        x = tape.add(x, tape.matmul(tape.concat_cols(x, m), tape.param(gcn_wr_name(l))));
    }
    // rows concatenate in part order; 4 x c viewed as 1 x 4c
    ad::Val row = tape.select_row(x, 0);
    for (int p = 1; p < kNumParts; ++p) row = tape.concat_cols(row, tape.select_row(x, p));
    return row;
}

Tensor graph_update(const PersonDescriptor& d, const ModelParams& params,
                    const GraphConfig& cfg) {
    VisibilityGraph g = adjacency(d, d, cfg.gamma);
    Tensor a_hat = normalize_rows(g.adjacency);
    return flatten_row(gcn_stream(d.parts_matrix(), a_hat, params, cfg.layers));
}

}  // namespace frt
