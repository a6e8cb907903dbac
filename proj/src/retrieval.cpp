#include "frt/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace frt {

double EvalReport::cmc_at(int r) const {
    switch (r) {
        case 1: return cmc1;
        case 3: return cmc3;
        case 5: return cmc5;
        case 10: return cmc10;
    }
    throw ContractError("cmc reported at ranks 1, 3, 5 and 10 only");
}

std::vector<RankList> rank(const Tensor& scores, std::span<const PersonDescriptor> queries,
                           std::span<const PersonDescriptor> gallery) {
    if (scores.rows() != static_cast<int>(queries.size()) ||
        scores.cols() != static_cast<int>(gallery.size()))
        throw ShapeError("score matrix does not match query/gallery sizes");
    if (!scores.all_finite()) throw ContractError("score matrix must be finite");

    std::vector<RankList> out;
    out.reserve(queries.size());
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        RankList rl;
        rl.query_index = static_cast<int>(qi);
        rl.query_id = queries[qi].id;
        rl.query_camera = queries[qi].camera;
        for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
            // junk rule: same identity seen by the same camera
            if (gallery[gi].id == rl.query_id && gallery[gi].camera == rl.query_camera) continue;
            rl.gallery_indices.push_back(static_cast<int>(gi));
        }
        std::stable_sort(rl.gallery_indices.begin(), rl.gallery_indices.end(),
                         [&](int a, int b) {
                             double sa = scores(static_cast<int>(qi), a);
                             double sb = scores(static_cast<int>(qi), b);
                             if (sa != sb) return sa > sb;
                             return a < b;
                         });
        rl.scores.reserve(rl.gallery_indices.size());
        for (int gi : rl.gallery_indices) rl.scores.push_back(scores(static_cast<int>(qi), gi));
        out.push_back(std::move(rl));
    }
    return out;
}

EvalReport cmc_map(const std::vector<RankList>& ranklists,
                   std::span<const PersonDescriptor> gallery) {
    EvalReport rep;
    double cmc[4] = {0, 0, 0, 0};
    const int ranks[4] = {1, 3, 5, 10};
    double ap_sum = 0.0;

    for (const auto& rl : ranklists) {
        int hits = 0;
        double ap = 0.0;
        int first_hit = -1;
        for (std::size_t pos = 0; pos < rl.gallery_indices.size(); ++pos) {
            if (gallery[rl.gallery_indices[pos]].id != rl.query_id) continue;
            ++hits;
            if (first_hit < 0) first_hit = static_cast<int>(pos);
            ap += static_cast<double>(hits) / static_cast<double>(pos + 1);
        }
        if (hits == 0) {
            ++rep.queries_skipped;
            continue;
        }
        ++rep.queries_evaluated;
        ap_sum += ap / hits;
        for (int r = 0; r < 4; ++r)
            if (first_hit < ranks[r]) cmc[r] += 1.0;
    }

    if (rep.queries_evaluated > 0) {
        rep.cmc1 = cmc[0] / rep.queries_evaluated;
        rep.cmc3 = cmc[1] / rep.queries_evaluated;
        rep.cmc5 = cmc[2] / rep.queries_evaluated;
        rep.cmc10 = cmc[3] / rep.queries_evaluated;
        rep.map = ap_sum / rep.queries_evaluated;
    }
    return rep;
}

namespace {

/// Probe indices sorted by ascending distance (self included), ties by index.
std::vector<std::vector<int>> initial_ranks(const Tensor& dist) {
    const int n = dist.rows();
    std::vector<std::vector<int>> order(n);
    for (int i = 0; i < n; ++i) {
        order[i].resize(n);
        std::iota(order[i].begin(), order[i].end(), 0);
        std::stable_sort(order[i].begin(), order[i].end(), [&](int a, int b) {
            if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
            return a < b;
        });
    }
    return order;
}

/// R(i, k): probes within i's top-k that also keep i within their top-k
/// (self included on both sides).
std::vector<int> reciprocal_set(const std::vector<std::vector<int>>& order, int i, int k) {
    std::vector<int> out;
    for (int r = 0; r <= k && r < static_cast<int>(order[i].size()); ++r) {
        int j = order[i][r];
        for (int s = 0; s <= k; ++s) {
            if (order[j][s] == i) {
                out.push_back(j);
                break;
            }
        }
    }
    return out;
}

Tensor rerank_impl(const Tensor& union_scores, int num_queries, int k1, int k2, double lambda,
                   bool parallel) {
    const int n = union_scores.rows();
    if (union_scores.cols() != n) throw ShapeError("union score matrix must be square");
    const int num_gallery = n - num_queries;
    if (num_queries < 1 || num_gallery < 1) throw ConfigError("need queries and gallery");
    if (k2 < 1 || k1 <= k2) throw ConfigError("expected k1 > k2 >= 1");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (num_gallery < k1) throw ConfigError("gallery smaller than k1");

    Tensor dist(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) dist(i, j) = 1.0 - union_scores(i, j);

    auto order = initial_ranks(dist);

    // expanded k-reciprocal sets
    const int half = static_cast<int>(std::lround(k1 / 2.0));
    std::vector<std::vector<int>> rstar(n);
    std::vector<std::vector<int>> rhalf(n);
    for (int i = 0; i < n; ++i) rhalf[i] = reciprocal_set(order, i, half);
    for (int i = 0; i < n; ++i) {
        std::vector<int> r = reciprocal_set(order, i, k1);
        std::vector<char> member(n, 0);
        for (int j : r) member[j] = 1;
        std::vector<int> expanded = r;
        for (int j : r) {
            int overlap = 0;
            for (int cand : rhalf[j])
                if (member[cand]) ++overlap;
            if (3 * overlap > 2 * static_cast<int>(rhalf[j].size())) {
                for (int cand : rhalf[j])
                    if (!member[cand]) {
                        member[cand] = 1;
                        expanded.push_back(cand);
                    }
            }
        }
        std::sort(expanded.begin(), expanded.end());
        rstar[i] = std::move(expanded);
    }

    // Gaussian-weighted membership vectors, normalized per probe
    Tensor v(n, n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j : rstar[i]) {
            double w = std::exp(-dist(i, j));
            v(i, j) = w;
            s += w;
        }
        for (int j : rstar[i]) v(i, j) /= s;
    }

    // local query expansion over the k2 nearest probes (self included)
    if (k2 > 1) {
        Tensor vq(n, n);
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < k2; ++r) {
                int j = order[i][r];
                for (int l = 0; l < n; ++l) vq(i, l) += v(j, l);
            }
            for (int l = 0; l < n; ++l) vq(i, l) /= k2;
        }
        v = std::move(vq);
    }

    Tensor out(num_queries, num_gallery);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel)
#endif
    for (int qi = 0; qi < num_queries; ++qi) {
        for (int gj = 0; gj < num_gallery; ++gj) {
            int pj = num_queries + gj;
            double mins = 0.0, maxs = 0.0;
            for (int l = 0; l < n; ++l) {
                mins += std::min(v(qi, l), v(pj, l));
                maxs += std::max(v(qi, l), v(pj, l));
            }
            double jaccard = maxs > 0.0 ? 1.0 - mins / maxs : 1.0;
            out(qi, gj) = (1.0 - lambda) * jaccard + lambda * dist(qi, pj);
        }
    }
    (void)parallel;
    return out;
}

}  // namespace

Tensor rerank_k_reciprocal(const Tensor& union_scores, int num_queries, int k1, int k2,
                           double lambda) {
    return rerank_impl(union_scores, num_queries, k1, k2, lambda, true);
}

Tensor rerank_k_reciprocal_serial(const Tensor& union_scores, int num_queries, int k1, int k2,
                                  double lambda) {
    return rerank_impl(union_scores, num_queries, k1, k2, lambda, false);
}

std::vector<Tensor> aqe_expand(const std::vector<Tensor>& query_features,
                               const std::vector<Tensor>& gallery_features,
                               const std::vector<RankList>& ranklists, int top_m) {
    if (top_m < 0) throw ConfigError("top_m must be >= 0");
    if (ranklists.size() != query_features.size())
        throw ShapeError("one rank list per query expected");

    std::vector<Tensor> out;
    out.reserve(query_features.size());
    for (std::size_t qi = 0; qi < query_features.size(); ++qi) {
        Tensor acc = query_features[qi];
        int used = 0;
        const auto& rl = ranklists[qi];
        for (int r = 0; r < top_m && r < static_cast<int>(rl.gallery_indices.size()); ++r) {
            acc = add(acc, gallery_features[rl.gallery_indices[r]]);
            ++used;
        }
        out.push_back(scale(acc, 1.0 / (1 + used)));
    }
    return out;
}

Tensor feature_score_matrix(const std::vector<Tensor>& query_features,
                            const std::vector<Tensor>& gallery_features) {
    Tensor out(static_cast<int>(query_features.size()),
               static_cast<int>(gallery_features.size()));
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j)
            out(i, j) = cosine(query_features[i], gallery_features[j]);
    return out;
}

}  // namespace frt
