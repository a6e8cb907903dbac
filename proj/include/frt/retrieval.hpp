#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frt/descriptor.hpp"
#include "frt/tensor.hpp"

namespace frt {

/// Ranked gallery for one query, junk entries (same id and same camera as
/// the query) removed, ordered by descending similarity with ties broken by
/// ascending gallery index.
struct RankList {
    int query_index = -1;
    int query_id = 0;
    int query_camera = 0;
    std::vector<int> gallery_indices;
    std::vector<double> scores;
};

struct EvalReport {
    double cmc1 = 0, cmc3 = 0, cmc5 = 0, cmc10 = 0;
    double map = 0;
    int queries_evaluated = 0;
    int queries_skipped = 0;  // queries with no correct gallery match
    std::vector<std::pair<std::string, std::string>> config_echo;

    double cmc_at(int r) const;
};

std::vector<RankList> rank(const Tensor& scores, std::span<const PersonDescriptor> queries,
                           std::span<const PersonDescriptor> gallery);

/// Single-query CMC at ranks 1/3/5/10 and mAP. Queries whose rank list holds
/// no correct match are excluded and counted in queries_skipped.
EvalReport cmc_map(const std::vector<RankList>& ranklists,
                   std::span<const PersonDescriptor> gallery);

/// k-reciprocal re-ranking over the union probe set (queries followed by
/// gallery). Takes the union similarity matrix, converts it to distances
/// d = 1 - s, encodes k-reciprocal neighbor sets, expands them, applies
/// local query expansion over the k2 nearest probes and blends the Jaccard
/// distance with the original one:  d* = (1 - lambda) d_J + lambda d.
/// Returns the query x gallery distance matrix d* (smaller = more similar).
Tensor rerank_k_reciprocal(const Tensor& union_scores, int num_queries, int k1, int k2,
                           double lambda);
Tensor rerank_k_reciprocal_serial(const Tensor& union_scores, int num_queries, int k1, int k2,
                                  double lambda);

/// Average query expansion: each query feature becomes the mean of itself and
/// its top_m ranked gallery features; top_m = 0 keeps the feature unchanged.
std::vector<Tensor> aqe_expand(const std::vector<Tensor>& query_features,
                               const std::vector<Tensor>& gallery_features,
                               const std::vector<RankList>& ranklists, int top_m);

/// Cosine score matrix over plain feature rows.
Tensor feature_score_matrix(const std::vector<Tensor>& query_features,
                            const std::vector<Tensor>& gallery_features);

}  // namespace frt
