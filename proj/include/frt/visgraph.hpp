#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "frt/autodiff.hpp"
#include "frt/descriptor.hpp"
#include "frt/params.hpp"
#include "frt/rng.hpp"
#include "frt/tensor.hpp"

namespace frt {

/// Directional 4-node graph over a query/gallery descriptor pair. Row i of
/// the adjacency carries the weight with which part i broadcasts to every
/// other part; it depends only on part i's shared visibility and feature
/// agreement across the pair.
struct VisibilityGraph {
    Tensor adjacency;                     // 4x4
    std::array<double, kNumParts> phi{};  // shared visibility per part
    double gamma = 0.0;
};

struct GraphConfig {
    double gamma = 0.5;
    int layers = 1;
};

/// Parameter names of the message-passing weights for layer l.
std::string gcn_wm_name(int layer);
std::string gcn_wr_name(int layer);

/// Adds layer weights to a collection: W_m (c x c) random, W_r (2c x c) zero,
/// so an untrained graph update is the identity.
void add_gcn_params(ModelParams& params, int c, int layers, Rng& rng);

/// phi_i = min(vq_i, vg_i).
std::array<double, kNumParts> shared_visibility(const std::array<double, kNumParts>& vq,
                                               const std::array<double, kNumParts>& vg);

/// A[i][i] = 1; for j != i, A[i][j] = phi_i + [phi_i > gamma] * (1 - cos(f_i^q, f_i^g)).
VisibilityGraph adjacency(const PersonDescriptor& a, const PersonDescriptor& b, double gamma);

/// Row-stochastic normalization (rows of A are nonnegative with diagonal 1).
Tensor normalize_rows(const Tensor& a);

/// One or more rounds of  M = ReLU(A_hat X W_m);  X <- X + [X, M] W_r,
/// applied to both streams with the same adjacency and weights.
std::pair<Tensor, Tensor> gcn_forward(const Tensor& fq, const Tensor& fg, const Tensor& a_hat,
                                      const ModelParams& params, int layers);

/// Graph-matching similarity: cosine of the two updated, flattened streams.
/// Symmetric in its arguments.
double pair_similarity(const PersonDescriptor& dq, const PersonDescriptor& dg,
                       const ModelParams& params, const GraphConfig& cfg);

/// All pairwise similarities, queries x gallery. The parallel version
/// computes cells independently and is bitwise-identical to the serial one.
Tensor score_matrix(std::span<const PersonDescriptor> queries,
                    std::span<const PersonDescriptor> gallery, const ModelParams& params,
                    const GraphConfig& cfg);
Tensor score_matrix_serial(std::span<const PersonDescriptor> queries,
                           std::span<const PersonDescriptor> gallery, const ModelParams& params,
                           const GraphConfig& cfg);

/// Plain cosine over concatenated parts (the graph-off baseline); also the
/// exact value pair_similarity takes when all W_r are zero.
double cosine_similarity(const PersonDescriptor& dq, const PersonDescriptor& dg);
Tensor cosine_score_matrix(std::span<const PersonDescriptor> queries,
                           std::span<const PersonDescriptor> gallery);
Tensor cosine_score_matrix_serial(std::span<const PersonDescriptor> queries,
                                  std::span<const PersonDescriptor> gallery);

// Tape builders for training. They follow the same kernel sequence as the
// plain functions above, so forward values agree bitwise.

/// Updated stream for one pair; returns (Fq_updated, Fg_updated), both 4 x c.
std::pair<ad::Val, ad::Val> gcn_forward_node(ad::Tape& tape, ad::Val fq, ad::Val fg,
                                             const Tensor& a_hat, int layers);

/// Scalar similarity node for one pair.
ad::Val pair_similarity_node(ad::Tape& tape, const PersonDescriptor& dq,
                             const PersonDescriptor& dg, const GraphConfig& cfg);

/// Self-pair graph update of one descriptor, flattened to 1 x 4c. This is the
/// per-sample feature the graph stage's classifier is trained on.
ad::Val graph_update_node(ad::Tape& tape, const PersonDescriptor& d, const GraphConfig& cfg);

/// Plain-evaluation counterpart of graph_update_node.
Tensor graph_update(const PersonDescriptor& d, const ModelParams& params, const GraphConfig& cfg);

}  // namespace frt
