#pragma once

#include <span>
#include <string>
#include <vector>

#include "frt/autodiff.hpp"
#include "frt/descriptor.hpp"
#include "frt/params.hpp"
#include "frt/rng.hpp"
#include "frt/tensor.hpp"

namespace frt {

/// A query descriptor plus the neighbor features used to rebuild it. The
/// neighbor list is ordered by descending graph similarity and is never
/// modified by recovery; `cos` carries each neighbor's similarity to the
/// query as token side information.
struct RecoveryContext {
    PersonDescriptor query;
    std::vector<PersonDescriptor> neighbors;
    std::vector<double> neighbor_cos;
    double query_cos = 1.0;

    int k() const { return static_cast<int>(neighbors.size()); }
    void validate() const;
};

struct RecoveryConfig {
    int steps = 3;
    int layers = 1;            // attention layers per step
    bool scaled_attention = false;  // optional 1/sqrt(c) scaling of logits
};

/// Attention mass bookkeeping aggregated over all steps and layers.
struct AttentionReport {
    /// Per neighbor: attention mass received by its 4 tokens, averaged over
    /// query tokens, steps and layers. Sums to 1 across neighbors.
    std::vector<double> neighbor_contribution;
    /// (query part) x (neighbor part) mass, neighbors summed out; rows sum
    /// to 1.
    Tensor part_attention;  // 4 x 4
};

struct RecoveryResult {
    Tensor recovered;  // 4 x c
    AttentionReport report;
};

// Parameter names -------------------------------------------------------

std::string rec_embed_name(const std::string& leaf);        // rec.embed.<leaf>
std::string rec_step_name(int step, const std::string& leaf);            // rec.s<t>.<leaf>
std::string rec_layer_name(int step, int layer, const std::string& leaf);  // rec.s<t>.l<l>.<leaf>

/// Creates the recovery parameters: a shared side-information embedding MLP
/// (6 -> embed_hidden -> c), per step and layer the q/k/v projections and the
/// update MLP (2c -> update_hidden -> c), and a per-step final projection.
/// Output layers of both MLPs start at zero and final projections start at
/// identity, so an untrained recovery is the identity on the query tokens.
void add_recovery_params(ModelParams& params, int c, int steps, int layers, int embed_hidden,
                         int update_hidden, Rng& rng);

// Tape builders ----------------------------------------------------------

/// f + MLP(onehot4(p) ++ cos ++ v) for one token row.
ad::Val embed_local_info_node(ad::Tape& tape, ad::Val f, int p, double cos_score,
                              double visibility);

/// One attention layer: query tokens attend over all 4k neighbor tokens and
/// are updated residually; neighbor tokens are read-only. If attn_out is
/// non-null the 4 x 4k attention weights (forward values) are appended.
ad::Val transformer_layer_node(ad::Tape& tape, ad::Val query_tokens, ad::Val neighbor_tokens,
                               int step, int layer, const RecoveryConfig& cfg,
                               std::vector<Tensor>* attn_out);

/// Full multi-step recovery of the query tokens; returns the 4 x c recovered
/// feature node. Side information is embedded once, neighbor embeddings are
/// computed once and reused by every step.
ad::Val recover_node(ad::Tape& tape, const RecoveryContext& ctx, const RecoveryConfig& cfg,
                     std::vector<Tensor>* attn_out = nullptr);

// Plain evaluation --------------------------------------------------------

RecoveryResult recover(const RecoveryContext& ctx, const ModelParams& params,
                       const RecoveryConfig& cfg);

AttentionReport attention_report(const RecoveryContext& ctx, const ModelParams& params,
                                 const RecoveryConfig& cfg);

/// Batch recovery over independent contexts; the parallel variant assigns
/// whole queries to threads and matches the serial one bitwise.
std::vector<RecoveryResult> recover_all(std::span<const RecoveryContext> contexts,
                                        const ModelParams& params, const RecoveryConfig& cfg);
std::vector<RecoveryResult> recover_all_serial(std::span<const RecoveryContext> contexts,
                                               const ModelParams& params,
                                               const RecoveryConfig& cfg);

/// Builds the report from raw per-(step,layer) attention matrices.
AttentionReport build_attention_report(const std::vector<Tensor>& attn, int k);

}  // namespace frt
