#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "frt/autodiff.hpp"
#include "frt/descriptor.hpp"
#include "frt/params.hpp"
#include "frt/recovery.hpp"
#include "frt/rng.hpp"
#include "frt/visgraph.hpp"

namespace frt {

enum class Stage { E, G, T };

const char* stage_name(Stage s);

/// Which stages a checkpoint has completed. Stages run strictly in order
/// E -> G -> T.
struct StageFlags {
    bool e = false;
    bool g = false;
    bool t = false;
};

/// Plain SGD is the default; Adam is available as an opt-in for the stages
/// whose loss surfaces it suits better.
enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
    double margin_e = 0.3;
    double margin_g = 0.3;
    double margin_t = 0.3;
    double lr_e = 1e-3;
    double lr_g = 1e-3;
    double lr_t = 1e-3;
    int epochs_e = 20;
    int epochs_g = 15;
    int epochs_t = 20;
    int batch = 64;
    int instances_per_id = 4;
    std::uint64_t seed = 42;
    double delta = 0.2;
    int k_neighbors = 5;
    Optimizer optimizer = Optimizer::kSgd;
    /// Fraction of the training gallery each epoch's neighbor lists draw
    /// from. Resampling the pool per epoch keeps stage T from memorizing a
    /// fixed context set; 1.0 pins the full gallery.
    double neighbor_pool = 0.5;
    GraphConfig graph;
    RecoveryConfig recovery;

    void validate() const;
};

/// Maps raw identity labels to dense class indices 0..C-1 (sorted by id).
class IdIndex {
public:
    explicit IdIndex(std::span<const PersonDescriptor> descriptors);
    int num_classes() const { return static_cast<int>(ids_.size()); }
    int class_of(int id) const;
    int id_of(int cls) const { return ids_[cls]; }

private:
    std::vector<int> ids_;
};

// Parameter names ---------------------------------------------------------

std::string enc_w_name(int part);
std::string enc_b_name(int part);
std::string cls_e_w_name(int part);
std::string cls_e_b_name(int part);
std::string cls_g_w_name();
std::string cls_g_b_name();

/// Per-part encoder (c_raw -> c, ReLU) standing in for the image backbone.
void add_encoder_params(ModelParams& params, int c_raw, int c, Rng& rng);
/// Per-part identity classifiers over encoded features.
void add_classifier_e_params(ModelParams& params, int c, int num_classes, Rng& rng);
/// Identity classifier over the graph-updated concatenated feature.
void add_classifier_g_params(ModelParams& params, int c, int num_classes, Rng& rng);

// Encoding ----------------------------------------------------------------

/// Runs the per-part encoder and re-applies the occlusion threshold, so
/// sub-delta parts stay exactly zero in encoded space.
PersonDescriptor encode_descriptor(const PersonDescriptor& raw, const ModelParams& params,
                                   double delta);
std::vector<PersonDescriptor> encode_all(std::span<const PersonDescriptor> raw,
                                         const ModelParams& params, double delta);

// Losses --------------------------------------------------------------------

/// -sum_j log softmax(W f_j + b)[y_j], stabilized via log-sum-exp.
ad::Val cross_entropy_node(ad::Tape& tape, ad::Val features, const std::vector<int>& classes,
                           const std::string& w_name, const std::string& b_name);
/// Plain-evaluation counterpart (same arithmetic path).
double cross_entropy(const Tensor& features, const std::vector<int>& classes, const Tensor& w,
                     const Tensor& b);

/// max(0, theta + d(a,p) - d(a,n)) with Euclidean d.
double triplet(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
               double theta);
ad::Val triplet_node(ad::Tape& tape, ad::Val anchor, ad::Val positive, ad::Val negative,
                     double theta);

/// Batch-hard mining over the rows of `features`: per anchor, the farthest
/// positive and the closest negative by Euclidean distance (mined on forward
/// values; ties broken by lowest index). Anchors without a valid positive or
/// negative are skipped; throws ContractError if every anchor is skipped.
ad::Val batch_hard_triplet_node(ad::Tape& tape, ad::Val features, const std::vector<int>& classes,
                                double theta);

/// Stage-E loss over a raw-descriptor batch: per part stream, cross-entropy
/// plus batch-hard triplet over the encoded features, excluding for each
/// sample every stream whose part the delta rule zeroed.
ad::Val loss_e_node(ad::Tape& tape, std::span<const PersonDescriptor> raw_batch,
                    const IdIndex& index, const TrainConfig& cfg);

/// Stage-G loss over an encoded batch: cross-entropy on each sample's
/// graph-updated concatenated feature plus batch-hard triplet over pairwise
/// graph similarities (distance 1 - s).
ad::Val loss_g_node(ad::Tape& tape, std::span<const PersonDescriptor> encoded_batch,
                    const IdIndex& index, const TrainConfig& cfg);

/// Stage-T loss over recovery contexts: per-part cross-entropy of the
/// recovered query under the frozen stage-E classifiers plus batch-hard
/// triplet over the recovered concatenated features. Throws ContractError
/// unless every stage-E classifier parameter is frozen.
ad::Val loss_t_node(ad::Tape& tape, std::span<const RecoveryContext> batch,
                    const std::vector<int>& classes, const TrainConfig& cfg);

// Training ------------------------------------------------------------------

struct StageResult {
    std::vector<double> epoch_losses;  // mean batch loss per epoch
};

/// Plain SGD: t -= lr * g for every trainable parameter, in name order.
void sgd_step(ModelParams& params, const GradientRecord& grads, double lr);

/// Adam moment state, keyed by parameter name. Updates apply in name order,
/// so training stays bitwise deterministic.
class AdamState {
public:
    AdamState(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(ModelParams& params, const GradientRecord& grads, double lr);

private:
    struct Moments {
        Tensor m, v;
    };
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, Moments> state_;
};

/// Deterministic P x K batch sampler (P identities, K instances each).
std::vector<std::vector<int>> pk_batches(std::span<const PersonDescriptor> descriptors,
                                         const IdIndex& index, int batch, int instances_per_id,
                                         Rng& rng);

/// Runs one training stage over the raw training descriptors. `done` must
/// show every earlier stage complete. Only the stage's own parameters are
/// trainable during the run; all parameters are returned trainable again.
StageResult train_stage(Stage stage, std::span<const PersonDescriptor> train_raw,
                        ModelParams& params, const TrainConfig& cfg, const StageFlags& done);

/// Neighbor contexts for a query set against a gallery given their score
/// matrix: per query the top-k gallery entries by descending score (ties by
/// ascending index). With exclude_self_index, gallery position i is excluded
/// for query i (training-time self-match).
std::vector<RecoveryContext> build_contexts(std::span<const PersonDescriptor> queries,
                                            std::span<const PersonDescriptor> gallery,
                                            const Tensor& scores, int k, bool exclude_self_index);

}  // namespace frt
