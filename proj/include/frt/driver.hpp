#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "frt/checkpoint.hpp"
#include "frt/config.hpp"
#include "frt/objective.hpp"
#include "frt/recovery.hpp"
#include "frt/retrieval.hpp"
#include "frt/synth.hpp"

namespace frt {

/// Raw descriptors with the configured occlusion threshold applied.
struct Dataset {
    std::vector<PersonDescriptor> train;
    std::vector<PersonDescriptor> query;
    std::vector<PersonDescriptor> gallery;
};

Dataset load_dataset(const std::string& dir, const RunConfig& cfg);
Dataset dataset_from_synth(const SynthOutput& data, const RunConfig& cfg);

/// Fresh model: per-part encoders and classifiers, graph weights, the graph
/// classifier and the recovery stack, seeded from cfg.seed.
ModelParams init_model(const RunConfig& cfg, int num_classes);

Checkpoint make_checkpoint(const RunConfig& cfg, ModelParams params, const StageFlags& stages,
                           int num_classes);
/// Restores the training-time configuration recorded in a checkpoint on top
/// of `base` (unknown meta keys are ignored).
RunConfig config_from_checkpoint(const Checkpoint& ckpt, RunConfig base);

enum class BaselineMode { kNone, kAqe, kRerank };
BaselineMode baseline_from_string(const std::string& name);

struct EvalOptions {
    bool use_recovery = false;
    bool use_graph = true;  // graph matching for the base rank lists
    BaselineMode baseline = BaselineMode::kNone;
};

struct AttentionRow {
    int query_id = 0;
    int neighbor_rank = 0;  // 1-based position in the neighbor list
    int neighbor_id = 0;
    double contribution = 0;
};

struct EvalArtifacts {
    EvalReport report;
    std::vector<RankList> ranklists;
    std::vector<AttentionRow> attention;  // present when recovery ran
};

/// Full retrieval evaluation: encode, score, optionally recover the query
/// features from their k nearest gallery neighbors, optionally post-process,
/// then rank and compute CMC/mAP.
EvalArtifacts evaluate(const Dataset& data, const ModelParams& params, const RunConfig& cfg,
                       const EvalOptions& opt);

/// Retrieval quality of each part stream and of the concatenation, before
/// (recovered = false) or after (true) feature recovery. Order: global,
/// head, torso, leg, concat.
std::array<EvalReport, 5> per_part_eval(const Dataset& data, const ModelParams& params,
                                        const RunConfig& cfg, bool recovered);

/// Seeded gallery subsample: per identity, keep `per_id` images (original
/// order preserved). Throws if an identity has fewer than per_id images.
std::vector<PersonDescriptor> subsample_gallery(std::span<const PersonDescriptor> gallery,
                                                int per_id, std::uint64_t seed);

struct SweepRow {
    std::string param;
    double value = 0;
    double rank1 = 0;
    double map = 0;
};

/// One evaluation per value of k_neighbors / steps / delta / gallery_size,
/// every run seeded identically.
std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const Dataset& data, const ModelParams& params, const RunConfig& cfg,
                            const StageFlags& stages);

// CSV emission -------------------------------------------------------------

void write_report_csv(const std::string& path, const EvalReport& report);
void write_ranklists_csv(const std::string& path, const std::vector<RankList>& ranklists,
                         std::span<const PersonDescriptor> gallery);
void write_attention_csv(const std::string& path, const std::vector<AttentionRow>& rows);
void write_loss_curve_csv(const std::string& path, Stage stage,
                          const std::vector<double>& epoch_losses, bool append);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_per_part_csv(const std::string& path, const std::array<EvalReport, 5>& before,
                        const std::optional<std::array<EvalReport, 5>>& after);

}  // namespace frt
