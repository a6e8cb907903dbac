#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frt/descriptor.hpp"

namespace frt {

/// Synthetic occluded-identity dataset configuration. Each identity owns 4
/// prototype part vectors; images scatter around them with per-camera
/// offsets. An occluded region loses keypoint confidence and has its raw
/// feature blended toward noise.
struct SynthConfig {
    int ids = 50;
    int train_per_id = 8;
    int query_per_id = 2;
    int gallery_per_id = 10;
    int c_raw = 48;
    int cameras = 2;
    double sigma_within = 1.0;
    double sigma_camera = 0.3;
    double occ_prob_head = 0.0;
    double occ_prob_torso = 0.0;
    double occ_prob_leg = 0.5;
    double occ_severity = 0.9;
    /// true: disjoint identity sets for train vs query+gallery.
    bool cross_set = false;
    std::uint64_t seed = 42;

    void validate() const;
};

struct SynthOutput {
    std::vector<PersonDescriptor> train;
    std::vector<PersonDescriptor> query;
    std::vector<PersonDescriptor> gallery;
};

/// Deterministic generation: the same config produces identical descriptors.
SynthOutput generate(const SynthConfig& cfg);

/// Writes train.pfv / query.pfv / gallery.pfv plus a manifest echoing the
/// config, into an existing directory.
void generate_files(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace frt
