#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "frt/descriptor.hpp"
#include "frt/objective.hpp"
#include "frt/synth.hpp"

namespace frt {

/// Every knob of the pipeline in one place. Values come from built-in
/// defaults, then a key=value config file, then command-line overrides, in
/// that order. set() accepts the same keys the file format uses.
struct RunConfig {
    // model shape
    int c = 32;
    int c_raw = 48;
    int gcn_layers = 1;
    int rec_layers = 1;
    int embed_hidden = 32;
    int update_hidden = 64;
    int steps = 3;

    // matching and recovery
    int k_neighbors = 5;
    double delta = 0.2;
    double gamma = 0.5;
    bool scaled_attention = false;

    // training
    double margin_e = 0.3, margin_g = 0.3, margin_t = 0.3;
    double lr_e = 2e-4, lr_g = 2e-4, lr_t = 2e-4;
    int epochs_e = 20, epochs_g = 15, epochs_t = 20;
    int batch = 64;
    int instances_per_id = 4;
    std::uint64_t seed = 42;
    std::string optimizer = "sgd";  // sgd | adam

    // post-processing baselines
    int rerank_k1 = 20, rerank_k2 = 6;
    double rerank_lambda = 0.3;
    int aqe_top_m = 2;
    double neighbor_pool = 0.5;

    RegionMap regions = RegionMap::standard();
    SynthConfig synth;

    void set(const std::string& key, const std::string& value);
    void validate() const;

    TrainConfig train_config() const;
    GraphConfig graph_config() const;
    RecoveryConfig recovery_config() const;

    /// All keys and current values in canonical order (the config echo).
    std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Parses a key=value file ('#' starts a comment). Returned in file order.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path);

}  // namespace frt
