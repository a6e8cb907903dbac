#pragma once

#include <map>
#include <string>

#include "frt/objective.hpp"
#include "frt/params.hpp"

namespace frt {

/// FRTM1 checkpoint: text format with a meta block (stage markers and
/// hyperparameters) followed by one block per parameter. Floats use the
/// shortest round-trip decimal form, so write/read is bitwise lossless.
///
///   FRTM1
///   meta <key>=<value>
///   ...
///   param <name> <rows> <cols>
///   <rows lines of cols values>
///   ...
struct Checkpoint {
    std::map<std::string, std::string> meta;
    ModelParams params;

    StageFlags stages() const;
    void set_stage(Stage stage, bool done);

    int meta_int(const std::string& key) const;
    double meta_double(const std::string& key) const;
    bool has_meta(const std::string& key) const { return meta.count(key) != 0; }
};

Checkpoint read_checkpoint(const std::string& path);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);

}  // namespace frt
