#include "frt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace frt {

namespace {

int to_int(const std::string& key, const std::string& value) {
    int x = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ConfigError(key + " expects an integer, got '" + value + "'");
    return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t x = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ConfigError(key + " expects a non-negative integer, got '" + value + "'");
    return x;
}

double to_double(const std::string& key, const std::string& value) {
    double x = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), x);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size())
        throw ConfigError(key + " expects a number, got '" + value + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw ConfigError(key + " expects a boolean, got '" + value + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::string tok;
    std::istringstream ss(value);
    while (std::getline(ss, tok, ','))
        out.push_back(to_int(key, tok));
    if (out.empty()) throw ConfigError(key + " expects a comma-separated list");
    return out;
}

std::string join(const std::vector<int>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(xs[i]);
    }
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "c") c = to_int(key, value);
    else if (key == "c_raw") c_raw = to_int(key, value);
    else if (key == "gcn_layers") gcn_layers = to_int(key, value);
    else if (key == "rec_layers") rec_layers = to_int(key, value);
    else if (key == "embed_hidden") embed_hidden = to_int(key, value);
    else if (key == "update_hidden") update_hidden = to_int(key, value);
    else if (key == "steps") steps = to_int(key, value);
    else if (key == "k_neighbors") k_neighbors = to_int(key, value);
    else if (key == "delta") delta = to_double(key, value);
    else if (key == "gamma") gamma = to_double(key, value);
    else if (key == "scaled_attention") scaled_attention = to_bool(key, value);
    else if (key == "margin_e") margin_e = to_double(key, value);
    else if (key == "margin_g") margin_g = to_double(key, value);
    else if (key == "margin_t") margin_t = to_double(key, value);
    else if (key == "lr_e") lr_e = to_double(key, value);
    else if (key == "lr_g") lr_g = to_double(key, value);
    else if (key == "lr_t") lr_t = to_double(key, value);
    else if (key == "epochs_e") epochs_e = to_int(key, value);
    else if (key == "epochs_g") epochs_g = to_int(key, value);
    else if (key == "epochs_t") epochs_t = to_int(key, value);
    else if (key == "batch") batch = to_int(key, value);
    else if (key == "instances_per_id") instances_per_id = to_int(key, value);
    else if (key == "seed") seed = to_u64(key, value);
    else if (key == "optimizer") {
        if (value != "sgd" && value != "adam")
            throw ConfigError("optimizer expects sgd|adam, got '" + value + "'");
        optimizer = value;
    }
    else if (key == "rerank_k1") rerank_k1 = to_int(key, value);
    else if (key == "rerank_k2") rerank_k2 = to_int(key, value);
    else if (key == "rerank_lambda") rerank_lambda = to_double(key, value);
    else if (key == "aqe_top_m") aqe_top_m = to_int(key, value);
    else if (key == "neighbor_pool") neighbor_pool = to_double(key, value);
    else if (key == "region_head") regions.keypoints[kPartHead] = to_int_list(key, value);
    else if (key == "region_torso") regions.keypoints[kPartTorso] = to_int_list(key, value);
    else if (key == "region_leg") regions.keypoints[kPartLeg] = to_int_list(key, value);
    else if (key == "synth.ids") synth.ids = to_int(key, value);
    else if (key == "synth.train_per_id") synth.train_per_id = to_int(key, value);
    else if (key == "synth.query_per_id") synth.query_per_id = to_int(key, value);
    else if (key == "synth.gallery_per_id") synth.gallery_per_id = to_int(key, value);
    else if (key == "synth.c_raw") synth.c_raw = to_int(key, value);
    else if (key == "synth.cameras") synth.cameras = to_int(key, value);
    else if (key == "synth.sigma_within") synth.sigma_within = to_double(key, value);
    else if (key == "synth.sigma_camera") synth.sigma_camera = to_double(key, value);
    else if (key == "synth.occ_prob_head") synth.occ_prob_head = to_double(key, value);
    else if (key == "synth.occ_prob_torso") synth.occ_prob_torso = to_double(key, value);
    else if (key == "synth.occ_prob_leg") synth.occ_prob_leg = to_double(key, value);
    else if (key == "synth.occ_severity") synth.occ_severity = to_double(key, value);
    else if (key == "synth.cross_set") synth.cross_set = to_bool(key, value);
    else if (key == "synth.seed") synth.seed = to_u64(key, value);
    else throw ConfigError("unknown config key: " + key);
}

void RunConfig::validate() const {
    if (c < 1 || c_raw < 1) throw ConfigError("channel dims must be positive");
    if (steps < 1 || rec_layers < 1 || gcn_layers < 1)
        throw ConfigError("steps and layer counts must be >= 1");
    if (delta < 0 || delta > 1) throw ConfigError("delta must lie in [0,1]");
    if (k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
    if (embed_hidden < 1 || update_hidden < 1) throw ConfigError("hidden dims must be positive");
    regions.validate();
    train_config().validate();
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.margin_e = margin_e;
    t.margin_g = margin_g;
    t.margin_t = margin_t;
    t.lr_e = lr_e;
    t.lr_g = lr_g;
    t.lr_t = lr_t;
    t.epochs_e = epochs_e;
    t.epochs_g = epochs_g;
    t.epochs_t = epochs_t;
    t.batch = batch;
    t.instances_per_id = instances_per_id;
    t.seed = seed;
    t.optimizer = optimizer == "adam" ? Optimizer::kAdam : Optimizer::kSgd;
    t.neighbor_pool = neighbor_pool;
    t.delta = delta;
    t.k_neighbors = k_neighbors;
    t.graph = graph_config();
    t.recovery = recovery_config();
    return t;
}

GraphConfig RunConfig::graph_config() const {
    GraphConfig g;
    g.gamma = gamma;
    g.layers = gcn_layers;
    return g;
}

RecoveryConfig RunConfig::recovery_config() const {
    RecoveryConfig r;
    r.steps = steps;
    r.layers = rec_layers;
    r.scaled_attention = scaled_attention;
    return r;
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
    std::vector<std::pair<std::string, std::string>> out;
    auto put = [&](const char* k, const std::string& v) { out.emplace_back(k, v); };
    put("c", std::to_string(c));
    put("c_raw", std::to_string(c_raw));
    put("gcn_layers", std::to_string(gcn_layers));
    put("rec_layers", std::to_string(rec_layers));
    put("embed_hidden", std::to_string(embed_hidden));
    put("update_hidden", std::to_string(update_hidden));
    put("steps", std::to_string(steps));
    put("k_neighbors", std::to_string(k_neighbors));
    put("delta", format_double(delta));
    put("gamma", format_double(gamma));
    put("scaled_attention", scaled_attention ? "1" : "0");
    put("margin_e", format_double(margin_e));
    put("margin_g", format_double(margin_g));
    put("margin_t", format_double(margin_t));
    put("lr_e", format_double(lr_e));
    put("lr_g", format_double(lr_g));
    put("lr_t", format_double(lr_t));
    put("epochs_e", std::to_string(epochs_e));
    put("epochs_g", std::to_string(epochs_g));
    put("epochs_t", std::to_string(epochs_t));
    put("batch", std::to_string(batch));
    put("instances_per_id", std::to_string(instances_per_id));
    put("seed", std::to_string(seed));
    put("optimizer", optimizer);
    put("rerank_k1", std::to_string(rerank_k1));
    put("rerank_k2", std::to_string(rerank_k2));
    put("rerank_lambda", format_double(rerank_lambda));
    put("aqe_top_m", std::to_string(aqe_top_m));
    put("neighbor_pool", format_double(neighbor_pool));
    put("region_head", join(regions.keypoints[kPartHead]));
    put("region_torso", join(regions.keypoints[kPartTorso]));
    put("region_leg", join(regions.keypoints[kPartLeg]));
    put("synth.ids", std::to_string(synth.ids));
    put("synth.train_per_id", std::to_string(synth.train_per_id));
    put("synth.query_per_id", std::to_string(synth.query_per_id));
    put("synth.gallery_per_id", std::to_string(synth.gallery_per_id));
    put("synth.c_raw", std::to_string(synth.c_raw));
    put("synth.cameras", std::to_string(synth.cameras));
    put("synth.sigma_within", format_double(synth.sigma_within));
    put("synth.sigma_camera", format_double(synth.sigma_camera));
    put("synth.occ_prob_head", format_double(synth.occ_prob_head));
    put("synth.occ_prob_torso", format_double(synth.occ_prob_torso));
    put("synth.occ_prob_leg", format_double(synth.occ_prob_leg));
    put("synth.occ_severity", format_double(synth.occ_severity));
    put("synth.cross_set", synth.cross_set ? "1" : "0");
    put("synth.seed", std::to_string(synth.seed));
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto ke = key.find_last_not_of(" \t");
        key = key.substr(0, ke + 1);
        auto vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        out.emplace_back(key, value);
    }
    return out;
}

}  // namespace frt
