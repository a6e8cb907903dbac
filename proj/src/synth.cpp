#include "frt/synth.hpp"

#include <fstream>

#include "frt/rng.hpp"

namespace frt {

void SynthConfig::validate() const {
    if (ids < 2) throw ConfigError("need at least 2 identities");
    if (train_per_id < 1 || query_per_id < 1 || gallery_per_id < 2)
        throw ConfigError("need >= 1 train/query and >= 2 gallery images per id");
    if (c_raw < 1) throw ConfigError("c_raw must be positive");
    if (cameras < 2) throw ConfigError("need >= 2 cameras for the junk rule to leave matches");
    if (sigma_within <= 0) throw ConfigError("sigma_within must be positive");
    for (double p : {occ_prob_head, occ_prob_torso, occ_prob_leg})
        if (p < 0 || p > 1) throw ConfigError("occlusion probabilities must lie in [0,1]");
    if (occ_severity < 0 || occ_severity > 1) throw ConfigError("severity must lie in [0,1]");
    if (cross_set && ids < 4) throw ConfigError("cross-set split needs >= 4 identities");
}

namespace {

constexpr double kConfLo = 0.7;  // clean keypoint confidence range
constexpr double kConfHi = 1.0;

struct Prototypes {
    // [id][part][channel]
    std::vector<std::array<std::vector<double>, kNumParts>> id_parts;
    // [camera][part][channel]
    std::vector<std::array<std::vector<double>, kNumParts>> cam_offset;
};

PersonDescriptor make_image(const SynthConfig& cfg, const Prototypes& proto,
                            const RegionMap& regions, int id, int camera, Rng& rng) {
    PersonDescriptor d;
    d.id = id;
    d.camera = camera;

    for (int k = 0; k < kNumKeypoints; ++k) d.kp_conf[k] = rng.uniform(kConfLo, kConfHi);
    for (int p = 0; p < kNumParts; ++p) {
        d.parts[p].resize(cfg.c_raw);
        for (int j = 0; j < cfg.c_raw; ++j)
            d.parts[p][j] = proto.id_parts[id][p][j] + cfg.sigma_within * rng.normal() +
                            proto.cam_offset[camera][p][j];
    }

    const double probs[kNumParts] = {0.0, cfg.occ_prob_head, cfg.occ_prob_torso,
                                     cfg.occ_prob_leg};
    for (int p = kPartHead; p <= kPartLeg; ++p) {
        bool occluded = rng.uniform() < probs[p];
        if (!occluded) continue;
        for (int k : regions.keypoints[p]) d.kp_conf[k] *= (1.0 - cfg.occ_severity);
        for (int j = 0; j < cfg.c_raw; ++j)
            d.parts[p][j] =
                (1.0 - cfg.occ_severity) * d.parts[p][j] + cfg.occ_severity * rng.normal();
    }

    d.vis = visibility_scores(d.kp_conf, regions);
    return d;
}

}  // namespace

SynthOutput generate(const SynthConfig& cfg) {
    cfg.validate();
    RegionMap regions = RegionMap::standard();

    Rng rng = Rng::stream(cfg.seed, "synth");
    Prototypes proto;
    proto.id_parts.resize(cfg.ids);
    for (int id = 0; id < cfg.ids; ++id)
        for (int p = 0; p < kNumParts; ++p) {
            proto.id_parts[id][p].resize(cfg.c_raw);
            // sparse nonnegative prototypes, the shape of rectified
            // backbone activations: each identity lights up its own subset
            // of channels
            for (double& x : proto.id_parts[id][p]) {
                double z = rng.normal();
                x = z > 0.0 ? 2.0 * z : 0.0;
            }
        }
    proto.cam_offset.resize(cfg.cameras);
    for (int cam = 0; cam < cfg.cameras; ++cam)
        for (int p = 0; p < kNumParts; ++p) {
            proto.cam_offset[cam][p].resize(cfg.c_raw);
            for (double& x : proto.cam_offset[cam][p]) x = cfg.sigma_camera * rng.normal();
        }

    // cross-set protocol trains on the first half of the identities and
    // evaluates on the rest; the standard protocol shares all of them
    int train_lo = 0, train_hi = cfg.ids;
    int eval_lo = 0, eval_hi = cfg.ids;
    if (cfg.cross_set) {
        train_hi = cfg.ids / 2;
        eval_lo = cfg.ids / 2;
    }

    SynthOutput out;
    for (int id = train_lo; id < train_hi; ++id)
        for (int i = 0; i < cfg.train_per_id; ++i)
            out.train.push_back(make_image(cfg, proto, regions, id, i % cfg.cameras, rng));
    for (int id = eval_lo; id < eval_hi; ++id)
        for (int i = 0; i < cfg.query_per_id; ++i)
            out.query.push_back(make_image(cfg, proto, regions, id, i % cfg.cameras, rng));
    for (int id = eval_lo; id < eval_hi; ++id)
        for (int i = 0; i < cfg.gallery_per_id; ++i)
            out.gallery.push_back(make_image(cfg, proto, regions, id, i % cfg.cameras, rng));
    return out;
}

void generate_files(const SynthConfig& cfg, const std::string& out_dir) {
    SynthOutput data = generate(cfg);
    write_pfv(out_dir + "/train.pfv", data.train);
    write_pfv(out_dir + "/query.pfv", data.query);
    write_pfv(out_dir + "/gallery.pfv", data.gallery);

    std::ofstream m(out_dir + "/manifest.txt");
    if (!m) throw ParseError("cannot write manifest in " + out_dir);
    m << "format=PFV1\n";
    m << "ids=" << cfg.ids << '\n';
    m << "train_per_id=" << cfg.train_per_id << '\n';
    m << "query_per_id=" << cfg.query_per_id << '\n';
    m << "gallery_per_id=" << cfg.gallery_per_id << '\n';
    m << "c_raw=" << cfg.c_raw << '\n';
    m << "cameras=" << cfg.cameras << '\n';
    m << "sigma_within=" << format_double(cfg.sigma_within) << '\n';
    m << "sigma_camera=" << format_double(cfg.sigma_camera) << '\n';
    m << "occ_prob_head=" << format_double(cfg.occ_prob_head) << '\n';
    m << "occ_prob_torso=" << format_double(cfg.occ_prob_torso) << '\n';
    m << "occ_prob_leg=" << format_double(cfg.occ_prob_leg) << '\n';
    m << "occ_severity=" << format_double(cfg.occ_severity) << '\n';
    m << "cross_set=" << (cfg.cross_set ? 1 : 0) << '\n';
    m << "seed=" << cfg.seed << '\n';
}

}  // namespace frt
