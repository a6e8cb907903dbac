#include "frt/driver.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "frt/visgraph.hpp"

namespace frt {

Dataset load_dataset(const std::string& dir, const RunConfig& cfg) {
    Dataset out;
    auto load = [&](const char* name) {
        auto raw = read_pfv(dir + "/" + name, cfg.regions);
        for (auto& d : raw) d = apply_occlusion_threshold(std::move(d), cfg.delta);
        return raw;
    };
    out.train = load("train.pfv");
    out.query = load("query.pfv");
    out.gallery = load("gallery.pfv");
    return out;
}

Dataset dataset_from_synth(const SynthOutput& data, const RunConfig& cfg) {
    Dataset out;
    auto prep = [&](const std::vector<PersonDescriptor>& in) {
        std::vector<PersonDescriptor> v = in;
        for (auto& d : v) d = apply_occlusion_threshold(std::move(d), cfg.delta);
        return v;
    };
    out.train = prep(data.train);
    out.query = prep(data.query);
    out.gallery = prep(data.gallery);
    return out;
}

ModelParams init_model(const RunConfig& cfg, int num_classes) {
    if (num_classes < 2) throw ConfigError("need at least 2 identity classes");
    ModelParams params;
    Rng rng = Rng::stream(cfg.seed, "init");
    add_encoder_params(params, cfg.c_raw, cfg.c, rng);
    add_classifier_e_params(params, cfg.c, num_classes, rng);
    add_gcn_params(params, cfg.c, cfg.gcn_layers, rng);
    add_classifier_g_params(params, cfg.c, num_classes, rng);
    add_recovery_params(params, cfg.c, cfg.steps, cfg.rec_layers, cfg.embed_hidden,
                        cfg.update_hidden, rng);
    return params;
}

Checkpoint make_checkpoint(const RunConfig& cfg, ModelParams params, const StageFlags& stages,
                           int num_classes) {
    Checkpoint ckpt;
    ckpt.params = std::move(params);
    for (const auto& [key, value] : cfg.echo()) ckpt.meta[key] = value;
    ckpt.meta["num_classes"] = std::to_string(num_classes);
    ckpt.meta["stage_e"] = stages.e ? "1" : "0";
    ckpt.meta["stage_g"] = stages.g ? "1" : "0";
    ckpt.meta["stage_t"] = stages.t ? "1" : "0";
    return ckpt;
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt, RunConfig base) {
    for (const auto& [key, value] : ckpt.meta) {
        if (key == "num_classes" || key.rfind("stage_", 0) == 0) continue;
        try {
            base.set(key, value);
        } catch (const ConfigError&) {
            // meta written by a newer tool may carry keys we do not know
        }
    }
    return base;
}

BaselineMode baseline_from_string(const std::string& name) {
    if (name == "none") return BaselineMode::kNone;
    if (name == "aqe") return BaselineMode::kAqe;
    if (name == "rerank") return BaselineMode::kRerank;
    throw ConfigError("unknown baseline '" + name + "' (expected none|aqe|rerank)");
}

namespace {

std::vector<Tensor> concat_features(std::span<const PersonDescriptor> ds) {
    std::vector<Tensor> out;
    out.reserve(ds.size());
    for (const auto& d : ds) out.push_back(d.concat_parts());
    return out;
}

std::vector<Tensor> recovered_concat_features(const std::vector<RecoveryResult>& recs) {
    std::vector<Tensor> out;
    out.reserve(recs.size());
    for (const auto& r : recs) {
        Tensor row(1, r.recovered.numel());
        for (int i = 0; i < r.recovered.numel(); ++i) row(0, i) = r.recovered[i];
        out.push_back(std::move(row));
    }
    return out;
}

/// Union similarity matrix over per-item feature rows (queries followed by
/// gallery) for the re-ranking baseline.
Tensor union_feature_scores(const std::vector<Tensor>& qf, const std::vector<Tensor>& gf) {
    std::vector<Tensor> all;
    all.reserve(qf.size() + gf.size());
    for (const auto& f : qf) all.push_back(f);
    for (const auto& f : gf) all.push_back(f);
    return feature_score_matrix(all, all);
}

Tensor union_graph_scores(std::span<const PersonDescriptor> q,
                          std::span<const PersonDescriptor> g, const ModelParams& params,
                          const GraphConfig& cfg, bool use_graph) {
    std::vector<PersonDescriptor> all;
    all.reserve(q.size() + g.size());
    all.insert(all.end(), q.begin(), q.end());
    all.insert(all.end(), g.begin(), g.end());
    return use_graph ? score_matrix(all, all, params, cfg) : cosine_score_matrix(all, all);
}

}  // namespace

EvalArtifacts evaluate(const Dataset& data, const ModelParams& params, const RunConfig& cfg,
                       const EvalOptions& opt) {
    if (data.query.empty() || data.gallery.empty())
        throw ContractError("evaluation needs a nonempty query and gallery set");

    auto query = encode_all(data.query, params, cfg.delta);
    auto gallery = encode_all(data.gallery, params, cfg.delta);

    GraphConfig gcfg = cfg.graph_config();
    Tensor base = opt.use_graph ? score_matrix(query, gallery, params, gcfg)
                                : cosine_score_matrix(query, gallery);

    EvalArtifacts art;
    Tensor final_scores = base;
    std::vector<Tensor> query_features;
    std::vector<Tensor> gallery_features;

    if (opt.use_recovery) {
        auto contexts = build_contexts(query, gallery, base, cfg.k_neighbors,
                                       /*exclude_self_index=*/false);
        auto recs = recover_all(contexts, params, cfg.recovery_config());
        query_features = recovered_concat_features(recs);
        gallery_features = concat_features(gallery);
        final_scores = feature_score_matrix(query_features, gallery_features);

        for (std::size_t i = 0; i < contexts.size(); ++i) {
            const auto& rep = recs[i].report;
            for (int n = 0; n < contexts[i].k(); ++n) {
                AttentionRow row;
                row.query_id = contexts[i].query.id;
                row.neighbor_rank = n + 1;
                row.neighbor_id = contexts[i].neighbors[n].id;
                row.contribution = rep.neighbor_contribution[n];
                art.attention.push_back(row);
            }
        }
    } else {
        query_features = concat_features(query);
        gallery_features = concat_features(gallery);
    }

    switch (opt.baseline) {
        case BaselineMode::kNone:
            break;
        case BaselineMode::kAqe: {
            auto ranklists = rank(final_scores, query, gallery);
            auto expanded = aqe_expand(query_features, gallery_features, ranklists, cfg.aqe_top_m);
            final_scores = feature_score_matrix(expanded, gallery_features);
            break;
        }
        case BaselineMode::kRerank: {
            Tensor union_scores =
                opt.use_recovery ? union_feature_scores(query_features, gallery_features)
                                 : union_graph_scores(query, gallery, params, gcfg, opt.use_graph);
            Tensor dist = rerank_k_reciprocal(union_scores, static_cast<int>(query.size()),
                                              cfg.rerank_k1, cfg.rerank_k2, cfg.rerank_lambda);
            // ranking wants higher-is-better; negation is exact and monotone
            final_scores = scale(dist, -1.0);
            break;
        }
    }

    art.ranklists = rank(final_scores, query, gallery);
    art.report = cmc_map(art.ranklists, gallery);
    art.report.config_echo = cfg.echo();
    return art;
}

std::array<EvalReport, 5> per_part_eval(const Dataset& data, const ModelParams& params,
                                        const RunConfig& cfg, bool recovered) {
    auto query = encode_all(data.query, params, cfg.delta);
    auto gallery = encode_all(data.gallery, params, cfg.delta);

    std::vector<RecoveryResult> recs;
    if (recovered) {
        Tensor base = score_matrix(query, gallery, params, cfg.graph_config());
        auto contexts = build_contexts(query, gallery, base, cfg.k_neighbors, false);
        recs = recover_all(contexts, params, cfg.recovery_config());
    }

    auto part_features = [&](std::span<const PersonDescriptor> ds, int part) {
        std::vector<Tensor> out;
        out.reserve(ds.size());
        for (const auto& d : ds) out.push_back(d.part_row(part));
        return out;
    };
    auto recovered_part = [&](int part) {
        std::vector<Tensor> out;
        out.reserve(recs.size());
        for (const auto& r : recs) out.push_back(select_row(r.recovered, part));
        return out;
    };

    std::array<EvalReport, 5> reports;
    for (int p = 0; p < kNumParts; ++p) {
        auto qf = recovered ? recovered_part(p) : part_features(query, p);
        auto gf = part_features(gallery, p);
        Tensor scores = feature_score_matrix(qf, gf);
        reports[p] = cmc_map(rank(scores, query, gallery), gallery);
    }
    auto qc = recovered ? recovered_concat_features(recs)
                        : [&] {
                              std::vector<Tensor> out;
                              for (const auto& d : query) out.push_back(d.concat_parts());
                              return out;
                          }();
    std::vector<Tensor> gc;
    for (const auto& d : gallery) gc.push_back(d.concat_parts());
    Tensor scores = feature_score_matrix(qc, gc);
    reports[4] = cmc_map(rank(scores, query, gallery), gallery);
    return reports;
}

std::vector<PersonDescriptor> subsample_gallery(std::span<const PersonDescriptor> gallery,
                                                int per_id, std::uint64_t seed) {
    if (per_id < 1) throw ConfigError("gallery subsample size must be >= 1");
    std::map<int, std::vector<int>> by_id;
    for (std::size_t i = 0; i < gallery.size(); ++i)
        by_id[gallery[i].id].push_back(static_cast<int>(i));

    Rng rng = Rng::stream(seed, "gallery_subsample");
    std::vector<int> chosen;
    for (auto& [id, indices] : by_id) {
        if (static_cast<int>(indices.size()) < per_id)
            throw ConfigError("identity " + std::to_string(id) + " has only " +
                              std::to_string(indices.size()) + " gallery images, need " +
                              std::to_string(per_id));
        rng.shuffle(indices);
        for (int r = 0; r < per_id; ++r) chosen.push_back(indices[r]);
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<PersonDescriptor> out;
    out.reserve(chosen.size());
    for (int i : chosen) out.push_back(gallery[i]);
    return out;
}

std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const Dataset& data, const ModelParams& params, const RunConfig& cfg,
                            const StageFlags& stages) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    EvalOptions opt;
    opt.use_recovery = true;
    if (!stages.t) throw ContractError("sweep requires a checkpoint with completed stage T");

    std::vector<SweepRow> rows;
    for (double v : values) {
        RunConfig run = cfg;
        Dataset subset = data;
        if (param == "k") {
            run.k_neighbors = static_cast<int>(v);
            if (run.k_neighbors < 1) throw ConfigError("k must be >= 1");
        } else if (param == "s") {
            int steps = static_cast<int>(v);
            if (steps < 1) throw ConfigError("s must be >= 1");
            if (steps > cfg.steps)
                throw ConfigError("checkpoint holds " + std::to_string(cfg.steps) +
                                  " recovery steps, cannot sweep s=" + std::to_string(steps));
            run.steps = steps;
        } else if (param == "delta") {
            if (v < 0 || v > 1) throw ConfigError("delta must lie in [0,1]");
            run.delta = v;
            // thresholding is re-applied from the raw features before eval
            for (auto& d : subset.query) d = apply_occlusion_threshold(std::move(d), v);
            for (auto& d : subset.gallery) d = apply_occlusion_threshold(std::move(d), v);
        } else if (param == "gallery_size") {
            subset.gallery = subsample_gallery(data.gallery, static_cast<int>(v), cfg.seed);
        } else {
            throw ConfigError("unknown sweep parameter '" + param +
                              "' (expected k|s|delta|gallery_size)");
        }

        auto art = evaluate(subset, params, run, opt);
        rows.push_back({param, v, art.report.cmc1, art.report.map});
    }
    return rows;
}

// --- CSV emission -----------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path, bool append = false) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path);
    return out;
}

void write_metrics(std::ofstream& out, const std::string& prefix, const EvalReport& r) {
    out << prefix << "rank1," << format_double(r.cmc1) << '\n';
    out << prefix << "rank3," << format_double(r.cmc3) << '\n';
    out << prefix << "rank5," << format_double(r.cmc5) << '\n';
    out << prefix << "rank10," << format_double(r.cmc10) << '\n';
    out << prefix << "mAP," << format_double(r.map) << '\n';
    out << prefix << "queries_evaluated," << r.queries_evaluated << '\n';
    out << prefix << "queries_skipped," << r.queries_skipped << '\n';
}

}  // namespace

void write_report_csv(const std::string& path, const EvalReport& report) {
    auto out = open_out(path);
    out << "metric,value\n";
    write_metrics(out, "", report);
    for (const auto& [key, value] : report.config_echo)
        out << "config." << key << ',' << value << '\n';
}

void write_ranklists_csv(const std::string& path, const std::vector<RankList>& ranklists,
                         std::span<const PersonDescriptor> gallery) {
    auto out = open_out(path);
    out << "query_id,rank,gallery_id,score\n";
    for (const auto& rl : ranklists)
        for (std::size_t r = 0; r < rl.gallery_indices.size(); ++r)
            out << rl.query_id << ',' << r + 1 << ',' << gallery[rl.gallery_indices[r]].id << ','
                << format_double(rl.scores[r]) << '\n';
}

void write_attention_csv(const std::string& path, const std::vector<AttentionRow>& rows) {
    auto out = open_out(path);
    out << "query_id,neighbor_rank,neighbor_id,contribution\n";
    for (const auto& r : rows)
        out << r.query_id << ',' << r.neighbor_rank << ',' << r.neighbor_id << ','
            << format_double(r.contribution) << '\n';
}

void write_loss_curve_csv(const std::string& path, Stage stage,
                          const std::vector<double>& epoch_losses, bool append) {
    auto out = open_out(path, append);
    if (!append) out << "stage,epoch,loss\n";
    for (std::size_t e = 0; e < epoch_losses.size(); ++e)
        out << stage_name(stage) << ',' << e + 1 << ',' << format_double(epoch_losses[e]) << '\n';
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    auto out = open_out(path);
    out << "param,value,rank1,mAP\n";
    for (const auto& r : rows)
        out << r.param << ',' << format_double(r.value) << ',' << format_double(r.rank1) << ','
            << format_double(r.map) << '\n';
}

void write_per_part_csv(const std::string& path, const std::array<EvalReport, 5>& before,
                        const std::optional<std::array<EvalReport, 5>>& after) {
    auto out = open_out(path);
    out << "metric,value\n";
    const char* streams[5] = {"global", "head", "torso", "leg", "concat"};
    for (int s = 0; s < 5; ++s)
        write_metrics(out, std::string("before.") + streams[s] + ".", before[s]);
    if (after)
        for (int s = 0; s < 5; ++s)
            write_metrics(out, std::string("after.") + streams[s] + ".", (*after)[s]);
}

}  // namespace frt
