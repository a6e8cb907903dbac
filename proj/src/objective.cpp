#include "frt/objective.hpp"

#include <algorithm>
#include <cmath>

namespace frt {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::E: return "E";
        case Stage::G: return "G";
        case Stage::T: return "T";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (margin_e <= 0 || margin_g <= 0 || margin_t <= 0)
        throw ConfigError("margins must be positive");
    if (batch < 4) throw ConfigError("batch must hold at least 2 ids x 2 instances");
    if (instances_per_id < 2) throw ConfigError("instances_per_id must be >= 2");
    if (batch % instances_per_id != 0)
        throw ConfigError("batch must be a multiple of instances_per_id");
    if (batch / instances_per_id < 2) throw ConfigError("batch must hold >= 2 identities");
    if (k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
    if (delta < 0 || delta > 1) throw ConfigError("delta must lie in [0,1]");
    if (neighbor_pool <= 0 || neighbor_pool > 1)
        throw ConfigError("neighbor_pool must lie in (0,1]");
}

IdIndex::IdIndex(std::span<const PersonDescriptor> descriptors) {
    for (const auto& d : descriptors) ids_.push_back(d.id);
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

int IdIndex::class_of(int id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) throw ContractError("unknown identity label");
    return static_cast<int>(it - ids_.begin());
}

std::string enc_w_name(int part) { return "enc.p" + std::to_string(part) + ".w"; }
std::string enc_b_name(int part) { return "enc.p" + std::to_string(part) + ".b"; }
std::string cls_e_w_name(int part) { return "cls_e.p" + std::to_string(part) + ".w"; }
std::string cls_e_b_name(int part) { return "cls_e.p" + std::to_string(part) + ".b"; }
std::string cls_g_w_name() { return "cls_g.w"; }
std::string cls_g_b_name() { return "cls_g.b"; }

namespace {

Tensor randn(Rng& rng, int r, int c, double s) {
    Tensor t(r, c);
    for (int i = 0; i < t.numel(); ++i) t[i] = s * rng.normal();
    return t;
}

}  // namespace

void add_encoder_params(ModelParams& params, int c_raw, int c, Rng& rng) {
    // keeps encoded features near unit norm, so downstream attention logits
    // start in the soft region of the softmax
    double s = 1.0 / static_cast<double>(c_raw);
    for (int p = 0; p < kNumParts; ++p) {
        params.add(enc_w_name(p), randn(rng, c_raw, c, s));
        params.add(enc_b_name(p), Tensor(1, c));
    }
}

void add_classifier_e_params(ModelParams& params, int c, int num_classes, Rng& rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(c));
    for (int p = 0; p < kNumParts; ++p) {
        params.add(cls_e_w_name(p), randn(rng, num_classes, c, s));
        params.add(cls_e_b_name(p), Tensor(1, num_classes));
    }
}

void add_classifier_g_params(ModelParams& params, int c, int num_classes, Rng& rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(4 * c));
    params.add(cls_g_w_name(), randn(rng, num_classes, 4 * c, s));
    params.add(cls_g_b_name(), Tensor(1, num_classes));
}

PersonDescriptor encode_descriptor(const PersonDescriptor& raw, const ModelParams& params,
                                   double delta) {
    PersonDescriptor out = raw;
    for (int p = 0; p < kNumParts; ++p) {
        // rectified activations into a linear embedding head; the linear
        // output keeps cosine geometry intact for retrieval
        Tensor f = add_rowvec(matmul(relu(raw.part_row(p)), params.tensor(enc_w_name(p))),
                              params.tensor(enc_b_name(p)));
        out.parts[p] = f.values();
    }
    return apply_occlusion_threshold(std::move(out), delta);
}

std::vector<PersonDescriptor> encode_all(std::span<const PersonDescriptor> raw,
                                         const ModelParams& params, double delta) {
    std::vector<PersonDescriptor> out;
    out.reserve(raw.size());
    for (const auto& d : raw) out.push_back(encode_descriptor(d, params, delta));
    return out;
}

ad::Val cross_entropy_node(ad::Tape& tape, ad::Val features, const std::vector<int>& classes,
                           const std::string& w_name, const std::string& b_name) {
    ad::Val logits = tape.add_rowvec(tape.matmul(features, tape.transpose(tape.param(w_name))),
                                     tape.param(b_name));
    return tape.nll(tape.log_softmax_rows(logits), classes);
}

double cross_entropy(const Tensor& features, const std::vector<int>& classes, const Tensor& w,
                     const Tensor& b) {
    if (static_cast<int>(classes.size()) != features.rows())
        throw ShapeError("one label per feature row expected");
    Tensor logits = add_rowvec(matmul(features, transpose(w)), b);
    Tensor lp = log_softmax_rows(logits);
    double loss = 0.0;
    for (int i = 0; i < lp.rows(); ++i) {
        int y = classes[i];
        if (y < 0 || y >= lp.cols()) throw ContractError("label out of range");
        loss -= lp(i, y);
    }
    return loss;
}

double triplet(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
               double theta) {
    double v = theta + euclidean(anchor, positive) - euclidean(anchor, negative);
    return v > 0.0 ? v : 0.0;
}

ad::Val triplet_node(ad::Tape& tape, ad::Val anchor, ad::Val positive, ad::Val negative,
                     double theta) {
    ad::Val dp = tape.euclidean(anchor, positive);
    ad::Val dn = tape.euclidean(anchor, negative);
    return tape.hinge(tape.add_scalar(tape.sub(dp, dn), theta));
}

namespace {

struct MinedPair {
    int anchor, positive, negative;
};

/// Hardest positive (max distance) and hardest negative (min distance) per
/// anchor; dist(i,j) supplied by the caller. Ties go to the lowest index.
std::vector<MinedPair> mine_batch_hard(const std::vector<int>& classes,
                                       const std::vector<std::vector<double>>& dist) {
    const int n = static_cast<int>(classes.size());
    std::vector<MinedPair> mined;
    for (int i = 0; i < n; ++i) {
        int pos = -1, neg = -1;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (classes[j] == classes[i]) {
                if (pos < 0 || dist[i][j] > dist[i][pos]) pos = j;
            } else {
                if (neg < 0 || dist[i][j] < dist[i][neg]) neg = j;
            }
        }
        if (pos >= 0 && neg >= 0) mined.push_back({i, pos, neg});
    }
    return mined;
}

}  // namespace

ad::Val batch_hard_triplet_node(ad::Tape& tape, ad::Val features, const std::vector<int>& classes,
                                double theta) {
    const Tensor& f = tape.value(features);
    const int n = f.rows();
    if (static_cast<int>(classes.size()) != n)
        throw ShapeError("one class per feature row expected");

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            dist[i][j] = dist[j][i] = euclidean(select_row(f, i), select_row(f, j));

    auto mined = mine_batch_hard(classes, dist);
    if (mined.empty()) throw ContractError("triplet infeasible: no anchor has both a positive and a negative");

    std::vector<ad::Val> terms;
    for (const auto& m : mined) {
        terms.push_back(triplet_node(tape, tape.select_row(features, m.anchor),
                                     tape.select_row(features, m.positive),
                                     tape.select_row(features, m.negative), theta));
    }
    return tape.sum_list(terms);
}

ad::Val loss_e_node(ad::Tape& tape, std::span<const PersonDescriptor> raw_batch,
                    const IdIndex& index, const TrainConfig& cfg) {
    const int n = static_cast<int>(raw_batch.size());
    if (n == 0) throw ContractError("empty batch");
    const int c_raw = raw_batch[0].channels();

    std::vector<ad::Val> stream_losses;
    for (int p = 0; p < kNumParts; ++p) {
        // only samples whose part survived the delta rule feed this stream
        std::vector<int> rows;
        for (int i = 0; i < n; ++i)
            if (raw_batch[i].vis[p] >= cfg.delta) rows.push_back(i);
        if (rows.empty()) continue;

        Tensor x(static_cast<int>(rows.size()), c_raw);
        std::vector<int> classes;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& d = raw_batch[rows[r]];
            for (int j = 0; j < c_raw; ++j) x(static_cast<int>(r), j) = d.parts[p][j];
            classes.push_back(index.class_of(d.id));
        }

        ad::Val encoded = tape.add_rowvec(
            tape.matmul(tape.relu(tape.constant(x)), tape.param(enc_w_name(p))),
            tape.param(enc_b_name(p)));
        stream_losses.push_back(
            cross_entropy_node(tape, encoded, classes, cls_e_w_name(p), cls_e_b_name(p)));

        // a stream can lack valid triplets (e.g. all other samples occluded)
        const Tensor& fv = tape.value(encoded);
        std::vector<std::vector<double>> dist(rows.size(), std::vector<double>(rows.size(), 0.0));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = i + 1; j < rows.size(); ++j)
                dist[i][j] = dist[j][i] =
                    euclidean(select_row(fv, static_cast<int>(i)), select_row(fv, static_cast<int>(j)));
        auto mined = mine_batch_hard(classes, dist);
        std::vector<ad::Val> terms;
        for (const auto& m : mined)
            terms.push_back(triplet_node(tape, tape.select_row(encoded, m.anchor),
                                         tape.select_row(encoded, m.positive),
                                         tape.select_row(encoded, m.negative), cfg.margin_e));
        if (!terms.empty()) stream_losses.push_back(tape.sum_list(terms));
    }
    if (stream_losses.empty()) throw ContractError("every stream of the batch is occluded");
    return tape.sum_list(stream_losses);
}

ad::Val loss_g_node(ad::Tape& tape, std::span<const PersonDescriptor> encoded_batch,
                    const IdIndex& index, const TrainConfig& cfg) {
    const int n = static_cast<int>(encoded_batch.size());
    if (n < 2) throw ContractError("stage G needs a batch of at least 2");

    // cross-entropy on each sample's self-pair graph update
    std::vector<ad::Val> ce_terms;
    for (int i = 0; i < n; ++i) {
        ad::Val u = graph_update_node(tape, encoded_batch[i], cfg.graph);
        ce_terms.push_back(cross_entropy_node(tape, u, {index.class_of(encoded_batch[i].id)},
                                              cls_g_w_name(), cls_g_b_name()));
    }

    // triplets over pairwise graph similarities, mined on plain values
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    const ModelParams& params = tape.params();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = pair_similarity(encoded_batch[i], encoded_batch[j], params, cfg.graph);
            dist[i][j] = dist[j][i] = 1.0 - s;
        }
    std::vector<int> classes;
    for (const auto& d : encoded_batch) classes.push_back(index.class_of(d.id));
    auto mined = mine_batch_hard(classes, dist);
    if (mined.empty()) throw ContractError("triplet infeasible: batch needs >= 2 ids with positives");

    std::vector<ad::Val> tri_terms;
    for (const auto& m : mined) {
        ad::Val sp = pair_similarity_node(tape, encoded_batch[m.anchor],
                                          encoded_batch[m.positive], cfg.graph);
        ad::Val sn = pair_similarity_node(tape, encoded_batch[m.anchor],
                                          encoded_batch[m.negative], cfg.graph);
        // theta + (1 - s_p) - (1 - s_n) = theta + s_n - s_p
        tri_terms.push_back(tape.hinge(tape.add_scalar(tape.sub(sn, sp), cfg.margin_g)));
    }
    return tape.add(tape.sum_list(ce_terms), tape.sum_list(tri_terms));
}

ad::Val loss_t_node(ad::Tape& tape, std::span<const RecoveryContext> batch,
                    const std::vector<int>& classes, const TrainConfig& cfg) {
    if (batch.empty()) throw ContractError("empty batch");
    if (batch.size() != classes.size()) throw ShapeError("one class per context expected");
    const ModelParams& params = tape.params();
    for (int p = 0; p < kNumParts; ++p) {
        if (params.at(cls_e_w_name(p)).trainable || params.at(cls_e_b_name(p)).trainable)
            throw ContractError("stage-E classifier must be frozen during stage T");
    }

    const int n = static_cast<int>(batch.size());
    std::vector<ad::Val> ce_terms;
    std::vector<ad::Val> concat_rows;
    for (int i = 0; i < n; ++i) {
        ad::Val rec = recover_node(tape, batch[i], cfg.recovery, nullptr);
        ad::Val row = tape.select_row(rec, 0);
        for (int p = 0; p < kNumParts; ++p) {
            ad::Val part = tape.select_row(rec, p);
            ce_terms.push_back(
                cross_entropy_node(tape, part, {classes[i]}, cls_e_w_name(p), cls_e_b_name(p)));
            if (p > 0) row = tape.concat_cols(row, part);
        }
        concat_rows.push_back(row);
    }

    // batch-hard triplet over the recovered concatenated features
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            dist[i][j] = dist[j][i] =
                euclidean(tape.value(concat_rows[i]), tape.value(concat_rows[j]));
    auto mined = mine_batch_hard(classes, dist);
    std::vector<ad::Val> tri_terms;
    for (const auto& m : mined)
        tri_terms.push_back(triplet_node(tape, concat_rows[m.anchor], concat_rows[m.positive],
                                         concat_rows[m.negative], cfg.margin_t));

    ad::Val loss = tape.sum_list(ce_terms);
    if (!tri_terms.empty()) loss = tape.add(loss, tape.sum_list(tri_terms));
    return loss;
}

void sgd_step(ModelParams& params, const GradientRecord& grads, double lr) {
    for (auto& [name, p] : params) {
        if (!p.trainable || !grads.has(name)) continue;
        const Tensor& g = grads.at(name);
        for (int i = 0; i < p.tensor.numel(); ++i) p.tensor[i] -= lr * g[i];
    }
}

void AdamState::step(ModelParams& params, const GradientRecord& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        if (!p.trainable || !grads.has(name)) continue;
        const Tensor& g = grads.at(name);
        auto [it, fresh] = state_.try_emplace(name);
        if (fresh) {
            it->second.m = Tensor(g.rows(), g.cols());
            it->second.v = Tensor(g.rows(), g.cols());
        }
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        for (int i = 0; i < g.numel(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            p.tensor[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

std::vector<std::vector<int>> pk_batches(std::span<const PersonDescriptor> descriptors,
                                         const IdIndex& index, int batch, int instances_per_id,
                                         Rng& rng) {
    const int num_ids_per_batch = batch / instances_per_id;
    std::vector<std::vector<int>> by_class(index.num_classes());
    for (std::size_t i = 0; i < descriptors.size(); ++i)
        by_class[index.class_of(descriptors[i].id)].push_back(static_cast<int>(i));

    std::vector<int> class_order;
    for (int c = 0; c < index.num_classes(); ++c)
        if (!by_class[c].empty()) class_order.push_back(c);
    rng.shuffle(class_order);
    for (int c : class_order) rng.shuffle(by_class[c]);

    std::vector<std::vector<int>> batches;
    for (std::size_t start = 0; start + num_ids_per_batch <= class_order.size();
         start += num_ids_per_batch) {
        std::vector<int> b;
        for (int q = 0; q < num_ids_per_batch; ++q) {
            const auto& pool = by_class[class_order[start + q]];
            for (int r = 0; r < instances_per_id; ++r)
                b.push_back(pool[r % pool.size()]);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

namespace {

/// Per-epoch training contexts: neighbors restricted to an allowed gallery
/// subset, self always excluded.
std::vector<RecoveryContext> build_contexts_masked(const std::vector<PersonDescriptor>& items,
                                                   const Tensor& scores, int k,
                                                   const std::vector<char>& allowed) {
    const int n = static_cast<int>(items.size());
    std::vector<RecoveryContext> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> cand;
        for (int j = 0; j < n; ++j)
            if (j != i && allowed[j]) cand.push_back(j);
        if (static_cast<int>(cand.size()) < k)
            throw ContractError("neighbor pool smaller than k");
        std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
            if (scores(i, a) != scores(i, b)) return scores(i, a) > scores(i, b);
            return a < b;
        });
        RecoveryContext ctx;
        ctx.query = items[i];
        for (int r = 0; r < k; ++r) {
            ctx.neighbors.push_back(items[cand[r]]);
            ctx.neighbor_cos.push_back(scores(i, cand[r]));
        }
        out.push_back(std::move(ctx));
    }
    return out;
}

}  // namespace

std::vector<RecoveryContext> build_contexts(std::span<const PersonDescriptor> queries,
                                            std::span<const PersonDescriptor> gallery,
                                            const Tensor& scores, int k, bool exclude_self_index) {
    if (scores.rows() != static_cast<int>(queries.size()) ||
        scores.cols() != static_cast<int>(gallery.size()))
        throw ShapeError("score matrix does not match the query/gallery sizes");
    const int g = static_cast<int>(gallery.size());
    if (k < 1) throw ContractError("k must be >= 1");
    if (k > g - (exclude_self_index ? 1 : 0))
        throw ContractError("k exceeds the available gallery");

    std::vector<RecoveryContext> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::vector<int> order;
        order.reserve(g);
        for (int j = 0; j < g; ++j) {
            if (exclude_self_index && j == static_cast<int>(i)) continue;
            order.push_back(j);
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            double sa = scores(static_cast<int>(i), a), sb = scores(static_cast<int>(i), b);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        RecoveryContext ctx;
        ctx.query = queries[i];
        for (int r = 0; r < k; ++r) {
            ctx.neighbors.push_back(gallery[order[r]]);
            ctx.neighbor_cos.push_back(scores(static_cast<int>(i), order[r]));
        }
        out.push_back(std::move(ctx));
    }
    return out;
}

StageResult train_stage(Stage stage, std::span<const PersonDescriptor> train_raw,
                        ModelParams& params, const TrainConfig& cfg, const StageFlags& done) {
    cfg.validate();
    if (stage == Stage::G && !done.e) throw ContractError("stage G requires a completed stage E");
    if (stage == Stage::T && !(done.e && done.g))
        throw ContractError("stage T requires completed stages E and G");

    IdIndex index(train_raw);

    // only this stage's parameters move
    for (auto& [name, p] : params) p.trainable = false;
    const char* prefix = stage == Stage::E ? "enc." : stage == Stage::G ? "gcn." : "rec.";
    params.set_trainable_prefix(prefix, true);
    if (stage == Stage::E) params.set_trainable_prefix("cls_e.", true);
    if (stage == Stage::G) params.set_trainable_prefix("cls_g.", true);

    // stage-specific inputs; encoder and graph are frozen past their stage,
    // so encoded features and the score matrix are fixed up front
    std::vector<PersonDescriptor> encoded;
    Tensor scores;
    std::vector<int> context_classes;
    if (stage != Stage::E) encoded = encode_all(train_raw, params, cfg.delta);
    if (stage == Stage::T) {
        scores = score_matrix(encoded, encoded, params, cfg.graph);
        for (const auto& d : encoded) context_classes.push_back(index.class_of(d.id));
    }

    double lr = stage == Stage::E ? cfg.lr_e : stage == Stage::G ? cfg.lr_g : cfg.lr_t;
    int epochs = stage == Stage::E ? cfg.epochs_e : stage == Stage::G ? cfg.epochs_g : cfg.epochs_t;

    Rng rng = Rng::stream(cfg.seed, std::string("train.") + stage_name(stage));
    AdamState adam;
    StageResult result;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        // stage T re-draws the neighbor pool every epoch: each query's k
        // nearest come from a fresh subset of the training gallery, so the
        // recovery net cannot memorize one fixed context per sample
        std::vector<RecoveryContext> contexts;
        if (stage == Stage::T) {
            int n = static_cast<int>(encoded.size());
            int pool = std::max(cfg.k_neighbors + 1,
                                static_cast<int>(std::lround(cfg.neighbor_pool * n)));
            std::vector<int> order(n);
            for (int i = 0; i < n; ++i) order[i] = i;
            rng.shuffle(order);
            std::vector<char> allowed(n, 0);
            for (int i = 0; i < pool && i < n; ++i) allowed[order[i]] = 1;
            contexts = build_contexts_masked(encoded, scores, cfg.k_neighbors, allowed);
        }

        auto batches = pk_batches(train_raw, index, cfg.batch, cfg.instances_per_id, rng);
        double epoch_loss = 0.0;
        for (const auto& batch : batches) {
            ad::Tape tape(params);
            ad::Val loss;
            switch (stage) {
                case Stage::E: {
                    std::vector<PersonDescriptor> b;
                    for (int i : batch) b.push_back(train_raw[i]);
                    loss = loss_e_node(tape, b, index, cfg);
                    break;
                }
                case Stage::G: {
                    std::vector<PersonDescriptor> b;
                    for (int i : batch) b.push_back(encoded[i]);
                    loss = loss_g_node(tape, b, index, cfg);
                    break;
                }
                case Stage::T: {
                    std::vector<RecoveryContext> b;
                    std::vector<int> cls;
                    for (int i : batch) {
                        b.push_back(contexts[i]);
                        cls.push_back(context_classes[i]);
                    }
                    loss = loss_t_node(tape, b, cls, cfg);
                    break;
                }
            }
            epoch_loss += tape.scalar(loss);
            auto grads = tape.gradients(loss);
            if (cfg.optimizer == Optimizer::kAdam)
                adam.step(params, grads, lr);
            else
                sgd_step(params, grads, lr);
        }
        result.epoch_losses.push_back(batches.empty() ? 0.0 : epoch_loss / batches.size());
    }

    for (auto& [name, p] : params) p.trainable = true;
    return result;
}

}  // namespace frt
