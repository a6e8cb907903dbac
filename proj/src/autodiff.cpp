#include "frt/autodiff.hpp"

#include <cmath>

namespace frt::ad {

Val Tape::constant(Tensor t) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(t);
    return push(std::move(n));
}

Val Tape::param(const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Val{it->second};
    const Param& p = params_->at(name);
    Node n;
    n.op = Op::kParam;
    n.value = p.tensor;
    n.param_name = name;
    Val v = push(std::move(n));
    param_nodes_.emplace(name, v.id);
    return v;
}

Val Tape::matmul(Val a, Val b) {
    Node n;
    n.op = Op::kMatMul;
    n.a = check(a);
    n.b = check(b);
    n.value = frt::matmul(val(n.a), val(n.b));
    return push(std::move(n));
}

Val Tape::transpose(Val a) {
    Node n;
    n.op = Op::kTranspose;
    n.a = check(a);
    n.value = frt::transpose(val(n.a));
    return push(std::move(n));
}

Val Tape::add(Val a, Val b) {
    Node n;
    n.op = Op::kAdd;
    n.a = check(a);
    n.b = check(b);
    n.value = frt::add(val(n.a), val(n.b));
    return push(std::move(n));
}

Val Tape::add_rowvec(Val a, Val bias) {
    Node n;
    n.op = Op::kAddRowVec;
    n.a = check(a);
    n.b = check(bias);
    n.value = frt::add_rowvec(val(n.a), val(n.b));
    return push(std::move(n));
}

Val Tape::sub(Val a, Val b) {
    Node n;
    n.op = Op::kSub;
    n.a = check(a);
    n.b = check(b);
    n.value = frt::sub(val(n.a), val(n.b));
    return push(std::move(n));
}

Val Tape::scale(Val a, double s) {
    Node n;
    n.op = Op::kScale;
    n.a = check(a);
    n.alpha = s;
    n.value = frt::scale(val(n.a), s);
    return push(std::move(n));
}

Val Tape::add_scalar(Val a, double s) {
    Node n;
    n.op = Op::kAddScalar;
    n.a = check(a);
    n.alpha = s;
    n.value = frt::add_scalar(val(n.a), s);
    return push(std::move(n));
}

Val Tape::concat_cols(Val a, Val b) {
    Node n;
    n.op = Op::kConcatCols;
    n.a = check(a);
    n.b = check(b);
    n.value = frt::concat_cols(val(n.a), val(n.b));
    return push(std::move(n));
}

Val Tape::slice_cols(Val a, int c0, int c1) {
    Node n;
    n.op = Op::kSliceCols;
    n.a = check(a);
    n.i0 = c0;
    n.i1 = c1;
    n.value = frt::slice_cols(val(n.a), c0, c1);
    return push(std::move(n));
}

Val Tape::select_row(Val a, int r) {
    Node n;
    n.op = Op::kSelectRow;
    n.a = check(a);
    n.i0 = r;
    n.value = frt::select_row(val(n.a), r);
    return push(std::move(n));
}

Val Tape::relu(Val a) {
    Node n;
    n.op = Op::kRelu;
    n.a = check(a);
    n.value = frt::relu(val(n.a));
    return push(std::move(n));
}

Val Tape::softmax_rows(Val a) {
    Node n;
    n.op = Op::kSoftmaxRows;
    n.a = check(a);
    n.value = frt::softmax_rows(val(n.a));
    return push(std::move(n));
}

Val Tape::log_softmax_rows(Val a) {
    Node n;
    n.op = Op::kLogSoftmaxRows;
    n.a = check(a);
    n.value = frt::log_softmax_rows(val(n.a));
    return push(std::move(n));
}

Val Tape::cosine(Val a, Val b) {
    Node n;
    n.op = Op::kCosine;
    n.a = check(a);
    n.b = check(b);
    n.value = Tensor(1, 1, {frt::cosine(val(n.a), val(n.b))});
    return push(std::move(n));
}

Val Tape::euclidean(Val a, Val b) {
    Node n;
    n.op = Op::kEuclidean;
    n.a = check(a);
    n.b = check(b);
    n.value = Tensor(1, 1, {frt::euclidean(val(n.a), val(n.b))});
    return push(std::move(n));
}

Val Tape::sum(Val a) {
    Node n;
    n.op = Op::kSum;
    n.a = check(a);
    n.value = Tensor(1, 1, {frt::sum(val(n.a))});
    return push(std::move(n));
}

Val Tape::mean(Val a) {
    Node n;
    n.op = Op::kMean;
    n.a = check(a);
    n.value = Tensor(1, 1, {frt::mean(val(n.a))});
    return push(std::move(n));
}

Val Tape::sum_list(const std::vector<Val>& xs) {
    Node n;
    n.op = Op::kSumList;
    double s = 0.0;
    for (Val x : xs) {
        int id = check(x);
        if (val(id).numel() != 1) throw ShapeError("sum_list expects scalars");
        n.list.push_back(id);
        s += val(id)[0];
    }
    n.value = Tensor(1, 1, {s});
    return push(std::move(n));
}

Val Tape::nll(Val logprobs, std::vector<int> labels) {
    Node n;
    n.op = Op::kNll;
    n.a = check(logprobs);
    const Tensor& lp = val(n.a);
    if (static_cast<int>(labels.size()) != lp.rows())
        throw ShapeError("nll: one label per row expected");
    double s = 0.0;
    for (int i = 0; i < lp.rows(); ++i) {
        int y = labels[i];
        if (y < 0 || y >= lp.cols()) throw ContractError("label out of range");
        s -= lp(i, y);
    }
    n.labels = std::move(labels);
    n.value = Tensor(1, 1, {s});
    return push(std::move(n));
}

double Tape::scalar(Val v) const {
    const Tensor& t = value(v);
    if (t.numel() != 1) throw ShapeError("scalar() on non-scalar value");
    return t[0];
}

GradientRecord Tape::gradients(Val loss) const {
    int loss_id = check(loss);
    if (val(loss_id).numel() != 1) throw ContractError("loss must be a scalar");

    std::vector<Tensor> adj(nodes_.size());
    auto bump = [&](int id, auto&& fn) {
        if (adj[id].empty()) adj[id] = Tensor(val(id).rows(), val(id).cols());
        fn(adj[id]);
    };
    adj[loss_id] = Tensor(1, 1, {1.0});

    for (int id = loss_id; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (adj[id].empty()) continue;
        const Tensor& g = adj[id];
        switch (n.op) {
            case Op::kConstant:
            case Op::kParam:
                break;
            case Op::kMatMul: {
                const Tensor& a = val(n.a);
                const Tensor& b = val(n.b);
                bump(n.a, [&](Tensor& d) { d = frt::add(d, frt::matmul(g, frt::transpose(b))); });
                bump(n.b, [&](Tensor& d) { d = frt::add(d, frt::matmul(frt::transpose(a), g)); });
                break;
            }
            case Op::kTranspose:
                bump(n.a, [&](Tensor& d) { d = frt::add(d, frt::transpose(g)); });
                break;
            case Op::kAdd:
                bump(n.a, [&](Tensor& d) { d = frt::add(d, g); });
                bump(n.b, [&](Tensor& d) { d = frt::add(d, g); });
                break;
            case Op::kAddRowVec: {
                bump(n.a, [&](Tensor& d) { d = frt::add(d, g); });
                bump(n.b, [&](Tensor& d) {
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) d(0, j) += g(i, j);
                });
                break;
            }
            case Op::kSub:
                bump(n.a, [&](Tensor& d) { d = frt::add(d, g); });
                bump(n.b, [&](Tensor& d) { d = frt::sub(d, g); });
                break;
            case Op::kScale:
                bump(n.a, [&](Tensor& d) { d = frt::add(d, frt::scale(g, n.alpha)); });
                break;
            case Op::kAddScalar:
                bump(n.a, [&](Tensor& d) { d = frt::add(d, g); });
                break;
            case Op::kConcatCols: {
                int ca = val(n.a).cols();
                bump(n.a, [&](Tensor& d) { d = frt::add(d, frt::slice_cols(g, 0, ca)); });
                bump(n.b, [&](Tensor& d) { d = frt::add(d, frt::slice_cols(g, ca, g.cols())); });
                break;
            }
            case Op::kSliceCols:
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) d(i, n.i0 + j) += g(i, j);
                });
                break;
            case Op::kSelectRow:
                bump(n.a, [&](Tensor& d) {
                    for (int j = 0; j < g.cols(); ++j) d(n.i0, j) += g(0, j);
                });
                break;
            case Op::kRelu: {
                const Tensor& a = val(n.a);
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < a.numel(); ++i)
                        if (a[i] > 0.0) d[i] += g[i];
                });
                break;
            }
            case Op::kSoftmaxRows: {
                const Tensor& y = n.value;
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < y.rows(); ++i) {
                        double gy = 0.0;
                        for (int j = 0; j < y.cols(); ++j) gy += g(i, j) * y(i, j);
                        for (int j = 0; j < y.cols(); ++j)
                            d(i, j) += y(i, j) * (g(i, j) - gy);
                    }
                });
                break;
            }
            case Op::kLogSoftmaxRows: {
                const Tensor& a = val(n.a);
                Tensor y = frt::softmax_rows(a);
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < y.rows(); ++i) {
                        double gs = 0.0;
                        for (int j = 0; j < y.cols(); ++j) gs += g(i, j);
                        for (int j = 0; j < y.cols(); ++j)
                            d(i, j) += g(i, j) - y(i, j) * gs;
                    }
                });
                break;
            }
            case Op::kCosine: {
                const Tensor& a = val(n.a);
                const Tensor& b = val(n.b);
                double na = std::sqrt(frt::dot(a, a));
                double nb = std::sqrt(frt::dot(b, b));
                if (na < 1e-12 || nb < 1e-12) break;  // value pinned to 0
                double ab = frt::dot(a, b);
                double gs = g[0];
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < a.numel(); ++i)
                        d[i] += gs * (b[i] / (na * nb) - ab * a[i] / (na * na * na * nb));
                });
                bump(n.b, [&](Tensor& d) {
                    for (int i = 0; i < b.numel(); ++i)
                        d[i] += gs * (a[i] / (na * nb) - ab * b[i] / (na * nb * nb * nb));
                });
                break;
            }
            case Op::kEuclidean: {
                const Tensor& a = val(n.a);
                const Tensor& b = val(n.b);
                double dist = n.value[0];
                if (dist < 1e-12) break;  // subgradient 0 at coincident points
                double gs = g[0];
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < a.numel(); ++i) d[i] += gs * (a[i] - b[i]) / dist;
                });
                bump(n.b, [&](Tensor& d) {
                    for (int i = 0; i < b.numel(); ++i) d[i] -= gs * (a[i] - b[i]) / dist;
                });
                break;
            }
            case Op::kSum:
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < d.numel(); ++i) d[i] += g[0];
                });
                break;
            case Op::kMean: {
                double inv = 1.0 / val(n.a).numel();
                bump(n.a, [&](Tensor& d) {
                    for (int i = 0; i < d.numel(); ++i) d[i] += g[0] * inv;
                });
                break;
            }
            case Op::kSumList:
                for (int src : n.list)
                    bump(src, [&](Tensor& d) { d[0] += g[0]; });
                break;
            case Op::kNll:
                bump(n.a, [&](Tensor& d) {
                    for (std::size_t i = 0; i < n.labels.size(); ++i)
                        d(static_cast<int>(i), n.labels[i]) -= g[0];
                });
                break;
            default:
                throw ContractError("unsupported operator in gradient sweep");
        }
    }

    GradientRecord rec;
    for (const auto& [name, p] : *params_) {
        if (!p.trainable) continue;
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end() && !adj[it->second].empty()) {
            rec.accumulate(name, adj[it->second]);
        } else {
            rec.ensure_entry(name, p.tensor.rows(), p.tensor.cols());
        }
    }
    return rec;
}

double evaluate(const LossGraph& graph, const ModelParams& params) {
    Tape tape(params);
    return tape.scalar(graph(tape));
}

GradientRecord gradients(const LossGraph& graph, const ModelParams& params) {
    Tape tape(params);
    Val loss = graph(tape);
    return tape.gradients(loss);
}

double finite_diff_check(const LossGraph& graph, const ModelParams& params, double h) {
    if (!(h > 0.0)) throw ContractError("finite_diff_check requires h > 0");
    GradientRecord analytic = gradients(graph, params);

    ModelParams work = params;
    double worst = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.trainable) continue;
        const Tensor& g = analytic.at(name);
        Tensor& t = work.tensor(name);
        for (int i = 0; i < t.numel(); ++i) {
            double orig = t[i];
            t[i] = orig + h;
            double lp = evaluate(graph, work);
            t[i] = orig - h;
            double lm = evaluate(graph, work);
            t[i] = orig;
            double fd = (lp - lm) / (2.0 * h);
            double denom = std::max(std::abs(g[i]), 1e-8);
            double err = std::abs(fd - g[i]) / denom;
            if (err > worst) worst = err;
        }
    }
    return worst;
}

}  // namespace frt::ad
