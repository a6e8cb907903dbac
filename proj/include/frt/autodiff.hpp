#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "frt/params.hpp"
#include "frt/tensor.hpp"

namespace frt::ad {

/// Handle to a node on a Tape.
struct Val {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over the fixed operator set used by the model: matmul,
/// add, concat, ReLU, softmax, log-softmax, cosine, euclidean, mean/sum,
/// hinge and a few indexing helpers. Values are evaluated eagerly with the
/// kernels from tensor.hpp; gradients come from a single reverse sweep in
/// node-creation order, so results are deterministic.
///
/// A Tape binds to one ModelParams collection. param(name) returns the same
/// node on repeated calls; frozen (non-trainable) parameters participate in
/// the forward pass but receive no gradient.
class Tape {
public:
    explicit Tape(const ModelParams& params) : params_(&params) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Val constant(Tensor t);
    Val scalar_const(double x) { return constant(Tensor(1, 1, {x})); }
    Val param(const std::string& name);

    Val matmul(Val a, Val b);
    Val transpose(Val a);
    Val add(Val a, Val b);
    Val add_rowvec(Val a, Val bias);
    Val sub(Val a, Val b);
    Val scale(Val a, double s);
    Val add_scalar(Val a, double s);
    Val concat_cols(Val a, Val b);
    Val slice_cols(Val a, int c0, int c1);
    Val select_row(Val a, int r);
    Val relu(Val a);
    /// hinge(x) = max(0, x); same kernel as relu, named for loss code.
    Val hinge(Val a) { return relu(a); }
    Val softmax_rows(Val a);
    Val log_softmax_rows(Val a);
    Val cosine(Val a, Val b);
    Val euclidean(Val a, Val b);
    Val sum(Val a);
    Val mean(Val a);
    /// Scalar sum of a list of scalars (empty list gives 0).
    Val sum_list(const std::vector<Val>& xs);
    /// Negative log-likelihood: -sum_j logprobs(j, labels[j]). Scalar.
    Val nll(Val logprobs, std::vector<int> labels);

    const Tensor& value(Val v) const { return nodes_[check(v)].value; }
    double scalar(Val v) const;
    const ModelParams& params() const { return *params_; }

    /// Reverse sweep from a scalar loss. Returns one gradient per trainable
    /// parameter of the bound collection (zeros for parameters the loss does
    /// not touch).
    GradientRecord gradients(Val loss) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        kConstant,
        kParam,
        kMatMul,
        kTranspose,
        kAdd,
        kAddRowVec,
        kSub,
        kScale,
        kAddScalar,
        kConcatCols,
        kSliceCols,
        kSelectRow,
        kRelu,
        kSoftmaxRows,
        kLogSoftmaxRows,
        kCosine,
        kEuclidean,
        kSum,
        kMean,
        kSumList,
        kNll,
    };

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        Tensor value;
        double alpha = 0.0;          // scale factor / scalar addend
        int i0 = 0, i1 = 0;          // slice bounds / row index
        std::vector<int> list;       // inputs of kSumList
        std::vector<int> labels;     // kNll
        std::string param_name;      // kParam
    };

    int check(Val v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw ContractError("invalid tape value");
        return v.id;
    }
    Val push(Node n) {
        nodes_.push_back(std::move(n));
        return Val{static_cast<int>(nodes_.size()) - 1};
    }
    const Tensor& val(int id) const { return nodes_[id].value; }

    const ModelParams* params_;
    std::vector<Node> nodes_;
    std::unordered_map<std::string, int> param_nodes_;
};

/// Builds a scalar loss on a fresh tape bound to `params`.
using LossGraph = std::function<Val(Tape&)>;

/// Forward value of a loss graph under the given parameters.
double evaluate(const LossGraph& graph, const ModelParams& params);

/// Analytic gradients of a loss graph with respect to all trainable params.
GradientRecord gradients(const LossGraph& graph, const ModelParams& params);

/// Central-finite-difference check: perturbs every trainable scalar by +-h,
/// compares (L(t+h)-L(t-h))/2h against the analytic gradient and returns the
/// worst relative error, with denominator max(|g|, 1e-8).
double finite_diff_check(const LossGraph& graph, const ModelParams& params, double h);

}  // namespace frt::ad
