#pragma once

#include <map>
#include <string>

#include "frt/errors.hpp"
#include "frt/tensor.hpp"

namespace frt {

/// One named learnable tensor.
struct Param {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

/// Named parameter collection. Kept sorted by name so that iteration order —
/// and with it gradient merging, SGD updates and checkpoint layout — is the
/// same on every run.
class ModelParams {
public:
    Param& add(const std::string& name, Tensor t, bool trainable = true) {
        auto [it, inserted] = by_name_.try_emplace(name, Param{name, std::move(t), trainable});
        if (!inserted) throw ContractError("duplicate parameter name: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return by_name_.count(name) != 0; }

    Param& at(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }
    const Param& at(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }

    Tensor& tensor(const std::string& name) { return at(name).tensor; }
    const Tensor& tensor(const std::string& name) const { return at(name).tensor; }

    std::size_t size() const { return by_name_.size(); }
    auto begin() { return by_name_.begin(); }
    auto end() { return by_name_.end(); }
    auto begin() const { return by_name_.begin(); }
    auto end() const { return by_name_.end(); }

    void set_trainable(const std::string& name, bool trainable) { at(name).trainable = trainable; }

    /// Marks every parameter whose name starts with `prefix`.
    int set_trainable_prefix(const std::string& prefix, bool trainable) {
        int n = 0;
        for (auto& [name, p] : by_name_) {
            if (name.rfind(prefix, 0) == 0) {
                p.trainable = trainable;
                ++n;
            }
        }
        return n;
    }

private:
    std::map<std::string, Param> by_name_;
};

/// Per-parameter gradients, aligned with the trainable entries of a
/// ModelParams collection (absent parameters did not contribute; get_or_zero
/// reports them as exact zeros).
class GradientRecord {
public:
    void accumulate(const std::string& name, const Tensor& g) {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            grads_.emplace(name, g);
        } else {
            it->second = add(it->second, g);
        }
    }

    void ensure_entry(const std::string& name, int rows, int cols) {
        grads_.try_emplace(name, Tensor(rows, cols));
    }

    bool has(const std::string& name) const { return grads_.count(name) != 0; }

    const Tensor& at(const std::string& name) const {
        auto it = grads_.find(name);
        if (it == grads_.end()) throw ContractError("no gradient entry for: " + name);
        return it->second;
    }

    Tensor get_or_zero(const std::string& name, int rows, int cols) const {
        auto it = grads_.find(name);
        return it == grads_.end() ? Tensor(rows, cols) : it->second;
    }

    std::size_t size() const { return grads_.size(); }
    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    std::map<std::string, Tensor> grads_;
};

}  // namespace frt
