#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>
#include <vector>

#include "daa/nn/autograd.hpp"
#include "daa/nn/random.hpp"

namespace daa::nn {

template <class T>
struct Parameter {
    std::string name;
    Var<T> var;
};

/// Ordered, uniquely named collection of trainable tensors.
template <class T>
class ParameterSet {
public:
    void add(std::string name, Var<T> v) {
        if (!names_.insert(name).second) throw ContractError("duplicate parameter name '" + name + "'");
        if (!v.requires_grad()) throw ContractError("parameter '" + name + "' does not require grad");
        items_.push_back({std::move(name), std::move(v)});
    }
    void extend(const ParameterSet& other) {
        for (const auto& p : other.items_) add(p.name, p.var);
    }
    const std::vector<Parameter<T>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : items_) n += p.var.numel();
        return n;
    }
    void zero_grad() {
        for (auto& p : items_) p.var.zero_grad();
    }

private:
    std::vector<Parameter<T>> items_;
    std::unordered_set<std::string> names_;
};

/// Fan-in scaled Gaussian, std = sqrt(2 / fan_in).
template <class T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
};

template <class T>
struct AdamState {
    AdamHyper hyper;
    std::vector<Tensor<T>> m, v;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(const ParameterSet<T>& params, AdamHyper h) : hyper(h) {
        for (const auto& p : params.items()) {
            m.emplace_back(p.var.shape());
            v.emplace_back(p.var.shape());
        }
    }
};

/// One Adam update with bias correction. Weight decay enters as an L2 term on
/// the gradient. Gradients are cleared afterwards.
template <class T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr) {
    if (state.m.size() != params.size())
        throw ContractError("Adam state tracks " + std::to_string(state.m.size()) + " tensors but " +
                            std::to_string(params.size()) + " parameters were given");
    for (const auto& p : params.items())
        if (!p.var.has_grad()) throw ContractError("parameter '" + p.name + "' has no gradient");
    ++state.step;
    const auto& h = state.hyper;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var<T> var = params.items()[i].var;
        auto w = var.mutable_value().data();
        auto g = var.grad().data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double grad = static_cast<double>(g[j]) + h.weight_decay * static_cast<double>(w[j]);
            const double mj = h.beta1 * static_cast<double>(m[j]) + (1.0 - h.beta1) * grad;
            const double vj = h.beta2 * static_cast<double>(v[j]) + (1.0 - h.beta2) * grad * grad;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + h.eps);
            w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
        }
    }
    params.zero_grad();
}

/// base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs))
inline double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base_lr) {
    if (total_epochs == 0 || epoch >= total_epochs)
        throw RangeError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                         std::to_string(total_epochs) + ")");
    return base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

}  // namespace daa::nn
