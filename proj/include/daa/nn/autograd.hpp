#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "daa/nn/tensor.hpp"

namespace daa::nn {

/// While alive on the current thread, ops record no graph.
class NoGradGuard {
public:
    NoGradGuard() : prev_(enabled()) { enabled() = false; }
    ~NoGradGuard() { enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }

private:
    bool prev_;
};

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into inputs[i]->grad.
    std::function<void(Node&)> backward;

    Tensor<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

/// Handle to a node of the computation graph. Copies share the node.
template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var constant(Tensor<T> v) { return Var(std::move(v), false); }
    static Var param(Tensor<T> v) { return Var(std::move(v), true); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor<T>(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.numel(); }
    T item() const { return node_->value.item(); }
    const std::string& op() const { return node_->op; }

    Node<T>& node() const { return *node_; }
    const std::shared_ptr<Node<T>>& ptr() const { return node_; }

    /// Result of an op. Records the backward closure only when some input
    /// participates in differentiation.
    static Var from_op(std::string op, Tensor<T> value, std::vector<Var> inputs,
                       std::function<void(Node<T>&)> backward) {
        Var out(std::move(value), false);
        out.node_->op = std::move(op);
        bool any = false;
        if (NoGradGuard::enabled())
            for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            out.node_->requires_grad = true;
            out.node_->inputs.reserve(inputs.size());
            for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <class T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // iterative post-order DFS; graphs can be deep (100 slices x layers)
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->inputs.size()) {
            Node<T>* child = n->inputs[i++].get();
            if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    return order;  // inputs before consumers
}

}  // namespace detail

/// Reverse-mode sweep from a scalar. Gradients accumulate additively into
/// every reachable node that requires them.
template <class T>
void backward(const Var<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad()) return;
    auto order = detail::topo_order(&loss.node());
    loss.node().grad_buffer().fill(T{1});
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.empty()) {
            for (auto& in : n->inputs)
                if (in->requires_grad) in->grad_buffer();
            n->backward(*n);
        }
    }
}

/// Finds the first node (inputs before consumers) whose value holds NaN/Inf.
/// Returns an empty string when the whole graph is finite.
template <class T>
std::string first_non_finite(const Var<T>& root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{&root.node(), 0}};
    seen.insert(&root.node());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->inputs.size()) {
            Node<T>* child = n->inputs[i++].get();
            if (seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (auto* n : order)
        if (!n->value.all_finite()) return n->op + " " + to_string(n->value.shape());
    return {};
}

}  // namespace daa::nn
