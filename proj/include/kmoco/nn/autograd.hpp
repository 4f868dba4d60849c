#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kmoco/nn/tensor.hpp"

namespace kmoco::nn {

/// One value in the computation graph together with its gradient slot.
/// `backward` reads this node's grad and accumulates into its inputs.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    const Shape& shape() const noexcept { return value.shape(); }

    Tensor<T>& grad_ref() {
        if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
        return grad;
    }

    bool has_grad() const noexcept { return grad.size() == value.size() && !grad.empty(); }
    Node& input(std::size_t i) { return *inputs[i]; }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
inline thread_local int no_grad_depth = 0;
}

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

template <class T>
Var<T> constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return n;
}

template <class T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
    auto n = constant(std::move(value));
    n->requires_grad = requires_grad;
    return n;
}

/// Result node. Inputs and the backward closure are only kept when some
/// input needs a gradient and recording is enabled.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> bw) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (!grad_enabled()) return n;
    for (const auto& in : inputs)
        if (in && in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backward = std::move(bw);
    }
    return n;
}

/// Reverse sweep from a scalar root. Gradients accumulate, so callers zero
/// parameter grads between steps.
template <class T>
void backward(const Var<T>& root) {
    require(root->value.size() == 1, ErrorCategory::shape_mismatch, "backward() needs a scalar root");
    if (!root->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child && child->requires_grad && child->backward && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_ref()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward && node->has_grad()) node->backward(*node);
    }
}

/// Named parameter registry owned by a model.
template <class T>
class ParamSet {
public:
    struct Entry {
        std::string name;
        Var<T> var;
        bool trainable = true;
    };

    Var<T> add(const std::string& name, Tensor<T> init, bool trainable = true) {
        for (const auto& e : entries_)
            require(e.name != name, ErrorCategory::invalid_argument, "duplicate parameter name " + name);
        auto v = leaf(std::move(init), trainable);
        entries_.push_back({name, v, trainable});
        return v;
    }

    void zero_grad() {
        for (auto& e : entries_)
            if (e.var->has_grad()) e.var->grad.fill(T(0));
    }

    std::size_t numel() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.var->value.size();
        return n;
    }

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::vector<Entry>& entries() noexcept { return entries_; }

    Var<T> find(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.var;
        return nullptr;
    }

private:
    std::vector<Entry> entries_;
};

} // namespace kmoco::nn
