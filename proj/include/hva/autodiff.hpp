#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hva/tensor.hpp"

namespace hva {

// Reverse-mode tape. Every op creates a Node holding its value and a closure
// that scatters the node's gradient into its parents. Nodes are ordered by a
// global creation counter, so a reverse sweep over reachable ids is a valid
// topological order.

template <typename Real>
struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node<Real>>> parents;
    std::function<void(Node<Real>&)> backward_fn;

    Tensor<Real>& ensure_grad() {
        if (grad.empty()) grad = Tensor<Real>::zeros(value.shape());
        return grad;
    }
};

template <typename Real>
using Var = std::shared_ptr<Node<Real>>;

inline std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename Real>
Var<Real> make_var(Tensor<Real> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = next_node_id();
    return n;
}

template <typename Real>
Var<Real> make_constant(Tensor<Real> value) {
    return make_var(std::move(value), false);
}

template <typename Real>
bool any_requires_grad(const std::vector<Var<Real>>& vars) {
    for (const auto& v : vars)
        if (v && v->requires_grad) return true;
    return false;
}

// Finalizes a freshly computed op output: wires parents and the backward
// closure only when some parent actually needs gradients.
template <typename Real>
Var<Real> attach(Tensor<Real> value, std::vector<Var<Real>> parents,
                 std::function<void(Node<Real>&)> backward_fn) {
    auto out = make_var(std::move(value), any_requires_grad(parents));
    if (out->requires_grad) {
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return out;
}

// Accumulates d(root)/d(node) into node->grad for every reachable node with
// requires_grad. The root must hold exactly one element.
template <typename Real>
void backward(const Var<Real>& root) {
    if (root->value.numel() != 1)
        fail_shape("backward: root must be scalar, got ", shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    std::vector<Node<Real>*> order;
    std::unordered_set<Node<Real>*> seen;
    std::vector<Node<Real>*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node<Real>* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const Node<Real>* a, const Node<Real>* b) { return a->id > b->id; });

    root->ensure_grad()[0] = Real(1);
    for (Node<Real>* n : order) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// Named trainable parameters in fixed creation order. The order (and the
// names) are a pure function of the model configuration, which is what makes
// checkpoints reconstructible and bit-reproducible.
template <typename Real>
class ParamStore {
public:
    Var<Real> add(const std::string& name, Tensor<Real> init) {
        if (index_.count(name)) fail_shape("ParamStore: duplicate parameter name ", name);
        auto v = make_var(std::move(init), true);
        index_[name] = items_.size();
        items_.emplace_back(name, v);
        return v;
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const Var<Real>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) fail_shape("ParamStore: unknown parameter ", name);
        return items_[it->second].second;
    }

    const std::vector<std::pair<std::string, Var<Real>>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const auto& [name, v] : items_) n += v->value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, v] : items_)
            if (!v->grad.empty()) v->grad.fill(Real(0));
    }

private:
    std::vector<std::pair<std::string, Var<Real>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace hva
