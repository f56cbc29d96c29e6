#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "madf/tensor.hpp"

namespace madf {

// One recorded operation result. The backward closure scatters the
// node's grad into its parents' grads; leaves have no closure.
template <typename T>
struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Node*> parents;
    std::function<void(Node&)> backward;
    std::uint64_t visit = 0;

    void ensure_grad() {
        if (grad.numel() == 0) grad = Tensor4<T>::zeros_like(value);
    }

    void zero_grad() {
        if (grad.numel() != 0) std::fill(grad.data.begin(), grad.data.end(), T(0));
    }
};

template <typename T>
using Var = Node<T>*;

// Define-by-run tape. Nodes are appended in execution order, which is a
// topological order by construction; backward() walks it in reverse,
// restricted to nodes reachable from the loss.
template <typename T>
class Graph {
public:
    Var<T> make(Tensor4<T> value, std::vector<Var<T>> parents, const char* op,
                std::function<void(Node<T>&)> backward_fn) {
        auto node = std::make_unique<Node<T>>();
        node->value = std::move(value);
        node->parents = std::move(parents);
        node->op = op;
        node->backward = std::move(backward_fn);
        for (const Var<T> p : node->parents)
            if (p->requires_grad) node->requires_grad = true;
        nodes_.push_back(std::move(node));
        return nodes_.back().get();
    }

    Var<T> leaf(Tensor4<T> value, bool requires_grad, const char* op = "leaf") {
        auto node = std::make_unique<Node<T>>();
        node->value = std::move(value);
        node->requires_grad = requires_grad;
        node->op = op;
        nodes_.push_back(std::move(node));
        return nodes_.back().get();
    }

    Var<T> constant(Tensor4<T> value, const char* op = "const") {
        return leaf(std::move(value), false, op);
    }

    // Reverse accumulation from a scalar loss. Every requires_grad node
    // reachable from the loss gets its grad populated; everything else
    // is untouched.
    void backward(Var<T> loss) {
        if (loss->value.n != 1 || loss->value.c != 1 || loss->value.h != 1 ||
            loss->value.w != 1)
            throw ConfigError("backward: loss must be a 1x1x1x1 scalar");
        const std::uint64_t epoch = ++epoch_;
        std::vector<Node<T>*> stack{loss};
        loss->visit = epoch;
        while (!stack.empty()) {
            Node<T>* cur = stack.back();
            stack.pop_back();
            for (Node<T>* p : cur->parents) {
                if (p->visit != epoch) {
                    p->visit = epoch;
                    stack.push_back(p);
                }
            }
        }
        loss->ensure_grad();
        loss->grad.data[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>* node = it->get();
            if (node->visit != epoch || !node->backward) continue;
            if (!node->requires_grad) continue;
            node->ensure_grad();
            node->backward(*node);
        }
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<std::unique_ptr<Node<T>>>& nodes() const { return nodes_; }

private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    std::uint64_t epoch_ = 0;
};

// Named trainable parameters. Parameter nodes live outside any Graph so
// they survive tape clears; creation order is the canonical order for
// optimizer state and checkpoints.
template <typename T>
class ParamStore {
public:
    Var<T> add(const std::string& name, Tensor4<T> init) {
        for (const auto& e : entries_)
            if (e.name == name) throw ConfigError("duplicate parameter name: " + name);
        auto node = std::make_unique<Node<T>>();
        node->value = std::move(init);
        node->requires_grad = true;
        node->op = "param";
        entries_.push_back(Entry{name, std::move(node)});
        return entries_.back().node.get();
    }

    struct Entry {
        std::string name;
        std::unique_ptr<Node<T>> node;
    };

    std::size_t size() const { return entries_.size(); }
    const Entry& entry(std::size_t i) const { return entries_[i]; }
    Entry& entry(std::size_t i) { return entries_[i]; }

    Var<T> find(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.node.get();
        return nullptr;
    }

    void zero_grad() {
        for (auto& e : entries_) e.node->zero_grad();
    }

    std::size_t total_elements() const {
        std::size_t total = 0;
        for (const auto& e : entries_) total += e.node->value.numel();
        return total;
    }

private:
    std::vector<Entry> entries_;
};

}  // namespace madf
