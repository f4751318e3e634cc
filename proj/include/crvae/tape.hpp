#pragma once

// Reverse-mode differentiation tape.
//
// Every operation appends one node holding its output value, the ids of its
// inputs, and a closure that scatters the output gradient back to the inputs.
// Node creation order is a topological order of the graph, so the backward
// sweep is a single reverse scan over the node array. Gradients accumulate
// additively, which handles values consumed by several downstream ops.
//
// A tape is built per forward pass and discarded (or reset) afterwards; it is
// intentionally not copyable or movable because recorded closures capture a
// pointer to it.

#include <functional>
#include <string>
#include <vector>

#include "crvae/tensor.hpp"

namespace crvae {

template <typename T>
class Tape;

// Lightweight handle to a tape node.
template <typename T>
struct Val {
    Tape<T>* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape; }
    std::int64_t numel() const { return value().numel(); }
};

template <typename T>
class Tape {
public:
    Tape() = default;
    explicit Tape(bool check_finite) : check_finite_(check_finite) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- graph construction -------------------------------------------------

    // Leaf value. requires_grad marks it as a differentiation target; its
    // gradient is available after backward().
    Val<T> leaf(Tensor<T> value, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = requires_grad;
        n.op = "leaf";
        if (check_finite_) n.value.check_finite("leaf");
        nodes_.push_back(std::move(n));
        return Val<T>{this, static_cast<int>(nodes_.size()) - 1};
    }

    // Leaf that never receives a gradient (fixed data, detached values).
    Val<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    Val<T> constant_scalar(T v) { return constant(Tensor<T>::scalar(v)); }

    // Record an op node. The backward closure receives the id of this node so
    // it can read the incoming gradient; it is dropped automatically when no
    // input needs a gradient (pure inference builds no backward machinery).
    Val<T> record(const char* op, Tensor<T> out, const std::vector<Val<T>>& inputs,
                  std::function<void(int)> backward) {
        Node n;
        n.value = std::move(out);
        n.op = op;
        for (const Val<T>& in : inputs) {
            if (in.tape != this) throw std::logic_error(std::string(op) + ": input from another tape");
            n.inputs.push_back(in.id);
            if (nodes_[static_cast<std::size_t>(in.id)].needs_grad) n.needs_grad = true;
        }
        if (n.needs_grad) n.backward = std::move(backward);
        if (check_finite_) n.value.check_finite(op);
        nodes_.push_back(std::move(n));
        return Val<T>{this, static_cast<int>(nodes_.size()) - 1};
    }

    Val<T> record(const char* op, Tensor<T> out, std::initializer_list<Val<T>> inputs,
                  std::function<void(int)> backward) {
        return record(op, std::move(out), std::vector<Val<T>>(inputs), std::move(backward));
    }

    // ---- access -------------------------------------------------------------

    const Tensor<T>& value(Val<T> v) const { return node(v).value; }

    bool needs_grad(Val<T> v) const { return node(v).needs_grad; }

    // Gradient of the last backward() target w.r.t. v. Zero tensor if v was
    // not reached; error if v does not participate in differentiation at all.
    const Tensor<T>& grad(Val<T> v) const {
        const Node& n = node(v);
        if (!n.needs_grad) throw std::logic_error("grad requested for a non-differentiable node");
        if (!backward_done_) throw std::logic_error("grad requested before backward()");
        return n.grad;
    }

    // Mutable gradient buffer, used by op backward closures.
    Tensor<T>& grad_buf(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Tensor<T>& value_at(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad_at(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    std::size_t size() const { return nodes_.size(); }

    // ---- backward -----------------------------------------------------------

    // Single reverse sweep from a scalar loss. Calling it twice without
    // reset() is an error: gradients would silently double-accumulate.
    void backward(Val<T> loss) {
        const Node& ln = node(loss);
        if (ln.value.numel() != 1) {
            throw ShapeError("backward: loss must be scalar, got shape " + shape_str(ln.value.shape));
        }
        if (!ln.needs_grad) {
            throw std::logic_error("backward: loss does not depend on any differentiation target");
        }
        if (backward_done_) {
            throw std::logic_error("backward called twice without reset()");
        }
        backward_done_ = true;

        // Allocate gradient buffers for every differentiable node, then mark
        // the subgraph reachable from the loss and run closures in reverse
        // creation order (= reverse topological order), each exactly once.
        std::vector<char> reachable(nodes_.size(), 0);
        reachable[static_cast<std::size_t>(loss.id)] = 1;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
        }
        Node& lnode = nodes_[static_cast<std::size_t>(loss.id)];
        lnode.grad.data[0] = T(1);

        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!reachable[static_cast<std::size_t>(i)] || !n.needs_grad) continue;
            for (int in : n.inputs) reachable[static_cast<std::size_t>(in)] = 1;
            if (n.backward) n.backward(i);
        }
    }

    // Clears gradients and the backward flag; values and structure remain.
    void reset() {
        for (Node& n : nodes_) {
            if (!n.grad.data.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), T(0));
        }
        backward_done_ = false;
    }

    bool backward_done() const { return backward_done_; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<int> inputs;
        std::function<void(int)> backward;
        const char* op = "";
        bool needs_grad = false;
    };

    const Node& node(Val<T> v) const {
        if (v.tape != this) throw std::logic_error("value handle belongs to another tape");
        return nodes_.at(static_cast<std::size_t>(v.id));
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    bool check_finite_ = false;
};

template <typename T>
inline const Tensor<T>& Val<T>::value() const {
    return tape->value(*this);
}

}  // namespace crvae
