#pragma once

// Minimal reverse-mode autodiff: define-by-run tape over shared tensor nodes.
// Scalar type is a template parameter; training uses float, gradient checks
// instantiate double.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocrprep::diffkernel {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <class S>
struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;            // empty until touched by a backward pass
    bool requires_grad = false;     // trainable leaf
    std::string name;               // set for parameters (checkpoint key)
    std::function<void()> backward_fn;  // empty for leaves

    std::size_t numel() const { return value.size(); }
    bool is_scalar() const { return value.size() == 1; }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
    void zero_grad() { grad.assign(value.size(), S(0)); }
};

template <class S>
using Var = std::shared_ptr<Node<S>>;

template <class S>
Var<S> make_leaf(Shape shape, bool requires_grad = false, std::string name = {}) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), S(0));
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    if (requires_grad) n->ensure_grad();
    return n;
}

template <class S>
Var<S> make_leaf(Shape shape, std::vector<S> values, bool requires_grad = false,
                 std::string name = {}) {
    if (shape_numel(shape) != values.size())
        throw std::invalid_argument("make_leaf: " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    if (requires_grad) n->ensure_grad();
    return n;
}

// Records op outputs in creation order; replaying in reverse visits each op once.
template <class S>
class Tape {
public:
    Var<S>& record(Var<S> node) {
        nodes_.push_back(std::move(node));
        return nodes_.back();
    }

    // d(loss)/d(x) for every tensor reachable from loss. Accumulates into the
    // grads of leaves (parameters keep persistent grad buffers).
    void backward(const Var<S>& loss) {
        if (!loss->is_scalar())
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        shape_str(loss->shape));
        for (auto& n : nodes_) n->ensure_grad();
        loss->ensure_grad();
        loss->grad[0] = S(1);
        run_reverse();
    }

    // Backward seeded with an externally supplied gradient at `at` (used to
    // inject estimated gradients into the graph).
    void backward_seeded(const Var<S>& at, const std::vector<S>& seed) {
        if (seed.size() != at->numel())
            throw std::invalid_argument("backward_seeded: seed size " +
                                        std::to_string(seed.size()) + " vs tensor " +
                                        shape_str(at->shape));
        for (auto& n : nodes_) n->ensure_grad();
        at->ensure_grad();
        for (std::size_t i = 0; i < seed.size(); ++i) at->grad[i] += seed[i];
        run_reverse();
    }

    // backward_fn closures capture their own output node, so recorded graphs
    // are reference cycles until the tape severs them.
    ~Tape() { clear(); }
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void clear() {
        for (auto& n : nodes_) n->backward_fn = nullptr;
        nodes_.clear();
    }
    std::size_t size() const { return nodes_.size(); }

private:
    void run_reverse() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn();
    }

    std::vector<Var<S>> nodes_;
};

}  // namespace ocrprep::diffkernel
