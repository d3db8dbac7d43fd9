#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "autoroute/matrix.hpp"

namespace autoroute::numgrad {

/// A trainable array together with its accumulated gradient and its SGD
/// velocity. The velocity belongs to the parameter so every lazily created
/// route parameter carries its own optimizer state.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name_, Matrix value_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()),
          velocity(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }

    std::string name;
    Matrix value;
    Matrix grad;
    Matrix velocity;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive and has not been cleared.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;
    Tape& tape() const;
    std::size_t index() const { return index_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

/// Wengert list of a single forward pass. Nodes are appended in evaluation
/// order; backward() walks them in reverse, so the topological order comes for
/// free.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// A value that never receives a gradient.
    Var constant(Matrix value);
    /// A leaf whose gradient is accumulated into `p.grad` by backward().
    Var param(Parameter& p);
    /// Same as param() when `trainable`, otherwise a constant copy.
    Var param(Parameter& p, bool trainable) { return trainable ? param(p) : constant(p.value); }

    /// Records an interior node. `fn` is only invoked when some parent
    /// requires a gradient.
    Var record(Matrix value, bool requires_grad, BackwardFn fn);

    /// Reverse sweep from a 1x1 loss. Throws StateError when nothing was
    /// recorded, when the loss is foreign to this tape, or when the sweep
    /// already ran.
    void backward(Var loss);

    void clear();
    bool empty() const { return nodes_.empty(); }
    std::size_t size() const { return nodes_.size(); }

    const Matrix& value(std::size_t i) const { return nodes_[i].value; }
    bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
    /// Gradient buffer of node i; allocated on first access during backward.
    Matrix& grad(std::size_t i);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool swept_ = false;
};

}  // namespace autoroute::numgrad
