#include "autoroute/numgrad/tape.hpp"

namespace autoroute::numgrad {

const Matrix& Var::value() const {
    if (!tape_) throw StateError("Var is not bound to a tape");
    return tape_->value(index_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(index_); }

Tape& Var::tape() const {
    if (!tape_) throw StateError("Var is not bound to a tape");
    return *tape_;
}

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, true, &p, {}});
    return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
    if (!value.all_finite()) throw NumericError("non-finite value produced on tape");
    nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr,
                          requires_grad ? std::move(fn) : BackwardFn{}});
    return {this, nodes_.size() - 1};
}

Matrix& Tape::grad(std::size_t i) {
    Node& n = nodes_[i];
    if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw StateError("backward called with no recorded forward pass");
    if (!loss.valid() || &loss.tape() != this || loss.index() >= nodes_.size())
        throw StateError("backward called with a loss that is not on this tape");
    if (swept_) throw StateError("backward already ran on this tape; clear() and record again");
    const Matrix& lv = nodes_[loss.index()].value;
    if (lv.rows() != 1 || lv.cols() != 1)
        throw ShapeError("backward requires a scalar loss, got " + lv.shape_str());
    swept_ = true;
    if (!nodes_[loss.index()].requires_grad) return;

    grad(loss.index())(0, 0) = 1.0;
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.param) {
            auto dst = n.param->grad.values();
            auto src = n.grad.values();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
}

void Tape::clear() {
    nodes_.clear();
    swept_ = false;
}

}  // namespace autoroute::numgrad
