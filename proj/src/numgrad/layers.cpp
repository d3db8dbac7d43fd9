#include "autoroute/numgrad/layers.hpp"

#include <cmath>

#include "autoroute/binary_io.hpp"
#include "autoroute/hash.hpp"
#include "autoroute/numgrad/ops.hpp"

namespace autoroute::numgrad {
namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

}  // namespace

DenseBlock::DenseBlock(std::size_t in_dim, std::size_t out_dim, Activation act, bool with_bias,
                       std::mt19937_64& rng)
    : act_(act) {
    if (in_dim == 0 || out_dim == 0) throw ConfigError("DenseBlock dimensions must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    weight_ = Parameter("weight", uniform_matrix(in_dim, out_dim, bound, rng));
    if (with_bias) bias_ = Parameter("bias", uniform_matrix(1, out_dim, bound, rng));
}

DenseBlock::DenseBlock(Matrix weight, std::optional<Matrix> bias, Activation act) : act_(act) {
    if (bias && (bias->rows() != 1 || bias->cols() != weight.cols()))
        throw ShapeError("DenseBlock bias " + bias->shape_str() + " does not fit weight " + weight.shape_str());
    weight_ = Parameter("weight", std::move(weight));
    if (bias) bias_ = Parameter("bias", std::move(*bias));
}

Var DenseBlock::forward(Tape& tape, Var x, bool trainable) {
    Var h = matmul(x, tape.param(weight_, trainable));
    if (bias_) h = add_bias(h, tape.param(*bias_, trainable));
    if (act_ == Activation::tanh) h = numgrad::tanh(h);
    return h;
}

LayeredNet::LayeredNet(std::vector<DenseBlock> blocks, std::vector<std::size_t> tap_indices, bool trainable)
    : blocks_(std::move(blocks)), tap_indices_(std::move(tap_indices)), trainable_(trainable) {
    if (blocks_.empty()) throw ConfigError("LayeredNet needs at least one block");
    for (std::size_t b = 1; b < blocks_.size(); ++b)
        if (blocks_[b - 1].out_dim() != blocks_[b].in_dim())
            throw ShapeError("LayeredNet: block " + std::to_string(b) + " expects width " +
                             std::to_string(blocks_[b].in_dim()) + " but block " + std::to_string(b - 1) +
                             " produces " + std::to_string(blocks_[b - 1].out_dim()));
    for (std::size_t k = 0; k < tap_indices_.size(); ++k) {
        if (tap_indices_[k] >= blocks_.size()) throw ConfigError("LayeredNet: tap index out of range");
        if (k > 0 && tap_indices_[k] <= tap_indices_[k - 1])
            throw ConfigError("LayeredNet: tap indices must be strictly increasing");
    }
}

LayeredNet LayeredNet::mlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng, Activation hidden) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least input and output widths");
    std::vector<DenseBlock> blocks;
    std::vector<std::size_t> taps;
    for (std::size_t b = 0; b + 1 < dims.size(); ++b) {
        const bool last = b + 2 == dims.size();
        blocks.emplace_back(dims[b], dims[b + 1], last ? Activation::none : hidden, true, rng);
        if (!last) taps.push_back(b);
    }
    return LayeredNet(std::move(blocks), std::move(taps));
}

ForwardResult LayeredNet::forward(Tape& tape, Var x, const TapHook& hook) {
    if (x.cols() != blocks_.front().in_dim())
        throw ShapeError("block 0: input width " + std::to_string(x.cols()) + " but block expects " +
                         std::to_string(blocks_.front().in_dim()));
    ForwardResult res;
    res.taps.reserve(tap_indices_.size());
    Var h = x;
    std::size_t next_tap = 0;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        if (h.cols() != blocks_[b].in_dim())
            throw ShapeError("block " + std::to_string(b) + ": input width " + std::to_string(h.cols()) +
                             " but block expects " + std::to_string(blocks_[b].in_dim()));
        h = blocks_[b].forward(tape, h, trainable_);
        if (next_tap < tap_indices_.size() && tap_indices_[next_tap] == b) {
            if (hook) {
                h = hook(next_tap, h);
                if (h.cols() != blocks_[b].out_dim())
                    throw ShapeError("block " + std::to_string(b) + ": tap replacement changed width");
            }
            res.taps.push_back(h);
            ++next_tap;
        }
    }
    res.output = h;
    return res;
}

Matrix LayeredNet::predict(const Matrix& x) {
    Tape tape;
    return forward(tape, tape.constant(x)).output.value();
}

std::vector<Parameter*> LayeredNet::parameters() {
    std::vector<Parameter*> ps;
    for (auto& b : blocks_) {
        ps.push_back(&b.weight());
        if (b.bias()) ps.push_back(b.bias());
    }
    return ps;
}

std::uint64_t LayeredNet::checksum() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& b : blocks_) {
        h = fnv1a(b.weight().value, h);
        if (b.bias()) h = fnv1a(b.bias()->value, h);
    }
    return h;
}

void write_net(std::ostream& os, const LayeredNet& net) {
    binio::write_header(os, "ARNET", 1);
    binio::write_u64(os, net.trainable() ? 1 : 0);
    binio::write_u64(os, net.blocks().size());
    for (const auto& b : net.blocks()) {
        binio::write_u64(os, b.activation() == Activation::tanh ? 1 : 0);
        binio::write_u64(os, b.has_bias() ? 1 : 0);
        binio::write_matrix(os, b.weight().value);
        binio::write_matrix(os, b.weight().velocity);
        if (b.bias()) {
            binio::write_matrix(os, b.bias()->value);
            binio::write_matrix(os, b.bias()->velocity);
        }
    }
    binio::write_u64(os, net.tap_indices().size());
    for (auto t : net.tap_indices()) binio::write_u64(os, t);
}

LayeredNet read_net(std::istream& is) {
    binio::read_header(is, "ARNET", 1);
    const bool trainable = binio::read_u64(is) != 0;
    const auto nblocks = binio::read_u64(is);
    if (nblocks == 0 || nblocks > 4096) throw binio::FormatError("block count out of range");
    std::vector<DenseBlock> blocks;
    std::vector<std::pair<Matrix, std::optional<Matrix>>> velocities;
    for (std::uint64_t k = 0; k < nblocks; ++k) {
        const auto act = binio::read_u64(is) ? Activation::tanh : Activation::none;
        const bool has_bias = binio::read_u64(is) != 0;
        Matrix w = binio::read_matrix(is);
        Matrix wv = binio::read_matrix(is);
        std::optional<Matrix> bias, bv;
        if (has_bias) {
            bias = binio::read_matrix(is);
            bv = binio::read_matrix(is);
        }
        blocks.emplace_back(std::move(w), std::move(bias), act);
        if (!wv.same_shape(blocks.back().weight().value)) throw binio::FormatError("velocity shape mismatch");
        blocks.back().weight().velocity = std::move(wv);
        if (has_bias) {
            if (!bv->same_shape(blocks.back().bias()->value)) throw binio::FormatError("velocity shape mismatch");
            blocks.back().bias()->velocity = std::move(*bv);
        }
    }
    const auto ntaps = binio::read_u64(is);
    if (ntaps > nblocks) throw binio::FormatError("tap count out of range");
    std::vector<std::size_t> taps(ntaps);
    for (auto& t : taps) t = binio::read_u64(is);
    return LayeredNet(std::move(blocks), std::move(taps), trainable);
}

}  // namespace autoroute::numgrad
