#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "autoroute/numgrad/tape.hpp"

namespace autoroute::numgrad {

enum class Activation { none, tanh };

/// Affine map followed by an optional activation.
class DenseBlock {
public:
    /// Weights and bias uniform in +-1/sqrt(in_dim).
    DenseBlock(std::size_t in_dim, std::size_t out_dim, Activation act, bool with_bias, std::mt19937_64& rng);
    DenseBlock(Matrix weight, std::optional<Matrix> bias, Activation act);

    std::size_t in_dim() const { return weight_.value.rows(); }
    std::size_t out_dim() const { return weight_.value.cols(); }
    Activation activation() const { return act_; }
    bool has_bias() const { return bias_.has_value(); }

    Parameter& weight() { return weight_; }
    const Parameter& weight() const { return weight_; }
    Parameter* bias() { return bias_ ? &*bias_ : nullptr; }
    const Parameter* bias() const { return bias_ ? &*bias_ : nullptr; }

    Var forward(Tape& tape, Var x, bool trainable);

private:
    Parameter weight_;
    std::optional<Parameter> bias_;
    Activation act_;
};

struct ForwardResult {
    Var output;
    std::vector<Var> taps;
};

/// Sequence of dense blocks exposing selected block outputs as taps.
class LayeredNet {
public:
    /// Called at every tap with (tap position, representation); the returned
    /// value replaces the representation for all downstream blocks.
    using TapHook = std::function<Var(std::size_t, Var)>;

    LayeredNet() = default;
    LayeredNet(std::vector<DenseBlock> blocks, std::vector<std::size_t> tap_indices, bool trainable = true);

    /// dims = {in, h1, ..., out}. tanh after every block except the last
    /// (configurable), taps on every hidden block output.
    static LayeredNet mlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng,
                          Activation hidden = Activation::tanh);

    /// Taps are reported as seen downstream, i.e. after the hook replaced them.
    ForwardResult forward(Tape& tape, Var x, const TapHook& hook = {});
    Matrix predict(const Matrix& x);

    std::size_t in_dim() const { return blocks_.front().in_dim(); }
    std::size_t out_dim() const { return blocks_.back().out_dim(); }
    std::size_t num_taps() const { return tap_indices_.size(); }
    std::size_t tap_width(std::size_t tap) const { return blocks_.at(tap_indices_.at(tap)).out_dim(); }
    const std::vector<std::size_t>& tap_indices() const { return tap_indices_; }

    bool trainable() const { return trainable_; }
    void freeze() { trainable_ = false; }

    std::vector<DenseBlock>& blocks() { return blocks_; }
    const std::vector<DenseBlock>& blocks() const { return blocks_; }
    std::vector<Parameter*> parameters();
    /// FNV-1a over the raw bytes of every parameter value.
    std::uint64_t checksum() const;

private:
    std::vector<DenseBlock> blocks_;
    std::vector<std::size_t> tap_indices_;
    bool trainable_ = true;
};

/// Versioned little-endian encoding of blocks, taps, frozen flag, parameter
/// values and optimizer velocities.
void write_net(std::ostream& os, const LayeredNet& net);
LayeredNet read_net(std::istream& is);

}  // namespace autoroute::numgrad
