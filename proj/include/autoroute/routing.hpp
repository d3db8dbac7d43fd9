#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "autoroute/numgrad/layers.hpp"
#include "autoroute/numgrad/tape.hpp"

namespace autoroute::routing {

using numgrad::LayeredNet;
using numgrad::Parameter;
using numgrad::Tape;
using numgrad::Var;

/// How a transformed source representation is merged into a target one.
enum class AggOp { iden, sadd, wadd, lincomb, fm, factred };

std::string to_string(AggOp op);
AggOp parse_agg_op(std::string_view name);

/// Where (source tap, 0-based) and how to merge. A missing source is the NULL
/// route; its op is normalized away so there is exactly one NULL action.
class RoutingAction {
public:
    RoutingAction() = default;
    RoutingAction(std::size_t source, AggOp op) : source_(source), op_(op) {}
    static RoutingAction null() { return {}; }

    bool is_null() const { return !source_.has_value(); }
    std::size_t source() const { return source_.value(); }
    AggOp op() const { return op_; }

    /// "NULL" or "<source>:<op>", e.g. "2:wAdd".
    std::string key() const;
    static RoutingAction parse(std::string_view key);

    friend bool operator==(const RoutingAction& a, const RoutingAction& b) {
        return a.source_ == b.source_ && (a.is_null() || a.op_ == b.op_);
    }
    friend bool operator<(const RoutingAction& a, const RoutingAction& b) { return a.key() < b.key(); }

private:
    std::optional<std::size_t> source_;
    AggOp op_ = AggOp::wadd;
};

/// Bias-free dense map followed by 1-D batch normalization. Adapts a source
/// representation's width and statistics to a target layer.
class SourceTransform {
public:
    static constexpr double kDefaultMomentum = 0.1;
    static constexpr double kDefaultEps = 1e-5;

    SourceTransform() = default;
    SourceTransform(std::size_t source_dim, std::size_t target_dim, std::mt19937_64& rng);
    SourceTransform(Matrix dense, Matrix gamma, Matrix beta);

    /// Training mode normalizes with batch statistics and moves the running
    /// estimates toward them (unbiased variance, as is conventional). A batch
    /// of one row has zero variance; eps keeps the output finite and equal to
    /// beta. Evaluation mode uses the running estimates and mutates nothing.
    Var apply(Tape& tape, Var source_rep, bool training, bool trainable = true);

    std::size_t source_dim() const { return dense.value.rows(); }
    std::size_t target_dim() const { return dense.value.cols(); }
    std::vector<Parameter*> parameters() { return {&dense, &bn_gamma, &bn_beta}; }

    Parameter dense;
    Parameter bn_gamma;
    Parameter bn_beta;
    Matrix running_mean;
    Matrix running_var;
    double momentum = kDefaultMomentum;
    double eps = kDefaultEps;
};

/// Trainable state attached to one (target layer, action) pair.
///   wAdd:    op = {w_source, w_target}, 1x1 each, initialized to 0.5
///   LinComb: op = {lin_source, lin_target}, 1x1 gates applied to row means
///   FactRed: op = {reduce_source, reduce_target}, d x d/2 each
///   others:  op empty
struct RouteParams {
    SourceTransform transform;
    std::vector<Parameter> op;

    /// Parameters that receive gradient when `action` is active. Iden's
    /// transform is detached and NULL has none.
    std::vector<Parameter*> trainable(const RoutingAction& action);
};

/// Lazily initialized route parameters. Each entry is seeded from
/// (store seed, layer, action key) so its initial values do not depend on the
/// order in which actions are first selected.
class RouteParamStore {
public:
    explicit RouteParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    RouteParams& get(std::size_t layer, const RoutingAction& action, std::size_t source_dim, std::size_t target_dim);
    bool contains(std::size_t layer, const RoutingAction& action) const;
    std::size_t size() const { return entries_.size(); }
    std::uint64_t seed() const { return seed_; }

    using Key = std::pair<std::size_t, std::string>;
    const std::map<Key, RouteParams>& entries() const { return entries_; }
    std::map<Key, RouteParams>& entries() { return entries_; }

private:
    std::uint64_t seed_;
    std::map<Key, RouteParams> entries_;
};

RouteParams make_route_params(const RoutingAction& action, std::size_t source_dim, std::size_t target_dim,
                              std::mt19937_64& rng);

struct AggregateResult {
    Var output;
    std::optional<Var> extra_loss;  // 1x1, only for FM
};

inline constexpr double kDefaultFmWeight = 0.5;

/// Merges a transformed source representation into a target one.
AggregateResult aggregate(Tape& tape, const RoutingAction& action, Var transformed_source, Var target_rep,
                          RouteParams* params, bool trainable = true, double fm_weight = kDefaultFmWeight);

enum class ActionMode { full, route, fixed };

struct ActionSpaceOptions {
    /// Operators offered per source tap in full mode. FM is opt-in.
    std::vector<AggOp> full_ops{AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::factred};
    /// Operator used by every non-NULL arm in route mode.
    AggOp route_op = AggOp::wadd;
    /// (source tap, target tap) pairs for fixed mode; unlisted layers are NULL.
    std::vector<std::pair<std::size_t, std::size_t>> fixed_pairs{{0, 0}, {1, 1}, {2, 2}};
    AggOp fixed_op = AggOp::wadd;
};

struct ActionSpace {
    /// Per routed target layer. Index 0 is always NULL in full/route mode; in
    /// fixed mode each layer holds its single static action.
    std::vector<std::vector<RoutingAction>> per_layer;
    std::vector<std::string> notes;  // actions excluded at construction
};

/// `target_widths[i]` is the width of routed target layer i.
ActionSpace build_action_space(std::size_t num_source_taps, const std::vector<std::size_t>& target_widths,
                               ActionMode mode, const ActionSpaceOptions& opts = {});

struct RoutedOutput {
    Var output;
    std::optional<Var> extra_loss;
    std::vector<Var> source_taps;
    std::vector<Var> target_taps;  // combined representations
};

/// Forward pass of the target network with every routed tap i replaced by
/// aggregate(actions[i], T(f_S^j), f_T^i). The source runs once on the same
/// tape as constants, so no gradient can reach it. The final output block is
/// never routed.
RoutedOutput routed_forward(Tape& tape, LayeredNet& source, LayeredNet& target,
                            const std::vector<RoutingAction>& actions, RouteParamStore& store, Var x,
                            bool training, double fm_weight = kDefaultFmWeight);

/// Versioned little-endian encoding of every store entry, including
/// batch-norm running statistics and optimizer velocities.
void write_store(std::ostream& os, const RouteParamStore& store);
RouteParamStore read_store(std::istream& is);

}  // namespace autoroute::routing
