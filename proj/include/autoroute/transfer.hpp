#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "autoroute/bandit.hpp"
#include "autoroute/numgrad/layers.hpp"
#include "autoroute/numgrad/optim.hpp"
#include "autoroute/routing.hpp"

namespace autoroute::transfer {

using numgrad::LayeredNet;
using routing::RoutingAction;

struct Dataset {
    Matrix x;
    Matrix y;
    std::size_t size() const { return x.rows(); }
    Dataset subset(std::span<const std::size_t> idx) const { return {x.gather_rows(idx), y.gather_rows(idx)}; }
};

enum class RunMode { scratch, fixed, route, full };
enum class GainMode { per_layer, global };

std::string to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);
std::string to_string(GainMode m);
GainMode parse_gain_mode(std::string_view s);

struct TransferConfig {
    RunMode mode = RunMode::route;
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    numgrad::SgdConfig optimizer{};
    double beta = 0.4;
    double gamma = 1e-3;
    double reward_scale = 1.0;
    /// When set, s = max |gain| observed so far (including the current one).
    bool auto_reward_scale = false;
    GainMode gain_mode = GainMode::per_layer;
    double fm_weight = routing::kDefaultFmWeight;
    routing::ActionSpaceOptions actions{};
    std::uint64_t seed = 1;
};

/// clamp(gain / s, -1, 1).
double shape_reward(double gain, double scale);

struct LayerDecision {
    std::size_t action_id = 0;
    std::string action_key;
    std::optional<double> gain;
    std::optional<double> reward;
    std::vector<double> probabilities;  // pi used to sample this epoch's action
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::vector<LayerDecision> layers;
    double train_loss = 0.0;
    double holdout_loss = 0.0;
    double test_mse = 0.0;
    double lr = 0.0;
};

/// One transfer training run: per epoch, bandit selection and reward
/// (evaluated with the parameters from before the epoch), then one epoch of
/// joint training of the target and the selected route parameters.
class TransferRun {
public:
    TransferRun(LayeredNet source, LayeredNet target, Dataset train, Dataset holdout, Dataset test,
                TransferConfig config);

    /// Mean over D_v of L(baseline) - L(candidate). Per-layer mode: baseline is
    /// the current actions with layer i NULL, candidate has layer i set to
    /// `action`. Global mode: baseline is the plain target, candidate the
    /// current actions with layer i set to `action`. Evaluation-mode BN.
    double evaluate_gain(std::size_t layer, const RoutingAction& action);

    /// One shuffled pass over D_T with fixed actions. Returns the mean batch loss.
    double train_epoch(const std::vector<RoutingAction>& actions, double lr);

    /// Runs the remaining epochs. `on_epoch` observes each record as soon as
    /// it is complete.
    const std::vector<EpochRecord>& run(const std::function<void(const EpochRecord&)>& on_epoch = {});

    /// Step one epoch; returns its record.
    const EpochRecord& step();

    double mse(const Dataset& data, const std::vector<RoutingAction>& actions);
    Matrix predict(const Matrix& x, const std::vector<RoutingAction>& actions);

    const TransferConfig& config() const { return config_; }
    LayeredNet& source() { return source_; }
    LayeredNet& target() { return target_; }
    const LayeredNet& target() const { return target_; }
    routing::RouteParamStore& store() { return store_; }
    const routing::ActionSpace& action_space() const { return space_; }
    const std::vector<bandit::BanditState>& bandits() const { return bandits_; }
    const std::vector<RoutingAction>& current_actions() const { return current_; }
    void set_current_actions(std::vector<RoutingAction> actions);
    const std::vector<EpochRecord>& history() const { return history_; }
    const Dataset& train_set() const { return train_; }
    const Dataset& holdout_set() const { return holdout_; }
    const Dataset& test_set() const { return test_; }
    std::size_t routed_layers() const { return target_.num_taps(); }
    bool uses_bandits() const { return !bandits_.empty(); }
    std::uint64_t source_checksum_at_start() const { return source_checksum_; }

    /// Versioned binary snapshot: networks, route store, bandits, rng states,
    /// current actions and epoch counter.
    void save_checkpoint(std::ostream& os) const;
    void load_checkpoint(std::istream& is);

private:
    std::vector<numgrad::Parameter*> trainable_params(const std::vector<RoutingAction>& actions);
    Matrix forward_eval(const Matrix& x, const std::vector<RoutingAction>& actions);
    double reward_scale_for(double gain);

    LayeredNet source_;
    LayeredNet target_;
    Dataset train_, holdout_, test_;
    TransferConfig config_;
    routing::RouteParamStore store_;
    routing::ActionSpace space_;
    std::vector<bandit::BanditState> bandits_;
    std::vector<std::mt19937_64> bandit_rngs_;
    std::mt19937_64 shuffle_rng_;
    std::vector<RoutingAction> current_;
    std::vector<EpochRecord> history_;
    double max_abs_gain_ = 0.0;
    std::uint64_t source_checksum_ = 0;
};

}  // namespace autoroute::transfer
