#include "autoroute/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "autoroute/binary_io.hpp"
#include "autoroute/hash.hpp"
#include "autoroute/numgrad/ops.hpp"

namespace autoroute::transfer {

namespace ng = numgrad;

std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::scratch: return "scratch";
        case RunMode::fixed: return "fixed";
        case RunMode::route: return "route";
        case RunMode::full: return "full";
    }
    return "?";
}

RunMode parse_run_mode(std::string_view s) {
    if (s == "scratch") return RunMode::scratch;
    if (s == "fixed") return RunMode::fixed;
    if (s == "route") return RunMode::route;
    if (s == "full") return RunMode::full;
    throw ConfigError("unknown mode '" + std::string(s) + "' (expected scratch|fixed|route|full)");
}

std::string to_string(GainMode m) { return m == GainMode::global ? "global" : "per_layer"; }

GainMode parse_gain_mode(std::string_view s) {
    if (s == "per_layer" || s == "per-layer") return GainMode::per_layer;
    if (s == "global") return GainMode::global;
    throw ConfigError("unknown gain mode '" + std::string(s) + "' (expected per_layer|global)");
}

double shape_reward(double gain, double scale) {
    if (!(scale > 0.0)) throw ConfigError("reward scale must be positive");
    return std::clamp(gain / scale, -1.0, 1.0);
}

TransferRun::TransferRun(LayeredNet source, LayeredNet target, Dataset train, Dataset holdout, Dataset test,
                         TransferConfig config)
    : source_(std::move(source)), target_(std::move(target)), train_(std::move(train)),
      holdout_(std::move(holdout)), test_(std::move(test)), config_(std::move(config)),
      store_(derive_seed(config_.seed, "route-params")),
      shuffle_rng_(derive_seed(config_.seed, "shuffle")) {
    if (holdout_.size() == 0) throw ConfigError("holdout set D_v must not be empty");
    if (train_.size() == 0) throw ConfigError("training set D_T must not be empty");
    if (config_.batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(config_.reward_scale > 0.0)) throw ConfigError("reward scale must be positive");
    for (const Dataset* d : {&train_, &holdout_, &test_})
        if (d->x.rows() != d->y.rows()) throw ShapeError("dataset inputs and labels differ in length");
    if (target_.in_dim() != train_.x.cols() || source_.in_dim() != train_.x.cols())
        throw ShapeError("networks expect input width " + std::to_string(target_.in_dim()) + " (target) and " +
                         std::to_string(source_.in_dim()) + " (source), data has " +
                         std::to_string(train_.x.cols()));
    if (target_.out_dim() != train_.y.cols())
        throw ShapeError("target output width " + std::to_string(target_.out_dim()) + " does not match labels " +
                         std::to_string(train_.y.cols()));
    source_.freeze();
    source_checksum_ = source_.checksum();

    std::vector<std::size_t> widths;
    for (std::size_t i = 0; i < target_.num_taps(); ++i) widths.push_back(target_.tap_width(i));

    switch (config_.mode) {
        case RunMode::scratch:
            space_.per_layer.assign(widths.size(), {RoutingAction::null()});
            break;
        case RunMode::fixed:
            space_ = routing::build_action_space(source_.num_taps(), widths, routing::ActionMode::fixed,
                                                 config_.actions);
            break;
        case RunMode::route:
        case RunMode::full: {
            const auto am = config_.mode == RunMode::route ? routing::ActionMode::route : routing::ActionMode::full;
            space_ = routing::build_action_space(source_.num_taps(), widths, am, config_.actions);
            for (std::size_t i = 0; i < widths.size(); ++i) {
                bandits_.emplace_back(space_.per_layer[i].size(), config_.beta, config_.gamma);
                bandit_rngs_.emplace_back(derive_seed(config_.seed, "bandit", i));
            }
            break;
        }
    }
    for (const auto& acts : space_.per_layer) current_.push_back(acts.front());
}

void TransferRun::set_current_actions(std::vector<RoutingAction> actions) {
    if (actions.size() != routed_layers()) throw ConfigError("one action per routed layer required");
    current_ = std::move(actions);
}

Matrix TransferRun::forward_eval(const Matrix& x, const std::vector<RoutingAction>& actions) {
    ng::Tape tape;
    ng::Var xv = tape.constant(x);
    if (std::all_of(actions.begin(), actions.end(), [](const auto& a) { return a.is_null(); }))
        return target_.forward(tape, xv).output.value();
    return routing::routed_forward(tape, source_, target_, actions, store_, xv, false, config_.fm_weight)
        .output.value();
}

Matrix TransferRun::predict(const Matrix& x, const std::vector<RoutingAction>& actions) {
    return forward_eval(x, actions);
}

namespace {

std::vector<double> per_sample_loss(const Matrix& pred, const Matrix& y) {
    std::vector<double> out(pred.rows());
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < pred.cols(); ++c) s += (pred(r, c) - y(r, c)) * (pred(r, c) - y(r, c));
        out[r] = s / static_cast<double>(pred.cols());
    }
    return out;
}

}  // namespace

double TransferRun::mse(const Dataset& data, const std::vector<RoutingAction>& actions) {
    if (data.size() == 0) return 0.0;
    const auto losses = per_sample_loss(forward_eval(data.x, actions), data.y);
    return pairwise_sum(losses) / static_cast<double>(losses.size());
}

double TransferRun::evaluate_gain(std::size_t layer, const RoutingAction& action) {
    if (layer >= routed_layers()) throw ConfigError("evaluate_gain: layer index out of range");
    std::vector<RoutingAction> candidate = current_;
    candidate[layer] = action;
    std::vector<RoutingAction> baseline;
    if (config_.gain_mode == GainMode::per_layer) {
        baseline = current_;
        baseline[layer] = RoutingAction::null();
    } else {
        baseline.assign(routed_layers(), RoutingAction::null());
    }
    const auto lb = per_sample_loss(forward_eval(holdout_.x, baseline), holdout_.y);
    const auto lr = per_sample_loss(forward_eval(holdout_.x, candidate), holdout_.y);
    std::vector<double> diff(lb.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = lb[k] - lr[k];
    return pairwise_sum(diff) / static_cast<double>(diff.size());
}

std::vector<ng::Parameter*> TransferRun::trainable_params(const std::vector<RoutingAction>& actions) {
    std::vector<ng::Parameter*> ps = target_.parameters();
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const RoutingAction& a = actions[i];
        if (a.is_null()) continue;
        if (a.source() >= source_.num_taps())
            throw ConfigError("route (" + std::to_string(i) + ", " + std::to_string(a.source()) +
                              "): source layer does not exist");
        auto& rp = store_.get(i, a, source_.tap_width(a.source()), target_.tap_width(i));
        for (auto* p : rp.trainable(a)) ps.push_back(p);
    }
    return ps;
}

double TransferRun::train_epoch(const std::vector<RoutingAction>& actions, double lr) {
    if (actions.size() != routed_layers()) throw ConfigError("train_epoch: one action per routed layer required");
    const std::size_t n = train_.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng_);

    const bool plain = config_.mode == RunMode::scratch;
    auto params = trainable_params(actions);
    const std::size_t bs = std::min(config_.batch_size, n);
    std::vector<double> batch_losses;
    for (std::size_t start = 0, b = 0; start < n; start += bs, ++b) {
        const std::size_t stop = std::min(start + bs, n);
        std::span<const std::size_t> idx(order.data() + start, stop - start);
        const Matrix xb = train_.x.gather_rows(idx);
        const Matrix yb = train_.y.gather_rows(idx);
        try {
            ng::Tape tape;
            ng::Var x = tape.constant(xb);
            ng::Var loss;
            if (plain) {
                loss = ng::mse(target_.forward(tape, x).output, tape.constant(yb));
            } else {
                auto ro = routing::routed_forward(tape, source_, target_, actions, store_, x, true, config_.fm_weight);
                loss = ng::mse(ro.output, tape.constant(yb));
                if (ro.extra_loss) loss = ng::add(loss, *ro.extra_loss);
            }
            ng::zero_grads(params);
            tape.backward(loss);
            ng::sgd_step(params, config_.optimizer, lr);
            batch_losses.push_back(loss.value()(0, 0));
        } catch (const NumericError& e) {
            std::string acts;
            for (const auto& a : actions) acts += (acts.empty() ? "" : ",") + a.key();
            throw NumericError("non-finite training state at batch " + std::to_string(b) + " with actions [" + acts +
                               "]: " + e.what());
        }
    }
    return pairwise_sum(batch_losses) / static_cast<double>(batch_losses.size());
}

double TransferRun::reward_scale_for(double gain) {
    if (!config_.auto_reward_scale) return config_.reward_scale;
    max_abs_gain_ = std::max(max_abs_gain_, std::abs(gain));
    return max_abs_gain_ > 0.0 ? max_abs_gain_ : 1.0;
}

const EpochRecord& TransferRun::step() {
    const std::size_t t = history_.size() + 1;
    if (t > config_.epochs) throw StateError("all configured epochs have already run");
    EpochRecord rec;
    rec.epoch = t;
    rec.layers.resize(routed_layers());

    if (uses_bandits()) {
        std::vector<std::size_t> chosen(routed_layers());
        for (std::size_t i = 0; i < routed_layers(); ++i) {
            bandits_[i].update_weights(bandit::alpha_schedule(t));
            rec.layers[i].probabilities = bandits_[i].probabilities();
            chosen[i] = bandits_[i].sample_action(bandit_rngs_[i]);
            current_[i] = space_.per_layer[i][chosen[i]];
        }
        for (std::size_t i = 0; i < routed_layers(); ++i) {
            const double gain = evaluate_gain(i, current_[i]);
            const double reward = shape_reward(gain, reward_scale_for(gain));
            bandits_[i].record_reward(chosen[i], reward);
            rec.layers[i].action_id = chosen[i];
            rec.layers[i].gain = gain;
            rec.layers[i].reward = reward;
        }
    }
    for (std::size_t i = 0; i < routed_layers(); ++i) rec.layers[i].action_key = current_[i].key();

    rec.lr = ng::cosine_lr(static_cast<double>(t - 1), static_cast<double>(config_.epochs), config_.optimizer.lr);
    rec.train_loss = train_epoch(current_, rec.lr);
    rec.holdout_loss = mse(holdout_, current_);
    rec.test_mse = mse(test_, current_);
    history_.push_back(std::move(rec));
    return history_.back();
}

const std::vector<EpochRecord>& TransferRun::run(const std::function<void(const EpochRecord&)>& on_epoch) {
    while (history_.size() < config_.epochs) {
        const EpochRecord& rec = step();
        if (on_epoch) on_epoch(rec);
    }
    if (source_.checksum() != source_checksum_) throw StateError("frozen source network changed during training");
    return history_;
}

namespace {

constexpr std::string_view kRunMagic = "ARRUNCKP";
constexpr std::uint32_t kRunVersion = 1;

template <class Rng>
std::string rng_state(const Rng& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

template <class Rng>
void set_rng_state(Rng& rng, const std::string& s) {
    std::istringstream ss(s);
    ss >> rng;
    if (!ss) throw binio::FormatError("corrupt rng state");
}

}  // namespace

void TransferRun::save_checkpoint(std::ostream& os) const {
    binio::write_header(os, kRunMagic, kRunVersion);
    binio::write_string(os, to_string(config_.mode));
    binio::write_u64(os, config_.seed);
    binio::write_u64(os, history_.size());
    ng::write_net(os, source_);
    ng::write_net(os, target_);
    routing::write_store(os, store_);
    binio::write_u64(os, bandits_.size());
    for (std::size_t i = 0; i < bandits_.size(); ++i) {
        bandits_[i].serialize(os);
        binio::write_string(os, rng_state(bandit_rngs_[i]));
    }
    binio::write_string(os, rng_state(shuffle_rng_));
    binio::write_u64(os, current_.size());
    for (const auto& a : current_) binio::write_string(os, a.key());
    binio::write_f64(os, max_abs_gain_);
}

void TransferRun::load_checkpoint(std::istream& is) {
    binio::read_header(is, kRunMagic, kRunVersion);
    if (parse_run_mode(binio::read_string(is, 64)) != config_.mode)
        throw binio::FormatError("checkpoint was written for a different mode");
    if (binio::read_u64(is) != config_.seed) throw binio::FormatError("checkpoint was written for a different seed");
    const auto epochs_done = binio::read_u64(is);
    if (epochs_done > config_.epochs) throw binio::FormatError("checkpoint has more epochs than configured");
    LayeredNet source = ng::read_net(is);
    LayeredNet target = ng::read_net(is);
    routing::RouteParamStore store = routing::read_store(is);
    const auto nb = binio::read_u64(is);
    if (nb != bandits_.size()) throw binio::FormatError("checkpoint bandit count does not match this run");
    std::vector<bandit::BanditState> bandits;
    std::vector<std::mt19937_64> rngs(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        bandits.push_back(bandit::BanditState::deserialize(is));
        set_rng_state(rngs[i], binio::read_string(is));
    }
    std::mt19937_64 shuffle;
    set_rng_state(shuffle, binio::read_string(is));
    const auto na = binio::read_u64(is);
    if (na != routed_layers()) throw binio::FormatError("checkpoint action count does not match this run");
    std::vector<RoutingAction> current;
    for (std::size_t i = 0; i < na; ++i) current.push_back(RoutingAction::parse(binio::read_string(is, 256)));
    const double max_gain = binio::read_f64(is);

    source_ = std::move(source);
    source_.freeze();
    target_ = std::move(target);
    store_ = std::move(store);
    bandits_ = std::move(bandits);
    bandit_rngs_ = std::move(rngs);
    shuffle_rng_ = shuffle;
    current_ = std::move(current);
    max_abs_gain_ = max_gain;
    source_checksum_ = source_.checksum();
    // Epoch records are not checkpointed; keep only a count-preserving history.
    history_.resize(epochs_done);
    for (std::size_t k = 0; k < epochs_done; ++k) history_[k].epoch = k + 1;
}

}  // namespace autoroute::transfer
