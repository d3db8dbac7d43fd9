#include "autoroute/routing.hpp"

#include <algorithm>
#include <cmath>

#include "autoroute/binary_io.hpp"
#include "autoroute/hash.hpp"
#include "autoroute/numgrad/ops.hpp"

namespace autoroute::routing {

namespace ng = numgrad;

namespace {

Matrix uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = dist(rng);
    return m;
}

}  // namespace

std::string to_string(AggOp op) {
    switch (op) {
        case AggOp::iden: return "Iden";
        case AggOp::sadd: return "sAdd";
        case AggOp::wadd: return "wAdd";
        case AggOp::lincomb: return "LinComb";
        case AggOp::fm: return "FM";
        case AggOp::factred: return "FactRed";
    }
    return "?";
}

AggOp parse_agg_op(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "iden" || s == "identity") return AggOp::iden;
    if (s == "sadd") return AggOp::sadd;
    if (s == "wadd" || s == "wtadd") return AggOp::wadd;
    if (s == "lincomb") return AggOp::lincomb;
    if (s == "fm") return AggOp::fm;
    if (s == "factred") return AggOp::factred;
    throw ConfigError("unknown aggregation operator '" + std::string(name) + "'");
}

std::string RoutingAction::key() const {
    if (is_null()) return "NULL";
    return std::to_string(*source_) + ":" + to_string(op_);
}

RoutingAction RoutingAction::parse(std::string_view key) {
    if (key == "NULL" || key == "null") return null();
    const auto colon = key.find(':');
    if (colon == std::string_view::npos) throw ConfigError("bad routing action '" + std::string(key) + "'");
    std::size_t src = 0;
    try {
        src = std::stoul(std::string(key.substr(0, colon)));
    } catch (const std::exception&) {
        throw ConfigError("bad source index in routing action '" + std::string(key) + "'");
    }
    return {src, parse_agg_op(key.substr(colon + 1))};
}

SourceTransform::SourceTransform(std::size_t source_dim, std::size_t target_dim, std::mt19937_64& rng)
    : dense("transform.dense", uniform(source_dim, target_dim, 1.0 / std::sqrt(static_cast<double>(source_dim)), rng)),
      bn_gamma("transform.bn_gamma", Matrix(1, target_dim, 1.0)),
      bn_beta("transform.bn_beta", Matrix(1, target_dim, 0.0)),
      running_mean(1, target_dim, 0.0),
      running_var(1, target_dim, 1.0) {}

SourceTransform::SourceTransform(Matrix dense_w, Matrix gamma, Matrix beta)
    : dense("transform.dense", std::move(dense_w)),
      bn_gamma("transform.bn_gamma", std::move(gamma)),
      bn_beta("transform.bn_beta", std::move(beta)),
      running_mean(1, dense.value.cols(), 0.0),
      running_var(1, dense.value.cols(), 1.0) {
    if (bn_gamma.value.rows() != 1 || bn_gamma.value.cols() != target_dim() ||
        !bn_beta.value.same_shape(bn_gamma.value))
        throw ShapeError("SourceTransform: batch-norm parameters do not match the dense output width");
}

Var SourceTransform::apply(Tape& tape, Var source_rep, bool training, bool trainable) {
    if (source_rep.cols() != source_dim())
        throw ShapeError("transform: source width " + std::to_string(source_rep.cols()) + " but transform expects " +
                         std::to_string(source_dim()));
    Var h = ng::matmul(source_rep, tape.param(dense, trainable));
    Var g = tape.param(bn_gamma, trainable);
    Var b = tape.param(bn_beta, trainable);
    if (!training) return ng::batch_norm_eval(h, running_mean, running_var, g, b, eps);

    ng::BatchStats stats;
    Var out = ng::batch_norm_train(h, g, b, eps, &stats);
    const double n = static_cast<double>(source_rep.rows());
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    for (std::size_t c = 0; c < target_dim(); ++c) {
        running_mean(0, c) = (1.0 - momentum) * running_mean(0, c) + momentum * stats.mean(0, c);
        running_var(0, c) = (1.0 - momentum) * running_var(0, c) + momentum * stats.var(0, c) * unbias;
    }
    return out;
}

std::vector<Parameter*> RouteParams::trainable(const RoutingAction& action) {
    if (action.is_null() || action.op() == AggOp::iden) return {};
    std::vector<Parameter*> ps = transform.parameters();
    for (auto& p : op) ps.push_back(&p);
    return ps;
}

RouteParams make_route_params(const RoutingAction& action, std::size_t source_dim, std::size_t target_dim,
                              std::mt19937_64& rng) {
    RouteParams rp{SourceTransform(source_dim, target_dim, rng), {}};
    if (action.is_null()) return rp;
    switch (action.op()) {
        case AggOp::wadd:
            rp.op.emplace_back("wadd.w_source", Matrix(1, 1, 0.5));
            rp.op.emplace_back("wadd.w_target", Matrix(1, 1, 0.5));
            break;
        case AggOp::lincomb:
            // Single-input bias-free linear maps: fan-in bound is 1.
            rp.op.emplace_back("lincomb.lin_source", uniform(1, 1, 1.0, rng));
            rp.op.emplace_back("lincomb.lin_target", uniform(1, 1, 1.0, rng));
            break;
        case AggOp::factred: {
            if (target_dim % 2 != 0)
                throw ConfigError("FactRed needs an even target width, got " + std::to_string(target_dim));
            const double bound = 1.0 / std::sqrt(static_cast<double>(target_dim));
            rp.op.emplace_back("factred.reduce_source", uniform(target_dim, target_dim / 2, bound, rng));
            rp.op.emplace_back("factred.reduce_target", uniform(target_dim, target_dim / 2, bound, rng));
            break;
        }
        case AggOp::iden:
        case AggOp::sadd:
        case AggOp::fm:
            break;
    }
    return rp;
}

RouteParams& RouteParamStore::get(std::size_t layer, const RoutingAction& action, std::size_t source_dim,
                                  std::size_t target_dim) {
    Key key{layer, action.key()};
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        std::mt19937_64 rng(derive_seed(seed_, "route/" + key.second, layer));
        it = entries_.emplace(std::move(key), make_route_params(action, source_dim, target_dim, rng)).first;
    } else if (it->second.transform.source_dim() != source_dim || it->second.transform.target_dim() != target_dim) {
        throw ShapeError("route parameters for layer " + std::to_string(layer) + " action " + action.key() +
                         " were created for different widths");
    }
    return it->second;
}

bool RouteParamStore::contains(std::size_t layer, const RoutingAction& action) const {
    return entries_.count({layer, action.key()}) != 0;
}

AggregateResult aggregate(Tape& tape, const RoutingAction& action, Var tf_source, Var target_rep,
                          RouteParams* params, bool trainable, double fm_weight) {
    if (action.is_null()) return {target_rep, std::nullopt};
    if (!tf_source.value().same_shape(target_rep.value()))
        throw ShapeError("aggregate " + action.key() + ": transformed source " + tf_source.value().shape_str() +
                         " vs target " + target_rep.value().shape_str());
    auto op_param = [&](std::size_t k) -> Var {
        if (!params || params->op.size() <= k)
            throw StateError("aggregate " + action.key() + ": missing operator parameters");
        return tape.param(params->op[k], trainable);
    };
    switch (action.op()) {
        case AggOp::iden:
            return {target_rep, std::nullopt};
        case AggOp::sadd:
            return {ng::add(tf_source, target_rep), std::nullopt};
        case AggOp::wadd:
            return {ng::add(ng::scale(tf_source, op_param(0)), ng::scale(target_rep, op_param(1))), std::nullopt};
        case AggOp::lincomb: {
            Var gate_s = ng::scale(ng::row_mean(tf_source), op_param(0));
            Var gate_t = ng::scale(ng::row_mean(target_rep), op_param(1));
            return {ng::add(ng::mul_rows(tf_source, gate_s), ng::mul_rows(target_rep, gate_t)), std::nullopt};
        }
        case AggOp::fm:
            return {target_rep, ng::scale(ng::row_norm_mean(ng::sub(tf_source, target_rep)), fm_weight)};
        case AggOp::factred:
            return {ng::concat_cols(ng::matmul(tf_source, op_param(0)), ng::matmul(target_rep, op_param(1))),
                    std::nullopt};
    }
    throw StateError("unreachable aggregation operator");
}

ActionSpace build_action_space(std::size_t num_source_taps, const std::vector<std::size_t>& target_widths,
                               ActionMode mode, const ActionSpaceOptions& opts) {
    if (num_source_taps < 1) throw ConfigError("action space needs at least one source representation");
    ActionSpace space;
    space.per_layer.resize(target_widths.size());

    auto admissible = [&](std::size_t layer, AggOp op) {
        if (op == AggOp::factred && target_widths[layer] % 2 != 0) {
            space.notes.push_back("layer " + std::to_string(layer) + ": FactRed excluded (odd width " +
                                  std::to_string(target_widths[layer]) + ")");
            return false;
        }
        return true;
    };

    switch (mode) {
        case ActionMode::full:
        case ActionMode::route: {
            std::vector<AggOp> ops = mode == ActionMode::full ? opts.full_ops : std::vector<AggOp>{opts.route_op};
            for (std::size_t i = 0; i < target_widths.size(); ++i) {
                auto& acts = space.per_layer[i];
                acts.push_back(RoutingAction::null());
                for (std::size_t j = 0; j < num_source_taps; ++j)
                    for (AggOp op : ops)
                        if (admissible(i, op)) acts.emplace_back(j, op);
                if (acts.size() < 2)
                    throw ConfigError("layer " + std::to_string(i) + ": no admissible routing actions besides NULL");
            }
            break;
        }
        case ActionMode::fixed: {
            for (auto& acts : space.per_layer) acts.push_back(RoutingAction::null());
            for (auto [src, tgt] : opts.fixed_pairs) {
                if (src >= num_source_taps)
                    throw ConfigError("fixed pair (" + std::to_string(src) + "," + std::to_string(tgt) +
                                      ") references missing source layer " + std::to_string(src));
                if (tgt >= target_widths.size())
                    throw ConfigError("fixed pair (" + std::to_string(src) + "," + std::to_string(tgt) +
                                      ") references missing target layer " + std::to_string(tgt));
                if (opts.fixed_op == AggOp::factred && target_widths[tgt] % 2 != 0)
                    throw ConfigError("fixed pair uses FactRed on odd-width target layer " + std::to_string(tgt));
                space.per_layer[tgt] = {RoutingAction(src, opts.fixed_op)};
            }
            break;
        }
    }
    return space;
}

RoutedOutput routed_forward(Tape& tape, LayeredNet& source, LayeredNet& target,
                            const std::vector<RoutingAction>& actions, RouteParamStore& store, Var x, bool training,
                            double fm_weight) {
    if (source.trainable()) throw StateError("routed_forward requires a frozen source network");
    if (actions.size() != target.num_taps())
        throw ConfigError("routed_forward: " + std::to_string(actions.size()) + " actions for " +
                          std::to_string(target.num_taps()) + " routed target layers");

    RoutedOutput out;
    const bool any_route = std::any_of(actions.begin(), actions.end(), [](const auto& a) { return !a.is_null(); });
    if (any_route) out.source_taps = source.forward(tape, x).taps;

    std::vector<Var> extras;
    auto hook = [&](std::size_t i, Var f_t) -> Var {
        const RoutingAction& a = actions[i];
        if (a.is_null()) return f_t;
        if (a.source() >= out.source_taps.size())
            throw ShapeError("route (" + std::to_string(i) + ", " + std::to_string(a.source()) +
                             "): source layer does not exist");
        try {
            Var f_s = out.source_taps[a.source()];
            RouteParams& rp = store.get(i, a, f_s.cols(), f_t.cols());
            Var tf_s = rp.transform.apply(tape, f_s, training, a.op() != AggOp::iden);
            if (a.op() == AggOp::iden) tf_s = ng::detach(tf_s);
            AggregateResult r = aggregate(tape, a, tf_s, f_t, &rp, true, fm_weight);
            if (r.extra_loss) extras.push_back(*r.extra_loss);
            return r.output;
        } catch (const ShapeError& e) {
            throw ShapeError("route (" + std::to_string(i) + ", " + std::to_string(a.source()) + "): " + e.what());
        }
    };
    auto res = target.forward(tape, x, hook);
    out.output = res.output;
    out.target_taps = std::move(res.taps);
    if (!extras.empty()) {
        Var total = extras.front();
        for (std::size_t k = 1; k < extras.size(); ++k) total = ng::add(total, extras[k]);
        out.extra_loss = total;
    }
    return out;
}

namespace {

void write_param(std::ostream& os, const Parameter& p) {
    binio::write_string(os, p.name);
    binio::write_matrix(os, p.value);
    binio::write_matrix(os, p.velocity);
}

Parameter read_param(std::istream& is) {
    std::string name = binio::read_string(is);
    Matrix value = binio::read_matrix(is);
    Matrix velocity = binio::read_matrix(is);
    if (!velocity.same_shape(value)) throw binio::FormatError("velocity shape mismatch for " + name);
    Parameter p(std::move(name), std::move(value));
    p.velocity = std::move(velocity);
    return p;
}

}  // namespace

void write_store(std::ostream& os, const RouteParamStore& store) {
    binio::write_header(os, "ARSTORE", 1);
    binio::write_u64(os, store.seed());
    binio::write_u64(os, store.size());
    for (const auto& [key, rp] : store.entries()) {
        binio::write_u64(os, key.first);
        binio::write_string(os, key.second);
        const SourceTransform& t = rp.transform;
        write_param(os, t.dense);
        write_param(os, t.bn_gamma);
        write_param(os, t.bn_beta);
        binio::write_matrix(os, t.running_mean);
        binio::write_matrix(os, t.running_var);
        binio::write_f64(os, t.momentum);
        binio::write_f64(os, t.eps);
        binio::write_u64(os, rp.op.size());
        for (const auto& p : rp.op) write_param(os, p);
    }
}

RouteParamStore read_store(std::istream& is) {
    binio::read_header(is, "ARSTORE", 1);
    RouteParamStore store(binio::read_u64(is));
    const auto n = binio::read_u64(is);
    if (n > (1u << 20)) throw binio::FormatError("store entry count out of range");
    for (std::uint64_t k = 0; k < n; ++k) {
        const auto layer = binio::read_u64(is);
        std::string action = binio::read_string(is, 256);
        RouteParams rp;
        rp.transform.dense = read_param(is);
        rp.transform.bn_gamma = read_param(is);
        rp.transform.bn_beta = read_param(is);
        rp.transform.running_mean = binio::read_matrix(is);
        rp.transform.running_var = binio::read_matrix(is);
        rp.transform.momentum = binio::read_f64(is);
        rp.transform.eps = binio::read_f64(is);
        const auto nop = binio::read_u64(is);
        if (nop > 16) throw binio::FormatError("operator parameter count out of range");
        for (std::uint64_t j = 0; j < nop; ++j) rp.op.push_back(read_param(is));
        store.entries().emplace(RouteParamStore::Key{layer, std::move(action)}, std::move(rp));
    }
    return store;
}

}  // namespace autoroute::routing
