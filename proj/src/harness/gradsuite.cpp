#include "autoroute/harness/gradsuite.hpp"

#include <functional>
#include <random>

#include "autoroute/hash.hpp"
#include "autoroute/numgrad/gradcheck.hpp"
#include "autoroute/numgrad/ops.hpp"
#include "autoroute/routing.hpp"

namespace autoroute::harness {
namespace {

namespace ng = numgrad;
using routing::AggOp;
using routing::RoutingAction;

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = u(rng);
    return m;
}

// One seed of one path: sets up parameters and returns the report.
using Case = std::function<ng::GradCheckReport(std::mt19937_64&, double, double)>;

ng::GradCheckReport dense_case(std::mt19937_64& rng, double eps, double tol, ng::Activation act) {
    ng::DenseBlock block(3, 4, act, true, rng);
    const Matrix x = random_matrix(5, 3, rng);
    const Matrix y = random_matrix(5, 4, rng);
    std::vector<ng::Parameter*> params{&block.weight(), block.bias()};
    auto f = [&](ng::Tape& t) { return ng::mse(block.forward(t, t.constant(x), true), t.constant(y)); };
    return ng::grad_check(f, params, eps, tol);
}

ng::GradCheckReport transform_case(std::mt19937_64& rng, double eps, double tol, bool training) {
    routing::SourceTransform tf(3, 4, rng);
    tf.bn_gamma.value = random_matrix(1, 4, rng, 0.5, 1.5);
    tf.bn_beta.value = random_matrix(1, 4, rng);
    tf.running_mean = random_matrix(1, 4, rng);
    tf.running_var = random_matrix(1, 4, rng, 0.5, 2.0);
    const Matrix rep = random_matrix(6, 3, rng);
    const Matrix y = random_matrix(6, 4, rng);
    auto params = tf.parameters();
    auto f = [&](ng::Tape& t) { return ng::mse(tf.apply(t, t.constant(rep), training), t.constant(y)); };
    return ng::grad_check(f, params, eps, tol);
}

// Source rep -> transform (train mode) -> aggregate with a trainable target rep.
ng::GradCheckReport aggregate_case(std::mt19937_64& rng, double eps, double tol, AggOp op, bool extra_only) {
    const std::size_t src = 3, tgt = 4, batch = 6;
    const RoutingAction action(0, op);
    routing::RouteParams rp = routing::make_route_params(action, src, tgt, rng);
    for (auto& p : rp.op) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.25, 1.0);
    rp.transform.bn_gamma.value = random_matrix(1, tgt, rng, 0.5, 1.5);
    rp.transform.bn_beta.value = random_matrix(1, tgt, rng);
    ng::Parameter w_t("target.weight", random_matrix(2, tgt, rng));
    const Matrix source_rep = random_matrix(batch, src, rng);
    const Matrix x = random_matrix(batch, 2, rng);
    const Matrix y = random_matrix(batch, tgt, rng);

    std::vector<ng::Parameter*> params{&w_t};
    for (auto* p : rp.transform.parameters()) params.push_back(p);
    for (auto& p : rp.op) params.push_back(&p);
    auto f = [&](ng::Tape& t) {
        ng::Var tf_s = rp.transform.apply(t, t.constant(source_rep), true);
        ng::Var f_t = ng::tanh(ng::matmul(t.constant(x), t.param(w_t)));
        auto res = routing::aggregate(t, action, tf_s, f_t, &rp, true, 0.5);
        if (extra_only) return res.extra_loss.value();
        ng::Var loss = ng::mse(res.output, t.constant(y));
        return res.extra_loss ? ng::add(loss, *res.extra_loss) : loss;
    };
    return ng::grad_check(f, params, eps, tol);
}

ng::GradCheckReport routed_case(std::mt19937_64& rng, double eps, double tol, std::uint64_t seed) {
    ng::LayeredNet source = ng::LayeredNet::mlp({1, 6, 6, 6, 1}, rng);
    source.freeze();
    ng::LayeredNet target = ng::LayeredNet::mlp({1, 4, 4, 4, 1}, rng);
    const AggOp ops[] = {AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::fm, AggOp::factred};
    std::vector<RoutingAction> actions;
    for (std::size_t i = 0; i < 3; ++i) actions.emplace_back((seed + i) % 3, ops[(seed + 2 * i) % 6]);
    routing::RouteParamStore store(seed);
    const Matrix x = random_matrix(8, 1, rng, -3.0, 3.0);
    const Matrix y = random_matrix(8, 1, rng);

    auto f = [&](ng::Tape& t) {
        auto out = routing::routed_forward(t, source, target, actions, store, t.constant(x), true, 0.5);
        ng::Var loss = ng::mse(out.output, t.constant(y));
        return out.extra_loss ? ng::add(loss, *out.extra_loss) : loss;
    };
    {
        ng::Tape warm;  // materializes the lazy route parameters
        f(warm);
    }
    std::vector<ng::Parameter*> params = target.parameters();
    for (std::size_t i = 0; i < actions.size(); ++i)
        for (auto* p : store.get(i, actions[i], 6, 4).trainable(actions[i])) params.push_back(p);
    return ng::grad_check(f, params, eps, tol);
}

}  // namespace

std::vector<GradPathReport> run_gradient_suite(std::size_t seeds, double eps, double tol) {
    std::vector<std::pair<std::string, std::function<ng::GradCheckReport(std::mt19937_64&, std::uint64_t)>>> paths;
    paths.emplace_back("dense_tanh", [&](auto& r, auto) { return dense_case(r, eps, tol, ng::Activation::tanh); });
    paths.emplace_back("dense_linear", [&](auto& r, auto) { return dense_case(r, eps, tol, ng::Activation::none); });
    paths.emplace_back("transform_train", [&](auto& r, auto) { return transform_case(r, eps, tol, true); });
    paths.emplace_back("transform_eval", [&](auto& r, auto) { return transform_case(r, eps, tol, false); });
    for (AggOp op : {AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::fm, AggOp::factred})
        paths.emplace_back("aggregate_" + routing::to_string(op),
                           [&, op](auto& r, auto) { return aggregate_case(r, eps, tol, op, false); });
    paths.emplace_back("fm_extra_loss", [&](auto& r, auto) { return aggregate_case(r, eps, tol, AggOp::fm, true); });
    paths.emplace_back("routed_forward", [&](auto& r, std::uint64_t s) { return routed_case(r, eps, tol, s); });

    std::vector<GradPathReport> out;
    for (const auto& [name, fn] : paths) {
        GradPathReport rep{name, seeds};
        for (std::uint64_t s = 1; s <= seeds; ++s) {
            std::mt19937_64 rng(derive_seed(s, "gradsuite/" + name));
            const auto r = fn(rng, s);
            rep.entries_checked += r.entries_checked;
            if (r.max_rel_error >= rep.max_rel_error) {
                rep.max_rel_error = r.max_rel_error;
                rep.worst = "seed " + std::to_string(s) + ": " + r.worst_entry;
            }
            rep.passed = rep.passed && r.passed;
        }
        out.push_back(std::move(rep));
    }
    return out;
}

}  // namespace autoroute::harness
