#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "autoroute/numgrad/ops.hpp"
#include "autoroute/routing.hpp"

using autoroute::Matrix;
using namespace autoroute::routing;
namespace ng = autoroute::numgrad;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(r, c);
    for (double& v : m.values()) v = u(rng);
    return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) && std::memcmp(a.values().data(), b.values().data(), a.values().size_bytes()) == 0;
}

struct Nets {
    ng::LayeredNet source, target;
};

Nets toy_nets(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Nets n{ng::LayeredNet::mlp({1, 8, 8, 8, 1}, rng), ng::LayeredNet::mlp({1, 4, 4, 4, 1}, rng)};
    n.source.freeze();
    return n;
}

}  // namespace

TEST(RoutingAction, KeysAndParsing) {
    EXPECT_EQ(RoutingAction::null().key(), "NULL");
    EXPECT_EQ(RoutingAction(2, AggOp::wadd).key(), "2:wAdd");
    EXPECT_EQ(RoutingAction::parse("1:FactRed"), RoutingAction(1, AggOp::factred));
    EXPECT_EQ(RoutingAction::parse("0:wtadd"), RoutingAction(0, AggOp::wadd));
    EXPECT_TRUE(RoutingAction::parse("NULL").is_null());
    EXPECT_THROW(RoutingAction::parse("x:wAdd"), autoroute::ConfigError);
    EXPECT_THROW(RoutingAction::parse("1:nope"), autoroute::ConfigError);
    EXPECT_THROW(parse_agg_op("max"), autoroute::ConfigError);
    for (AggOp op : {AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::fm, AggOp::factred})
        EXPECT_EQ(parse_agg_op(to_string(op)), op);
}

TEST(SourceTransform, IdentityConditions) {
    SourceTransform t(Matrix::identity(2), Matrix(1, 2, 1.0), Matrix(1, 2, 0.0));
    ng::Tape tape;
    // Columns already zero-mean with unit (biased) variance.
    Matrix x = Matrix::from_rows({{1, -1}, {-1, 1}});
    Var y = t.apply(tape, tape.constant(x), true);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(y.value()[k], x[k], 1e-5);
}

TEST(SourceTransform, ZeroGammaGivesBeta) {
    std::mt19937_64 rng(1);
    SourceTransform t(random_matrix(3, 2, rng), Matrix(1, 2, 0.0), Matrix::from_rows({{0.5, -2}}));
    ng::Tape tape;
    Var y = t.apply(tape, tape.constant(random_matrix(5, 3, rng)), true);
    for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_EQ(y.value()(r, 0), 0.5);
        EXPECT_EQ(y.value()(r, 1), -2.0);
    }
}

TEST(SourceTransform, RunningStatsUpdateOnlyInTraining) {
    SourceTransform t(Matrix::identity(1), Matrix(1, 1, 1.0), Matrix(1, 1, 0.0));
    ng::Tape tape;
    Matrix x = Matrix::from_rows({{1}, {3}});
    t.apply(tape, tape.constant(x), false);
    EXPECT_EQ(t.running_mean(0, 0), 0.0);
    EXPECT_EQ(t.running_var(0, 0), 1.0);
    t.apply(tape, tape.constant(x), true);
    EXPECT_DOUBLE_EQ(t.running_mean(0, 0), 0.1 * 2.0);
    EXPECT_DOUBLE_EQ(t.running_var(0, 0), 0.9 * 1.0 + 0.1 * 2.0);  // unbiased batch variance 2
}

TEST(SourceTransform, BatchOfOneStaysFinite) {
    std::mt19937_64 rng(2);
    SourceTransform t(3, 2, rng);
    ng::Tape tape;
    Var y = t.apply(tape, tape.constant(random_matrix(1, 3, rng)), true);
    EXPECT_TRUE(y.value().all_finite());
    EXPECT_EQ(y.value()(0, 0), t.bn_beta.value(0, 0));
}

TEST(SourceTransform, WrongWidthThrows) {
    std::mt19937_64 rng(3);
    SourceTransform t(3, 2, rng);
    ng::Tape tape;
    EXPECT_THROW(t.apply(tape, tape.constant(Matrix(2, 4)), true), autoroute::ShapeError);
}

TEST(Aggregate, IdentityCases) {
    std::mt19937_64 rng(4);
    ng::Tape tape;
    Matrix ft = random_matrix(3, 4, rng);
    Var f_t = tape.constant(ft);
    Var tf = tape.constant(random_matrix(3, 4, rng));

    EXPECT_EQ(aggregate(tape, RoutingAction::null(), tf, f_t, nullptr).output.value(), ft);

    RouteParams w = make_route_params(RoutingAction(0, AggOp::wadd), 4, 4, rng);
    EXPECT_EQ(w.op[0].value(0, 0), 0.5);
    EXPECT_EQ(w.op[1].value(0, 0), 0.5);
    w.op[0].value(0, 0) = 0.0;
    w.op[1].value(0, 0) = 1.0;
    EXPECT_EQ(aggregate(tape, RoutingAction(0, AggOp::wadd), tf, f_t, &w).output.value(), ft);

    Var zero = tape.constant(Matrix(3, 4));
    EXPECT_EQ(aggregate(tape, RoutingAction(0, AggOp::sadd), zero, f_t, nullptr).output.value(), ft);

    auto fm = aggregate(tape, RoutingAction(0, AggOp::fm), f_t, f_t, nullptr);
    EXPECT_EQ(fm.output.value(), ft);
    ASSERT_TRUE(fm.extra_loss.has_value());
    EXPECT_EQ(fm.extra_loss->value()(0, 0), 0.0);

    EXPECT_EQ(aggregate(tape, RoutingAction(0, AggOp::iden), tf, f_t, nullptr).output.value(), ft);
}

TEST(Aggregate, FmLossIsWeightedMeanRowNorm) {
    ng::Tape tape;
    Var a = tape.constant(Matrix::from_rows({{3, 4}, {0, 0}}));
    Var b = tape.constant(Matrix(2, 2));
    auto r = aggregate(tape, RoutingAction(0, AggOp::fm), a, b, nullptr, true, 0.5);
    EXPECT_DOUBLE_EQ(r.extra_loss->value()(0, 0), 0.5 * (5.0 + 0.0) / 2.0);
}

TEST(Aggregate, LinCombHandValues) {
    std::mt19937_64 rng(5);
    RouteParams p = make_route_params(RoutingAction(0, AggOp::lincomb), 2, 2, rng);
    p.op[0].value(0, 0) = 0.5;
    p.op[1].value(0, 0) = -1.0;
    ng::Tape tape;
    auto r = aggregate(tape, RoutingAction(0, AggOp::lincomb), tape.constant(Matrix::from_rows({{1, 3}})),
                       tape.constant(Matrix::from_rows({{2, 2}})), &p);
    // gate_s = 0.5 * 2 = 1, gate_t = -1 * 2 = -2
    EXPECT_EQ(r.output.value(), Matrix::from_rows({{1 - 4, 3 - 4}}));
}

TEST(Aggregate, FactRedSelectorMatrices) {
    std::mt19937_64 rng(6);
    RouteParams p = make_route_params(RoutingAction(0, AggOp::factred), 4, 4, rng);
    Matrix sel(4, 2);
    sel(0, 0) = 1.0;
    sel(1, 1) = 1.0;
    p.op[0].value = sel;
    p.op[1].value = sel;
    Matrix s = random_matrix(5, 4, rng), t = random_matrix(5, 4, rng);
    ng::Tape tape;
    auto out = aggregate(tape, RoutingAction(0, AggOp::factred), tape.constant(s), tape.constant(t), &p).output.value();
    ASSERT_EQ(out.cols(), 4u);
    for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_EQ(out(r, 0), s(r, 0));
        EXPECT_EQ(out(r, 1), s(r, 1));
        EXPECT_EQ(out(r, 2), t(r, 0));
        EXPECT_EQ(out(r, 3), t(r, 1));
    }
    EXPECT_THROW(make_route_params(RoutingAction(0, AggOp::factred), 4, 5, rng), autoroute::ConfigError);
}

TEST(Aggregate, ShapePreservedForEveryOp) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t b = 1 + trial % 5, ds = 1 + trial % 7, dt = 2 * (1 + trial % 4);
        for (AggOp op : {AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::fm, AggOp::factred}) {
            RoutingAction a(0, op);
            RouteParams p = make_route_params(a, ds, dt, rng);
            ng::Tape tape;
            Var tf = p.transform.apply(tape, tape.constant(random_matrix(b, ds, rng)), true);
            Var ft = tape.constant(random_matrix(b, dt, rng));
            auto out = aggregate(tape, a, tf, ft, &p).output;
            EXPECT_EQ(out.rows(), b);
            EXPECT_EQ(out.cols(), dt);
        }
    }
}

TEST(ActionSpace, Counts) {
    const std::vector<std::size_t> w{16, 16, 16};
    EXPECT_EQ(build_action_space(3, w, ActionMode::route).per_layer[0].size(), 4u);
    EXPECT_EQ(build_action_space(3, w, ActionMode::full).per_layer[2].size(), 16u);
    EXPECT_EQ(build_action_space(4, {16, 16, 16, 16}, ActionMode::full).per_layer[0].size(), 21u);
    ActionSpaceOptions with_fm;
    with_fm.full_ops.push_back(AggOp::fm);
    EXPECT_EQ(build_action_space(3, w, ActionMode::full, with_fm).per_layer[0].size(), 19u);
    auto full = build_action_space(3, w, ActionMode::full);
    EXPECT_TRUE(full.per_layer[0].front().is_null());
    std::size_t nulls = 0;
    for (const auto& a : full.per_layer[0]) nulls += a.is_null();
    EXPECT_EQ(nulls, 1u);
}

TEST(ActionSpace, OddWidthExcludesFactRed) {
    auto s = build_action_space(3, {16, 15, 16}, ActionMode::full);
    EXPECT_EQ(s.per_layer[1].size(), 13u);
    EXPECT_EQ(s.per_layer[0].size(), 16u);
    ASSERT_EQ(s.notes.size(), 3u);  // one per source tap
    for (const auto& note : s.notes) EXPECT_NE(note.find("layer 1"), std::string::npos);
}

TEST(ActionSpace, FixedPairs) {
    auto s = build_action_space(3, {16, 16, 16}, ActionMode::fixed);
    for (std::size_t i = 0; i < 3; ++i) {
        ASSERT_EQ(s.per_layer[i].size(), 1u);
        EXPECT_EQ(s.per_layer[i][0], RoutingAction(i, AggOp::wadd));
    }
    ActionSpaceOptions partial;
    partial.fixed_pairs = {{2, 0}};
    auto p = build_action_space(3, {16, 16, 16}, ActionMode::fixed, partial);
    EXPECT_EQ(p.per_layer[0][0], RoutingAction(2, AggOp::wadd));
    EXPECT_TRUE(p.per_layer[1][0].is_null());
    ActionSpaceOptions bad;
    bad.fixed_pairs = {{0, 3}};
    EXPECT_THROW(build_action_space(3, {16, 16, 16}, ActionMode::fixed, bad), autoroute::ConfigError);
    bad.fixed_pairs = {{3, 0}};
    EXPECT_THROW(build_action_space(3, {16, 16, 16}, ActionMode::fixed, bad), autoroute::ConfigError);
}

TEST(RoutedForward, AllNullIsBitwiseTargetForward) {
    auto n = toy_nets(1);
    RouteParamStore store(1);
    std::vector<RoutingAction> nulls(3);
    std::mt19937_64 rng(2);
    for (int k = 0; k < 100; ++k) {
        Matrix x = random_matrix(1 + k % 7, 1, rng);
        ng::Tape t1, t2;
        auto routed = routed_forward(t1, n.source, n.target, nulls, store, t1.constant(x), true).output.value();
        auto plain = n.target.forward(t2, t2.constant(x)).output.value();
        EXPECT_TRUE(bitwise_equal(routed, plain));
    }
    EXPECT_EQ(store.size(), 0u);
}

TEST(RoutedForward, RequiresFrozenSource) {
    std::mt19937_64 rng(3);
    auto src = ng::LayeredNet::mlp({1, 4, 1}, rng);
    auto tgt = ng::LayeredNet::mlp({1, 4, 1}, rng);
    RouteParamStore store;
    ng::Tape t;
    EXPECT_THROW(routed_forward(t, src, tgt, {RoutingAction::null()}, store, t.constant(Matrix(1, 1)), true),
                 autoroute::StateError);
}

TEST(RoutedForward, HandComposedOracle) {
    // Source: one tanh block then linear output. Target: one tanh block then linear output.
    ng::DenseBlock s0(Matrix::from_rows({{0.7, -0.3}}), Matrix::from_rows({{0.1, 0.2}}), ng::Activation::tanh);
    ng::DenseBlock s1(Matrix::from_rows({{1}, {1}}), std::nullopt, ng::Activation::none);
    ng::DenseBlock t0(Matrix::from_rows({{0.4, 0.9}}), Matrix::from_rows({{0, 0}}), ng::Activation::tanh);
    ng::DenseBlock t1(Matrix::from_rows({{2}, {-1}}), Matrix::from_rows({{0.5}}), ng::Activation::none);
    ng::LayeredNet src({s0, s1}, {0}, false), tgt({t0, t1}, {0});
    RouteParamStore store;
    RoutingAction a(0, AggOp::wadd);
    RouteParams& rp = store.get(0, a, 2, 2);
    rp.transform = SourceTransform(Matrix::identity(2), Matrix(1, 2, 1.0), Matrix(1, 2, 0.0));
    rp.transform.eps = 0.0;
    rp.op[0].value(0, 0) = 1.0;
    rp.op[1].value(0, 0) = 0.0;
    ng::Tape tape;
    const double x = 0.8;
    auto out = routed_forward(tape, src, tgt, {a}, store, tape.constant(Matrix(1, 1, x)), false).output.value();
    const double h0 = std::tanh(0.7 * x + 0.1), h1 = std::tanh(-0.3 * x + 0.2);
    EXPECT_NEAR(out(0, 0), 2 * h0 - h1 + 0.5, 1e-15);
}

TEST(RoutedForward, GradientIsolationForEveryOp) {
    for (AggOp op : {AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::fm, AggOp::factred}) {
        auto n = toy_nets(4);
        RouteParamStore store(4);
        std::vector<RoutingAction> acts{RoutingAction(0, op), RoutingAction(1, op), RoutingAction(2, op)};
        std::mt19937_64 rng(5);
        ng::Tape t;
        auto out = routed_forward(t, n.source, n.target, acts, store, t.constant(random_matrix(6, 1, rng)), true);
        Var loss = ng::mse(out.output, t.constant(Matrix(6, 1)));
        if (out.extra_loss) loss = ng::add(loss, *out.extra_loss);
        t.backward(loss);
        for (auto* p : n.source.parameters()) EXPECT_EQ(p->grad, Matrix(p->grad.rows(), p->grad.cols())) << to_string(op);
        double target_grad = 0.0;
        for (auto* p : n.target.parameters())
            for (double g : p->grad.values()) target_grad += std::abs(g);
        EXPECT_GT(target_grad, 0.0);
        if (op == AggOp::iden) {
            auto& rp = store.get(0, acts[0], 8, 4);
            EXPECT_EQ(rp.transform.dense.grad, Matrix(8, 4));
        }
    }
}

TEST(RoutedForward, WaddWeightsReceiveGradient) {
    auto n = toy_nets(6);
    RouteParamStore store(6);
    std::vector<RoutingAction> acts{RoutingAction(1, AggOp::wadd), RoutingAction::null(), RoutingAction::null()};
    std::mt19937_64 rng(7);
    ng::Tape t;
    auto out = routed_forward(t, n.source, n.target, acts, store, t.constant(random_matrix(6, 1, rng)), true);
    t.backward(ng::mse(out.output, t.constant(random_matrix(6, 1, rng))));
    auto& rp = store.get(0, acts[0], 8, 4);
    EXPECT_NE(rp.op[0].grad(0, 0), 0.0);
    EXPECT_NE(rp.op[1].grad(0, 0), 0.0);
}

TEST(RoutedForward, BadSourceIndexNamesRoute) {
    auto n = toy_nets(8);
    RouteParamStore store;
    ng::Tape t;
    try {
        routed_forward(t, n.source, n.target, {RoutingAction(5, AggOp::sadd), {}, {}}, store,
                       t.constant(Matrix(2, 1)), true);
        FAIL();
    } catch (const autoroute::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("route (0, 5)"), std::string::npos);
    }
    EXPECT_THROW(routed_forward(t, n.source, n.target, {{}, {}}, store, t.constant(Matrix(2, 1)), true),
                 autoroute::ConfigError);
}

TEST(RouteParamStore, LazyInitIsOrderIndependentAndStable) {
    RouteParamStore s1(9), s2(9);
    RoutingAction a(0, AggOp::wadd), b(2, AggOp::lincomb);
    s1.get(1, a, 8, 4);
    s1.get(1, b, 8, 4);
    s2.get(1, b, 8, 4);
    s2.get(1, a, 8, 4);
    EXPECT_EQ(s1.get(1, a, 8, 4).transform.dense.value, s2.get(1, a, 8, 4).transform.dense.value);
    EXPECT_EQ(s1.get(1, b, 8, 4).op[0].value, s2.get(1, b, 8, 4).op[0].value);
    EXPECT_NE(s1.get(0, a, 8, 4).transform.dense.value, s1.get(1, a, 8, 4).transform.dense.value);

    // Train a, touch b, come back: a keeps exactly what it had.
    s1.get(1, a, 8, 4).op[0].value(0, 0) = 0.123;
    const Matrix dense = s1.get(1, a, 8, 4).transform.dense.value;
    s1.get(1, b, 8, 4).op[0].value(0, 0) = 9.0;
    EXPECT_EQ(s1.get(1, a, 8, 4).op[0].value(0, 0), 0.123);
    EXPECT_EQ(s1.get(1, a, 8, 4).transform.dense.value, dense);
    EXPECT_TRUE(s1.contains(1, a));
    EXPECT_FALSE(s1.contains(2, a));
}

TEST(RouteParamStore, SerializationRoundTrip) {
    RouteParamStore s(10);
    auto& p = s.get(0, RoutingAction(1, AggOp::factred), 8, 4);
    p.transform.running_mean(0, 2) = 0.75;
    p.op[1].velocity(1, 1) = -0.5;
    s.get(2, RoutingAction(0, AggOp::wadd), 8, 4);
    std::stringstream ss;
    write_store(ss, s);
    RouteParamStore back = read_store(ss);
    EXPECT_EQ(back.seed(), 10u);
    ASSERT_EQ(back.size(), 2u);
    auto& q = back.get(0, RoutingAction(1, AggOp::factred), 8, 4);
    EXPECT_EQ(q.transform.running_mean(0, 2), 0.75);
    EXPECT_EQ(q.op[1].velocity(1, 1), -0.5);
    EXPECT_EQ(q.transform.dense.value, p.transform.dense.value);
}
