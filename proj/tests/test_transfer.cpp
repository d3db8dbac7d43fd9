#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "autoroute/harness/config.hpp"
#include "autoroute/harness/experiment.hpp"
#include "autoroute/transfer.hpp"

using autoroute::Matrix;
using namespace autoroute::transfer;
namespace ng = autoroute::numgrad;
namespace ah = autoroute::harness;

namespace {

LayeredNet small_source(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto net = LayeredNet::mlp({1, 12, 12, 12, 1}, rng);
    net.freeze();
    return net;
}

// Toy target data with a smaller training set to keep the tests quick.
ah::TargetData toy_data(std::uint64_t seed, std::size_t n = 300) {
    ah::ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.target_train = n;
    cfg.target_test = 200;
    return ah::make_target_data(cfg);
}

TransferRun make_run(RunMode mode, std::uint64_t seed, std::size_t epochs = 5,
                     std::vector<std::pair<std::size_t, std::size_t>> pairs = {{0, 0}, {1, 1}, {2, 2}}) {
    auto d = toy_data(seed);
    TransferConfig cfg;
    cfg.mode = mode;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.actions.fixed_pairs = std::move(pairs);
    std::mt19937_64 rng(seed + 100);
    return TransferRun(small_source(seed), LayeredNet::mlp({1, 16, 16, 16, 1}, rng), d.train, d.holdout, d.test, cfg);
}

}  // namespace

TEST(ShapeReward, Examples) {
    EXPECT_EQ(shape_reward(0.0, 1.0), 0.0);
    EXPECT_EQ(shape_reward(2.0, 1.0), 1.0);
    EXPECT_EQ(shape_reward(-0.05, 0.1), -0.5);
    EXPECT_EQ(shape_reward(-7.0, 1.0), -1.0);
}

TEST(RunMode, ParseAndPrint) {
    for (RunMode m : {RunMode::scratch, RunMode::fixed, RunMode::route, RunMode::full})
        EXPECT_EQ(parse_run_mode(to_string(m)), m);
    EXPECT_EQ(parse_gain_mode("global"), GainMode::global);
    EXPECT_THROW(parse_run_mode("auto"), autoroute::ConfigError);
    EXPECT_THROW(parse_gain_mode("layer"), autoroute::ConfigError);
}

TEST(TransferRun, ZeroEpochsLeavesTargetUntouched) {
    auto run = make_run(RunMode::route, 1, 0);
    const auto before = run.target().checksum();
    EXPECT_TRUE(run.run().empty());
    EXPECT_EQ(run.target().checksum(), before);
    EXPECT_THROW(run.step(), autoroute::StateError);
}

TEST(TransferRun, FixedModeHasNoBandits) {
    auto run = make_run(RunMode::fixed, 2, 2);
    run.run();
    EXPECT_FALSE(run.uses_bandits());
    for (const auto& rec : run.history())
        for (std::size_t i = 0; i < rec.layers.size(); ++i) {
            EXPECT_FALSE(rec.layers[i].gain.has_value());
            EXPECT_TRUE(rec.layers[i].probabilities.empty());
            EXPECT_EQ(rec.layers[i].action_key, std::to_string(i) + ":wAdd");
        }
}

TEST(TransferRun, AllNullMatchesScratchTrajectory) {
    auto scratch = make_run(RunMode::scratch, 3, 4);
    auto nulls = make_run(RunMode::fixed, 3, 4, {});
    for (const auto& a : nulls.current_actions()) EXPECT_TRUE(a.is_null());
    scratch.run();
    nulls.run();
    for (std::size_t e = 0; e < 4; ++e) {
        EXPECT_EQ(scratch.history()[e].train_loss, nulls.history()[e].train_loss);
        EXPECT_EQ(scratch.history()[e].test_mse, nulls.history()[e].test_mse);
    }
    EXPECT_EQ(scratch.target().checksum(), nulls.target().checksum());
}

TEST(TransferRun, RewardUsesParametersFromBeforeTraining) {
    auto run = make_run(RunMode::route, 4, 3);
    run.step();
    TransferRun before = run;  // snapshot after epoch 1
    const auto& rec = run.step();
    std::vector<RoutingAction> chosen;
    for (const auto& l : rec.layers) chosen.push_back(RoutingAction::parse(l.action_key));
    before.set_current_actions(chosen);
    for (std::size_t i = 0; i < chosen.size(); ++i) EXPECT_EQ(before.evaluate_gain(i, chosen[i]), *rec.layers[i].gain);
}

TEST(TransferRun, RewardsBoundedAndSourceUnchanged) {
    auto run = make_run(RunMode::full, 5, 6);
    const auto src = run.source().checksum();
    run.run();
    for (const auto& rec : run.history())
        for (const auto& l : rec.layers) {
            ASSERT_TRUE(l.reward.has_value());
            EXPECT_GE(*l.reward, -1.0);
            EXPECT_LE(*l.reward, 1.0);
            double s = 0.0;
            for (double p : l.probabilities) s += p;
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    EXPECT_EQ(run.source().checksum(), src);
    EXPECT_EQ(run.source_checksum_at_start(), src);
}

TEST(TransferRun, GlobalGainComparesAgainstPlainTarget) {
    auto d = toy_data(6);
    TransferConfig cfg;
    cfg.gain_mode = GainMode::global;
    cfg.epochs = 1;
    std::mt19937_64 rng(6);
    TransferRun run(small_source(6), LayeredNet::mlp({1, 16, 16, 16, 1}, rng), d.train, d.holdout, d.test, cfg);
    std::vector<RoutingAction> acts{RoutingAction(0, autoroute::routing::AggOp::wadd), RoutingAction(1, autoroute::routing::AggOp::wadd),
                                    RoutingAction::null()};
    run.set_current_actions(acts);
    const double plain = run.mse(run.holdout_set(), {{}, {}, {}});
    const double routed = run.mse(run.holdout_set(), acts);
    EXPECT_NEAR(run.evaluate_gain(0, acts[0]), plain - routed, 1e-12);
    EXPECT_THROW(run.evaluate_gain(3, acts[0]), autoroute::ConfigError);
}

TEST(TransferRun, PerLayerGainOfNullIsZero) {
    auto run = make_run(RunMode::route, 7, 1);
    EXPECT_EQ(run.evaluate_gain(1, RoutingAction::null()), 0.0);
}

TEST(TransferRun, DeterministicHistory) {
    auto a = make_run(RunMode::route, 8, 4), b = make_run(RunMode::route, 8, 4);
    a.run();
    b.run();
    for (std::size_t e = 0; e < 4; ++e) {
        EXPECT_EQ(a.history()[e].train_loss, b.history()[e].train_loss);
        EXPECT_EQ(a.history()[e].test_mse, b.history()[e].test_mse);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_EQ(a.history()[e].layers[i].action_id, b.history()[e].layers[i].action_id);
            EXPECT_EQ(a.history()[e].layers[i].probabilities, b.history()[e].layers[i].probabilities);
        }
    }
}

TEST(TransferRun, HandComputedSingleBatchStep) {
    ng::DenseBlock blk(Matrix::from_rows({{0.5}}), Matrix::from_rows({{0.0}}), ng::Activation::none);
    LayeredNet target({blk}, {});
    Dataset train{Matrix::from_rows({{1}, {2}}), Matrix::from_rows({{2}, {3}})};
    TransferConfig cfg;
    cfg.mode = RunMode::scratch;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.optimizer = {0.1, 0.0, 0.0};
    TransferRun run(small_source(1), target, train, train, train, cfg);
    run.step();
    // residuals (-1.5, -2): dL/dw = (2*-1.5*1 + 2*-2*2)/2, dL/db = (2*-1.5 + 2*-2)/2; lr at epoch 1 is lr0
    EXPECT_DOUBLE_EQ(run.target().blocks()[0].weight().value(0, 0), 0.5 - 0.1 * (-5.5));
    EXPECT_DOUBLE_EQ(run.target().blocks()[0].bias()->value(0, 0), 0.0 - 0.1 * (-3.5));
}

TEST(TransferRun, NonFiniteLossNamesBatchAndActions) {
    auto d = toy_data(9);
    for (double& v : d.train.y.values()) v = 1e200;
    TransferConfig cfg;
    cfg.mode = RunMode::fixed;
    cfg.epochs = 1;
    std::mt19937_64 rng(9);
    TransferRun run(small_source(9), LayeredNet::mlp({1, 16, 16, 16, 1}, rng), d.train, d.holdout, d.test, cfg);
    try {
        run.step();
        FAIL();
    } catch (const autoroute::NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("batch 0"), std::string::npos);
        EXPECT_NE(msg.find("0:wAdd,1:wAdd,2:wAdd"), std::string::npos);
    }
}

TEST(TransferRun, TrainLossDecreasesOnToyTarget) {
    int decreasing = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto run = make_run(RunMode::fixed, seed, 5);
        run.run();
        decreasing += run.history().back().train_loss < run.history().front().train_loss;
    }
    EXPECT_GE(decreasing, 4);
}

TEST(TransferRun, CheckpointResumeMatchesUninterruptedRun) {
    auto full = make_run(RunMode::route, 10, 5);
    full.run();

    auto first = make_run(RunMode::route, 10, 5);
    first.step();
    first.step();
    std::stringstream ss;
    first.save_checkpoint(ss);
    auto resumed = make_run(RunMode::route, 10, 5);
    resumed.load_checkpoint(ss);
    EXPECT_EQ(resumed.target().checksum(), first.target().checksum());
    EXPECT_EQ(resumed.bandits()[0].weights(), first.bandits()[0].weights());
    for (int k = 0; k < 3; ++k) resumed.step();
    EXPECT_EQ(resumed.target().checksum(), full.target().checksum());
    EXPECT_EQ(resumed.history().back().test_mse, full.history().back().test_mse);

    std::stringstream junk("garbage");
    EXPECT_THROW(resumed.load_checkpoint(junk), std::runtime_error);
}

TEST(TransferRun, RejectsMismatchedShapes) {
    auto d = toy_data(11);
    std::mt19937_64 rng(11);
    EXPECT_THROW(TransferRun(small_source(11), LayeredNet::mlp({2, 4, 1}, rng), d.train, d.holdout, d.test, {}),
                 std::runtime_error);
}
