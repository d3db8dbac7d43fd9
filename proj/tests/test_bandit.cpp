#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "autoroute/bandit.hpp"
#include "autoroute/binary_io.hpp"
#include "autoroute/matrix.hpp"

using namespace autoroute::bandit;
namespace binio = autoroute::binio;

namespace {

// Builds a state through the documented serialization layout.
BanditState make_state(std::size_t t, double beta, double gamma, const std::vector<double>& w,
                       const std::vector<double>& r, std::vector<double> pi = {}) {
    if (pi.empty()) pi.assign(w.size(), 1.0 / static_cast<double>(w.size()));
    std::stringstream ss;
    binio::write_header(ss, "AMABSTAT", 1);
    binio::write_u64(ss, w.size());
    binio::write_u64(ss, t);
    binio::write_f64(ss, beta);
    binio::write_f64(ss, gamma);
    binio::write_f64s(ss, w);
    binio::write_f64s(ss, r);
    binio::write_f64s(ss, pi);
    return BanditState::deserialize(ss);
}

// Literal evaluation of the update and the exploration mixture, no log-sum-exp.
std::pair<std::vector<double>, std::vector<double>> direct(const std::vector<double>& w, const std::vector<double>& r,
                                                           double gamma, double alpha, double beta) {
    const std::size_t k = w.size();
    std::vector<double> nw(k), pi(k);
    for (std::size_t p = 0; p < k; ++p) {
        double others = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != p) others += std::exp(w[j] + gamma * r[j]);
        nw[p] = std::log((1 - alpha) * std::exp(w[p] + gamma * r[p]) + alpha / (k - 1) * others);
    }
    double z = 0.0;
    for (double v : nw) z += std::exp(v);
    for (std::size_t p = 0; p < k; ++p) pi[p] = (1 - beta) * std::exp(nw[p]) / z + beta / k;
    return {nw, pi};
}

}  // namespace

TEST(Bandit, ConstructorValidates) {
    EXPECT_THROW(BanditState(1, 0.4, 1e-3), autoroute::ConfigError);
    EXPECT_THROW(BanditState(3, 0.0, 1e-3), autoroute::ConfigError);
    EXPECT_THROW(BanditState(3, 1.0, 1e-3), autoroute::ConfigError);
    EXPECT_THROW(BanditState(3, 0.4, 0.0), autoroute::ConfigError);
}

TEST(Bandit, FirstUpdateIsUniform) {
    BanditState b(4, 0.4, 1e-3);
    b.update_weights(alpha_schedule(1));
    for (double p : b.probabilities()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Bandit, DirectFormulaOracleSmallCase) {
    auto s = make_state(2, 0.4, 1e-3, {0, 0, 0}, {1, 0, 0});
    s.update_weights(0.5);
    auto [w, pi] = direct({0, 0, 0}, {1, 0, 0}, 1e-3, 0.5, 0.4);
    for (std::size_t p = 0; p < 3; ++p) {
        EXPECT_NEAR(s.weights()[p], w[p], 1e-12);
        EXPECT_NEAR(s.probabilities()[p], pi[p], 1e-12);
    }
    EXPECT_EQ(s.reward_estimates(), std::vector<double>(3, 0.0));
}

TEST(Bandit, DirectFormulaOracleRandomStates) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + trial % 7;
        std::vector<double> w(k), r(k, 0.0);
        for (double& v : w) v = u(rng);
        r[trial % k] = 5 * u(rng);
        const double alpha = 1.0 / (2 + trial % 10), gamma = 0.1, beta = 0.3;
        auto s = make_state(2, beta, gamma, w, r);
        s.update_weights(alpha);
        auto [ow, opi] = direct(w, r, gamma, alpha, beta);
        for (std::size_t p = 0; p < k; ++p) {
            EXPECT_NEAR(s.weights()[p], ow[p], 1e-10);
            EXPECT_NEAR(s.probabilities()[p], opi[p], 1e-10);
        }
    }
}

TEST(Bandit, ExplorationFloorExactWhenMassConcentrates) {
    auto s = make_state(2, 0.4, 1e-3, {0, -1e4, -1e4, -1e4, -1e4}, {0, 0, 0, 0, 0});
    s.update_weights(0.0);
    for (std::size_t p = 1; p < 5; ++p) EXPECT_DOUBLE_EQ(s.probabilities()[p], 0.08);
    EXPECT_DOUBLE_EQ(s.probabilities()[0], 0.68);
}

TEST(Bandit, ImportanceWeightedEstimate) {
    BanditState b(4, 0.4, 1e-3);
    b.update_weights(1.0);
    std::mt19937_64 rng(1);
    const auto a = b.sample_action(rng);
    b.record_reward(a, 0.5);
    EXPECT_DOUBLE_EQ(b.reward_estimates()[a], 2.0);
    for (std::size_t p = 0; p < 4; ++p)
        if (p != a) EXPECT_EQ(b.reward_estimates()[p], 0.0);
    EXPECT_EQ(b.round(), 2u);
}

TEST(Bandit, RecordRewardContract) {
    BanditState b(3, 0.4, 1e-3);
    b.update_weights(1.0);
    std::mt19937_64 rng(2);
    const auto a = b.sample_action(rng);
    EXPECT_THROW(b.record_reward(a, 1.5), ContractError);
    EXPECT_THROW(b.record_reward((a + 1) % 3, 0.1), ContractError);
    EXPECT_THROW(b.record_reward(7, 0.1), ContractError);
    EXPECT_THROW(b.update_weights(1.5), ContractError);
}

TEST(Bandit, ExtremeEstimateDoesNotOverflow) {
    auto s = make_state(2, 0.01, 1.0, {0, 0}, {800, 0});
    s.update_weights(0.5);
    for (double v : s.weights()) EXPECT_TRUE(std::isfinite(v));
    for (double v : s.probabilities()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Bandit, DegenerateDistributionAlwaysSamplesOnlyArm) {
    BanditState b(3, 0.4, 1e-3);
    b.set_probabilities({0, 1, 0});
    std::mt19937_64 rng(3);
    for (int k = 0; k < 1000; ++k) EXPECT_EQ(b.sample_action(rng), 1u);
    EXPECT_THROW(b.set_probabilities({0.5, 0.6, 0}), ContractError);
    EXPECT_THROW(b.set_probabilities({1}), ContractError);
}

TEST(Bandit, SamplingFrequenciesWithinFourSigma) {
    BanditState b(4, 0.4, 1e-3);
    const std::vector<double> pi{0.1, 0.2, 0.3, 0.4};
    b.set_probabilities(pi);
    std::mt19937_64 rng(4);
    const int n = 100000;
    std::vector<int> counts(4, 0);
    for (int k = 0; k < n; ++k) ++counts[b.sample_action(rng)];
    for (std::size_t p = 0; p < 4; ++p) {
        const double sd = std::sqrt(n * pi[p] * (1 - pi[p]));
        EXPECT_NEAR(counts[p], n * pi[p], 4 * sd);
    }
}

TEST(Bandit, SerializationRoundTrip) {
    BanditState b(5, 0.4, 1e-3);
    std::mt19937_64 rng(5);
    for (int t = 1; t <= 10; ++t) {
        b.update_weights(alpha_schedule(t));
        b.record_reward(b.sample_action(rng), 0.3);
    }
    std::stringstream ss;
    b.serialize(ss);
    auto back = BanditState::deserialize(ss);
    EXPECT_EQ(back.weights(), b.weights());
    EXPECT_EQ(back.reward_estimates(), b.reward_estimates());
    EXPECT_EQ(back.probabilities(), b.probabilities());
    EXPECT_EQ(back.round(), b.round());
    std::stringstream bad("XXXXXXXX");
    EXPECT_THROW(BanditState::deserialize(bad), binio::FormatError);
}

TEST(Bandit, AlphaSchedule) {
    EXPECT_EQ(alpha_schedule(1), 1.0);
    EXPECT_EQ(alpha_schedule(2), 0.5);
    EXPECT_THROW(alpha_schedule(0), ContractError);
}
