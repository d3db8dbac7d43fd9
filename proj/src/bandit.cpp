#include "autoroute/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "autoroute/binary_io.hpp"
#include "autoroute/matrix.hpp"

namespace autoroute::bandit {
namespace {

constexpr std::string_view kMagic = "AMABSTAT";
constexpr std::uint32_t kVersion = 1;

double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

BanditState::BanditState(std::size_t num_arms, double beta, double gamma)
    : weights_(num_arms, 0.0), reward_estimates_(num_arms, 0.0), probs_(num_arms, 0.0), beta_(beta),
      gamma_(gamma) {
    if (num_arms < 2) throw ConfigError("bandit needs at least 2 arms, got " + std::to_string(num_arms));
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("bandit beta must lie in (0, 1)");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("bandit gamma must be positive");
    refresh_probabilities();
}

void BanditState::update_weights(double alpha_t) {
    if (!(alpha_t >= 0.0 && alpha_t <= 1.0)) throw ContractError("alpha_t must lie in [0, 1]");
    const std::size_t k = num_arms();
    std::vector<double> z(k);
    for (std::size_t p = 0; p < k; ++p) z[p] = weights_[p] + gamma_ * reward_estimates_[p];

    const double log_keep = alpha_t < 1.0 ? std::log1p(-alpha_t) : -std::numeric_limits<double>::infinity();
    const double log_share = alpha_t > 0.0 ? std::log(alpha_t / static_cast<double>(k - 1))
                                           : -std::numeric_limits<double>::infinity();
    std::vector<double> terms(k);
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < k; ++j) terms[j] = (j == p ? log_keep : log_share) + z[j];
        weights_[p] = log_sum_exp(terms);
    }
    std::fill(reward_estimates_.begin(), reward_estimates_.end(), 0.0);
    last_action_.reset();
    refresh_probabilities();
}

void BanditState::refresh_probabilities() {
    const std::size_t k = num_arms();
    const double m = *std::max_element(weights_.begin(), weights_.end());
    std::vector<double> e(k);
    for (std::size_t p = 0; p < k; ++p) e[p] = std::exp(weights_[p] - m);
    const double total = pairwise_sum(e);
    const double floor = beta_ / static_cast<double>(k);
    for (std::size_t p = 0; p < k; ++p) probs_[p] = (1.0 - beta_) * (e[p] / total) + floor;
}

std::size_t BanditState::sample_action(std::mt19937_64& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    std::size_t chosen = probs_.size();
    for (std::size_t p = 0; p < probs_.size(); ++p) {
        cum += probs_[p];
        if (u < cum) {
            chosen = p;
            break;
        }
    }
    // Rounding can leave cum slightly below u; fall back to the last arm with mass.
    if (chosen == probs_.size())
        for (std::size_t p = probs_.size(); p-- > 0;)
            if (probs_[p] > 0.0) {
                chosen = p;
                break;
            }
    last_action_ = chosen;
    return chosen;
}

void BanditState::record_reward(std::size_t action, double reward) {
    if (action >= num_arms()) throw ContractError("action index out of range");
    if (!(reward >= -1.0 && reward <= 1.0))
        throw ContractError("reward must lie in [-1, 1], got " + std::to_string(reward));
    if (last_action_ && *last_action_ != action)
        throw ContractError("reward recorded for an action other than the one sampled this round");
    if (probs_[action] <= 0.0) throw ContractError("reward recorded for an arm with zero probability");
    std::fill(reward_estimates_.begin(), reward_estimates_.end(), 0.0);
    reward_estimates_[action] = reward / probs_[action];
    ++round_;
}

void BanditState::set_probabilities(std::vector<double> pi) {
    if (pi.size() != num_arms()) throw ContractError("probability vector has the wrong length");
    double s = 0.0;
    for (double v : pi) {
        if (!(v >= 0.0)) throw ContractError("negative probability");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ContractError("probabilities do not sum to 1");
    probs_ = std::move(pi);
}

void BanditState::serialize(std::ostream& os) const {
    binio::write_header(os, kMagic, kVersion);
    binio::write_u64(os, num_arms());
    binio::write_u64(os, round_);
    binio::write_f64(os, beta_);
    binio::write_f64(os, gamma_);
    binio::write_f64s(os, weights_);
    binio::write_f64s(os, reward_estimates_);
    binio::write_f64s(os, probs_);
}

BanditState BanditState::deserialize(std::istream& is) {
    binio::read_header(is, kMagic, kVersion);
    BanditState s;
    const auto k = binio::read_u64(is);
    if (k < 2 || k > (1u << 20)) throw binio::FormatError("bandit arm count out of range");
    s.round_ = binio::read_u64(is);
    s.beta_ = binio::read_f64(is);
    s.gamma_ = binio::read_f64(is);
    auto read_vec = [&](std::vector<double>& v) {
        v.resize(k);
        for (double& x : v) x = binio::read_f64(is);
    };
    read_vec(s.weights_);
    read_vec(s.reward_estimates_);
    read_vec(s.probs_);
    return s;
}

double alpha_schedule(std::size_t t) {
    if (t < 1) throw ContractError("alpha_schedule: t must be >= 1");
    return 1.0 / static_cast<double>(t);
}

}  // namespace autoroute::bandit
