#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace autoroute::bandit {

class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Exploration-mixed exponential-weights bandit (EXP3.P family) over K arms.
///
/// One round is: update_weights(alpha_t), sample_action(rng),
/// record_reward(a, r). The importance-weighted estimate recorded at round t
/// is folded into the weights by the round t+1 update and then cleared.
///
/// Weights are kept in log space. The update
///   w_p <- log[(1 - a) e^{z_p} + a/(K-1) * sum_{j != p} e^{z_j}],  z = w + gamma * r~
/// is evaluated as a log-sum-exp over the K weighted terms, so it never
/// overflows even when r~ is large because pi[a] sat on the exploration floor.
class BanditState {
public:
    BanditState(std::size_t num_arms, double beta, double gamma);

    void update_weights(double alpha_t);
    std::size_t sample_action(std::mt19937_64& rng);
    void record_reward(std::size_t action, double reward);

    std::size_t num_arms() const { return weights_.size(); }
    std::size_t round() const { return round_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& reward_estimates() const { return reward_estimates_; }
    const std::vector<double>& probabilities() const { return probs_; }
    std::optional<std::size_t> last_action() const { return last_action_; }

    /// Replaces pi directly. Test hook for degenerate distributions that the
    /// update can never produce; must be a probability vector.
    void set_probabilities(std::vector<double> pi);

    /// K, t, beta, gamma, w[], r~[], pi[] as little-endian u64/f64 after a
    /// versioned header.
    void serialize(std::ostream& os) const;
    static BanditState deserialize(std::istream& is);

    friend bool operator==(const BanditState&, const BanditState&) = default;

private:
    BanditState() = default;
    void refresh_probabilities();

    std::vector<double> weights_;
    std::vector<double> reward_estimates_;
    std::vector<double> probs_;
    std::size_t round_ = 1;
    double beta_ = 0.0;
    double gamma_ = 0.0;
    std::optional<std::size_t> last_action_;
};

/// alpha_t = 1 / t.
double alpha_schedule(std::size_t t);

}  // namespace autoroute::bandit
