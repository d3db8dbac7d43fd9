#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "autoroute/transfer.hpp"

namespace autoroute::harness {

/// Every knob of an experiment. Defaults reproduce the sine -> sinc toy setup:
/// source 1-64-64-64-1 on 30000/10000 sine samples, target 1-16-16-16-1 on
/// 1000/800 sinc samples, 50 epochs each.
struct ExperimentConfig {
    std::string task = "sinc_target";  // sinc_target | sine_source | custom
    std::size_t source_hidden = 64;
    std::size_t target_hidden = 16;
    std::size_t hidden_blocks = 3;
    std::size_t source_train = 30000;
    std::size_t source_test = 10000;
    std::size_t target_train = 1000;
    std::size_t target_test = 800;
    double holdout_fraction = 0.2;
    double train_fraction = 1.0;
    double input_mean = 0.0;
    double input_std = 3.0;

    transfer::RunMode mode = transfer::RunMode::route;
    double beta = 0.4;
    double gamma = 1e-3;
    double reward_scale = 1.0;
    bool auto_reward_scale = false;
    transfer::GainMode gain_mode = transfer::GainMode::per_layer;
    double fm_weight = 0.5;
    bool include_fm = false;
    std::string route_op = "wAdd";
    std::string fixed_pairs = "0:0,1:1,2:2";
    std::string fixed_op = "wAdd";

    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;

    double source_lr = 0.05;
    std::size_t source_epochs = 50;
    std::uint64_t source_seed = 1;
    std::string source_checkpoint;  // empty: <output_dir>/source-seed<source_seed>/source.ckpt

    std::uint64_t seed = 1;
    std::string output_dir;  // empty: $AUTOROUTE_OUT or ./runs

    /// Applies one key=value setting; throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Canonical "key=value" lines, sorted by key.
    std::string to_text() const;
    std::map<std::string, std::string> to_map() const;
    std::uint64_t hash() const;
    void validate() const;

    transfer::TransferConfig transfer_config() const;
    std::vector<std::size_t> source_dims() const;
    std::vector<std::size_t> target_dims() const;
    std::filesystem::path output_root() const;
    std::filesystem::path source_checkpoint_path() const;
};

/// Parses a flat "key = value" file. '#' starts a comment; blank lines are
/// ignored.
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
void apply_config_text(ExperimentConfig& cfg, const std::string& text);

/// "0.1..1.0" (step 0.1), "0.1..1.0:0.3" or "0.1,0.5,1".
std::vector<double> parse_fractions(const std::string& spec);

}  // namespace autoroute::harness
