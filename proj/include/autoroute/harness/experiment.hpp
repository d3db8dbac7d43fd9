#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "autoroute/harness/config.hpp"
#include "autoroute/harness/csv.hpp"
#include "autoroute/harness/data.hpp"
#include "autoroute/transfer.hpp"

namespace autoroute::harness {

using numgrad::LayeredNet;

struct PretrainResult {
    LayeredNet net;  // frozen
    double test_mse = 0.0;
    double final_train_loss = 0.0;
    std::filesystem::path checkpoint;  // empty when not persisted
};

/// Trains the source network on the sine task and freezes it. When `out_dir`
/// is non-empty, writes source.ckpt, predictions.csv and manifest.json there.
PretrainResult pretrain_source(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {});

void save_source(const std::filesystem::path& path, const LayeredNet& net, double test_mse);
/// Throws ConfigError naming the path when the checkpoint is missing.
LayeredNet load_source(const std::filesystem::path& path, double* test_mse = nullptr);

struct TargetData {
    Dataset train;    // D_T after holdout carve and subsampling
    Dataset holdout;  // D_v
    Dataset test;
    std::vector<std::size_t> train_indices;  // rows of the full D_T kept by train_fraction
};

TargetData make_target_data(const ExperimentConfig& cfg);
LayeredNet make_target_net(const ExperimentConfig& cfg);

struct RunResult {
    transfer::RunMode mode{};
    std::uint64_t seed = 0;
    double final_test_mse = 0.0;
    double final_holdout_loss = 0.0;
    std::vector<transfer::EpochRecord> history;
    std::filesystem::path dir;  // empty when nothing was written
    std::string manifest;       // JSON text
};

/// Builds one TransferRun from the config and runs it to completion. When
/// `out_dir` is non-empty, writes metrics.csv (flushed per epoch),
/// predictions.csv, checkpoint.bin and manifest.json there.
RunResult run_experiment(const ExperimentConfig& cfg, const LayeredNet& source,
                         const std::filesystem::path& out_dir = {});

/// Loads the source checkpoint named by the config (transfer modes only).
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

transfer::TransferRun build_run(const ExperimentConfig& cfg, const LayeredNet& source);

CsvTable metrics_table(const transfer::TransferRun& run);
CsvTable predictions_table(transfer::TransferRun& run, const ExperimentConfig& cfg);

/// One run per (fraction, mode). Writes summary.csv in `out_dir` when set.
std::vector<RunResult> sweep_samples(const ExperimentConfig& cfg, const LayeredNet& source,
                                     const std::vector<double>& fractions,
                                     const std::vector<transfer::RunMode>& modes,
                                     const std::filesystem::path& out_dir = {});

struct AblationResult {
    std::string op;  // operator name, or "scratch" for the baseline
    RunResult run;
};

/// Route mode once per operator in {Iden, sAdd, wAdd, LinComb, FactRed}, plus
/// a scratch baseline. Writes summary.csv in `out_dir` when set.
std::vector<AblationResult> ablate_ops(const ExperimentConfig& cfg, const LayeredNet& source,
                                       const std::filesystem::path& out_dir = {});

}  // namespace autoroute::harness
