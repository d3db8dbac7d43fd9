#include "autoroute/harness/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "autoroute/binary_io.hpp"
#include "autoroute/hash.hpp"
#include "autoroute/numgrad/ops.hpp"
#include "autoroute/numgrad/optim.hpp"
#include "json.hpp"

namespace autoroute::harness {

namespace fs = std::filesystem;
namespace ng = numgrad;
using nlohmann::ordered_json;

namespace {

std::string hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex;
    ss.width(16);
    ss.fill('0');
    ss << v;
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

ordered_json config_json(const ExperimentConfig& cfg) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : cfg.to_map())
        if (k != "output_dir" && k != "source_checkpoint") j[k] = v;
    return j;
}

double train_plain_epoch(LayeredNet& net, const Dataset& d, std::size_t batch, const ng::SgdConfig& opt, double lr,
                         std::mt19937_64& rng) {
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    auto params = net.parameters();
    std::vector<double> losses;
    const std::size_t bs = std::min(batch, d.size());
    for (std::size_t start = 0; start < d.size(); start += bs) {
        std::span<const std::size_t> idx(order.data() + start, std::min(bs, d.size() - start));
        ng::Tape tape;
        auto out = net.forward(tape, tape.constant(d.x.gather_rows(idx))).output;
        auto loss = ng::mse(out, tape.constant(d.y.gather_rows(idx)));
        ng::zero_grads(params);
        tape.backward(loss);
        ng::sgd_step(params, opt, lr);
        losses.push_back(loss.value()(0, 0));
    }
    return pairwise_sum(losses) / static_cast<double>(losses.size());
}

double plain_mse(LayeredNet& net, const Dataset& d) {
    const Matrix pred = net.predict(d.x);
    std::vector<double> sq(pred.size());
    for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = (pred[k] - d.y[k]) * (pred[k] - d.y[k]);
    return pairwise_sum(sq) / static_cast<double>(sq.size());
}

double target_fn(const ExperimentConfig& cfg, double x) {
    return cfg.task == "sine_source" ? std::sin(x) : sinc(x);
}

}  // namespace

PretrainResult pretrain_source(const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    std::mt19937_64 data_rng(derive_seed(cfg.source_seed, "source-data"));
    Dataset train = gen_sine(cfg.source_train, data_rng, cfg.input_mean, cfg.input_std);
    Dataset test = gen_sine(std::max<std::size_t>(cfg.source_test, 1), data_rng, cfg.input_mean, cfg.input_std);

    std::mt19937_64 init_rng(derive_seed(cfg.source_seed, "source-init"));
    LayeredNet net = LayeredNet::mlp(cfg.source_dims(), init_rng);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.source_seed, "source-shuffle"));
    const ng::SgdConfig opt{cfg.source_lr, cfg.momentum, cfg.weight_decay};

    PretrainResult res;
    for (std::size_t e = 0; e < cfg.source_epochs; ++e) {
        const double lr = ng::cosine_lr(static_cast<double>(e), static_cast<double>(cfg.source_epochs), cfg.source_lr);
        res.final_train_loss = train_plain_epoch(net, train, cfg.batch_size, opt, lr, shuffle_rng);
        if (!std::isfinite(res.final_train_loss))
            throw NumericError("source pretraining diverged at epoch " + std::to_string(e + 1) +
                               "; lower source_lr (currently " + format_double(cfg.source_lr) + ")");
    }
    res.test_mse = plain_mse(net, test);
    if (!std::isfinite(res.test_mse))
        throw NumericError("source test MSE is not finite; lower source_lr (currently " +
                           format_double(cfg.source_lr) + ")");
    net.freeze();
    res.net = std::move(net);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        res.checkpoint = out_dir / "source.ckpt";
        save_source(res.checkpoint, res.net, res.test_mse);

        CsvTable pred{{"x", "y_true", "y_pred"}, {}};
        const auto grid = uniform_grid(kGridLo, kGridHi, kGridPoints);
        Matrix gx(grid.size(), 1, grid);
        const Matrix gy = res.net.predict(gx);
        for (std::size_t k = 0; k < grid.size(); ++k)
            pred.rows.push_back({format_double(grid[k]), format_double(std::sin(grid[k])), format_double(gy(k, 0))});
        write_csv(out_dir / "predictions.csv", pred);

        ordered_json m;
        m["kind"] = "pretrain";
        m["source_seed"] = cfg.source_seed;
        m["config"] = config_json(cfg);
        m["config_hash"] = hex(cfg.hash());
        m["source_test_mse"] = res.test_mse;
        m["final_train_loss"] = res.final_train_loss;
        m["source_checksum"] = hex(res.net.checksum());
        m["files"] = {{"checkpoint", "source.ckpt"}, {"predictions", "predictions.csv"}};
        write_text(out_dir / "manifest.json", m.dump(2) + "\n");
    }
    return res;
}

void save_source(const fs::path& path, const LayeredNet& net, double test_mse) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    binio::write_header(out, "ARSOURCE", 1);
    binio::write_f64(out, test_mse);
    ng::write_net(out, net);
}

LayeredNet load_source(const fs::path& path, double* test_mse) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("source checkpoint " + path.string() +
                          " not found; run `autoroute pretrain` first or set source_checkpoint");
    binio::read_header(in, "ARSOURCE", 1);
    const double mse = binio::read_f64(in);
    if (test_mse) *test_mse = mse;
    LayeredNet net = ng::read_net(in);
    net.freeze();
    return net;
}

TargetData make_target_data(const ExperimentConfig& cfg) {
    if (cfg.task == "custom")
        throw ConfigError("task=custom has no built-in generator; construct datasets through the library API");
    std::mt19937_64 rng(derive_seed(cfg.seed, "target-data"));
    auto gen = cfg.task == "sine_source" ? gen_sine : gen_sinc;
    Dataset full = gen(cfg.target_train, rng, cfg.input_mean, cfg.input_std);
    Dataset test = gen(std::max<std::size_t>(cfg.target_test, 1), rng, cfg.input_mean, cfg.input_std);
    Split split = split_holdout(full, cfg.holdout_fraction, derive_seed(cfg.seed, "holdout"));
    TargetData td;
    td.train_indices = nested_subsample(split.train.size(), cfg.train_fraction, derive_seed(cfg.seed, "subsample"));
    td.train = split.train.subset(td.train_indices);
    td.holdout = std::move(split.holdout);
    td.test = std::move(test);
    return td;
}

LayeredNet make_target_net(const ExperimentConfig& cfg) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "target-init"));
    return LayeredNet::mlp(cfg.target_dims(), rng);
}

transfer::TransferRun build_run(const ExperimentConfig& cfg, const LayeredNet& source) {
    cfg.validate();
    TargetData td = make_target_data(cfg);
    transfer::TransferConfig tc = cfg.transfer_config();
    if (td.train.size() < 2 * tc.batch_size) {
        const std::size_t reduced = std::max<std::size_t>(1, td.train.size() / 2);
        std::cerr << "warning: " << td.train.size() << " training samples is fewer than 2 x batch_size ("
                  << tc.batch_size << "); using batch_size " << reduced << "\n";
        tc.batch_size = reduced;
    }
    return transfer::TransferRun(source, make_target_net(cfg), std::move(td.train), std::move(td.holdout),
                                 std::move(td.test), tc);
}

CsvTable metrics_table(const transfer::TransferRun& run) {
    CsvTable t;
    const std::size_t layers = run.routed_layers();
    const bool bandits = run.uses_bandits();
    t.header.push_back("epoch");
    for (std::size_t i = 0; i < layers; ++i) {
        t.header.push_back("action_" + std::to_string(i));
        t.header.push_back("action_key_" + std::to_string(i));
        if (bandits) {
            t.header.push_back("gain_" + std::to_string(i));
            t.header.push_back("reward_" + std::to_string(i));
            for (std::size_t k = 0; k < run.bandits()[i].num_arms(); ++k)
                t.header.push_back("pi_" + std::to_string(i) + "_" + std::to_string(k));
        }
    }
    for (const char* c : {"train_loss", "holdout_loss", "test_mse", "lr"}) t.header.emplace_back(c);

    for (const auto& rec : run.history()) {
        std::vector<std::string> row{std::to_string(rec.epoch)};
        for (std::size_t i = 0; i < layers; ++i) {
            const auto& l = rec.layers.at(i);
            row.push_back(std::to_string(l.action_id));
            row.push_back(l.action_key);
            if (bandits) {
                row.push_back(format_double(l.gain.value_or(0.0)));
                row.push_back(format_double(l.reward.value_or(0.0)));
                for (double p : l.probabilities) row.push_back(format_double(p));
            }
        }
        for (double v : {rec.train_loss, rec.holdout_loss, rec.test_mse, rec.lr}) row.push_back(format_double(v));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable predictions_table(transfer::TransferRun& run, const ExperimentConfig& cfg) {
    CsvTable t{{"x", "y_true", "y_pred"}, {}};
    const auto grid = uniform_grid(kGridLo, kGridHi, kGridPoints);
    const Matrix pred = run.predict(Matrix(grid.size(), 1, grid), run.current_actions());
    for (std::size_t k = 0; k < grid.size(); ++k)
        t.rows.push_back({format_double(grid[k]), format_double(target_fn(cfg, grid[k])), format_double(pred(k, 0))});
    return t;
}

RunResult run_experiment(const ExperimentConfig& cfg, const LayeredNet& source, const fs::path& out_dir) {
    transfer::TransferRun run = build_run(cfg, source);
    RunResult res;
    res.mode = cfg.mode;
    res.seed = cfg.seed;

    std::ofstream metrics;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        res.dir = out_dir;
        metrics.open(out_dir / "metrics.csv", std::ios::binary);
        if (!metrics) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
    }
    // Stream rows as epochs finish so a failure leaves the history so far on disk.
    std::size_t written = 0;
    auto flush_rows = [&](const transfer::EpochRecord&) {
        if (!metrics.is_open()) return;
        const CsvTable t = metrics_table(run);
        const std::string text = to_csv(t);
        if (written == 0) {
            metrics << text;
        } else {
            // Emit only the newest row.
            metrics << to_csv(CsvTable{t.header, {t.rows.back()}}).substr(text.find('\n') + 1);
        }
        metrics.flush();
        ++written;
    };
    try {
        run.run(flush_rows);
    } catch (...) {
        metrics.flush();
        throw;
    }
    res.history = run.history();
    if (!res.history.empty()) {
        res.final_test_mse = res.history.back().test_mse;
        res.final_holdout_loss = res.history.back().holdout_loss;
    } else {
        res.final_test_mse = run.mse(run.test_set(), run.current_actions());
        res.final_holdout_loss = run.mse(run.holdout_set(), run.current_actions());
    }

    ordered_json m;
    m["kind"] = "run";
    m["mode"] = transfer::to_string(cfg.mode);
    m["seed"] = cfg.seed;
    m["config"] = config_json(cfg);
    m["config_hash"] = hex(cfg.hash());
    m["final_test_mse"] = res.final_test_mse;
    m["final_holdout_loss"] = res.final_holdout_loss;
    m["final_train_loss"] = res.history.empty() ? 0.0 : res.history.back().train_loss;
    m["epochs_run"] = res.history.size();
    ordered_json acts = ordered_json::array();
    for (const auto& a : run.current_actions()) acts.push_back(a.key());
    m["final_actions"] = acts;
    m["sizes"] = {{"train", run.train_set().size()}, {"holdout", run.holdout_set().size()},
                  {"test", run.test_set().size()}};
    m["batch_size"] = run.config().batch_size;
    m["source_checksum"] = hex(run.source_checksum_at_start());
    m["action_space_notes"] = run.action_space().notes;

    if (!out_dir.empty()) {
        write_csv(out_dir / "predictions.csv", predictions_table(run, cfg));
        {
            std::ofstream ck(out_dir / "checkpoint.bin", std::ios::binary);
            if (!ck) throw std::runtime_error("cannot write checkpoint in " + out_dir.string());
            run.save_checkpoint(ck);
        }
        m["files"] = {{"metrics", "metrics.csv"}, {"predictions", "predictions.csv"}, {"checkpoint", "checkpoint.bin"}};
    }
    res.manifest = m.dump(2) + "\n";
    if (!out_dir.empty()) write_text(out_dir / "manifest.json", res.manifest);
    return res;
}

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
    if (cfg.mode == transfer::RunMode::scratch) {
        // Scratch never reads the source; any frozen net of the right shape will do.
        std::mt19937_64 rng(derive_seed(cfg.source_seed, "source-init"));
        LayeredNet placeholder = LayeredNet::mlp(cfg.source_dims(), rng);
        placeholder.freeze();
        return run_experiment(cfg, placeholder, out_dir);
    }
    return run_experiment(cfg, load_source(cfg.source_checkpoint_path()), out_dir);
}

std::vector<RunResult> sweep_samples(const ExperimentConfig& cfg, const LayeredNet& source,
                                     const std::vector<double>& fractions, const std::vector<transfer::RunMode>& modes,
                                     const fs::path& out_dir) {
    std::vector<RunResult> results;
    CsvTable summary{{"fraction", "mode", "seed", "train_size", "final_test_mse", "final_holdout_loss"}, {}};
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep fractions must lie in (0, 1]");
        for (auto mode : modes) {
            ExperimentConfig c = cfg;
            c.train_fraction = f;
            c.mode = mode;
            fs::path dir;
            if (!out_dir.empty())
                dir = out_dir / ("frac" + format_double(f)) / (transfer::to_string(mode) + "-seed" + std::to_string(c.seed));
            RunResult r = run_experiment(c, source, dir);
            const auto train_size = nlohmann::json::parse(r.manifest)["sizes"]["train"].get<std::size_t>();
            summary.rows.push_back({format_double(f), transfer::to_string(mode), std::to_string(c.seed),
                                    std::to_string(train_size), format_double(r.final_test_mse),
                                    format_double(r.final_holdout_loss)});
            results.push_back(std::move(r));
        }
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_csv(out_dir / "summary.csv", summary);
    }
    return results;
}

std::vector<AblationResult> ablate_ops(const ExperimentConfig& cfg, const LayeredNet& source, const fs::path& out_dir) {
    using routing::AggOp;
    std::vector<AblationResult> results;
    CsvTable summary{{"op", "seed", "final_test_mse", "final_holdout_loss"}, {}};
    auto one = [&](const std::string& name, ExperimentConfig c) {
        fs::path dir;
        if (!out_dir.empty()) dir = out_dir / (name + "-seed" + std::to_string(c.seed));
        RunResult r = run_experiment(c, source, dir);
        summary.rows.push_back(
            {name, std::to_string(c.seed), format_double(r.final_test_mse), format_double(r.final_holdout_loss)});
        results.push_back({name, std::move(r)});
    };
    for (AggOp op : {AggOp::iden, AggOp::sadd, AggOp::wadd, AggOp::lincomb, AggOp::factred}) {
        ExperimentConfig c = cfg;
        c.mode = transfer::RunMode::route;
        c.route_op = routing::to_string(op);
        one(c.route_op, c);
    }
    ExperimentConfig c = cfg;
    c.mode = transfer::RunMode::scratch;
    one("scratch", c);
    if (!out_dir.empty()) write_csv(out_dir / "summary.csv", summary);
    return results;
}

}  // namespace autoroute::harness
