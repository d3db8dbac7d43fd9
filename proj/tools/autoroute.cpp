#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "autoroute/harness/config.hpp"
#include "autoroute/harness/experiment.hpp"
#include "autoroute/harness/gradsuite.hpp"

namespace ah = autoroute::harness;
namespace tr = autoroute::transfer;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config,-c", c.config, "key=value config file");
    cmd->add_option("--set", c.sets, "override, key=value (repeatable)");
    cmd->add_option("--out", c.out, "output root (default: $AUTOROUTE_OUT or ./runs)");
}

ah::ExperimentConfig build_config(const Common& c) {
    ah::ExperimentConfig cfg = c.config.empty() ? ah::ExperimentConfig{} : ah::load_config(c.config);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw autoroute::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!c.out.empty()) cfg.output_dir = c.out;
    cfg.validate();
    return cfg;
}

std::string seed_dir(const std::string& prefix, std::uint64_t seed) { return prefix + "-seed" + std::to_string(seed); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bandit-routed transfer between frozen source and trainable target networks"};
    app.require_subcommand(1);

    Common pre_c, run_c, sweep_c, abl_c;
    std::string mode;
    std::uint64_t seed = 0;
    std::string fractions = "0.1..1.0";
    std::string modes = "scratch,route";
    std::size_t grad_seeds = 20;

    auto* pre = app.add_subcommand("pretrain", "train and freeze the sine source network");
    add_common(pre, pre_c);

    auto* run = app.add_subcommand("run", "one transfer (or scratch) run");
    add_common(run, run_c);
    run->add_option("--mode", mode, "scratch | fixed | route | full");
    run->add_option("--seed", seed, "run seed");

    auto* sweep = app.add_subcommand("sweep", "sample-efficiency sweep over target train fractions");
    add_common(sweep, sweep_c);
    sweep->add_option("--fractions", fractions, "a..b, a..b:step or a comma list");
    sweep->add_option("--modes", modes, "comma list of run modes");
    sweep->add_option("--seed", seed, "run seed");

    auto* abl = app.add_subcommand("ablate", "route mode once per aggregation operator, plus scratch");
    add_common(abl, abl_c);
    abl->add_option("--seed", seed, "run seed");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable path");
    grad->add_option("--seeds", grad_seeds, "random parameterizations per path")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pre) {
            const auto cfg = build_config(pre_c);
            const auto path = cfg.source_checkpoint_path();
            const auto res = ah::pretrain_source(cfg, path.parent_path());
            std::cout << "source test_mse " << ah::format_double(res.test_mse) << "\n"
                      << "checkpoint " << res.checkpoint.string() << "\n";
        } else if (*run) {
            auto cfg = build_config(run_c);
            if (!mode.empty()) cfg.mode = tr::parse_run_mode(mode);
            if (run->count("--seed")) cfg.seed = seed;
            const auto dir = cfg.output_root() / seed_dir(tr::to_string(cfg.mode), cfg.seed);
            const auto res = ah::run_experiment(cfg, dir);
            std::cout << "final test_mse " << ah::format_double(res.final_test_mse) << "\n"
                      << "output " << dir.string() << "\n";
        } else if (*sweep) {
            auto cfg = build_config(sweep_c);
            if (sweep->count("--seed")) cfg.seed = seed;
            std::vector<tr::RunMode> ms;
            std::size_t start = 0;
            while (start <= modes.size()) {
                const auto comma = modes.find(',', start);
                const auto tok = modes.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
                if (!tok.empty()) ms.push_back(tr::parse_run_mode(tok));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            const auto source = ah::load_source(cfg.source_checkpoint_path());
            const auto dir = cfg.output_root() / seed_dir("sweep", cfg.seed);
            const auto results = ah::sweep_samples(cfg, source, ah::parse_fractions(fractions), ms, dir);
            std::cout << results.size() << " runs, summary " << (dir / "summary.csv").string() << "\n";
        } else if (*abl) {
            auto cfg = build_config(abl_c);
            if (abl->count("--seed")) cfg.seed = seed;
            const auto source = ah::load_source(cfg.source_checkpoint_path());
            const auto dir = cfg.output_root() / seed_dir("ablate", cfg.seed);
            for (const auto& r : ah::ablate_ops(cfg, source, dir))
                std::cout << r.op << " " << ah::format_double(r.run.final_test_mse) << "\n";
            std::cout << "summary " << (dir / "summary.csv").string() << "\n";
        } else if (*grad) {
            bool ok = true;
            for (const auto& r : ah::run_gradient_suite(grad_seeds)) {
                std::cout << (r.passed ? "ok   " : "FAIL ") << r.path << " max_rel_error "
                          << ah::format_double(r.max_rel_error) << " (" << r.worst << ")\n";
                ok = ok && r.passed;
            }
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
