#include "autoroute/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "autoroute/harness/csv.hpp"
#include "autoroute/hash.hpp"

namespace autoroute::harness {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("config key '" + key + "': '" + v + "' is not a finite number");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::pair<std::size_t, std::size_t>> parse_pairs(const std::string& s) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("fixed_pairs entry '" + item + "' is not source:target");
        out.emplace_back(to_u64("fixed_pairs", trim(item.substr(0, colon))),
                         to_u64("fixed_pairs", trim(item.substr(colon + 1))));
    }
    return out;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (key == "task") {
        if (v != "sinc_target" && v != "sine_source" && v != "custom")
            throw ConfigError("task must be sinc_target, sine_source or custom");
        task = v;
    } else if (key == "source_hidden") source_hidden = to_u64(key, v);
    else if (key == "target_hidden") target_hidden = to_u64(key, v);
    else if (key == "hidden_blocks") hidden_blocks = to_u64(key, v);
    else if (key == "source_train") source_train = to_u64(key, v);
    else if (key == "source_test") source_test = to_u64(key, v);
    else if (key == "target_train") target_train = to_u64(key, v);
    else if (key == "target_test") target_test = to_u64(key, v);
    else if (key == "holdout_fraction") holdout_fraction = to_double(key, v);
    else if (key == "train_fraction") train_fraction = to_double(key, v);
    else if (key == "input_mean") input_mean = to_double(key, v);
    else if (key == "input_std") input_std = to_double(key, v);
    else if (key == "mode") mode = transfer::parse_run_mode(v);
    else if (key == "beta") beta = to_double(key, v);
    else if (key == "gamma") gamma = to_double(key, v);
    else if (key == "reward_scale") reward_scale = to_double(key, v);
    else if (key == "auto_reward_scale") auto_reward_scale = to_bool(key, v);
    else if (key == "gain_mode") gain_mode = transfer::parse_gain_mode(v);
    else if (key == "fm_weight") fm_weight = to_double(key, v);
    else if (key == "include_fm") include_fm = to_bool(key, v);
    else if (key == "route_op") route_op = routing::to_string(routing::parse_agg_op(v));
    else if (key == "fixed_pairs") {
        parse_pairs(v);
        fixed_pairs = v;
    } else if (key == "fixed_op") fixed_op = routing::to_string(routing::parse_agg_op(v));
    else if (key == "lr") lr = to_double(key, v);
    else if (key == "momentum") momentum = to_double(key, v);
    else if (key == "weight_decay") weight_decay = to_double(key, v);
    else if (key == "batch_size") batch_size = to_u64(key, v);
    else if (key == "epochs") epochs = to_u64(key, v);
    else if (key == "source_lr") source_lr = to_double(key, v);
    else if (key == "source_epochs") source_epochs = to_u64(key, v);
    else if (key == "source_seed") source_seed = to_u64(key, v);
    else if (key == "source_checkpoint") source_checkpoint = v;
    else if (key == "seed") seed = to_u64(key, v);
    else if (key == "output_dir") output_dir = v;
    else throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
    auto d = [](double x) { return format_double(x); };
    auto u = [](std::uint64_t x) { return std::to_string(x); };
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    return {
        {"task", task},
        {"source_hidden", u(source_hidden)},
        {"target_hidden", u(target_hidden)},
        {"hidden_blocks", u(hidden_blocks)},
        {"source_train", u(source_train)},
        {"source_test", u(source_test)},
        {"target_train", u(target_train)},
        {"target_test", u(target_test)},
        {"holdout_fraction", d(holdout_fraction)},
        {"train_fraction", d(train_fraction)},
        {"input_mean", d(input_mean)},
        {"input_std", d(input_std)},
        {"mode", transfer::to_string(mode)},
        {"beta", d(beta)},
        {"gamma", d(gamma)},
        {"reward_scale", d(reward_scale)},
        {"auto_reward_scale", b(auto_reward_scale)},
        {"gain_mode", transfer::to_string(gain_mode)},
        {"fm_weight", d(fm_weight)},
        {"include_fm", b(include_fm)},
        {"route_op", route_op},
        {"fixed_pairs", fixed_pairs},
        {"fixed_op", fixed_op},
        {"lr", d(lr)},
        {"momentum", d(momentum)},
        {"weight_decay", d(weight_decay)},
        {"batch_size", u(batch_size)},
        {"epochs", u(epochs)},
        {"source_lr", d(source_lr)},
        {"source_epochs", u(source_epochs)},
        {"source_seed", u(source_seed)},
        {"source_checkpoint", source_checkpoint},
        {"seed", u(seed)},
        {"output_dir", output_dir},
    };
}

std::string ExperimentConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t ExperimentConfig::hash() const {
    // Output locations do not change results, so they stay out of the hash.
    auto m = to_map();
    m.erase("output_dir");
    m.erase("source_checkpoint");
    std::string text;
    for (const auto& [k, v] : m) text += k + "=" + v + "\n";
    return fnv1a(text);
}

void ExperimentConfig::validate() const {
    if (source_hidden == 0 || target_hidden == 0 || hidden_blocks == 0)
        throw ConfigError("network widths and block count must be positive");
    if (source_train == 0 || target_train == 0) throw ConfigError("training set sizes must be positive");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must lie in (0, 1)");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
    if (!(input_std > 0.0)) throw ConfigError("input_std must be positive");
    if (!(lr > 0.0) || !(source_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (!(reward_scale > 0.0)) throw ConfigError("reward_scale must be positive");
    if (!(fm_weight >= 0.0)) throw ConfigError("fm_weight must be non-negative");
    const auto held = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(target_train)));
    if (held == 0 || held >= target_train)
        throw ConfigError("holdout_fraction leaves an empty holdout or training split");
}

transfer::TransferConfig ExperimentConfig::transfer_config() const {
    transfer::TransferConfig tc;
    tc.mode = mode;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.optimizer = {lr, momentum, weight_decay};
    tc.beta = beta;
    tc.gamma = gamma;
    tc.reward_scale = reward_scale;
    tc.auto_reward_scale = auto_reward_scale;
    tc.gain_mode = gain_mode;
    tc.fm_weight = fm_weight;
    tc.actions.route_op = routing::parse_agg_op(route_op);
    tc.actions.fixed_op = routing::parse_agg_op(fixed_op);
    tc.actions.fixed_pairs = parse_pairs(fixed_pairs);
    if (include_fm) tc.actions.full_ops.push_back(routing::AggOp::fm);
    tc.seed = seed;
    return tc;
}

std::vector<std::size_t> ExperimentConfig::source_dims() const {
    std::vector<std::size_t> d{1};
    d.insert(d.end(), hidden_blocks, source_hidden);
    d.push_back(1);
    return d;
}

std::vector<std::size_t> ExperimentConfig::target_dims() const {
    std::vector<std::size_t> d{1};
    d.insert(d.end(), hidden_blocks, target_hidden);
    d.push_back(1);
    return d;
}

std::filesystem::path ExperimentConfig::output_root() const {
    if (!output_dir.empty()) return output_dir;
    if (const char* env = std::getenv("AUTOROUTE_OUT"); env && *env) return env;
    return "runs";
}

std::filesystem::path ExperimentConfig::source_checkpoint_path() const {
    if (!source_checkpoint.empty()) return source_checkpoint;
    return output_root() / ("source-seed" + std::to_string(source_seed)) / "source.ckpt";
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(base, ss.str());
    return base;
}

std::vector<double> parse_fractions(const std::string& spec) {
    std::vector<double> out;
    if (auto dots = spec.find(".."); dots != std::string::npos) {
        const double lo = to_double("fractions", trim(spec.substr(0, dots)));
        std::string rest = spec.substr(dots + 2);
        double step = 0.1;
        if (auto colon = rest.find(':'); colon != std::string::npos) {
            step = to_double("fractions", trim(rest.substr(colon + 1)));
            rest.resize(colon);
        }
        const double hi = to_double("fractions", trim(rest));
        if (!(step > 0.0) || hi < lo) throw ConfigError("bad fraction range '" + spec + "'");
        const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
        // Round to 1e-12 so 0.1 + 2 * 0.1 prints as 0.3.
        for (std::size_t k = 0; k <= n; ++k)
            out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    } else {
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(to_double("fractions", item));
        }
    }
    if (out.empty()) throw ConfigError("no fractions given");
    for (double f : out)
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1], got " + format_double(f));
    return out;
}

}  // namespace autoroute::harness
