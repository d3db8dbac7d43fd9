#include "autoroute/harness/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace autoroute::harness {
namespace {

template <class F>
Dataset generate(std::size_t n, std::mt19937_64& rng, double mu, double sigma, F f) {
    if (n == 0) throw ConfigError("dataset size must be at least 1");
    if (!(sigma > 0.0)) throw ConfigError("input standard deviation must be positive");
    std::normal_distribution<double> dist(mu, sigma);
    Dataset d{Matrix(n, 1), Matrix(n, 1)};
    for (std::size_t k = 0; k < n; ++k) {
        const double x = dist(rng);
        d.x(k, 0) = x;
        d.y(k, 0) = f(x);
    }
    return d;
}

}  // namespace

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

Dataset gen_sine(std::size_t n, std::mt19937_64& rng, double mu, double sigma) {
    return generate(n, rng, mu, sigma, [](double x) { return std::sin(x); });
}

Dataset gen_sinc(std::size_t n, std::mt19937_64& rng, double mu, double sigma) {
    return generate(n, rng, mu, sigma, sinc);
}

Split split_holdout(const Dataset& data, double fraction, std::uint64_t seed) {
    const std::size_t n = data.size();
    const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (held == 0 || held >= n) throw ConfigError("holdout split leaves an empty side");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> hold(perm.begin(), perm.begin() + static_cast<long>(held));
    std::vector<std::size_t> keep(perm.begin() + static_cast<long>(held), perm.end());
    std::sort(hold.begin(), hold.end());
    std::sort(keep.begin(), keep.end());
    return {data.subset(keep), data.subset(hold)};
}

std::vector<std::size_t> nested_subsample(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must lie in (0, 1]");
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(std::min(k, n));
    std::sort(perm.begin(), perm.end());
    return perm;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
    if (points < 2) throw ConfigError("grid needs at least two points");
    std::vector<double> g(points);
    const double span = hi - lo;
    for (std::size_t k = 0; k < points; ++k)
        g[k] = lo + span * static_cast<double>(k) / static_cast<double>(points - 1);
    g.back() = hi;
    return g;
}

}  // namespace autoroute::harness
