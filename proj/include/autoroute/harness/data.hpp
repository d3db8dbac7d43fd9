#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "autoroute/transfer.hpp"

namespace autoroute::harness {

using transfer::Dataset;

/// x ~ N(mu, sigma^2), y = sin(x).
Dataset gen_sine(std::size_t n, std::mt19937_64& rng, double mu, double sigma);
/// x ~ N(mu, sigma^2), y = sin(x) / x with y(0) = 1.
Dataset gen_sinc(std::size_t n, std::mt19937_64& rng, double mu, double sigma);

double sinc(double x);

struct Split {
    Dataset train;
    Dataset holdout;
};

/// Random split with floor(fraction * n) samples held out. Both sides keep the
/// original sample order.
Split split_holdout(const Dataset& data, double fraction, std::uint64_t seed);

/// Indices of a seeded subsample of size max(1, floor(fraction * n)), sorted
/// ascending. For a fixed seed, smaller fractions give subsets of larger ones,
/// and fraction 1 gives every index.
std::vector<std::size_t> nested_subsample(std::size_t n, double fraction, std::uint64_t seed);

/// Inclusive uniform grid: lo + (hi - lo) * k / (points - 1).
std::vector<double> uniform_grid(double lo, double hi, std::size_t points);

inline constexpr double kGridLo = -10.0;
inline constexpr double kGridHi = 10.0;
inline constexpr std::size_t kGridPoints = 401;

}  // namespace autoroute::harness
