#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace autoroute::harness {

struct GradPathReport {
    std::string path;
    std::size_t seeds = 0;
    std::size_t entries_checked = 0;
    double max_rel_error = 0.0;
    std::string worst;  // "seed <n>: <param>[i]"
    bool passed = true;
};

/// Finite-difference checks of every differentiable path: dense blocks,
/// source transform (train/eval), each aggregator, the FM extra loss and the
/// routed forward composite. Seeds run 1..seeds.
std::vector<GradPathReport> run_gradient_suite(std::size_t seeds = 20, double eps = 1e-5, double tol = 1e-4);

}  // namespace autoroute::harness
